//! FDMA carrier design and validation.
//!
//! A valid carrier set is a power-of-two ladder `f_j = 2^(j-1) f_1` with
//! `f_1 = 2^(m-1) delta_f`. Every carrier then sits on its own FFT bin and
//! the odd harmonics of each carrier (the only ones a 50% square wave has)
//! land on odd multiples of that carrier, never on another ladder rung.

use std::collections::BTreeSet;
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::waveform::{as_integer, fold_bin, SamplingWindow};
use crate::{Error, Result};

/// Carriers at or below this frequency sit too close to the mains fundamental.
pub const MAINS_GUARD_HZ: f64 = 50.0;

/// Default depth of the odd-harmonic audit.
pub const DEFAULT_MAX_HARMONIC: u32 = 63;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PlanWarning {
    BelowMainsGuard { frequency: f64 },
}

impl fmt::Display for PlanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanWarning::BelowMainsGuard { frequency } => write!(
                f,
                "{frequency} Hz is not above the {MAINS_GUARD_HZ} Hz mains guard"
            ),
        }
    }
}

/// A designed power-of-two FDMA ladder with its sampling bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanParams", into = "PlanDocument")]
pub struct FrequencyPlan {
    pub delta_f: f64,
    /// Slot duration `T` in seconds.
    pub duration: f64,
    pub fs: f64,
    pub q: usize,
    /// ADC exponent: `fs = 2^p delta_f`.
    pub p: u32,
    /// Base exponent: `f_1 = 2^(m-1) delta_f`.
    pub m: u32,
    pub channels: Vec<f64>,
    pub bins: Vec<usize>,
    pub warnings: Vec<PlanWarning>,
}

/// Designs the carrier ladder for slot duration `duration`, `Q = 2^p`
/// samples, lowest carrier `2^(m-1) / T` and `channel_count` rungs.
pub fn design_plan(duration: f64, p: u32, m: u32, channel_count: usize) -> Result<FrequencyPlan> {
    if channel_count == 0 {
        return Err(Error::InvalidParameter("channel count must be >= 1".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    let window = SamplingWindow::from_exponent(duration, p)?;
    // Highest rung has bin 2^(m-1+P-1); it must leave >= 4 samples per period.
    let top_exp = (m - 1) as u64 + channel_count as u64 - 1;
    if p < 2 || top_exp > (p - 2) as u64 {
        return Err(Error::TooFewSamplesPerPeriod {
            frequency: 2f64.powi(top_exp.min(1023) as i32) * window.delta_f,
            samples: 2f64.powi(p as i32 - top_exp.min(1023) as i32),
            min: 4,
        });
    }
    let bins: Vec<usize> = (0..channel_count)
        .map(|j| 1usize << (m as usize - 1 + j))
        .collect();
    let channels: Vec<f64> = bins.iter().map(|&b| b as f64 * window.delta_f).collect();
    let mut warnings = Vec::new();
    if channels[0] <= MAINS_GUARD_HZ {
        warn!(
            "lowest carrier {} Hz is within the mains guard",
            channels[0]
        );
        warnings.push(PlanWarning::BelowMainsGuard {
            frequency: channels[0],
        });
    }
    Ok(FrequencyPlan {
        delta_f: window.delta_f,
        duration,
        fs: window.fs,
        q: window.q,
        p,
        m,
        channels,
        bins,
        warnings,
    })
}

impl FrequencyPlan {
    pub fn window(&self) -> SamplingWindow {
        SamplingWindow {
            fs: self.fs,
            duration: self.duration,
            q: self.q,
            delta_f: self.delta_f,
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn lowest(&self) -> f64 {
        self.channels[0]
    }

    pub fn channel_set(&self) -> ChannelSet {
        ChannelSet {
            window: self.window(),
            channels: self.channels.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Design parameters; deserializing a plan re-runs [`design_plan`] on them.
#[derive(Deserialize)]
struct PlanParams {
    duration: f64,
    p: u32,
    m: u32,
    channels: Vec<f64>,
}

impl TryFrom<PlanParams> for FrequencyPlan {
    type Error = Error;

    fn try_from(raw: PlanParams) -> Result<Self> {
        let plan = design_plan(raw.duration, raw.p, raw.m, raw.channels.len())?;
        if plan.channels != raw.channels {
            return Err(Error::Parse(format!(
                "channels {:?} do not match the ladder {:?}",
                raw.channels, plan.channels
            )));
        }
        Ok(plan)
    }
}

#[derive(Serialize)]
struct PlanDocument {
    duration: f64,
    delta_f: f64,
    fs: f64,
    q: usize,
    p: u32,
    m: u32,
    channels: Vec<f64>,
    bins: Vec<usize>,
    warnings: Vec<PlanWarning>,
}

impl From<FrequencyPlan> for PlanDocument {
    fn from(p: FrequencyPlan) -> Self {
        Self {
            duration: p.duration,
            delta_f: p.delta_f,
            fs: p.fs,
            q: p.q,
            p: p.p,
            m: p.m,
            channels: p.channels,
            bins: p.bins,
            warnings: p.warnings,
        }
    }
}

impl fmt::Display for FrequencyPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "T = {} s  delta_f = {} Hz  fs = {} Sps  Q = {} (p = {})  m = {}",
            self.duration, self.delta_f, self.fs, self.q, self.p, self.m
        )?;
        writeln!(
            f,
            "{:>4}  {:>12}  {:>8}  {:>8}",
            "j", "f_j (Hz)", "bin", "N_j"
        )?;
        for (j, (freq, bin)) in self.channels.iter().zip(&self.bins).enumerate() {
            writeln!(
                f,
                "{:>4}  {:>12}  {:>8}  {:>8}",
                j + 1,
                freq,
                bin,
                self.q / bin
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// An ordered set of carriers over one sampling window.
///
/// Built from a [`FrequencyPlan`] for normal operation, or from an explicit
/// frequency list when deliberately running an invalid plan. Channels are
/// kept in ascending frequency order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub window: SamplingWindow,
    pub channels: Vec<f64>,
}

impl ChannelSet {
    /// Any positive, distinct, sub-Nyquist carriers. Off-grid carriers are
    /// accepted here; [`validate_plan`] is what rejects them.
    pub fn explicit(frequencies: &[f64], window: SamplingWindow) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidParameter("no carrier frequencies".into()));
        }
        let mut channels = frequencies.to_vec();
        for &f in &channels {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "carrier {f} must be positive"
                )));
            }
            if f > window.fs / 2.0 {
                return Err(Error::AboveNyquist {
                    frequency: f,
                    fs: window.fs,
                });
            }
        }
        channels.sort_by(f64::total_cmp);
        if channels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(
                "duplicate carrier frequency".into(),
            ));
        }
        Ok(Self { window, channels })
    }

    /// A single carrier, as used by FM-TDMA.
    pub fn single(carrier: f64, window: SamplingWindow) -> Result<Self> {
        window.check_carrier(carrier)?;
        Self::explicit(&[carrier], window)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn index_of(&self, frequency: f64) -> Option<usize> {
        self.channels.iter().position(|&c| c == frequency)
    }

    /// FFT bin nearest to a channel; exact for whole-cycle carriers.
    pub fn bin(&self, channel: usize) -> usize {
        (self.channels[channel] / self.window.delta_f).round() as usize
    }

    /// True when every carrier is a whole-cycle carrier of the window.
    pub fn is_aligned(&self) -> bool {
        self.channels
            .iter()
            .all(|&f| self.window.check_carrier(f).is_ok())
    }
}

impl From<&FrequencyPlan> for ChannelSet {
    fn from(plan: &FrequencyPlan) -> Self {
        plan.channel_set()
    }
}

/// A carrier hit by an odd harmonic of another carrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    /// Position of the colliding (flagged) frequency in the input list.
    pub index: usize,
    pub frequency: f64,
    pub source_index: usize,
    pub source_frequency: f64,
    /// Odd harmonic order of the source that lands on `frequency`.
    pub harmonic: u32,
    /// True when the harmonic only lands there after folding about `fs`.
    pub aliased: bool,
}

/// A single-frequency finding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub index: usize,
    pub frequency: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Outcome of auditing a carrier list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub frequencies: Vec<f64>,
    pub delta_f: f64,
    pub fs: f64,
    pub max_harmonic: u32,
    pub not_multiple_of_delta_f: Vec<Finding>,
    pub not_power_of_two_ladder: Vec<Finding>,
    pub odd_harmonic_collision: Vec<Collision>,
    pub above_nyquist: Vec<Finding>,
    /// Reported, but does not affect the verdict.
    pub below_mains_guard: Vec<Finding>,
    pub verdict: Verdict,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Input positions carrying at least one failing flag.
    pub fn flagged_indices(&self) -> BTreeSet<usize> {
        self.not_multiple_of_delta_f
            .iter()
            .chain(&self.not_power_of_two_ladder)
            .chain(&self.above_nyquist)
            .map(|f| f.index)
            .chain(self.odd_harmonic_collision.iter().map(|c| c.index))
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "delta_f = {} Hz  fs = {} Sps  harmonics audited up to {}",
            self.delta_f, self.fs, self.max_harmonic
        )?;
        for (i, freq) in self.frequencies.iter().enumerate() {
            let mut notes = Vec::new();
            if self.not_multiple_of_delta_f.iter().any(|x| x.index == i) {
                notes.push("not a multiple of delta_f".to_string());
            }
            if self.not_power_of_two_ladder.iter().any(|x| x.index == i) {
                notes.push("off the power-of-two ladder".to_string());
            }
            if self.above_nyquist.iter().any(|x| x.index == i) {
                notes.push("above Nyquist".to_string());
            }
            for c in self.odd_harmonic_collision.iter().filter(|c| c.index == i) {
                notes.push(format!(
                    "harmonic {} of {} Hz{}",
                    c.harmonic,
                    c.source_frequency,
                    if c.aliased { " (aliased)" } else { "" }
                ));
            }
            if self.below_mains_guard.iter().any(|x| x.index == i) {
                notes.push("warning: within mains guard".to_string());
            }
            let mark = if notes.iter().any(|n| !n.starts_with("warning")) {
                "FLAG"
            } else {
                "ok"
            };
            writeln!(
                f,
                "f_{:<2} {:>10} Hz  {:<4}  {}",
                i + 1,
                freq,
                mark,
                notes.join("; ")
            )?;
        }
        writeln!(
            f,
            "verdict: {}",
            match self.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
            }
        )
    }
}

fn is_power_of_two_ratio(ratio: f64) -> bool {
    let r = if ratio < 1.0 { 1.0 / ratio } else { ratio };
    as_integer(r).is_some_and(|n| n > 0 && (n as u64).is_power_of_two())
}

/// Audits a carrier list against the whole-cycle, ladder and
/// odd-harmonic-collision rules. Always produces a report.
pub fn validate_plan(
    frequencies: &[f64],
    delta_f: f64,
    fs: f64,
    max_harmonic: u32,
) -> ValidationReport {
    let mut not_multiple = Vec::new();
    let mut not_ladder = Vec::new();
    let mut above_nyquist = Vec::new();
    let mut mains = Vec::new();
    let mut collisions = Vec::new();

    let bins: Vec<Option<u64>> = frequencies
        .iter()
        .map(|&f| as_integer(f / delta_f).filter(|&b| b > 0).map(|b| b as u64))
        .collect();

    for (i, &f) in frequencies.iter().enumerate() {
        let finding = Finding {
            index: i,
            frequency: f,
        };
        if bins[i].is_none() {
            not_multiple.push(finding.clone());
        }
        if f > fs / 2.0 {
            above_nyquist.push(finding.clone());
        }
        if f <= MAINS_GUARD_HZ {
            mains.push(finding);
        }
    }

    // The ladder is anchored on the lowest on-grid carrier (or the lowest
    // carrier when none is on grid).
    let on_grid_min = frequencies
        .iter()
        .zip(&bins)
        .filter(|(_, b)| b.is_some())
        .map(|(&f, _)| f)
        .fold(f64::INFINITY, f64::min);
    let anchor = if on_grid_min.is_finite() {
        on_grid_min
    } else {
        frequencies.iter().copied().fold(f64::INFINITY, f64::min)
    };
    if anchor.is_finite() {
        for (i, &f) in frequencies.iter().enumerate() {
            if f != anchor && !is_power_of_two_ratio(f / anchor) {
                not_ladder.push(Finding {
                    index: i,
                    frequency: f,
                });
            }
        }
    }

    let q = (fs / delta_f).round().max(1.0) as u64;
    for (i, bi) in bins.iter().enumerate() {
        let Some(bi) = *bi else { continue };
        for (j, bj) in bins.iter().enumerate() {
            let Some(bj) = *bj else { continue };
            if i == j {
                continue;
            }
            if bi == bj {
                // Identical carriers: flag the later occurrence.
                if j > i {
                    collisions.push(Collision {
                        index: j,
                        frequency: frequencies[j],
                        source_index: i,
                        source_frequency: frequencies[i],
                        harmonic: 1,
                        aliased: false,
                    });
                }
                continue;
            }
            let hit = (3..=max_harmonic as u64)
                .step_by(2)
                .find(|&h| fold_bin(h * bi, q) == bj);
            if let Some(h) = hit {
                collisions.push(Collision {
                    index: j,
                    frequency: frequencies[j],
                    source_index: i,
                    source_frequency: frequencies[i],
                    harmonic: h as u32,
                    aliased: h * bi != bj,
                });
            }
        }
    }

    let by_freq = |a: &Finding, b: &Finding| {
        a.frequency
            .total_cmp(&b.frequency)
            .then(a.index.cmp(&b.index))
    };
    not_multiple.sort_by(by_freq);
    not_ladder.sort_by(by_freq);
    above_nyquist.sort_by(by_freq);
    mains.sort_by(by_freq);
    collisions.sort_by(|a, b| {
        a.frequency
            .total_cmp(&b.frequency)
            .then(a.source_frequency.total_cmp(&b.source_frequency))
            .then(a.harmonic.cmp(&b.harmonic))
            .then(a.index.cmp(&b.index))
    });

    let verdict = if not_multiple.is_empty()
        && not_ladder.is_empty()
        && above_nyquist.is_empty()
        && collisions.is_empty()
    {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    ValidationReport {
        frequencies: frequencies.to_vec(),
        delta_f,
        fs,
        max_harmonic,
        not_multiple_of_delta_f: not_multiple,
        not_power_of_two_ladder: not_ladder,
        odd_harmonic_collision: collisions,
        above_nyquist,
        below_mains_guard: mains,
        verdict,
    }
}

fn multiples_of(f_a: f64, used: &[f64]) -> Result<Vec<u64>> {
    if !(f_a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "f_a = {f_a} must be positive"
        )));
    }
    used.iter()
        .map(|&u| {
            as_integer(u / f_a)
                .filter(|&k| k > 0)
                .map(|k| k as u64)
                .ok_or(Error::OffGrid {
                    frequency: u,
                    delta_f: f_a,
                })
        })
        .collect()
}

fn available_multiples(used: &[u64], horizon: u64) -> Vec<u64> {
    (2..=horizon)
        .step_by(2)
        .filter(|k| !used.contains(k))
        .filter(|&k| used.iter().all(|&u| !(k % u == 0 && (k / u) % 2 == 1)))
        .collect()
}

/// Even multiples `k f_a` (`k <= horizon`) that are neither in use nor an odd
/// harmonic of a carrier in use.
pub fn available_slots(f_a: f64, used: &[f64], horizon: u64) -> Result<Vec<f64>> {
    if used.is_empty() {
        return Err(Error::InvalidParameter("no used carriers".into()));
    }
    let used = multiples_of(f_a, used)?;
    Ok(available_multiples(&used, horizon)
        .into_iter()
        .map(|k| k as f64 * f_a)
        .collect())
}

/// One row of the channel-availability table, in multiples of `f_a`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRow {
    pub used: Vec<u64>,
    pub available: Vec<u64>,
}

/// Greedy channel selection starting from `f_a`: each row adds the lowest
/// still-available multiple and lists what remains available.
pub fn slot_table(horizon: u64, channel_count: usize) -> Vec<SlotRow> {
    let mut used = vec![1u64];
    let mut rows = Vec::new();
    while rows.len() < channel_count {
        let available = available_multiples(&used, horizon);
        rows.push(SlotRow {
            used: used.clone(),
            available: available.clone(),
        });
        match available.first() {
            Some(&next) => used.push(next),
            None => break,
        }
    }
    rows
}

/// Formats a [`slot_table`] with one column per candidate multiple
/// (`f_a`, then the even multiples), `x` marking unavailable slots.
pub fn format_slot_table(rows: &[SlotRow], horizon: u64, f_a: Option<f64>) -> String {
    let columns: Vec<u64> = std::iter::once(1).chain((2..=horizon).step_by(2)).collect();
    let label = |k: u64| match f_a {
        Some(fa) => format!("{}", k as f64 * fa),
        None if k == 1 => "f_a".to_string(),
        None => format!("{k}f_a"),
    };
    let mut out = String::new();
    out.push_str(&format!("{:>8}", "used"));
    for &k in &columns {
        out.push_str(&format!("{:>10}", label(k)));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{:>8}", row.used.len()));
        for &k in &columns {
            let cell = if row.used.contains(&k) {
                format!("[{}]", label(k))
            } else if row.available.contains(&k) {
                label(k)
            } else {
                "x".to_string()
            };
            out.push_str(&format!("{cell:>10}"));
        }
        out.push('\n');
    }
    out
}

/// FFT bin of a carrier (`0` is DC).
pub fn bin_of(frequency: f64, delta_f: f64) -> Result<usize> {
    as_integer(frequency / delta_f)
        .filter(|&b| b >= 0)
        .map(|b| b as usize)
        .ok_or(Error::OffGrid { frequency, delta_f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::folded_harmonic_bins;
    use proptest::prelude::*;

    const INVALID_SET: [f64; 7] = [1170.3, 1368.3, 1638.4, 2048.0, 2730.6, 4096.0, 8192.0];

    #[test]
    fn design_table5_plan() {
        let plan = design_plan(1.0, 16, 7, 8).unwrap();
        assert_eq!(plan.delta_f, 1.0);
        assert_eq!(plan.fs, 65536.0);
        assert_eq!(
            plan.channels,
            vec![64., 128., 256., 512., 1024., 2048., 4096., 8192.]
        );
        assert_eq!(plan.bins, vec![64, 128, 256, 512, 1024, 2048, 4096, 8192]);
        assert!(plan.warnings.is_empty());
    }

    #[test]
    fn design_fig9_plan() {
        let plan = design_plan(0.25, 14, 6, 7).unwrap();
        assert_eq!(plan.delta_f, 4.0);
        assert_eq!(plan.fs, 65536.0);
        assert_eq!(plan.q, 16384);
        assert_eq!(
            plan.channels,
            vec![128., 256., 512., 1024., 2048., 4096., 8192.]
        );
        assert_eq!(plan.bins[0], 32);
    }

    #[test]
    fn design_minimal_plan_warns_about_mains() {
        let plan = design_plan(1.0, 3, 1, 1).unwrap();
        assert_eq!(plan.fs, 8.0);
        assert_eq!(plan.channels, vec![1.0]);
        assert_eq!(
            plan.warnings,
            vec![PlanWarning::BelowMainsGuard { frequency: 1.0 }]
        );
    }

    #[test]
    fn design_rejects_too_fast_top_carrier() {
        assert!(matches!(
            design_plan(1.0, 16, 7, 10),
            Err(Error::TooFewSamplesPerPeriod { .. })
        ));
        // Top rung at fs/4 still has four samples per period.
        assert_eq!(design_plan(1.0, 16, 7, 9).unwrap().channels[8], 16384.0);
        assert!(design_plan(1.0, 16, 7, 0).is_err());
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = design_plan(0.25, 14, 6, 7).unwrap();
        let text = plan.to_json().unwrap();
        assert_eq!(FrequencyPlan::from_json(&text).unwrap(), plan);
        let tampered = text.replace("8192.0", "8000.0");
        assert!(FrequencyPlan::from_json(&tampered).is_err());
    }

    #[test]
    fn invalid_set_flags_entries_1_2_3_5() {
        let report = validate_plan(&INVALID_SET, 4.0, 65536.0, DEFAULT_MAX_HARMONIC);
        assert_eq!(report.verdict, Verdict::Fail);
        assert_eq!(
            report.flagged_indices().into_iter().collect::<Vec<_>>(),
            vec![0, 1, 2, 4]
        );
    }

    #[test]
    fn valid_set_passes() {
        let set = [128., 256., 512., 1024., 2048., 4096., 8192.];
        let report = validate_plan(&set, 4.0, 65536.0, DEFAULT_MAX_HARMONIC);
        assert!(report.passed(), "{report}");
        assert!(report.flagged_indices().is_empty());
    }

    #[test]
    fn six_fa_collides_only_with_two_fa_present() {
        let fa = 64.0;
        let r = validate_plan(&[fa, 6.0 * fa], 1.0, 65536.0, DEFAULT_MAX_HARMONIC);
        assert!(r.odd_harmonic_collision.is_empty());
        let r = validate_plan(
            &[fa, 2.0 * fa, 6.0 * fa],
            1.0,
            65536.0,
            DEFAULT_MAX_HARMONIC,
        );
        assert_eq!(r.odd_harmonic_collision.len(), 1);
        let c = &r.odd_harmonic_collision[0];
        assert_eq!(
            (c.frequency, c.source_frequency, c.harmonic),
            (6.0 * fa, 2.0 * fa, 3)
        );
        assert!(!c.aliased);
    }

    #[test]
    fn aliased_collision_is_detected() {
        // With Q = 128, 3 * 24 = 72 folds to 56 and 5 * 56 = 280 folds to 24.
        let r = validate_plan(&[24.0, 56.0], 1.0, 128.0, 7);
        let hits: Vec<_> = r
            .odd_harmonic_collision
            .iter()
            .map(|c| (c.frequency, c.harmonic, c.aliased))
            .collect();
        assert!(hits.contains(&(56.0, 3, true)), "{hits:?}");
        assert!(hits.contains(&(24.0, 5, true)), "{hits:?}");
    }

    #[test]
    fn mains_guard_is_a_warning() {
        let r = validate_plan(&[32.0, 64.0], 1.0, 1024.0, 63);
        assert!(r.passed());
        assert_eq!(r.below_mains_guard.len(), 1);
    }

    #[test]
    fn duplicate_carriers_fail() {
        let r = validate_plan(&[64.0, 128.0, 64.0], 1.0, 1024.0, 63);
        assert!(!r.passed());
        assert_eq!(r.flagged_indices().into_iter().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn slot_tables_2_to_4() {
        assert_eq!(
            available_slots(1.0, &[1.0], 8).unwrap(),
            vec![2., 4., 6., 8.]
        );
        assert_eq!(available_slots(1.0, &[1.0, 2.0], 8).unwrap(), vec![4., 8.]);
        assert_eq!(available_slots(1.0, &[1.0, 2.0, 4.0], 8).unwrap(), vec![8.]);
        assert_eq!(
            available_slots(64.0, &[64.0, 128.0], 8).unwrap(),
            vec![256., 512.]
        );
        assert!(available_slots(64.0, &[100.0], 8).is_err());

        let rows = slot_table(8, 4);
        let avail: Vec<Vec<u64>> = rows.iter().map(|r| r.available.clone()).collect();
        assert_eq!(avail, vec![vec![2, 4, 6, 8], vec![4, 8], vec![8], vec![]]);
        assert_eq!(rows[3].used, vec![1, 2, 4, 8]);
        let text = format_slot_table(&rows, 8, None);
        assert!(text.contains("6f_a"));
    }

    #[test]
    fn bin_of_examples() {
        assert_eq!(bin_of(128.0, 4.0).unwrap(), 32);
        assert_eq!(bin_of(0.0, 4.0).unwrap(), 0);
        assert_eq!(bin_of(8192.0, 1.0).unwrap(), 8192);
        assert!(bin_of(1170.3, 4.0).is_err());
    }

    #[test]
    fn explicit_channel_set_sorts_and_checks() {
        let w = SamplingWindow::from_exponent(0.25, 14).unwrap();
        let set = ChannelSet::explicit(&[8192.0, 1170.3, 2048.0], w).unwrap();
        assert_eq!(set.channels, vec![1170.3, 2048.0, 8192.0]);
        assert_eq!(set.bin(0), 293);
        assert!(!set.is_aligned());
        assert!(ChannelSet::explicit(&[40000.0], w).is_err());
        assert!(ChannelSet::explicit(&[64.0, 64.0], w).is_err());
    }

    proptest! {
        #[test]
        fn designed_plans_validate_cleanly(
            p in 3u32..=18, m in 1u32..=10, count in 1usize..=10, t_exp in -3i32..=2,
        ) {
            let duration = 2f64.powi(t_exp);
            if let Ok(plan) = design_plan(duration, p, m, count) {
                let r = validate_plan(&plan.channels, plan.delta_f, plan.fs, DEFAULT_MAX_HARMONIC);
                prop_assert!(r.passed());
                prop_assert!(r.flagged_indices().is_empty());
            }
        }

        #[test]
        fn ladder_isolation_with_alias_folds(p in 3u32..=16, m in 1u32..=8, count in 1usize..=9) {
            if let Ok(plan) = design_plan(1.0, p, m, count) {
                let w = plan.window();
                for (i, &f) in plan.channels.iter().enumerate() {
                    let n_i = plan.q / plan.bins[i];
                    let bins = folded_harmonic_bins(f, &w, (n_i - 1) as u32).unwrap();
                    for (j, b) in plan.bins.iter().enumerate() {
                        if j != i {
                            prop_assert!(!bins.contains(b));
                        }
                    }
                }
            }
        }

        #[test]
        fn available_slots_is_monotone(
            used in proptest::collection::btree_set(1u64..=16, 1..5),
            extra in 1u64..=16,
            horizon in 2u64..=32,
        ) {
            let used: Vec<f64> = used.into_iter().map(|k| k as f64).collect();
            let before = available_slots(1.0, &used, horizon).unwrap();
            let mut more = used.clone();
            more.push(extra as f64);
            let after = available_slots(1.0, &more, horizon).unwrap();
            prop_assert!(after.iter().all(|a| before.contains(a)));
        }

        #[test]
        fn validation_is_permutation_invariant(
            freqs in proptest::collection::vec(
                prop_oneof![ (1u32..64).prop_map(|k| k as f64 * 4.0), (1u32..64).prop_map(|k| k as f64 * 4.0 + 1.3) ],
                1..7,
            ),
            seed in any::<u64>(),
        ) {
            let mut shuffled = freqs.clone();
            // Deterministic Fisher-Yates driven by the seed.
            let mut s = seed | 1;
            for i in (1..shuffled.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let a = validate_plan(&freqs, 4.0, 1024.0, 31);
            let b = validate_plan(&shuffled, 4.0, 1024.0, 31);
            let proj = |r: &ValidationReport| {
                let mut v: Vec<(u64, u64, u32)> = r.odd_harmonic_collision.iter()
                    .map(|c| (c.frequency.to_bits(), c.source_frequency.to_bits(), c.harmonic)).collect();
                v.sort();
                let mut flagged: Vec<u64> = r.flagged_indices().iter().map(|&i| r.frequencies[i].to_bits()).collect();
                flagged.sort();
                flagged.dedup();
                (v, flagged, r.verdict)
            };
            // Duplicate values make "which copy" ambiguous; compare by value.
            let (mut va, fa, verdict_a) = proj(&a);
            let (mut vb, fb, verdict_b) = proj(&b);
            va.retain(|t| t.2 != 1);
            vb.retain(|t| t.2 != 1);
            prop_assert_eq!(va, vb);
            prop_assert_eq!(fa, fb);
            prop_assert_eq!(verdict_a, verdict_b);
        }
    }
}
