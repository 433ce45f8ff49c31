//! Scenario execution: synth -> encode -> channel -> decode -> metrics, and
//! the artifact files of a run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, quantize, AdcConfig, NoiseConfig};
use crate::decoder::{
    assemble_image, decode_cdma, decode_spectrum, fft_radix2, DecodedImage, Mode, PixelEstimate,
};
use crate::encoder::{
    complementary_stream, encode_cdma, schedule_fdma_tdma, CarrierBank, CdmaConfig, TdmaSchedule,
    WalshAssignment,
};
use crate::freq_plan::{validate_plan, ChannelSet, ValidationReport, DEFAULT_MAX_HARMONIC};
use crate::io;
use crate::metrics::{
    dynamic_range_db, encoding_time, processing_gain_db, processing_gain_note, speedup, PatchReport,
};
use crate::optics::{
    angular_dispersion, check_lens_constraints, grating_beta, make_spectral_line_scene,
    mean_nm_per_column, LensViolation, SpectralAnchor, SpectralBand,
};
use crate::scenario::{AnchorPreset, DispersionCheck, Job, OutputSpec, Scenario, TargetSpec};
use crate::scene::{make_hdr_patch_target, CaosGrid, PatchTarget, Scene};
use crate::waveform::SampledSignal;
use crate::{Error, Result};

/// Fraction of the frame maximum above which a decoded pixel counts as part
/// of a spectral stripe.
pub const STRIPE_THRESHOLD: f64 = 0.25;

/// Grids up to this size get a per-pixel table in the report.
const PIXEL_TABLE_LIMIT: usize = 64;

/// One scene to acquire.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub label: String,
    pub truth: Scene,
    pub patches: Option<PatchTarget>,
    pub stripe: Option<StripeTruth>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripeTruth {
    pub band: SpectralBand,
    pub row: usize,
    pub step: usize,
    pub columns: Option<(usize, usize)>,
}

/// Expands the scenario's target into the frames it describes.
pub fn build_frames(s: &Scenario) -> Result<Vec<Frame>> {
    let grid = &s.grid;
    let single = |truth: Scene, patches: Option<PatchTarget>| {
        Ok(vec![Frame {
            label: "image".into(),
            truth,
            patches,
            stripe: None,
        }])
    };
    match &s.target {
        TargetSpec::Pixels { values } => {
            single(Scene::new(grid.rows, grid.cols, values.clone())?, None)
        }
        TargetSpec::Uniform { value } => single(Scene::uniform(grid, *value), None),
        TargetSpec::HdrPatches {
            attenuations_db,
            layout,
            radius,
            background,
        } => {
            let t = make_hdr_patch_target(
                grid,
                attenuations_db,
                (layout[0], layout[1]),
                *radius,
                *background,
            )?;
            single(t.scene.clone(), Some(t))
        }
        TargetSpec::ImageFile { path } => {
            let (rows, cols, values) = io::read_matrix_csv(path)?;
            if (rows, cols) != (grid.rows, grid.cols) {
                return Err(Error::Parse(format!(
                    "{}: image is {rows}x{cols}, grid is {}x{}",
                    path.display(),
                    grid.rows,
                    grid.cols
                )));
            }
            single(Scene::new(rows, cols, values)?, None)
        }
        TargetSpec::SpectralLine {
            bands,
            start_row,
            steps,
            temperature_k,
            optics,
            anchors,
        } => {
            let anchors = anchors.anchors(grid.cols);
            let mut frames = Vec::with_capacity(bands.len() * steps);
            for (b, band) in bands.iter().enumerate() {
                for step in 0..*steps {
                    let row = start_row + b * steps + step;
                    let line = make_spectral_line_scene(
                        grid,
                        row,
                        *band,
                        *temperature_k,
                        optics,
                        &anchors,
                    )?;
                    frames.push(Frame {
                        label: format!("{:.0}nm_row{row:02}", band.center_nm),
                        truth: line.scene,
                        patches: None,
                        stripe: Some(StripeTruth {
                            band: *band,
                            row,
                            step,
                            columns: line.columns,
                        }),
                    });
                }
            }
            Ok(frames)
        }
    }
}

/// Per-pixel row of the report for small grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelRow {
    pub pixel: usize,
    pub slot: usize,
    pub channel: usize,
    /// Carrier in Hz (FM/FDMA) or Walsh row (CDMA).
    pub code: f64,
    pub designed: f64,
    pub recovered: f64,
    pub relative_error: f64,
}

/// Where a spectral stripe was found in one decoded frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripeRow {
    pub frame: String,
    pub center_nm: f64,
    pub bandwidth_nm: f64,
    pub commanded_row: usize,
    pub detected_rows: Vec<usize>,
    pub expected_columns: Option<(usize, usize)>,
    pub detected_columns: Option<(usize, usize)>,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub mode: Mode,
    pub pixel_count: usize,
    pub frame_count: usize,
    pub slot_count: usize,
    pub samples_per_slot: usize,
    pub fs: f64,
    /// FFT bin spacing for FM/FDMA; absent for CDMA.
    pub delta_f: Option<f64>,
    pub carriers: Vec<f64>,
    /// Encoding time of one frame in seconds.
    pub encoding_time_s: f64,
    /// The same grid acquired one pixel per slot.
    pub fm_tdma_encoding_time_s: Option<f64>,
    pub speedup_vs_fm_tdma: Option<f64>,
    pub processing_gain_db: Option<f64>,
    pub processing_gain_note: Option<String>,
    pub adc_full_scale: Option<f64>,
    pub clipped_samples: usize,
    pub validation: Option<ValidationReport>,
    pub pixels: Option<Vec<PixelRow>>,
    pub designed_dr_db: Option<f64>,
    pub recovered_dr_db: Option<f64>,
    /// Worst `|decoded - truth| / truth` over lit pixels, all frames.
    pub max_relative_error: f64,
    /// Worst `|decoded|` over unlit pixels, all frames.
    pub max_dark_error: f64,
    pub patches: Option<PatchReport>,
    pub stripes: Option<Vec<StripeRow>>,
    /// True when every stripe frame is correct and the stripe moves one row
    /// per step within each band.
    pub stripes_ok: Option<bool>,
}

impl RunReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "scenario: {}   mode: {}", self.name, self.mode);
        let _ = writeln!(
            w,
            "pixels: {}   frames: {}   slots: {}   samples/slot: {}   fs: {} Sps",
            self.pixel_count, self.frame_count, self.slot_count, self.samples_per_slot, self.fs
        );
        if !self.carriers.is_empty() {
            let list: Vec<String> = self.carriers.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(w, "carriers (Hz): {}", list.join(", "));
        }
        let _ = writeln!(w, "encoding time: {} s", self.encoding_time_s);
        if let (Some(t), Some(x)) = (self.fm_tdma_encoding_time_s, self.speedup_vs_fm_tdma) {
            let _ = writeln!(w, "FM-TDMA encoding time: {t} s   speedup: {x:.4}x");
        }
        if let Some(g) = self.processing_gain_db {
            let _ = writeln!(w, "FFT processing gain: {g:.2} dB");
        }
        if let Some(n) = &self.processing_gain_note {
            let _ = writeln!(w, "  note: {n}");
        }
        if let Some(fs) = self.adc_full_scale {
            let _ = writeln!(
                w,
                "ADC full scale: {fs:.6}   clipped samples: {}",
                self.clipped_samples
            );
        }
        if let Some(v) = &self.validation {
            let _ = write!(w, "{v}");
        }
        if let Some(rows) = &self.pixels {
            let _ = writeln!(
                w,
                "{:>5}  {:>5}  {:>7}  {:>10}  {:>12}  {:>12}  {:>10}",
                "pixel", "slot", "channel", "code", "designed", "recovered", "rel err"
            );
            for r in rows {
                let _ = writeln!(
                    w,
                    "{:>5}  {:>5}  {:>7}  {:>10}  {:>12.4e}  {:>12.4e}  {:>10.2e}",
                    r.pixel, r.slot, r.channel, r.code, r.designed, r.recovered, r.relative_error
                );
            }
        }
        if let (Some(d), Some(r)) = (self.designed_dr_db, self.recovered_dr_db) {
            let _ = writeln!(w, "designed DR: {d:.2} dB   recovered DR: {r:.4} dB");
        }
        let _ = writeln!(
            w,
            "max relative error: {:.3e}   max dark-pixel error: {:.3e}",
            self.max_relative_error, self.max_dark_error
        );
        if let Some(p) = &self.patches {
            let _ = write!(w, "{p}");
        }
        if let Some(stripes) = &self.stripes {
            for s in stripes {
                let _ = writeln!(
                    w,
                    "{:<16} row {:>2} -> {:?}  cols {:?} -> {:?}  {}",
                    s.frame,
                    s.commanded_row,
                    s.detected_rows,
                    s.expected_columns,
                    s.detected_columns,
                    if s.ok { "ok" } else { "MISMATCH" }
                );
            }
        }
        if let Some(ok) = self.stripes_ok {
            let _ = writeln!(w, "stripes: {}", if ok { "all ok" } else { "FAILED" });
        }
        out
    }
}

/// Decoded data of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub label: String,
    pub truth: Scene,
    /// Decoded image after `mode_scale`.
    pub image: DecodedImage,
    /// `(slot, one-sided |X[k]|)` for the first slots, when requested.
    pub spectra: Vec<(usize, Vec<f64>)>,
    /// PD1 streams as digitised, first slots, when requested.
    pub streams: Vec<SampledSignal>,
    /// Noiseless PD2 streams of the same slots, when requested.
    pub complementary: Vec<SampledSignal>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    /// The scenario with every default made explicit.
    pub resolved: Scenario,
    pub report: RunReport,
    pub frames: Vec<FrameResult>,
}

struct SlotOutput {
    estimates: Vec<PixelEstimate>,
    clipped: usize,
    spectrum: Option<Vec<f64>>,
    stream: Option<SampledSignal>,
    complementary: Option<SampledSignal>,
}

struct Acquired {
    image: DecodedImage,
    clipped: usize,
    spectra: Vec<(usize, Vec<f64>)>,
    streams: Vec<SampledSignal>,
    complementary: Vec<SampledSignal>,
}

/// Noise key of a slot: frames get disjoint slot ranges.
fn noise_key(frame: usize, slot: usize) -> u64 {
    ((frame as u64) << 32) | slot as u64
}

fn adc_for(spec_bits: u32, full_scale: f64, enabled: bool) -> AdcConfig {
    AdcConfig {
        bits: spec_bits,
        full_scale,
        enabled,
    }
}

#[allow(clippy::too_many_arguments)]
fn acquire_tdma(
    scene: &Scene,
    grid: &CaosGrid,
    mode: Mode,
    schedule: &TdmaSchedule,
    bank: &CarrierBank,
    noise: &NoiseConfig,
    adc: &AdcConfig,
    frame: usize,
    outputs: &OutputSpec,
) -> Result<Acquired> {
    let keep = outputs.max_slots;
    let slots: Vec<SlotOutput> = schedule
        .slots
        .par_iter()
        .map(|slot| {
            let clean = bank.encode_slot(scene, slot)?;
            let noisy = add_noise(&clean, noise, noise_key(frame, slot.index));
            let (digitised, clipped) = quantize(&noisy, adc)?;
            let spectrum = fft_radix2(&digitised)?;
            let estimates = decode_spectrum(&spectrum, slot, &bank.channels)?;
            let kept = slot.index < keep;
            let spectrum = (kept && outputs.spectra).then(|| {
                spectrum.bins[..=spectrum.len() / 2]
                    .iter()
                    .map(|c| c.norm())
                    .collect()
            });
            let complementary = if kept && outputs.complementary {
                Some(complementary_stream(&clean, scene, slot)?)
            } else {
                None
            };
            Ok(SlotOutput {
                estimates,
                clipped,
                spectrum,
                stream: (kept && outputs.streams).then_some(digitised),
                complementary,
            })
        })
        .collect::<Result<_>>()?;
    let mut estimates = Vec::with_capacity(scene.pixel_count());
    let mut acquired = Acquired {
        image: DecodedImage {
            rows: 0,
            cols: 0,
            values: vec![],
            mode,
            provenance: vec![],
        },
        clipped: 0,
        spectra: vec![],
        streams: vec![],
        complementary: vec![],
    };
    for (i, s) in slots.into_iter().enumerate() {
        estimates.extend(s.estimates);
        acquired.clipped += s.clipped;
        if let Some(sp) = s.spectrum {
            acquired.spectra.push((i, sp));
        }
        acquired.streams.extend(s.stream);
        acquired.complementary.extend(s.complementary);
    }
    acquired.image = assemble_image(&estimates, schedule, grid, mode)?;
    Ok(acquired)
}

#[allow(clippy::too_many_arguments)]
fn acquire_cdma(
    scene: &Scene,
    grid: &CaosGrid,
    assignment: &WalshAssignment,
    cfg: &CdmaConfig,
    noise: &NoiseConfig,
    adc: &AdcConfig,
    frame: usize,
    outputs: &OutputSpec,
) -> Result<Acquired> {
    let clean = encode_cdma(scene, assignment, cfg)?;
    let noisy = add_noise(&clean, noise, noise_key(frame, 0));
    let (digitised, clipped) = quantize(&noisy, adc)?;
    let image = decode_cdma(&digitised, assignment, cfg, grid)?;
    let complementary = if outputs.complementary {
        let total = scene.total();
        vec![SampledSignal::new(
            clean.samples.iter().map(|s| total - s).collect(),
            clean.fs,
        )]
    } else {
        vec![]
    };
    Ok(Acquired {
        image,
        clipped,
        spectra: vec![],
        streams: if outputs.streams {
            vec![digitised]
        } else {
            vec![]
        },
        complementary,
    })
}

fn default_full_scale(max_clean: f64, noise: &NoiseConfig) -> f64 {
    let peak = max_clean + noise.dark_offset;
    if peak > 0.0 {
        1.25 * peak
    } else {
        1.0
    }
}

fn detect_stripe(image: &DecodedImage) -> (Vec<usize>, Option<(usize, usize)>) {
    let max = image.values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return (vec![], None);
    }
    let mut rows = Vec::new();
    let mut cols: Option<(usize, usize)> = None;
    for (i, &v) in image.values.iter().enumerate() {
        if v >= STRIPE_THRESHOLD * max {
            let (r, c) = (i / image.cols, i % image.cols);
            if !rows.contains(&r) {
                rows.push(r);
            }
            cols = Some(cols.map_or((c, c), |(lo, hi)| (lo.min(c), hi.max(c))));
        }
    }
    rows.sort_unstable();
    (rows, cols)
}

/// Runs a scenario in memory.
pub fn simulate(scenario: &Scenario) -> Result<Simulation> {
    scenario.check()?;
    let frames = build_frames(scenario)?;
    let grid = scenario.grid;
    let npix = grid.pixel_count();
    let mut resolved = scenario.clone();
    resolved.noise.seed = scenario.seed;
    let noise = resolved.noise;

    let mut validation = None;
    let mut carriers = Vec::new();
    let mut delta_f = None;
    let (slot_count, samples_per_slot, fs, frame_time);
    let mut fm_time = None;
    let mut gain = None;

    enum Engine {
        Tdma(TdmaSchedule, CarrierBank),
        Cdma(WalshAssignment, CdmaConfig),
    }

    let engine = match scenario.mode {
        Mode::FmTdma | Mode::FdmaTdma => {
            let plan = scenario.plan.as_ref().expect("checked");
            let set: ChannelSet = plan.channel_set()?;
            let w = set.window;
            let report = validate_plan(&set.channels, w.delta_f, w.fs, DEFAULT_MAX_HARMONIC);
            let bank = if report.passed() {
                CarrierBank::new(&set)?
            } else if scenario.strict {
                return Err(Error::InvalidPlan(Box::new(report)));
            } else {
                log::warn!("running with an invalid carrier plan (strict = false)");
                CarrierBank::permissive(&set)?
            };
            validation = Some(report);
            carriers = set.channels.clone();
            delta_f = Some(w.delta_f);
            let schedule = schedule_fdma_tdma(npix, &set);
            slot_count = schedule.slot_count();
            samples_per_slot = w.q;
            fs = w.fs;
            frame_time = schedule.encoding_time();
            fm_time = Some(encoding_time(npix, 1, w.duration));
            gain = Some(processing_gain_db(w.q));
            Engine::Tdma(schedule, bank)
        }
        Mode::Cdma => {
            let spec = scenario.cdma.expect("checked");
            let assignment = match spec.code_length {
                Some(l) => WalshAssignment::raster(npix, l)?,
                None => WalshAssignment::minimal(npix)?,
            };
            resolved.cdma = Some(crate::scenario::CdmaSpec {
                code_length: Some(assignment.code_length),
                ..spec
            });
            let cfg = CdmaConfig::new(spec.bit_rate, spec.fs)?;
            slot_count = 1;
            samples_per_slot = assignment.code_length * cfg.samples_per_bit;
            fs = cfg.fs();
            frame_time = assignment.code_length as f64 / cfg.bit_rate;
            Engine::Cdma(assignment, cfg)
        }
    };

    // Default ADC range: 1.25 x the brightest noiseless sample over all frames.
    let full_scale = match (resolved.adc.enabled, resolved.adc.full_scale) {
        (false, fs) => fs,
        (true, Some(fs)) => Some(fs),
        (true, None) => {
            let max_clean = frames
                .iter()
                .map(|f| match &engine {
                    Engine::Tdma(schedule, _) => Ok(schedule
                        .slots
                        .iter()
                        .map(|s| s.pixels().map(|p| f.truth.irradiance[p]).sum::<f64>())
                        .fold(0.0, f64::max)),
                    Engine::Cdma(a, cfg) => Ok(encode_cdma(&f.truth, a, cfg)?
                        .samples
                        .into_iter()
                        .fold(0.0, f64::max)),
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Some(default_full_scale(max_clean, &noise))
        }
    };
    resolved.adc.full_scale = full_scale;
    let adc = adc_for(
        resolved.adc.bits,
        full_scale.unwrap_or(1.0),
        resolved.adc.enabled,
    );

    let mut results = Vec::with_capacity(frames.len());
    let mut clipped = 0;
    let (mut max_rel, mut max_dark) = (0.0f64, 0.0f64);
    for (i, frame) in frames.iter().enumerate() {
        let acq = match &engine {
            Engine::Tdma(schedule, bank) => acquire_tdma(
                &frame.truth,
                &grid,
                scenario.mode,
                schedule,
                bank,
                &noise,
                &adc,
                i,
                &scenario.outputs,
            )?,
            Engine::Cdma(a, cfg) => acquire_cdma(
                &frame.truth,
                &grid,
                a,
                cfg,
                &noise,
                &adc,
                i,
                &scenario.outputs,
            )?,
        };
        clipped += acq.clipped;
        let (rel, dark) = acq.image.max_errors(&frame.truth);
        max_rel = max_rel.max(rel);
        max_dark = max_dark.max(dark);
        results.push(FrameResult {
            label: frame.label.clone(),
            truth: frame.truth.clone(),
            image: acq.image.scaled(scenario.mode_scale),
            spectra: acq.spectra,
            streams: acq.streams,
            complementary: acq.complementary,
        });
    }

    let first = &results[0];
    let unscaled = first.image.scaled(1.0 / scenario.mode_scale);
    let pixels = (npix <= PIXEL_TABLE_LIMIT).then(|| {
        (0..npix)
            .map(|p| {
                let (slot, channel) = unscaled.provenance[p];
                let designed = first.truth.irradiance[p];
                let recovered = unscaled.values[p];
                PixelRow {
                    pixel: p,
                    slot,
                    channel,
                    code: if scenario.mode == Mode::Cdma {
                        channel as f64
                    } else {
                        carriers[channel]
                    },
                    designed,
                    recovered,
                    relative_error: if designed != 0.0 {
                        (recovered - designed).abs() / designed
                    } else {
                        recovered.abs()
                    },
                }
            })
            .collect()
    });
    let lit: Vec<usize> = (0..npix)
        .filter(|&p| first.truth.irradiance[p] > 0.0)
        .collect();
    let brightest = lit
        .iter()
        .copied()
        .max_by(|&a, &b| first.truth.irradiance[a].total_cmp(&first.truth.irradiance[b]));
    let dimmest = lit
        .iter()
        .copied()
        .min_by(|&a, &b| first.truth.irradiance[a].total_cmp(&first.truth.irradiance[b]));
    let (designed_dr_db, recovered_dr_db) = match (brightest, dimmest) {
        (Some(b), Some(d)) => (
            dynamic_range_db(first.truth.irradiance[b], first.truth.irradiance[d]).ok(),
            dynamic_range_db(unscaled.values[b], unscaled.values[d]).ok(),
        ),
        _ => (None, None),
    };
    let patches = match &frames[0].patches {
        Some(t) => Some(PatchReport::measure(&first.image, t)?),
        None => None,
    };
    let stripes: Option<Vec<StripeRow>> = frames[0].stripe.is_some().then(|| {
        frames
            .iter()
            .zip(&results)
            .filter_map(|(f, r)| {
                let truth = f.stripe?;
                let (rows, cols) = detect_stripe(&r.image);
                Some(StripeRow {
                    frame: f.label.clone(),
                    center_nm: truth.band.center_nm,
                    bandwidth_nm: truth.band.bandwidth_nm,
                    commanded_row: truth.row,
                    ok: truth.columns.is_some() && rows == [truth.row] && cols == truth.columns,
                    detected_rows: rows,
                    expected_columns: truth.columns,
                    detected_columns: cols,
                })
            })
            .collect()
    });
    let stripes_ok =
        stripes.as_ref().map(|rows| {
            let steps_ok = frames.windows(2).zip(rows.windows(2)).all(|(f, r)| {
                match (f[0].stripe, f[1].stripe) {
                    (Some(a), Some(b)) if a.band == b.band => {
                        r[1].detected_rows.first().map(|x| *x as i64)
                            == r[0].detected_rows.first().map(|x| *x as i64 + 1)
                    }
                    _ => true,
                }
            });
            steps_ok && rows.iter().all(|r| r.ok)
        });

    let report = RunReport {
        name: scenario.name.clone(),
        mode: scenario.mode,
        pixel_count: npix,
        frame_count: frames.len(),
        slot_count,
        samples_per_slot,
        fs,
        delta_f,
        carriers,
        encoding_time_s: frame_time,
        fm_tdma_encoding_time_s: fm_time,
        speedup_vs_fm_tdma: fm_time.map(|t| speedup(t, frame_time)).transpose()?,
        processing_gain_db: gain,
        processing_gain_note: (scenario.mode != Mode::Cdma)
            .then(|| processing_gain_note(samples_per_slot))
            .flatten(),
        adc_full_scale: full_scale.filter(|_| resolved.adc.enabled),
        clipped_samples: clipped,
        validation,
        pixels,
        designed_dr_db,
        recovered_dr_db,
        max_relative_error: max_rel,
        max_dark_error: max_dark,
        patches,
        stripes,
        stripes_ok,
    };
    Ok(Simulation {
        resolved,
        report,
        frames: results,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub name: String,
    pub wavelength_nm: f64,
    pub diffraction_angle_deg: f64,
    pub dispersion_nm_per_mrad: f64,
    pub reference_nm_per_mrad: f64,
    pub relative_deviation: f64,
    pub band_nm: [f64; 2],
    pub columns: usize,
    pub anchors: AnchorPreset,
    pub mean_nm_per_column: f64,
    /// Same band with the other anchor preset, for comparison.
    pub mean_nm_per_column_alt: f64,
    pub lens_violations: Vec<LensViolation>,
    /// Violations found for CF2 and CF3 perturbed by +10%.
    pub perturbed_violations: Vec<Vec<LensViolation>>,
}

impl DispersionReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "{}", self.name);
        let _ = writeln!(
            w,
            "diffraction angle at {} nm: {:.4} deg",
            self.wavelength_nm, self.diffraction_angle_deg
        );
        let _ = writeln!(
            w,
            "angular dispersion: {:.4} nm/mrad (reference {} nm/mrad, {:+.1}%)",
            self.dispersion_nm_per_mrad,
            self.reference_nm_per_mrad,
            100.0 * self.relative_deviation
        );
        let _ = writeln!(
            w,
            "mean width per column over {}-{} nm across {} columns: {:.4} nm ({:?}); {:.4} nm with the other anchors",
            self.band_nm[0],
            self.band_nm[1],
            self.columns,
            self.mean_nm_per_column,
            self.anchors,
            self.mean_nm_per_column_alt
        );
        let _ = writeln!(
            w,
            "lens constraints: {}",
            if self.lens_violations.is_empty() {
                "satisfied".to_string()
            } else {
                format!("{:?}", self.lens_violations)
            }
        );
        for v in &self.perturbed_violations {
            let _ = writeln!(w, "  perturbed: {v:?}");
        }
        out
    }
}

pub fn dispersion_check(d: &DispersionCheck) -> Result<DispersionReport> {
    d.optics.check()?;
    let disp = angular_dispersion(d.wavelength_nm, &d.optics)?;
    let beta = grating_beta(d.wavelength_nm, &d.optics)?;
    let anchors: [SpectralAnchor; 2] = d.anchors.anchors(d.columns);
    let alt = match d.anchors {
        AnchorPreset::Span412 => AnchorPreset::Span399,
        AnchorPreset::Span399 => AnchorPreset::Span412,
    };
    let [lo, hi] = d.band_nm;
    let perturbed = [1, 2]
        .iter()
        .map(|&i| {
            let mut o = d.optics;
            o.cyl_focal_cm[i] *= 1.1;
            check_lens_constraints(&o)
        })
        .collect();
    Ok(DispersionReport {
        name: d.name.clone(),
        wavelength_nm: d.wavelength_nm,
        diffraction_angle_deg: beta.to_degrees(),
        dispersion_nm_per_mrad: disp,
        reference_nm_per_mrad: d.reference_nm_per_mrad,
        relative_deviation: (disp - d.reference_nm_per_mrad) / d.reference_nm_per_mrad,
        band_nm: d.band_nm,
        columns: d.columns,
        anchors: d.anchors,
        mean_nm_per_column: mean_nm_per_column(lo, hi, &d.optics, &anchors)?,
        mean_nm_per_column_alt: mean_nm_per_column(lo, hi, &d.optics, &alt.anchors(d.columns))?,
        lens_violations: check_lens_constraints(&d.optics),
        perturbed_violations: perturbed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JobReport {
    Simulation(Box<RunReport>),
    Dispersion(DispersionReport),
}

impl JobReport {
    pub fn summary(&self) -> String {
        match self {
            JobReport::Simulation(r) => r.summary(),
            JobReport::Dispersion(d) => d.summary(),
        }
    }
}

/// Files written by [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub report: JobReport,
    pub files: Vec<PathBuf>,
}

fn write_spectra(path: &Path, spectra: &[(usize, Vec<f64>)], delta_f: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["bin".to_string(), "frequency_hz".to_string()];
    header.extend(spectra.iter().map(|(s, _)| format!("slot_{s}")));
    w.write_record(&header)?;
    let len = spectra.first().map_or(0, |s| s.1.len());
    for k in 0..len {
        let mut rec = vec![k.to_string(), format!("{}", k as f64 * delta_f)];
        rec.extend(spectra.iter().map(|(_, m)| format!("{:e}", m[k])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_frame(
    dir: &Path,
    stem: &str,
    frame: &FrameResult,
    log_display: bool,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let img = &frame.image;
    let csv_path = dir.join(format!("{stem}.csv"));
    io::write_matrix_csv(&csv_path, img.rows, img.cols, &img.values)?;
    let pgm_path = dir.join(format!("{stem}.pgm"));
    io::write_pgm16(
        &pgm_path,
        img.rows,
        img.cols,
        &io::to_grey16(&img.values, log_display),
    )?;
    files.push(csv_path);
    files.push(pgm_path);
    Ok(())
}

/// Runs a job and writes its artifacts under the output directory.
pub fn run(job: &Job, output_override: Option<&Path>) -> Result<RunOutcome> {
    let dir = job.output_dir(output_override);
    match job {
        Job::DispersionCheck(d) => {
            let report = dispersion_check(d)?;
            fs::create_dir_all(&dir)?;
            let mut files = Vec::new();
            let resolved = dir.join("resolved.json");
            io::write_json(&resolved, job)?;
            let metrics = dir.join("metrics.json");
            io::write_json(&metrics, &report)?;
            let text = dir.join("report.txt");
            fs::write(&text, report.summary())?;
            files.extend([resolved, metrics, text]);
            Ok(RunOutcome {
                output_dir: dir,
                report: JobReport::Dispersion(report),
                files,
            })
        }
        Job::Simulation(s) => {
            let sim = simulate(s)?;
            fs::create_dir_all(&dir)?;
            let mut files = Vec::new();
            let resolved = dir.join("resolved.json");
            io::write_json(&resolved, &Job::Simulation(sim.resolved.clone()))?;
            files.push(resolved);
            let log_display = s.outputs.log_display;
            if sim.frames.len() == 1 {
                write_frame(&dir, "image", &sim.frames[0], log_display, &mut files)?;
            } else {
                for f in &sim.frames {
                    write_frame(
                        &dir,
                        &format!("image_{}", f.label),
                        f,
                        log_display,
                        &mut files,
                    )?;
                }
            }
            let first = &sim.frames[0];
            if !first.spectra.is_empty() {
                let p = dir.join("spectra.csv");
                write_spectra(&p, &first.spectra, sim.report.delta_f.unwrap_or(1.0))?;
                files.push(p);
            }
            if !first.streams.is_empty() {
                let p = dir.join("streams.csv");
                io::write_streams_csv(&p, &first.streams)?;
                files.push(p);
            }
            if !first.complementary.is_empty() {
                let p = dir.join("streams_pd2.csv");
                io::write_streams_csv(&p, &first.complementary)?;
                files.push(p);
            }
            if let Some(p) = &sim.report.patches {
                let path = dir.join("patches.csv");
                fs::write(&path, p.to_csv()?)?;
                files.push(path);
            }
            let metrics = dir.join("metrics.json");
            io::write_json(&metrics, &sim.report)?;
            let text = dir.join("report.txt");
            fs::write(&text, sim.report.summary())?;
            files.extend([metrics, text]);
            Ok(RunOutcome {
                output_dir: dir,
                report: JobReport::Simulation(Box::new(sim.report)),
                files,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    fn sim(name: &str) -> Scenario {
        match preset(name).unwrap() {
            Job::Simulation(s) => s,
            Job::DispersionCheck(_) => unreachable!(),
        }
    }

    #[test]
    fn table5_recovers_every_channel() {
        let out = simulate(&sim("table5")).unwrap();
        let r = &out.report;
        assert_eq!(r.slot_count, 1);
        for row in r.pixels.as_ref().unwrap() {
            assert!(row.relative_error < 1e-6, "{row:?}");
        }
        assert!((r.designed_dr_db.unwrap() - 140.0).abs() < 1e-9);
        assert!((r.recovered_dr_db.unwrap() - 140.0).abs() < 1e-3);
        assert_eq!(out.frames[0].spectra[0].1.len(), 32769);
    }

    #[test]
    fn strict_mode_refuses_invalid_plan() {
        let mut s = sim("fig9-invalid");
        s.strict = true;
        assert!(matches!(simulate(&s), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn resolved_config_round_trips_and_reruns_identically() {
        let mut s = sim("fig6");
        s.noise.awgn_sigma = 0.01;
        s.seed = 5;
        s.adc.enabled = true;
        let a = simulate(&s).unwrap();
        let text = Job::Simulation(a.resolved.clone()).to_json().unwrap();
        let Job::Simulation(back) = Job::from_json(&text).unwrap() else {
            unreachable!()
        };
        assert_eq!(back, a.resolved);
        let b = simulate(&back).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn cdma_uniform_round_trip() {
        let mut s = sim("spectral-line");
        s.target = TargetSpec::Uniform { value: 0.5 };
        s.noise = NoiseConfig::default();
        s.adc.enabled = false;
        s.outputs = OutputSpec::default();
        let out = simulate(&s).unwrap();
        assert!(out.report.max_relative_error < 1e-9);
        assert_eq!(out.report.encoding_time_s, 2.048);
    }

    #[test]
    fn dispersion_report() {
        let Job::DispersionCheck(d) = preset("dispersion-check").unwrap() else {
            unreachable!()
        };
        let r = dispersion_check(&d).unwrap();
        assert!(r.relative_deviation.abs() < 0.1);
        assert!((r.mean_nm_per_column - 6.15).abs() < 0.1);
        assert!(r.lens_violations.is_empty());
        assert!(r.perturbed_violations.iter().all(|v| !v.is_empty()));
    }

    #[test]
    fn run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let job = preset("fig6").unwrap();
        let out = run(&job, Some(dir.path())).unwrap();
        for f in [
            "resolved.json",
            "image.csv",
            "image.pgm",
            "spectra.csv",
            "streams.csv",
            "streams_pd2.csv",
            "metrics.json",
            "report.txt",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(out.files.len(), 8);
        let again = tempfile::tempdir().unwrap();
        run(&job, Some(again.path())).unwrap();
        for f in &out.files {
            let name = f.file_name().unwrap();
            assert_eq!(
                fs::read(f).unwrap(),
                fs::read(again.path().join(name)).unwrap(),
                "{name:?}"
            );
        }
    }
}
