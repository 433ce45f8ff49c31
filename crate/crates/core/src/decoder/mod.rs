//! Irradiance recovery: FFT magnitudes at carrier bins for FM/FDMA slots,
//! Walsh correlation for CDMA, and assembly into an image.

pub mod fft;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::encoder::{fwht, CdmaConfig, TdmaSchedule, TdmaSlot, WalshAssignment};
use crate::freq_plan::ChannelSet;
use crate::scene::{CaosGrid, Scene};
use crate::waveform::{as_integer, fundamental_coeff, SampledSignal};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Cdma,
    FmTdma,
    FdmaTdma,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Cdma => "cdma",
            Mode::FmTdma => "fm-tdma",
            Mode::FdmaTdma => "fdma-tdma",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// DFT of one slot stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub fs: f64,
    pub delta_f: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }
}

/// Radix-2 FFT of a sampled stream. Lengths that are not powers of two are
/// rejected rather than padded, since padding breaks whole-cycle alignment.
pub fn fft_radix2(signal: &SampledSignal) -> Result<Spectrum> {
    let bins = fft::fft_real(&signal.samples)?;
    let delta_f = signal.fs / bins.len() as f64;
    Ok(Spectrum {
        bins,
        fs: signal.fs,
        delta_f,
    })
}

/// `|X[b_j]| / (Q a1(N_j))`, the irradiance of the pixel on carrier `f_j`.
///
/// For off-grid carriers (permissive runs only) the nearest bin is read and
/// `N_j` is the real-valued period, so the estimate shows the leakage.
pub fn recover_channel_irradiance(
    spectrum: &Spectrum,
    frequency: f64,
    channels: &ChannelSet,
) -> Result<f64> {
    let idx = channels
        .index_of(frequency)
        .ok_or(Error::UnknownChannel { frequency })?;
    let q = spectrum.len();
    if q != channels.window.q {
        return Err(Error::LengthMismatch {
            expected: channels.window.q,
            actual: q,
        });
    }
    let bin = channels.bin(idx);
    let period = spectrum.fs / frequency;
    let period = as_integer(period).map_or(period, |n| n as f64);
    Ok(spectrum.bins[bin % q].norm() / (q as f64 * fundamental_coeff(period)))
}

/// One decoded pixel with where it came from. For CDMA, `slot` is 0 and
/// `channel` is the Walsh row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelEstimate {
    pub pixel: usize,
    pub slot: usize,
    pub channel: usize,
    pub value: f64,
}

/// FFTs the slot stream once and reads every assigned channel.
pub fn decode_slot(
    stream: &SampledSignal,
    slot: &TdmaSlot,
    channels: &ChannelSet,
) -> Result<Vec<PixelEstimate>> {
    if stream.len() != channels.window.q {
        return Err(Error::LengthMismatch {
            expected: channels.window.q,
            actual: stream.len(),
        });
    }
    let spectrum = fft_radix2(stream)?;
    decode_spectrum(&spectrum, slot, channels)
}

pub fn decode_spectrum(
    spectrum: &Spectrum,
    slot: &TdmaSlot,
    channels: &ChannelSet,
) -> Result<Vec<PixelEstimate>> {
    slot.assignments
        .iter()
        .map(|a| {
            Ok(PixelEstimate {
                pixel: a.pixel,
                slot: slot.index,
                channel: a.channel,
                value: recover_channel_irradiance(spectrum, a.frequency, channels)?,
            })
        })
        .collect()
}

/// Recovered irradiances on the source grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedImage {
    pub rows: usize,
    pub cols: usize,
    /// Row-major estimates; CDMA values may be slightly negative under noise.
    pub values: Vec<f64>,
    pub mode: Mode,
    /// `(slot, channel)` per pixel; for CDMA `(0, walsh_row)`.
    pub provenance: Vec<(usize, usize)>,
}

impl DecodedImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn pixel_count(&self) -> usize {
        self.values.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Copy with negative estimates set to zero, for display.
    pub fn clamped(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
            ..self.clone()
        }
    }

    /// Largest `|decoded - truth| / |truth|` over pixels with nonzero truth,
    /// and largest absolute error over zero pixels.
    pub fn max_errors(&self, truth: &Scene) -> (f64, f64) {
        let mut rel: f64 = 0.0;
        let mut abs: f64 = 0.0;
        for (d, t) in self.values.iter().zip(&truth.irradiance) {
            if *t != 0.0 {
                rel = rel.max((d - t).abs() / t.abs());
            } else {
                abs = abs.max(d.abs());
            }
        }
        (rel, abs)
    }
}

/// Correlation decode: `I_k = (2/L) sum_b s_b c_k[b]` with `s_b` the mean of
/// bit `b`'s samples. Zero-mean code rows cancel the on/off DC term.
pub fn decode_cdma(
    stream: &SampledSignal,
    assignment: &WalshAssignment,
    cfg: &CdmaConfig,
    grid: &CaosGrid,
) -> Result<DecodedImage> {
    cfg.check()?;
    let l = assignment.code_length;
    let spb = cfg.samples_per_bit;
    if stream.len() != l * spb {
        return Err(Error::LengthMismatch {
            expected: l * spb,
            actual: stream.len(),
        });
    }
    if grid.pixel_count() != assignment.pixel_count() {
        return Err(Error::LengthMismatch {
            expected: grid.pixel_count(),
            actual: assignment.pixel_count(),
        });
    }
    let mut bits: Vec<f64> = stream
        .samples
        .chunks_exact(spb)
        .map(|c| c.iter().sum::<f64>() / spb as f64)
        .collect();
    fwht(&mut bits)?;
    let scale = 2.0 / l as f64;
    let values = assignment
        .pixel_to_row
        .iter()
        .map(|&r| scale * bits[r])
        .collect();
    Ok(DecodedImage {
        rows: grid.rows,
        cols: grid.cols,
        values,
        mode: Mode::Cdma,
        provenance: assignment.pixel_to_row.iter().map(|&r| (0, r)).collect(),
    })
}

/// Places slot estimates by pixel id. Every grid pixel must be covered by
/// exactly one estimate that agrees with the schedule.
pub fn assemble_image(
    estimates: &[PixelEstimate],
    schedule: &TdmaSchedule,
    grid: &CaosGrid,
    mode: Mode,
) -> Result<DecodedImage> {
    let npix = grid.pixel_count();
    if schedule.pixel_count != npix {
        return Err(Error::Coverage(format!(
            "schedule covers {} pixels, grid has {npix}",
            schedule.pixel_count
        )));
    }
    let mut values = vec![0.0; npix];
    let mut provenance = vec![(usize::MAX, usize::MAX); npix];
    for e in estimates {
        if e.pixel >= npix {
            return Err(Error::Coverage(format!("pixel {} outside grid", e.pixel)));
        }
        let scheduled = schedule
            .slots
            .get(e.slot)
            .and_then(|s| s.assignments.iter().find(|a| a.pixel == e.pixel))
            .is_some_and(|a| a.channel == e.channel);
        if !scheduled {
            return Err(Error::Coverage(format!(
                "pixel {} not scheduled in slot {} channel {}",
                e.pixel, e.slot, e.channel
            )));
        }
        if provenance[e.pixel].0 != usize::MAX {
            return Err(Error::Coverage(format!("pixel {} decoded twice", e.pixel)));
        }
        values[e.pixel] = e.value;
        provenance[e.pixel] = (e.slot, e.channel);
    }
    if let Some(gap) = provenance.iter().position(|p| p.0 == usize::MAX) {
        return Err(Error::Coverage(format!("pixel {gap} has no estimate")));
    }
    Ok(DecodedImage {
        rows: grid.rows,
        cols: grid.cols,
        values,
        mode,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_cdma, encode_fdma_tdma, schedule_fdma_tdma};
    use crate::freq_plan::design_plan;
    use crate::waveform::{synth_square, SamplingWindow, SquareWaveSpec};

    #[test]
    fn unit_square_decodes_to_one() {
        let w = SamplingWindow::new(65536.0, 1.0).unwrap();
        let s = synth_square(&SquareWaveSpec::new(64.0, 1.0), &w).unwrap();
        let set = ChannelSet::single(64.0, w).unwrap();
        let v = recover_channel_irradiance(&fft_radix2(&s).unwrap(), 64.0, &set).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        let zero = fft_radix2(&SampledSignal::zeros(65536, 65536.0)).unwrap();
        assert_eq!(recover_channel_irradiance(&zero, 64.0, &set).unwrap(), 0.0);
        assert!(matches!(
            recover_channel_irradiance(&zero, 128.0, &set),
            Err(Error::UnknownChannel { .. })
        ));
    }

    #[test]
    fn eight_equal_pixels() {
        let plan = design_plan(1.0, 16, 7, 8).unwrap();
        let set = plan.channel_set();
        let scene = Scene::new(1, 8, vec![1.0; 8]).unwrap();
        let sched = schedule_fdma_tdma(8, &set);
        let s = encode_fdma_tdma(&scene, &sched, &set, &plan.window()).unwrap();
        let est = decode_slot(&s[0], &sched.slots[0], &set).unwrap();
        assert_eq!(est.len(), 8);
        assert!(est.iter().all(|e| (e.value - 1.0).abs() < 1e-9));
    }

    #[test]
    fn cdma_small_round_trips() {
        let grid = CaosGrid::new(1, 1, 1).unwrap();
        let scene = Scene::new(1, 1, vec![3.5]).unwrap();
        let a = WalshAssignment::raster(1, 2).unwrap();
        let cfg = CdmaConfig::new(1.0, 4.0).unwrap();
        let s = encode_cdma(&scene, &a, &cfg).unwrap();
        assert_eq!(decode_cdma(&s, &a, &cfg, &grid).unwrap().values, vec![3.5]);

        let grid = CaosGrid::new(2, 2, 1).unwrap();
        let scene = Scene::new(2, 2, vec![0.3, 1.7, 0.0, 4.2]).unwrap();
        let a = WalshAssignment::new(8, vec![3, 6, 1, 7]).unwrap();
        let s = encode_cdma(&scene, &a, &cfg).unwrap();
        let d = decode_cdma(&s, &a, &cfg, &grid).unwrap();
        let (rel, abs) = d.max_errors(&scene);
        assert!(rel < 1e-12 && abs < 1e-12);
        assert_eq!(d.provenance[1], (0, 6));
        assert!(decode_cdma(&SampledSignal::zeros(5, 4.0), &a, &cfg, &grid).is_err());
    }

    #[test]
    fn assemble_checks_coverage() {
        let grid = CaosGrid::new(2, 2, 1).unwrap();
        let w = SamplingWindow::new(64.0, 1.0).unwrap();
        let set = ChannelSet::explicit(&[4.0, 8.0], w).unwrap();
        let sched = schedule_fdma_tdma(4, &set);
        let est: Vec<PixelEstimate> = sched
            .slots
            .iter()
            .flat_map(|s| {
                s.assignments.iter().map(move |a| PixelEstimate {
                    pixel: a.pixel,
                    slot: s.index,
                    channel: a.channel,
                    value: a.pixel as f64,
                })
            })
            .collect();
        let img = assemble_image(&est, &sched, &grid, Mode::FdmaTdma).unwrap();
        assert_eq!(img.values, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(img.provenance, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let mut rev = est.clone();
        rev.reverse();
        assert_eq!(
            assemble_image(&rev, &sched, &grid, Mode::FdmaTdma).unwrap(),
            img
        );
        assert!(assemble_image(&est[..3], &sched, &grid, Mode::FdmaTdma).is_err());
        let mut dup = est.clone();
        dup.push(est[0]);
        assert!(assemble_image(&dup, &sched, &grid, Mode::FdmaTdma).is_err());
    }
}
