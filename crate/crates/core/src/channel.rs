//! Photodetection-chain impairments: dark offset, mains hum, white and 1/f
//! noise, and ADC quantization.
//!
//! Gaussian draws are keyed by `(seed, slot, sample)` through a ChaCha
//! keystream, so a slot's noise does not depend on which thread produced it
//! or in what order slots were processed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::fft::{fft_in_place, ifft_in_place};
use crate::waveform::SampledSignal;
use crate::{Error, Result};

/// Optional 1/f^exponent noise added on top of the white term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinkNoise {
    /// RMS of the coloured term, linear irradiance units.
    pub sigma: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

fn default_exponent() -> f64 {
    1.0
}

fn default_mains_freq() -> f64 {
    50.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub awgn_sigma: f64,
    #[serde(default)]
    pub mains_amplitude: f64,
    #[serde(default = "default_mains_freq")]
    pub mains_freq: f64,
    #[serde(default)]
    pub mains_phase: f64,
    #[serde(default)]
    pub pink: Option<PinkNoise>,
    #[serde(default)]
    pub dark_offset: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            awgn_sigma: 0.0,
            mains_amplitude: 0.0,
            mains_freq: default_mains_freq(),
            mains_phase: 0.0,
            pink: None,
            dark_offset: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn check(&self) -> Result<()> {
        let nonneg = [
            ("awgn_sigma", self.awgn_sigma),
            ("mains_amplitude", self.mains_amplitude),
            ("dark_offset", self.dark_offset),
            ("pink.sigma", self.pink.map_or(0.0, |p| p.sigma)),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} must be >= 0"
                )));
            }
        }
        if !self.mains_freq.is_finite() || !self.mains_phase.is_finite() {
            return Err(Error::InvalidParameter("mains tone must be finite".into()));
        }
        if let Some(p) = self.pink {
            if !p.exponent.is_finite() {
                return Err(Error::InvalidParameter(
                    "pink exponent must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.awgn_sigma == 0.0
            && self.mains_amplitude == 0.0
            && self.dark_offset == 0.0
            && self.pink.is_none_or(|p| p.sigma == 0.0)
    }
}

fn white_stream(slot: u64) -> u64 {
    slot.wrapping_mul(2)
}

fn pink_stream(slot: u64) -> u64 {
    slot.wrapping_mul(2).wrapping_add(1)
}

/// Sequential standard normal draws for one `(seed, stream)` key. Each draw
/// consumes exactly two 64-bit words, so draw `n` starts at word `4n`.
struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    fn new(seed: u64, stream: u64, start: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.set_word_pos(4 * start as u128);
        Self { rng }
    }

    fn next(&mut self) -> f64 {
        let u1 = unit_open(self.rng.next_u64());
        let u2 = unit_open(self.rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

/// Maps 53 random bits into the open interval (0, 1).
fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// The white-noise draw for sample `n` of slot `slot`, without generating the
/// samples before it.
pub fn gaussian_at(seed: u64, slot: u64, n: u64) -> f64 {
    GaussianStream::new(seed, white_stream(slot), n).next()
}

/// Zero-mean noise with a `1/f^exponent` power spectrum and RMS `sigma`,
/// shaped in the frequency domain from a keyed Gaussian sequence.
fn pink_noise(len: usize, pink: &PinkNoise, seed: u64, slot: u64) -> Vec<f64> {
    if len == 0 || pink.sigma == 0.0 {
        return vec![0.0; len];
    }
    let n = len.next_power_of_two().max(2);
    let mut g = GaussianStream::new(seed, pink_stream(slot), 0);
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(g.next(), 0.0)).collect();
    fft_in_place(&mut buf).expect("power-of-two length");
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..=n / 2 {
        let w = (k as f64).powf(-pink.exponent / 2.0);
        buf[k] *= w;
        if k != n - k {
            buf[n - k] *= w;
        }
    }
    ifft_in_place(&mut buf).expect("power-of-two length");
    let mut out: Vec<f64> = buf[..len].iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / len as f64;
    let rms = (out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len as f64).sqrt();
    let scale = if rms > 0.0 { pink.sigma / rms } else { 0.0 };
    for x in &mut out {
        *x = (*x - mean) * scale;
    }
    out
}

/// Adds dark offset, mains tone, white Gaussian noise and optional 1/f noise.
pub fn add_noise(stream: &SampledSignal, cfg: &NoiseConfig, slot_index: u64) -> SampledSignal {
    if cfg.is_silent() {
        return stream.clone();
    }
    let fs = stream.fs;
    let omega = 2.0 * PI * cfg.mains_freq / fs;
    let mut white = GaussianStream::new(cfg.seed, white_stream(slot_index), 0);
    let mut samples: Vec<f64> = stream
        .samples
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let mut y = x + cfg.dark_offset;
            if cfg.mains_amplitude != 0.0 {
                y += cfg.mains_amplitude * (omega * n as f64 + cfg.mains_phase).sin();
            }
            if cfg.awgn_sigma != 0.0 {
                y += cfg.awgn_sigma * white.next();
            }
            y
        })
        .collect();
    if let Some(pink) = &cfg.pink {
        for (y, p) in samples
            .iter_mut()
            .zip(pink_noise(stream.len(), pink, cfg.seed, slot_index))
        {
            *y += p;
        }
    }
    SampledSignal::new(samples, fs)
}

fn default_bits() -> u32 {
    16
}

fn default_true() -> bool {
    true
}

/// Unipolar ADC: codes `0..2^bits`, step `full_scale / 2^bits`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    #[serde(default = "default_bits")]
    pub bits: u32,
    pub full_scale: f64,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl AdcConfig {
    pub fn new(bits: u32, full_scale: f64) -> Result<Self> {
        let cfg = Self {
            bits,
            full_scale,
            enabled: true,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn disabled() -> Self {
        Self {
            bits: default_bits(),
            full_scale: 1.0,
            enabled: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(2..=24).contains(&self.bits) {
            return Err(Error::InvalidParameter(format!(
                "ADC bits {} outside 2..=24",
                self.bits
            )));
        }
        if !(self.full_scale.is_finite() && self.full_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ADC full scale {} must be > 0",
                self.full_scale
            )));
        }
        Ok(())
    }

    pub fn lsb(&self) -> f64 {
        self.full_scale / (1u64 << self.bits) as f64
    }
}

/// Rounds every sample to the nearest ADC code and maps it back to linear
/// units. A sample counts as clipped if it lies below zero or above the
/// top code by more than half a step.
pub fn quantize(stream: &SampledSignal, cfg: &AdcConfig) -> Result<(SampledSignal, usize)> {
    if !cfg.enabled {
        return Ok((stream.clone(), 0));
    }
    cfg.check()?;
    let step = cfg.lsb();
    let top = ((1u64 << cfg.bits) - 1) as f64;
    let mut clipped = 0;
    let samples = stream
        .samples
        .iter()
        .map(|&x| {
            let code = (x / step).round();
            let code = if x < 0.0 || code > top || !x.is_finite() {
                clipped += 1;
                if x > 0.0 {
                    top
                } else {
                    0.0
                }
            } else {
                code
            };
            code * step
        })
        .collect();
    Ok((SampledSignal::new(samples, stream.fs), clipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::fft_radix2;
    use proptest::prelude::*;

    fn ramp(len: usize) -> SampledSignal {
        SampledSignal::new((0..len).map(|i| i as f64 / len as f64).collect(), 1024.0)
    }

    #[test]
    fn silent_config_is_identity() {
        let s = ramp(64);
        assert_eq!(add_noise(&s, &NoiseConfig::default(), 3), s);
    }

    #[test]
    fn mains_tone_lands_in_its_bin() {
        let cfg = NoiseConfig {
            mains_amplitude: 0.5,
            ..NoiseConfig::default()
        };
        let s = add_noise(&SampledSignal::zeros(1024, 1024.0), &cfg, 0);
        let spec = fft_radix2(&s).unwrap();
        for (k, x) in spec.bins.iter().enumerate() {
            if k == 50 || k == 1024 - 50 {
                assert!((x.norm() - 256.0).abs() < 1e-9);
            } else {
                assert!(x.norm() < 1e-9, "bin {k}: {}", x.norm());
            }
        }
    }

    #[test]
    fn dark_offset_shifts_dc_only() {
        let cfg = NoiseConfig {
            dark_offset: 0.25,
            ..NoiseConfig::default()
        };
        let s = add_noise(&ramp(8), &cfg, 0);
        assert!(s
            .samples
            .iter()
            .zip(&ramp(8).samples)
            .all(|(a, b)| a - b == 0.25));
    }

    #[test]
    fn noise_is_keyed_by_seed_and_slot() {
        let cfg = NoiseConfig {
            awgn_sigma: 1.0,
            seed: 7,
            pink: Some(PinkNoise {
                sigma: 0.3,
                exponent: 1.0,
            }),
            ..NoiseConfig::default()
        };
        let z = SampledSignal::zeros(500, 1000.0);
        assert_eq!(add_noise(&z, &cfg, 4), add_noise(&z, &cfg, 4));
        assert_ne!(add_noise(&z, &cfg, 4), add_noise(&z, &cfg, 5));
        let other = NoiseConfig { seed: 8, ..cfg };
        assert_ne!(add_noise(&z, &cfg, 4), add_noise(&z, &other, 4));
    }

    #[test]
    fn random_access_matches_sequential() {
        let cfg = NoiseConfig {
            awgn_sigma: 1.0,
            seed: 42,
            ..NoiseConfig::default()
        };
        let s = add_noise(&SampledSignal::zeros(300, 1.0), &cfg, 9);
        for n in [0, 1, 17, 299] {
            assert_eq!(s.samples[n], gaussian_at(42, 9, n as u64));
        }
    }

    #[test]
    fn white_noise_statistics() {
        let draws: Vec<f64> = {
            let mut g = GaussianStream::new(1, 0, 0);
            (0..200_000).map(|_| g.next()).collect()
        };
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn pink_noise_has_requested_rms_and_falling_spectrum() {
        let p = PinkNoise {
            sigma: 0.5,
            exponent: 1.0,
        };
        let x = pink_noise(4096, &p, 3, 0);
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / 4096.0).sqrt();
        assert!((rms - 0.5).abs() < 1e-9);
        let spec = fft_radix2(&SampledSignal::new(x, 4096.0)).unwrap();
        let band = |lo: usize, hi: usize| -> f64 {
            spec.bins[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>() / (hi - lo) as f64
        };
        assert!(band(1, 32) > 10.0 * band(1024, 2048));
        // Non-power-of-two lengths are truncated from the next power of two.
        assert_eq!(pink_noise(1000, &p, 3, 0).len(), 1000);
    }

    #[test]
    fn quantize_disabled_and_clipping() {
        let s = ramp(16);
        let (q, c) = quantize(&s, &AdcConfig::disabled()).unwrap();
        assert_eq!((q, c), (s, 0));
        let cfg = AdcConfig::new(16, 1.0).unwrap();
        let big = SampledSignal::new(vec![2.0; 10], 1.0);
        let (q, c) = quantize(&big, &cfg).unwrap();
        assert_eq!(c, 10);
        assert!(q.samples.iter().all(|&x| x == 1.0 - cfg.lsb()));
        let (_, c) = quantize(&SampledSignal::new(vec![-0.1, 0.0], 1.0), &cfg).unwrap();
        assert_eq!(c, 1);
        assert!(AdcConfig::new(1, 1.0).is_err());
        assert!(AdcConfig::new(16, 0.0).is_err());
    }

    #[test]
    fn half_scale_round_trip() {
        let cfg = AdcConfig::new(16, 1.0).unwrap();
        let s = SampledSignal::new(vec![0.5 + 1e-7; 4], 1.0);
        let (q, c) = quantize(&s, &cfg).unwrap();
        assert_eq!(c, 0);
        assert!(q
            .samples
            .iter()
            .all(|&x| (x - s.samples[0]).abs() <= 1.0 / 131072.0));
    }

    proptest! {
        #[test]
        fn quantization_error_is_at_most_half_lsb(
            xs in proptest::collection::vec(-0.2f64..1.2, 1..200),
            bits in 2u32..=24,
            fs in 0.1f64..10.0,
        ) {
            let cfg = AdcConfig::new(bits, fs).unwrap();
            let input = SampledSignal::new(xs.iter().map(|x| x * fs).collect(), 1.0);
            let (q, clipped) = quantize(&input, &cfg).unwrap();
            let mut unclipped = 0;
            for (a, b) in input.samples.iter().zip(&q.samples) {
                prop_assert!(*b >= 0.0 && *b < fs);
                if *a >= 0.0 && *a <= fs - cfg.lsb() / 2.0 {
                    unclipped += 1;
                    prop_assert!((a - b).abs() <= cfg.lsb() / 2.0 * (1.0 + 1e-12));
                }
            }
            prop_assert!(clipped + unclipped >= input.len());
        }
    }
}
