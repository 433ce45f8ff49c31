//! Periodic square-wave synthesis and its discrete Fourier coefficients.
//!
//! A DMD pixel toggling on/off at a carrier frequency produces a sampled
//! square wave at the photodetector. With exactly half the samples of each
//! period high, every even harmonic of the carrier vanishes. The carrier
//! ladder in [`crate::freq_plan`] relies on that null.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative tolerance used when deciding that a floating ratio is integral.
pub(crate) const RATIO_TOL: f64 = 1e-9;

/// Returns `Some(n)` when `x` is an integer to within [`RATIO_TOL`].
pub(crate) fn as_integer(x: f64) -> Option<i64> {
    if !x.is_finite() {
        return None;
    }
    let r = x.round();
    if (x - r).abs() <= RATIO_TOL * r.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

/// A real, uniformly sampled photodetector waveform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub samples: Vec<f64>,
    /// Sample rate in samples/s.
    pub fs: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, fs: f64) -> Self {
        Self { samples, fs }
    }

    pub fn zeros(len: usize, fs: f64) -> Self {
        Self::new(vec![0.0; len], fs)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Accumulates `weight * other` into `self`.
    pub fn add_scaled(&mut self, other: &[f64], weight: f64) {
        debug_assert_eq!(self.samples.len(), other.len());
        for (s, o) in self.samples.iter_mut().zip(other) {
            *s += weight * o;
        }
    }
}

/// Acquisition window of one TDMA slot: `Q = fs * T` samples with `Q` a power of two.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingWindow {
    pub fs: f64,
    /// Slot duration `T` in seconds.
    pub duration: f64,
    /// Sample count `Q`.
    pub q: usize,
    /// FFT bin spacing `1 / T`.
    pub delta_f: f64,
}

impl SamplingWindow {
    pub fn new(fs: f64, duration: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite() && duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidWindow(format!(
                "fs = {fs} and T = {duration} must be positive"
            )));
        }
        let q = as_integer(fs * duration)
            .filter(|&q| q > 0)
            .ok_or_else(|| {
                Error::InvalidWindow(format!("fs * T = {} is not an integer", fs * duration))
            })? as usize;
        if !q.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(q));
        }
        Ok(Self {
            fs,
            duration,
            q,
            delta_f: 1.0 / duration,
        })
    }

    /// Window with `fs = 2^p / T`, i.e. `Q = 2^p`.
    pub fn from_exponent(duration: f64, p: u32) -> Result<Self> {
        if p > 40 {
            return Err(Error::InvalidWindow(format!(
                "p = {p} is unreasonably large"
            )));
        }
        let q = 1usize << p;
        Self::new(q as f64 / duration, duration)
    }

    /// `log2(Q)`.
    pub fn exponent(&self) -> u32 {
        self.q.trailing_zeros()
    }

    /// Samples per period of a carrier, if integral.
    pub fn period_samples(&self, frequency: f64) -> Option<usize> {
        as_integer(self.fs / frequency)
            .filter(|&n| n > 0)
            .map(|n| n as usize)
    }

    /// Checks that `frequency` fits the window as a whole-cycle carrier and
    /// returns its period in samples.
    pub fn check_carrier(&self, frequency: f64) -> Result<usize> {
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "carrier frequency {frequency} must be positive"
            )));
        }
        if frequency > self.fs / 2.0 {
            return Err(Error::AboveNyquist {
                frequency,
                fs: self.fs,
            });
        }
        let n = self
            .period_samples(frequency)
            .ok_or(Error::NonIntegerPeriod {
                frequency,
                fs: self.fs,
            })?;
        if n < 4 {
            return Err(Error::TooFewSamplesPerPeriod {
                frequency,
                samples: n as f64,
                min: 4,
            });
        }
        if !self.q.is_multiple_of(n) {
            return Err(Error::OffGrid {
                frequency,
                delta_f: self.delta_f,
            });
        }
        Ok(n)
    }
}

/// One DMD pixel's on/off modulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareWaveSpec {
    pub frequency: f64,
    pub amplitude: f64,
    /// Sample offset of the rising edge.
    #[serde(default)]
    pub phase_samples: i64,
    #[serde(default = "half")]
    pub duty: f64,
}

fn half() -> f64 {
    0.5
}

impl SquareWaveSpec {
    /// 50% duty, rising edge at sample 0.
    pub fn new(frequency: f64, amplitude: f64) -> Self {
        Self {
            frequency,
            amplitude,
            phase_samples: 0,
            duty: 0.5,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "amplitude {} must be >= 0",
                self.amplitude
            )));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "duty {} must lie in (0, 1)",
                self.duty
            )));
        }
        Ok(())
    }
}

/// Number of high samples per period of length `n` for a given duty.
fn high_samples(n: usize, duty: f64) -> usize {
    ((n as f64 * duty).round() as usize).clamp(1, n - 1)
}

/// Samples a whole-cycle square wave over the window.
///
/// The carrier must have an integer period `N >= 4` that divides `Q`, so the
/// window holds complete cycles only.
pub fn synth_square(spec: &SquareWaveSpec, window: &SamplingWindow) -> Result<SampledSignal> {
    spec.check()?;
    let n = window.check_carrier(spec.frequency)?;
    let high = high_samples(n, spec.duty);
    let period: Vec<f64> = (0..n as i64)
        .map(|i| {
            if ((i - spec.phase_samples).rem_euclid(n as i64) as usize) < high {
                spec.amplitude
            } else {
                0.0
            }
        })
        .collect();
    let samples = period.iter().copied().cycle().take(window.q).collect();
    Ok(SampledSignal::new(samples, window.fs))
}

/// Samples a square wave whose period need not be a whole number of samples.
///
/// Sample `n` is high when the fractional carrier phase `f n / fs` lies below
/// the duty. Used only to reproduce what happens with carriers that violate
/// the whole-cycle rule; partial cycles leak into neighbouring FFT bins.
pub fn synth_square_unaligned(
    spec: &SquareWaveSpec,
    window: &SamplingWindow,
) -> Result<SampledSignal> {
    spec.check()?;
    if window.check_carrier(spec.frequency).is_ok() {
        return synth_square(spec, window);
    }
    if spec.frequency > window.fs / 2.0 {
        return Err(Error::AboveNyquist {
            frequency: spec.frequency,
            fs: window.fs,
        });
    }
    let cycles_per_sample = spec.frequency / window.fs;
    let samples = (0..window.q as i64)
        .map(|i| {
            let phase = ((i - spec.phase_samples) as f64 * cycles_per_sample).rem_euclid(1.0);
            if phase < spec.duty {
                spec.amplitude
            } else {
                0.0
            }
        })
        .collect();
    Ok(SampledSignal::new(samples, window.fs))
}

fn check_symmetric_args(n: usize, n1: usize) -> Result<()> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "period N = {n} must be even"
        )));
    }
    if 2 * n1 + 1 > n {
        return Err(Error::InvalidParameter(format!(
            "2*N1 + 1 = {} exceeds N = {n}",
            2 * n1 + 1
        )));
    }
    Ok(())
}

/// `e^{-j 2 pi (num mod den) / den}` with the argument reduced in integers.
fn unit_root(num: i64, den: i64) -> Complex64 {
    let r = num.rem_euclid(den) as f64;
    Complex64::from_polar(1.0, -2.0 * PI * r / den as f64)
}

/// Fourier-series coefficient of the symmetric pulse train
/// (`x[n] = 1` for `|n| <= N1`, period `N`), summed term by term.
pub fn fourier_coeff_direct(n: usize, n1: usize, k: i64) -> Result<Complex64> {
    check_symmetric_args(n, n1)?;
    let n_i = n as i64;
    let n1_i = n1 as i64;
    let sum: Complex64 = (-n1_i..=n1_i).map(|m| unit_root(k * m, n_i)).sum();
    Ok(sum / n as f64)
}

/// Closed form of [`fourier_coeff_direct`]:
/// `sin(2 pi k (N1 + 1/2) / N) / (N sin(pi k / N))`.
///
/// At `k = 0 (mod N)` the removable singularity takes its limit `(2 N1 + 1) / N`.
pub fn fourier_coeff_closed(n: usize, n1: usize, k: i64) -> Result<Complex64> {
    check_symmetric_args(n, n1)?;
    let n_i = n as i64;
    let width = 2 * n1 as i64 + 1;
    if k.rem_euclid(n_i) == 0 {
        return Ok(Complex64::new(width as f64 / n as f64, 0.0));
    }
    // Both sines are 2N-periodic in k; reduce in integers before scaling by pi.
    let two_n = 2 * n_i;
    let num = (PI * (k * width).rem_euclid(two_n) as f64 / n as f64).sin();
    let den = n as f64 * (PI * k.rem_euclid(two_n) as f64 / n as f64).sin();
    Ok(Complex64::new(num / den, 0.0))
}

/// DFT coefficient `(1/N) sum_{n<high} e^{-j 2 pi k n / N}` of one period of
/// a square wave that is high for its first `high` samples.
pub fn square_period_coeff(n: usize, high: usize, k: i64) -> Complex64 {
    let n_i = n as i64;
    let sum: Complex64 = (0..high as i64).map(|m| unit_root(k * m, n_i)).sum();
    sum / n as f64
}

/// Magnitude of the fundamental coefficient of a 50%-duty unit square wave
/// with `n` samples per period: `1 / (N sin(pi / N))`.
///
/// `n` may be fractional for carriers off the sample grid; the value then
/// only approximates the true fundamental.
pub fn fundamental_coeff(n: f64) -> f64 {
    1.0 / (n * (PI / n).sin())
}

/// Folds an FFT bin index into the one-sided range `0..=Q/2`.
pub fn fold_bin(bin: u64, q: u64) -> u64 {
    let b = bin % q;
    if b > q / 2 {
        q - b
    } else {
        b
    }
}

/// One-sided FFT bins occupied by the odd harmonics `h f` (`h <= max_harmonic`)
/// of a carrier, after folding about multiples of `fs`.
pub fn folded_harmonic_bins(
    frequency: f64,
    window: &SamplingWindow,
    max_harmonic: u32,
) -> Result<BTreeSet<usize>> {
    let bin = as_integer(frequency / window.delta_f)
        .filter(|&b| b >= 0)
        .ok_or(Error::OffGrid {
            frequency,
            delta_f: window.delta_f,
        })? as u64;
    let q = window.q as u64;
    Ok((1..=max_harmonic.max(1) as u64)
        .step_by(2)
        .map(|h| fold_bin(h * bin, q) as usize)
        .collect())
}
