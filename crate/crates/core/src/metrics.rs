//! Dynamic range, SNR, FFT processing gain and the TDMA timing model.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::decoder::DecodedImage;
use crate::scene::PatchTarget;
use crate::{Error, Result};

/// `20 log10(i_max / i_min)`.
pub fn dynamic_range_db(i_max: f64, i_min: f64) -> Result<f64> {
    if !(i_min > 0.0) || !(i_max >= i_min) || !i_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dynamic range needs 0 < i_min <= i_max, got ({i_max}, {i_min})"
        )));
    }
    Ok(20.0 * (i_max / i_min).log10())
}

/// Power ratio in dB, `10 log10(x)`.
pub fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Coherent FFT gain over `Q` samples, `10 log10(Q / 2)`.
pub fn processing_gain_db(q: usize) -> f64 {
    db(q as f64 / 2.0)
}

/// Processing gain with a note where published figures disagree with the
/// `10 log10(Q/2)` formula used here.
pub fn processing_gain_note(q: usize) -> Option<String> {
    match q {
        65536 => Some(format!(
            "10*log10(Q/2) = {:.2} dB; 10*log10(Q) = {:.2} dB is also quoted for 65536 samples",
            processing_gain_db(q),
            db(q as f64)
        )),
        16384 => Some(format!(
            "10*log10(Q/2) = {:.2} dB; a printed value of 36.12 dB for Q = 16384 does not follow from the formula",
            processing_gain_db(q)
        )),
        _ => None,
    }
}

/// `ceil(npix / channels) * T`.
pub fn encoding_time(npix: usize, channels: usize, slot_duration: f64) -> f64 {
    npix.div_ceil(channels.max(1)) as f64 * slot_duration
}

pub fn speedup(t_reference: f64, t_candidate: f64) -> Result<f64> {
    if !(t_candidate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "candidate time {t_candidate} must be > 0"
        )));
    }
    Ok(t_reference / t_candidate)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrMeasurement {
    pub noise: f64,
    pub patch_mean: f64,
    pub snr: f64,
    pub min_snr: f64,
}

/// Noise is the mean decoded value over the dark mask. A zero noise mean
/// gives infinite SNR.
pub fn measure_snr(
    image: &DecodedImage,
    patch: &[usize],
    dark: &[usize],
) -> Result<SnrMeasurement> {
    if patch.is_empty() || dark.is_empty() {
        return Err(Error::InvalidParameter("SNR masks must be nonempty".into()));
    }
    let mut in_patch = vec![false; image.pixel_count()];
    for &p in patch {
        *in_patch
            .get_mut(p)
            .ok_or_else(|| Error::InvalidParameter(format!("patch pixel {p} outside image")))? =
            true;
    }
    for &d in dark {
        match in_patch.get(d) {
            None => {
                return Err(Error::InvalidParameter(format!(
                    "dark pixel {d} outside image"
                )))
            }
            Some(true) => return Err(Error::InvalidParameter("masks overlap".into())),
            Some(false) => {}
        }
    }
    let mean = |ids: &[usize]| ids.iter().map(|&i| image.values[i]).sum::<f64>() / ids.len() as f64;
    let noise = mean(dark);
    let patch_mean = mean(patch);
    let min_pixel = patch
        .iter()
        .map(|&i| image.values[i])
        .fold(f64::INFINITY, f64::min);
    let ratio = |x: f64| {
        if noise == 0.0 {
            f64::INFINITY
        } else {
            x / noise
        }
    };
    Ok(SnrMeasurement {
        noise,
        patch_mean,
        snr: ratio(patch_mean),
        min_snr: ratio(min_pixel),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchRow {
    pub attenuation_db: f64,
    pub designed_irradiance: f64,
    pub measured_irradiance: f64,
    pub designed_dr_db: f64,
    /// NaN when the patch mean is not positive.
    pub measured_dr_db: f64,
    pub snr: f64,
    pub min_snr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchReport {
    pub mode: String,
    pub noise_floor: f64,
    pub rows: Vec<PatchRow>,
}

impl PatchReport {
    /// Measures every patch of `target` in `image`. DR is relative to the
    /// designed-brightest patch's measured mean.
    pub fn measure(image: &DecodedImage, target: &PatchTarget) -> Result<Self> {
        let brightest = target
            .patches
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.irradiance.total_cmp(&b.1.irradiance))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::InvalidParameter("target has no patches".into()))?;
        let snrs = target
            .patches
            .iter()
            .map(|p| measure_snr(image, &p.pixels, &target.dark))
            .collect::<Result<Vec<_>>>()?;
        let top_designed = target.patches[brightest].irradiance;
        let top_measured = snrs[brightest].patch_mean;
        let rows = target
            .patches
            .iter()
            .zip(&snrs)
            .map(|(p, s)| PatchRow {
                attenuation_db: p.attenuation_db,
                designed_irradiance: p.irradiance,
                measured_irradiance: s.patch_mean,
                designed_dr_db: dynamic_range_db(top_designed, p.irradiance).unwrap_or(f64::NAN),
                measured_dr_db: if s.patch_mean > 0.0 && top_measured >= s.patch_mean {
                    20.0 * (top_measured / s.patch_mean).log10()
                } else {
                    f64::NAN
                },
                snr: s.snr,
                min_snr: s.min_snr,
            })
            .collect();
        Ok(Self {
            mode: image.mode.to_string(),
            noise_floor: snrs[0].noise,
            rows,
        })
    }

    /// Measured DR of the dimmest patch.
    pub fn measured_dr_db(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.measured_dr_db)
            .fold(f64::NAN, f64::max)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "attenuation_db",
            "designed_irradiance",
            "measured_irradiance",
            "designed_dr_db",
            "measured_dr_db",
            "snr",
            "min_snr",
        ])?;
        for r in &self.rows {
            w.write_record(
                [
                    r.attenuation_db,
                    r.designed_irradiance,
                    r.measured_irradiance,
                    r.designed_dr_db,
                    r.measured_dr_db,
                    r.snr,
                    r.min_snr,
                ]
                .map(|v| format!("{v:e}")),
            )?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl fmt::Display for PatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mode: {}   noise floor: {:.4e}",
            self.mode, self.noise_floor
        )?;
        writeln!(
            f,
            "{:>8}  {:>12}  {:>12}  {:>9}  {:>9}  {:>10}  {:>10}",
            "att(dB)", "designed", "measured", "DR(dB)", "meas DR", "SNR", "min SNR"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8.1}  {:>12.4e}  {:>12.4e}  {:>9.2}  {:>9.2}  {:>10.1}  {:>10.2}",
                r.attenuation_db,
                r.designed_irradiance,
                r.measured_irradiance,
                r.designed_dr_db,
                r.measured_dr_db,
                r.snr,
                r.min_snr
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::Mode;
    use crate::scene::{make_hdr_patch_target, CaosGrid};
    use proptest::prelude::*;

    fn image(values: Vec<f64>) -> DecodedImage {
        let n = values.len();
        DecodedImage {
            rows: 1,
            cols: n,
            values,
            mode: Mode::FmTdma,
            provenance: vec![(0, 0); n],
        }
    }

    #[test]
    fn dynamic_range_examples() {
        assert!((dynamic_range_db(1e7, 1.0).unwrap() - 140.0).abs() < 1e-12);
        assert_eq!(dynamic_range_db(1.0, 1.0).unwrap(), 0.0);
        assert!((dynamic_range_db(1.0, 1.028e-7).unwrap() - 139.760).abs() < 1e-3);
        assert!(dynamic_range_db(1.0, 0.0).is_err());
        assert!(dynamic_range_db(0.5, 1.0).is_err());
    }

    #[test]
    fn processing_gain_values() {
        assert!((processing_gain_db(65536) - 45.154).abs() < 1e-3);
        assert_eq!(processing_gain_db(2), 0.0);
        assert!((processing_gain_db(16384) - 39.13).abs() < 5e-3);
        assert!(processing_gain_note(16384).unwrap().contains("36.12"));
        assert!(processing_gain_note(1024).is_none());
    }

    #[test]
    fn timing_model() {
        assert_eq!(encoding_time(3600, 7, 0.25), 128.75);
        assert_eq!(encoding_time(3600, 1, 0.25), 900.0);
        assert_eq!(encoding_time(1276, 8, 1.0), 160.0);
        assert!((speedup(900.0, 128.75).unwrap() - 6.9903).abs() < 1e-4);
        assert_eq!(speedup(1276.0, 160.0).unwrap(), 7.975);
        assert_eq!(speedup(3.0, 3.0).unwrap(), 1.0);
        assert!(speedup(1.0, 0.0).is_err());
    }

    #[test]
    fn snr_examples() {
        let img = image(vec![10.0, 10.0, 2.0, 2.0]);
        let m = measure_snr(&img, &[0, 1], &[2, 3]).unwrap();
        assert_eq!((m.snr, m.min_snr), (5.0, 5.0));
        let img = image(vec![2.0, 2.0, 2.0]);
        assert_eq!(measure_snr(&img, &[0], &[1, 2]).unwrap().min_snr, 1.0);
        let img = image(vec![1.0, 0.0]);
        assert_eq!(measure_snr(&img, &[0], &[1]).unwrap().snr, f64::INFINITY);
        assert!(measure_snr(&img, &[0], &[0]).is_err());
        assert!(measure_snr(&img, &[], &[1]).is_err());
    }

    #[test]
    fn noiseless_patch_report_matches_design() {
        let grid = CaosGrid::new(29, 44, 8).unwrap();
        let atts = [0.0, 26.0, 40.0, 50.0, 60.0, 66.0];
        let t = make_hdr_patch_target(&grid, &atts, (2, 3), 4.0, 0.0).unwrap();
        let mut img = image(t.scene.irradiance.clone());
        img.rows = 29;
        img.cols = 44;
        let r = PatchReport::measure(&img, &t).unwrap();
        for (row, a) in r.rows.iter().zip(atts) {
            assert!((row.measured_dr_db - a).abs() < 1e-6);
            assert!((row.designed_dr_db - a).abs() < 1e-9);
        }
        assert!((r.measured_dr_db() - 66.0).abs() < 1e-6);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 7);
        assert!(r.to_string().contains("min SNR"));
    }

    proptest! {
        #[test]
        fn dr_is_scale_invariant(a in 1e-6f64..1e6, ratio in 1.0f64..1e6, alpha in 1e-6f64..1e6) {
            let d1 = dynamic_range_db(a * ratio, a).unwrap();
            let d2 = dynamic_range_db(alpha * a * ratio, alpha * a).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-9);
        }

        #[test]
        fn timing_bounds(n in 1usize..100_000, p in 1usize..64, t in 0.01f64..10.0) {
            prop_assert_eq!(encoding_time(n, 1, t), n as f64 * t);
            prop_assert!(encoding_time(n, p, t) <= encoding_time(n, 1, t) / p as f64 + t + 1e-9);
        }
    }
}
