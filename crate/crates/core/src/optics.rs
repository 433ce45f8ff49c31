//! Line-scan spectral geometry: grating dispersion onto DMD columns.
//!
//! The grating spreads each line pixel's spectrum across the DMD. A
//! cylindrical Fourier lens maps diffraction angle to position, so the CAOS
//! column index is linear in the diffraction angle. Column coordinates are
//! fractional with pixel `c` covering `[c, c + 1)`.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::scene::{CaosGrid, Scene};
use crate::{Error, Result};

const PLANCK_H: f64 = 6.626_070_15e-34;
const LIGHT_C: f64 = 2.997_924_58e8;
const BOLTZMANN_K: f64 = 1.380_649e-23;

/// Colour temperature of the halogen source lamp.
pub const DEFAULT_SOURCE_TEMP_K: f64 = 2850.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    /// Grating spatial frequency, lines/mm.
    pub grating_lines_per_mm: f64,
    pub incidence_deg: f64,
    /// Cylindrical lens focal lengths CF1, CF2, CF3 in cm.
    pub cyl_focal_cm: [f64; 3],
    #[serde(default = "first_order")]
    pub diffraction_order: i32,
    pub dmd_width_mm: f64,
}

fn first_order() -> i32 {
    1
}

impl OpticsConfig {
    /// The bench line camera: 600 lines/mm at 6 degrees incidence, CF = 3/6/3 cm,
    /// 1024-mirror-wide DMD at 13.68 um pitch.
    pub fn line_camera() -> Self {
        Self {
            grating_lines_per_mm: 600.0,
            incidence_deg: 6.0,
            cyl_focal_cm: [3.0, 6.0, 3.0],
            diffraction_order: 1,
            dmd_width_mm: 1024.0 * 13.68e-3,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.grating_lines_per_mm > 0.0) {
            return Err(Error::InvalidParameter(
                "grating frequency must be > 0".into(),
            ));
        }
        if self.cyl_focal_cm.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidParameter("focal lengths must be > 0".into()));
        }
        if self.diffraction_order == 0 {
            return Err(Error::InvalidParameter(
                "diffraction order must be nonzero".into(),
            ));
        }
        Ok(())
    }

    fn lines_per_nm(&self) -> f64 {
        self.grating_lines_per_mm * 1e-6
    }
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self::line_camera()
    }
}

/// A calibration point: a known filter wavelength seen at a column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralAnchor {
    pub wavelength_nm: f64,
    pub column: f64,
}

impl SpectralAnchor {
    pub fn new(wavelength_nm: f64, column: f64) -> Self {
        Self {
            wavelength_nm,
            column,
        }
    }

    /// 732 nm at the left edge and 412 nm at the right edge of `cols` columns.
    pub fn span_412(cols: usize) -> [Self; 2] {
        [Self::new(732.0, 0.0), Self::new(412.0, cols as f64)]
    }

    /// 732 nm at the left edge and 399 nm at the right edge of `cols` columns.
    pub fn span_399(cols: usize) -> [Self; 2] {
        [Self::new(732.0, 0.0), Self::new(399.0, cols as f64)]
    }
}

/// Diffraction angle from `sin(alpha) + sin(beta) = order * f_g * lambda`.
pub fn grating_beta(lambda_nm: f64, config: &OpticsConfig) -> Result<f64> {
    let alpha = config.incidence_deg.to_radians();
    let s = config.diffraction_order as f64 * config.lines_per_nm() * lambda_nm - alpha.sin();
    if !(s.abs() <= 1.0) {
        return Err(Error::Evanescent {
            wavelength_nm: lambda_nm,
            order: config.diffraction_order,
        });
    }
    Ok(s.asin())
}

/// Wavelength that diffracts to `beta`.
pub fn beta_to_wavelength(beta: f64, config: &OpticsConfig) -> f64 {
    let alpha = config.incidence_deg.to_radians();
    (alpha.sin() + beta.sin()) / (config.diffraction_order as f64 * config.lines_per_nm())
}

/// Reciprocal angular dispersion `d lambda / d beta = cos(beta) / (order f_g)`,
/// in nm per mrad.
pub fn angular_dispersion(lambda_nm: f64, config: &OpticsConfig) -> Result<f64> {
    let beta = grating_beta(lambda_nm, config)?;
    let nm_per_rad =
        beta.cos() / (config.diffraction_order.unsigned_abs() as f64 * config.lines_per_nm());
    Ok(nm_per_rad * 1e-3)
}

/// Least-squares line `column = intercept + slope * beta` through anchors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnMap {
    pub intercept: f64,
    pub slope: f64,
}

impl ColumnMap {
    pub fn fit(config: &OpticsConfig, anchors: &[SpectralAnchor]) -> Result<Self> {
        if anchors.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least two spectral anchors".into(),
            ));
        }
        let pts: Vec<(f64, f64)> = anchors
            .iter()
            .map(|a| Ok((grating_beta(a.wavelength_nm, config)?, a.column)))
            .collect::<Result<_>>()?;
        let n = pts.len() as f64;
        let mean_b = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_c = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sbb: f64 = pts.iter().map(|p| (p.0 - mean_b).powi(2)).sum();
        let sbc: f64 = pts.iter().map(|p| (p.0 - mean_b) * (p.1 - mean_c)).sum();
        if sbb <= 0.0 {
            return Err(Error::InvalidParameter(
                "spectral anchors need distinct wavelengths".into(),
            ));
        }
        let slope = sbc / sbb;
        Ok(Self {
            intercept: mean_c - slope * mean_b,
            slope,
        })
    }

    pub fn column(&self, beta: f64) -> f64 {
        self.intercept + self.slope * beta
    }

    pub fn beta(&self, column: f64) -> f64 {
        (column - self.intercept) / self.slope
    }
}

/// Fractional CAOS column of a wavelength. Columns outside the grid are
/// returned as-is; callers clip.
pub fn wavelength_to_column(
    lambda_nm: f64,
    config: &OpticsConfig,
    anchors: &[SpectralAnchor],
) -> Result<f64> {
    let map = ColumnMap::fit(config, anchors)?;
    Ok(map.column(grating_beta(lambda_nm, config)?))
}

/// Wavelength at a fractional column.
pub fn column_to_wavelength(
    column: f64,
    config: &OpticsConfig,
    anchors: &[SpectralAnchor],
) -> Result<f64> {
    let map = ColumnMap::fit(config, anchors)?;
    let beta = map.beta(column);
    if beta.abs() >= PI / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "column {column} maps outside the diffraction half-space"
        )));
    }
    Ok(beta_to_wavelength(beta, config))
}

/// Average spectral width of one column between two wavelengths.
pub fn mean_nm_per_column(
    lo_nm: f64,
    hi_nm: f64,
    config: &OpticsConfig,
    anchors: &[SpectralAnchor],
) -> Result<f64> {
    let map = ColumnMap::fit(config, anchors)?;
    let span =
        (map.column(grating_beta(lo_nm, config)?) - map.column(grating_beta(hi_nm, config)?)).abs();
    Ok((hi_nm - lo_nm).abs() / span)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensViolation {
    /// CF2 should equal 2 CF1.
    FourierLensNotTwiceCf1 { cf1: f64, cf2: f64 },
    /// CF3 should equal CF1.
    RelayMismatch { cf1: f64, cf3: f64 },
}

/// Checks the cylindrical-lens relay conditions `CF2 = 2 CF1` and `CF1 = CF3`.
pub fn check_lens_constraints(config: &OpticsConfig) -> Vec<LensViolation> {
    let [cf1, cf2, cf3] = config.cyl_focal_cm;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs());
    let mut out = Vec::new();
    if !close(cf2, 2.0 * cf1) {
        out.push(LensViolation::FourierLensNotTwiceCf1 { cf1, cf2 });
    }
    if !close(cf1, cf3) {
        out.push(LensViolation::RelayMismatch { cf1, cf3 });
    }
    out
}

/// Blackbody spectral radiance at `lambda_nm` (arbitrary scale).
pub fn planck(lambda_nm: f64, temp_k: f64) -> f64 {
    let lambda = lambda_nm * 1e-9;
    let x = PLANCK_H * LIGHT_C / (lambda * BOLTZMANN_K * temp_k);
    1.0 / (lambda.powi(5) * x.exp_m1())
}

/// A single-row spectral stripe and the columns it covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineScene {
    pub scene: Scene,
    /// Inclusive column span of the stripe; `None` when the band misses the grid.
    pub columns: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBand {
    pub center_nm: f64,
    pub bandwidth_nm: f64,
}

/// One line pixel seen through a bandpass filter: a stripe in `pixel_row`
/// over the columns whose wavelength range overlaps the band, weighted by a
/// blackbody lamp spectrum and peak-normalised to 1.
pub fn make_spectral_line_scene(
    grid: &CaosGrid,
    pixel_row: usize,
    band: SpectralBand,
    source_temp_k: f64,
    config: &OpticsConfig,
    anchors: &[SpectralAnchor],
) -> Result<LineScene> {
    grid.check()?;
    config.check()?;
    if pixel_row >= grid.rows {
        return Err(Error::InvalidParameter(format!(
            "pixel row {pixel_row} outside {} rows",
            grid.rows
        )));
    }
    if !(band.bandwidth_nm > 0.0 && source_temp_k > 0.0) {
        return Err(Error::InvalidParameter(
            "bandwidth and source temperature must be positive".into(),
        ));
    }
    let map = ColumnMap::fit(config, anchors)?;
    let lambda_at = |col: f64| beta_to_wavelength(map.beta(col), config);
    let lo = band.center_nm - band.bandwidth_nm / 2.0;
    let hi = band.center_nm + band.bandwidth_nm / 2.0;

    let mut weights = vec![0.0; grid.cols];
    for (c, w) in weights.iter_mut().enumerate() {
        let a = lambda_at(c as f64);
        let b = lambda_at(c as f64 + 1.0);
        let (cmin, cmax) = (a.min(b), a.max(b));
        if cmax > lo && cmin < hi {
            *w = planck(lambda_at(c as f64 + 0.5), source_temp_k);
        }
    }
    let mut scene = Scene::zeros(grid);
    let peak = weights.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        warn!(
            "band {} nm ({} nm) falls entirely off the {}-column grid",
            band.center_nm, band.bandwidth_nm, grid.cols
        );
        return Ok(LineScene {
            scene,
            columns: None,
        });
    }
    let first = weights.iter().position(|&w| w > 0.0).unwrap_or(0);
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    for (c, w) in weights.iter().enumerate() {
        scene.set(pixel_row, c, w / peak);
    }
    Ok(LineScene {
        scene,
        columns: Some((first, last)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> OpticsConfig {
        OpticsConfig::line_camera()
    }

    #[test]
    fn beta_at_750nm() {
        let b = grating_beta(750.0, &cfg()).unwrap();
        let expected = (0.45 - 6f64.to_radians().sin()).asin();
        assert_relative_eq!(b, expected, max_relative = 1e-14);
        assert!((b - 0.3527).abs() < 1e-4);
    }

    #[test]
    fn zero_wavelength_is_specular() {
        let b = grating_beta(0.0, &cfg()).unwrap();
        assert_relative_eq!(b, -6f64.to_radians(), max_relative = 1e-14);
    }

    #[test]
    fn evanescent_rejected() {
        // f_g lambda - sin(alpha) > 1 beyond ~1841 nm.
        assert!(matches!(
            grating_beta(1900.0, &cfg()),
            Err(Error::Evanescent { .. })
        ));
        assert!(angular_dispersion(1900.0, &cfg()).is_err());
    }

    #[test]
    fn dispersion_at_750nm_near_vendor_value() {
        let d = angular_dispersion(750.0, &cfg()).unwrap();
        assert!((d - 1.564).abs() < 1e-3, "{d}");
        assert!((d - 1.62).abs() / 1.62 < 0.10);
    }

    #[test]
    fn dispersion_decreases_with_wavelength_and_vanishes_at_edge() {
        let c = cfg();
        let mut prev = f64::INFINITY;
        for l in (400..=1800).step_by(50) {
            let d = angular_dispersion(l as f64, &c).unwrap();
            assert!(d < prev);
            prev = d;
        }
        let edge = (1.0 + 6f64.to_radians().sin()) / 600e-6;
        assert!(angular_dispersion(edge - 1e-6, &c).unwrap() < 1e-3);
    }

    #[test]
    fn dispersion_matches_numerical_derivative() {
        let c = cfg();
        for l in [420.0, 550.0, 650.0, 732.0, 900.0] {
            let h = 1e-3;
            let dbeta =
                (grating_beta(l + h, &c).unwrap() - grating_beta(l - h, &c).unwrap()) / (2.0 * h);
            let product = angular_dispersion(l, &c).unwrap() * 1e3 * dbeta;
            assert!((product - 1.0).abs() < 1e-6, "{l}: {product}");
        }
    }

    #[test]
    fn anchor_passes_through_itself_and_midway_in_beta() {
        let c = cfg();
        let anchors = [
            SpectralAnchor::new(732.0, 0.0),
            SpectralAnchor::new(399.0, 51.0),
        ];
        assert!(wavelength_to_column(732.0, &c, &anchors).unwrap().abs() < 1e-12);
        let mid_beta = 0.5 * (grating_beta(732.0, &c).unwrap() + grating_beta(399.0, &c).unwrap());
        let lambda = beta_to_wavelength(mid_beta, &c);
        let col = wavelength_to_column(lambda, &c, &anchors).unwrap();
        assert!((col - 25.5).abs() < 1e-9);
        let back = column_to_wavelength(col, &c, &anchors).unwrap();
        assert_relative_eq!(back, lambda, max_relative = 1e-12);
    }

    #[test]
    fn mean_width_per_column() {
        let w = mean_nm_per_column(412.0, 732.0, &cfg(), &SpectralAnchor::span_412(52)).unwrap();
        assert!((w - 320.0 / 52.0).abs() < 1e-9);
        let w399 = mean_nm_per_column(412.0, 732.0, &cfg(), &SpectralAnchor::span_399(52)).unwrap();
        assert!(w399 > w);
    }

    #[test]
    fn column_strictly_monotone_over_visible() {
        let anchors = SpectralAnchor::span_412(52);
        let mut prev = f64::NEG_INFINITY;
        for l in (399..=750).rev() {
            let col = wavelength_to_column(l as f64, &cfg(), &anchors).unwrap();
            assert!(col > prev);
            prev = col;
        }
    }

    #[test]
    fn anchors_need_distinct_wavelengths() {
        let a = [
            SpectralAnchor::new(500.0, 0.0),
            SpectralAnchor::new(500.0, 10.0),
        ];
        assert!(wavelength_to_column(600.0, &cfg(), &a).is_err());
        assert!(wavelength_to_column(600.0, &cfg(), &a[..1]).is_err());
    }

    #[test]
    fn lens_constraints() {
        assert!(check_lens_constraints(&cfg()).is_empty());
        let mut c = cfg();
        c.cyl_focal_cm = [3.0, 5.0, 3.0];
        assert_eq!(
            check_lens_constraints(&c),
            vec![LensViolation::FourierLensNotTwiceCf1 { cf1: 3.0, cf2: 5.0 }]
        );
        c.cyl_focal_cm = [3.0, 6.0, 4.0];
        assert_eq!(
            check_lens_constraints(&c),
            vec![LensViolation::RelayMismatch { cf1: 3.0, cf3: 4.0 }]
        );
    }

    fn line(row: usize, center: f64, bw: f64) -> LineScene {
        let grid = CaosGrid::new(38, 52, 19).unwrap();
        make_spectral_line_scene(
            &grid,
            row,
            SpectralBand {
                center_nm: center,
                bandwidth_nm: bw,
            },
            DEFAULT_SOURCE_TEMP_K,
            &cfg(),
            &SpectralAnchor::span_412(52),
        )
        .unwrap()
    }

    #[test]
    fn filter_stripe_sits_in_its_row() {
        let l = line(10, 700.0, 40.0);
        let (c0, c1) = l.columns.unwrap();
        let expect0 = wavelength_to_column(720.0, &cfg(), &SpectralAnchor::span_412(52)).unwrap();
        let expect1 = wavelength_to_column(680.0, &cfg(), &SpectralAnchor::span_412(52)).unwrap();
        assert_eq!(c0, expect0.floor() as usize);
        assert_eq!(c1, expect1.floor() as usize);
        for r in 0..38 {
            for c in 0..52 {
                let v = l.scene.get(r, c);
                if r == 10 && (c0..=c1).contains(&c) {
                    assert!(v > 0.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert_relative_eq!(l.scene.max(), 1.0);
    }

    #[test]
    fn white_pixel_weakens_toward_blue() {
        let l = line(5, 572.0, 320.0);
        assert_eq!(l.columns, Some((0, 51)));
        for c in 1..52 {
            assert!(l.scene.get(5, c) < l.scene.get(5, c - 1));
        }
    }

    #[test]
    fn stripe_follows_row() {
        let a = line(3, 550.0, 10.0);
        let b = line(4, 550.0, 10.0);
        assert_eq!(a.columns, b.columns);
        for c in 0..52 {
            assert_eq!(a.scene.get(3, c), b.scene.get(4, c));
        }
    }

    #[test]
    fn off_grid_band_is_empty() {
        let l = line(3, 300.0, 10.0);
        assert!(l.columns.is_none());
        assert_eq!(l.scene.max(), 0.0);
    }
}
