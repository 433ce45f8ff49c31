//! CAOS pixel grids, scenes and synthetic HDR test targets.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Micromirror pitch of the DMD, in micrometres.
pub const DEFAULT_MIRROR_PITCH_UM: f64 = 13.68;

/// Layout of CAOS pixels on the DMD. Pixel ids are raster order
/// (`id = row * cols + col`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaosGrid {
    pub rows: usize,
    pub cols: usize,
    /// Micromirrors along one side of a CAOS pixel.
    #[serde(default = "one")]
    pub pixel_mirrors: usize,
    #[serde(default = "default_pitch")]
    pub mirror_pitch_um: f64,
}

fn one() -> usize {
    1
}

fn default_pitch() -> f64 {
    DEFAULT_MIRROR_PITCH_UM
}

impl CaosGrid {
    pub fn new(rows: usize, cols: usize, pixel_mirrors: usize) -> Result<Self> {
        let g = Self {
            rows,
            cols,
            pixel_mirrors,
            mirror_pitch_um: DEFAULT_MIRROR_PITCH_UM,
        };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.pixel_mirrors == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid {}x{} with {} mirrors per pixel must be non-empty",
                self.rows, self.cols, self.pixel_mirrors
            )));
        }
        if !(self.mirror_pitch_um > 0.0) {
            return Err(Error::InvalidParameter(
                "mirror pitch must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Side length of one CAOS pixel on the DMD, in micrometres.
    pub fn pixel_size_um(&self) -> f64 {
        self.pixel_mirrors as f64 * self.mirror_pitch_um
    }

    pub fn position(&self, id: usize) -> (usize, usize) {
        (id / self.cols, id % self.cols)
    }
}

/// Nonnegative linear irradiance per CAOS pixel, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub rows: usize,
    pub cols: usize,
    pub irradiance: Vec<f64>,
}

impl Scene {
    pub fn new(rows: usize, cols: usize, irradiance: Vec<f64>) -> Result<Self> {
        if irradiance.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: irradiance.len(),
            });
        }
        if let Some(bad) = irradiance.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "scene irradiance {bad} must be finite and >= 0"
            )));
        }
        Ok(Self {
            rows,
            cols,
            irradiance,
        })
    }

    pub fn zeros(grid: &CaosGrid) -> Self {
        Self::uniform(grid, 0.0)
    }

    pub fn uniform(grid: &CaosGrid, value: f64) -> Self {
        Self {
            rows: grid.rows,
            cols: grid.cols,
            irradiance: vec![value.max(0.0); grid.pixel_count()],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.irradiance.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.irradiance[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.irradiance[row * self.cols + col] = value;
    }

    pub fn matches(&self, grid: &CaosGrid) -> bool {
        self.rows == grid.rows && self.cols == grid.cols
    }

    /// Scales every pixel by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            irradiance: self.irradiance.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.irradiance.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.irradiance.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest strictly positive irradiance.
    pub fn min_positive(&self) -> Option<f64> {
        self.irradiance
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .min_by(f64::total_cmp)
    }
}

/// One circular patch of an HDR target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub attenuation_db: f64,
    pub irradiance: f64,
    pub center: (f64, f64),
    /// Raster ids of the pixels inside the patch.
    pub pixels: Vec<usize>,
}

/// An HDR patch target together with its patch and background masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchTarget {
    pub scene: Scene,
    pub patches: Vec<Patch>,
    /// Pixels outside every patch.
    pub dark: Vec<usize>,
}

/// Converts an attenuation in dB to a linear irradiance factor, `10^(-dB/20)`.
pub fn db_to_irradiance(attenuation_db: f64) -> f64 {
    10f64.powf(-attenuation_db / 20.0)
}

/// Circular patches of irradiance `10^(-att/20)` laid out row-major on a
/// `layout.0 x layout.1` lattice of cells, each patch centred in its cell.
pub fn make_hdr_patch_target(
    grid: &CaosGrid,
    attenuations_db: &[f64],
    layout: (usize, usize),
    patch_radius: f64,
    background: f64,
) -> Result<PatchTarget> {
    grid.check()?;
    let (lr, lc) = layout;
    if attenuations_db.is_empty() {
        return Err(Error::InvalidParameter("no patch attenuations".into()));
    }
    if lr * lc < attenuations_db.len() {
        return Err(Error::InvalidParameter(format!(
            "layout {lr}x{lc} cannot hold {} patches",
            attenuations_db.len()
        )));
    }
    if !(patch_radius > 0.0) || !(background >= 0.0) {
        return Err(Error::InvalidParameter(
            "patch radius must be > 0 and background >= 0".into(),
        ));
    }
    if let Some(a) = attenuations_db
        .iter()
        .find(|a| !(a.is_finite() && **a >= 0.0))
    {
        return Err(Error::InvalidParameter(format!(
            "attenuation {a} dB must be >= 0"
        )));
    }

    let cell_h = grid.rows as f64 / lr as f64;
    let cell_w = grid.cols as f64 / lc as f64;
    let centers: Vec<(f64, f64)> = (0..attenuations_db.len())
        .map(|i| {
            let (r, c) = (i / lc, i % lc);
            (
                (r as f64 + 0.5) * cell_h - 0.5,
                (c as f64 + 0.5) * cell_w - 0.5,
            )
        })
        .collect();

    for (i, &(cr, cc)) in centers.iter().enumerate() {
        for (j, &(or, oc)) in centers.iter().enumerate().skip(i + 1) {
            if ((cr - or).powi(2) + (cc - oc).powi(2)).sqrt() < 2.0 * patch_radius {
                return Err(Error::OverlappingPatches {
                    first: i,
                    second: j,
                });
            }
        }
    }
    for (i, &(cr, cc)) in centers.iter().enumerate() {
        if cr - patch_radius < -0.5
            || cc - patch_radius < -0.5
            || cr + patch_radius > grid.rows as f64 - 0.5
            || cc + patch_radius > grid.cols as f64 - 0.5
        {
            return Err(Error::PatchOutOfGrid(i));
        }
    }

    let mut scene = Scene::uniform(grid, background);
    let mut in_patch = vec![false; grid.pixel_count()];
    let mut patches = Vec::with_capacity(centers.len());
    for (&att, &(cr, cc)) in attenuations_db.iter().zip(&centers) {
        let irradiance = db_to_irradiance(att);
        let mut pixels = Vec::new();
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                if d2 <= patch_radius * patch_radius {
                    let id = r * grid.cols + c;
                    scene.irradiance[id] = irradiance;
                    in_patch[id] = true;
                    pixels.push(id);
                }
            }
        }
        patches.push(Patch {
            attenuation_db: att,
            irradiance,
            center: (cr, cc),
            pixels,
        });
    }
    let dark = (0..grid.pixel_count()).filter(|&i| !in_patch[i]).collect();
    Ok(PatchTarget {
        scene,
        patches,
        dark,
    })
}
