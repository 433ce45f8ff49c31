//! JSON experiment descriptions and the shipped presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::NoiseConfig;
use crate::decoder::Mode;
use crate::freq_plan::{design_plan, ChannelSet};
use crate::optics::{OpticsConfig, SpectralAnchor, SpectralBand, DEFAULT_SOURCE_TEMP_K};
use crate::scene::CaosGrid;
use crate::waveform::SamplingWindow;
use crate::{Error, Result};

/// Names accepted by `reproduce`.
pub const PRESET_NAMES: [&str; 8] = [
    "table5",
    "fig6",
    "fig9-valid",
    "fig9-invalid",
    "hdr66-fm",
    "hdr66-fdma",
    "spectral-line",
    "dispersion-check",
];

/// Carrier set and sampling window for the FM and FDMA modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlanSpec {
    /// Designed power-of-two ladder.
    Ladder {
        duration: f64,
        p: u32,
        m: u32,
        channels: usize,
    },
    /// Arbitrary carriers; validated before use.
    Explicit {
        duration: f64,
        p: u32,
        frequencies: Vec<f64>,
    },
    /// One carrier, for FM-TDMA.
    Single { duration: f64, p: u32, carrier: f64 },
}

impl PlanSpec {
    pub fn window(&self) -> Result<SamplingWindow> {
        let (duration, p) = match self {
            PlanSpec::Ladder { duration, p, .. }
            | PlanSpec::Explicit { duration, p, .. }
            | PlanSpec::Single { duration, p, .. } => (*duration, *p),
        };
        SamplingWindow::from_exponent(duration, p)
    }

    pub fn channel_set(&self) -> Result<ChannelSet> {
        match self {
            PlanSpec::Ladder {
                duration,
                p,
                m,
                channels,
            } => Ok(design_plan(*duration, *p, *m, *channels)?.channel_set()),
            PlanSpec::Explicit { frequencies, .. } => {
                ChannelSet::explicit(frequencies, self.window()?)
            }
            PlanSpec::Single { carrier, .. } => ChannelSet::single(*carrier, self.window()?),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorPreset {
    /// 732 nm at the left grid edge, 412 nm at the right edge.
    Span412,
    /// 732 nm at the left grid edge, 399 nm at the right edge.
    Span399,
}

impl AnchorPreset {
    pub fn anchors(&self, cols: usize) -> [SpectralAnchor; 2] {
        match self {
            AnchorPreset::Span412 => SpectralAnchor::span_412(cols),
            AnchorPreset::Span399 => SpectralAnchor::span_399(cols),
        }
    }
}

fn default_temp() -> f64 {
    DEFAULT_SOURCE_TEMP_K
}

fn default_steps() -> usize {
    1
}

fn default_anchor() -> AnchorPreset {
    AnchorPreset::Span412
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Explicit row-major irradiances.
    Pixels {
        values: Vec<f64>,
    },
    Uniform {
        value: f64,
    },
    HdrPatches {
        attenuations_db: Vec<f64>,
        layout: [usize; 2],
        radius: f64,
        #[serde(default)]
        background: f64,
    },
    /// Headerless CSV matrix with the grid's shape.
    ImageFile {
        path: PathBuf,
    },
    /// One frame per (band, step): the filtered line pixel sits in row
    /// `start_row + band_index * steps + step`.
    SpectralLine {
        bands: Vec<SpectralBand>,
        start_row: usize,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_temp")]
        temperature_k: f64,
        #[serde(default)]
        optics: OpticsConfig,
        #[serde(default = "default_anchor")]
        anchors: AnchorPreset,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdmaSpec {
    /// Walsh code length; `None` picks the smallest that fits the grid.
    #[serde(default)]
    pub code_length: Option<usize>,
    pub bit_rate: f64,
    /// ADC sampling rate.
    pub fs: f64,
}

fn default_bits() -> u32 {
    16
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcSpec {
    #[serde(default = "default_bits")]
    pub bits: u32,
    /// `None` resolves to 1.25 x the brightest noiseless slot sample.
    #[serde(default)]
    pub full_scale: Option<f64>,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for AdcSpec {
    fn default() -> Self {
        Self {
            bits: default_bits(),
            full_scale: None,
            enabled: true,
        }
    }
}

fn default_spectra_slots() -> usize {
    8
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Write one-sided magnitude spectra of the first slots.
    #[serde(default)]
    pub spectra: bool,
    /// Write PD1 slot streams of the first slots.
    #[serde(default)]
    pub streams: bool,
    /// Also write the complementary PD2 streams.
    #[serde(default)]
    pub complementary: bool,
    /// How many slots the spectra and stream outputs cover.
    #[serde(default = "default_spectra_slots")]
    pub max_slots: usize,
    /// Log10 grey scaling for the PGM image; CSV data stays linear.
    #[serde(default)]
    pub log_display: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            spectra: false,
            streams: false,
            complementary: false,
            max_slots: default_spectra_slots(),
            log_display: false,
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

/// One simulated acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub mode: Mode,
    pub grid: CaosGrid,
    pub target: TargetSpec,
    #[serde(default)]
    pub plan: Option<PlanSpec>,
    #[serde(default)]
    pub cdma: Option<CdmaSpec>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub adc: AdcSpec,
    /// Noise seed; `noise.seed` must be 0 or equal to it.
    #[serde(default)]
    pub seed: u64,
    /// Refuse plans that fail validation.
    #[serde(default = "default_true")]
    pub strict: bool,
    /// Multiplies the decoded image, for matching scales across modes.
    #[serde(default = "default_scale")]
    pub mode_scale: f64,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Scenario {
    /// Checks internal consistency without running anything.
    pub fn check(&self) -> Result<()> {
        self.grid.check()?;
        self.noise.check()?;
        if self.noise.seed != 0 && self.noise.seed != self.seed {
            return Err(Error::InvalidParameter(format!(
                "noise.seed {} disagrees with seed {}",
                self.noise.seed, self.seed
            )));
        }
        if !(self.mode_scale.is_finite() && self.mode_scale > 0.0) {
            return Err(Error::InvalidParameter("mode_scale must be > 0".into()));
        }
        if self.adc.enabled {
            if !(2..=24).contains(&self.adc.bits) {
                return Err(Error::InvalidParameter(format!(
                    "ADC bits {} outside 2..=24",
                    self.adc.bits
                )));
            }
            if let Some(fs) = self.adc.full_scale {
                if !(fs.is_finite() && fs > 0.0) {
                    return Err(Error::InvalidParameter("ADC full scale must be > 0".into()));
                }
            }
        }
        match self.mode {
            Mode::Cdma => {
                let cdma = self.cdma.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("cdma mode needs a \"cdma\" section".into())
                })?;
                if let Some(l) = cdma.code_length {
                    if !l.is_power_of_two() {
                        return Err(Error::NotPowerOfTwo(l));
                    }
                    if l < self.grid.pixel_count() + 1 {
                        return Err(Error::MissingCode {
                            pixel: l.saturating_sub(1),
                        });
                    }
                }
                crate::encoder::CdmaConfig::new(cdma.bit_rate, cdma.fs)?;
            }
            Mode::FmTdma | Mode::FdmaTdma => {
                let plan = self.plan.as_ref().ok_or_else(|| {
                    Error::InvalidParameter(format!("{} mode needs a \"plan\" section", self.mode))
                })?;
                if self.mode == Mode::FmTdma && !matches!(plan, PlanSpec::Single { .. }) {
                    return Err(Error::InvalidParameter(
                        "fm-tdma mode needs a single-carrier plan".into(),
                    ));
                }
                plan.channel_set()?;
            }
        }
        match &self.target {
            TargetSpec::Pixels { values } if values.len() != self.grid.pixel_count() => {
                Err(Error::LengthMismatch {
                    expected: self.grid.pixel_count(),
                    actual: values.len(),
                })
            }
            TargetSpec::Uniform { value } if !(value.is_finite() && *value >= 0.0) => Err(
                Error::InvalidParameter(format!("uniform irradiance {value} must be >= 0")),
            ),
            TargetSpec::SpectralLine {
                bands,
                start_row,
                steps,
                ..
            } => {
                let last = start_row + bands.len() * steps;
                if bands.is_empty() || *steps == 0 || last > self.grid.rows {
                    Err(Error::InvalidParameter(format!(
                        "{} bands x {steps} steps from row {start_row} do not fit {} rows",
                        bands.len(),
                        self.grid.rows
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Output directory: the override if given, else the scenario's own,
    /// else `caos-output/<name>`.
    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        override_dir
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| Path::new("caos-output").join(&self.name))
    }
}

/// Grating and calibration checks for the line camera; no simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionCheck {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub optics: OpticsConfig,
    /// Wavelength at which the angular dispersion is reported.
    pub wavelength_nm: f64,
    /// Published dispersion to compare against, nm/mrad.
    pub reference_nm_per_mrad: f64,
    /// Band whose mean per-column width is reported.
    pub band_nm: [f64; 2],
    pub columns: usize,
    pub anchors: AnchorPreset,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Anything the runner can execute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum Job {
    Simulation(Scenario),
    DispersionCheck(DispersionCheck),
}

impl Job {
    pub fn name(&self) -> &str {
        match self {
            Job::Simulation(s) => &s.name,
            Job::DispersionCheck(d) => &d.name,
        }
    }

    /// Parses a job document. A document without `"kind"` is read as a
    /// simulation scenario.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let job = if value.get("kind").is_some() {
            serde_json::from_value(value)?
        } else {
            Job::Simulation(serde_json::from_value(value)?)
        };
        if let Job::Simulation(s) = &job {
            s.check()?;
        }
        Ok(job)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        match self {
            Job::Simulation(s) => s.output_dir(override_dir),
            Job::DispersionCheck(d) => override_dir
                .map(Path::to_path_buf)
                .or_else(|| d.output_dir.clone())
                .unwrap_or_else(|| Path::new("caos-output").join(&d.name)),
        }
    }
}

/// Six-patch 66 dB transmissive target attenuations.
pub const HDR66_ATTENUATIONS_DB: [f64; 6] = [0.0, 26.0, 40.0, 50.0, 60.0, 66.0];

/// Carrier set of the deliberately invalid FDMA run.
pub const INVALID_FDMA_SET: [f64; 7] = [1170.3, 1368.3, 1638.4, 2048.0, 2730.6, 4096.0, 8192.0];

/// Time-domain AWGN of the HDR presets, chosen so the brightest patch's
/// minimum SNR sits near the top of the low-thousands regime.
pub const HDR66_AWGN_SIGMA: f64 = 0.019;

/// Radius of the HDR target patches in CAOS pixels.
pub const HDR66_PATCH_RADIUS: f64 = 1.5;

/// Filter bands of the line-camera experiments (centre, 3 dB width).
pub const LINE_FILTER_BANDS: [(f64, f64); 7] = [
    (700.0, 40.0),
    (650.0, 10.0),
    (620.0, 10.0),
    (600.0, 40.0),
    (550.0, 10.0),
    (450.0, 40.0),
    (400.0, 40.0),
];

fn base(name: &str, description: &str, mode: Mode, grid: CaosGrid, target: TargetSpec) -> Scenario {
    Scenario {
        name: name.into(),
        description: description.into(),
        mode,
        grid,
        target,
        plan: None,
        cdma: None,
        noise: NoiseConfig::default(),
        adc: AdcSpec::default(),
        seed: 0,
        strict: true,
        mode_scale: 1.0,
        outputs: OutputSpec::default(),
        output_dir: None,
    }
}

fn grid(rows: usize, cols: usize, mirrors: usize) -> CaosGrid {
    CaosGrid::new(rows, cols, mirrors).expect("preset grid is valid")
}

fn hdr66(name: &str, mode: Mode, plan: PlanSpec) -> Scenario {
    let mut s = base(
        name,
        "Six-patch 66 dB HDR target on a 44 x 29 grid with AWGN and a 16-bit ADC",
        mode,
        grid(29, 44, 8),
        TargetSpec::HdrPatches {
            attenuations_db: HDR66_ATTENUATIONS_DB.to_vec(),
            layout: [2, 3],
            radius: HDR66_PATCH_RADIUS,
            background: 0.0,
        },
    );
    s.plan = Some(plan);
    s.noise = NoiseConfig {
        awgn_sigma: HDR66_AWGN_SIGMA,
        dark_offset: 0.2,
        ..NoiseConfig::default()
    };
    s.seed = 2020;
    s.outputs.log_display = true;
    s
}

fn fig9(name: &str, description: &str, plan: PlanSpec, strict: bool) -> Scenario {
    let mut s = base(
        name,
        description,
        Mode::FdmaTdma,
        grid(60, 60, 6),
        TargetSpec::HdrPatches {
            attenuations_db: vec![0.0],
            layout: [1, 1],
            radius: 18.0,
            background: 0.05,
        },
    );
    s.plan = Some(plan);
    s.strict = strict;
    s.noise = NoiseConfig {
        awgn_sigma: 0.002,
        dark_offset: 0.05,
        ..NoiseConfig::default()
    };
    s.seed = 2020;
    s
}

/// The shipped experiment with this name.
pub fn preset(name: &str) -> Result<Job> {
    let table5_plan = PlanSpec::Ladder {
        duration: 1.0,
        p: 16,
        m: 7,
        channels: 8,
    };
    let job = match name {
        "table5" => {
            let mut s = base(
                name,
                "Eight FDMA channels carrying irradiances 1 down to 1e-7, noiseless",
                Mode::FdmaTdma,
                grid(1, 8, 1),
                TargetSpec::Pixels {
                    values: (0..8).map(|k| 10f64.powi(-k)).collect(),
                },
            );
            s.plan = Some(table5_plan);
            s.adc.enabled = false;
            s.outputs.spectra = true;
            s.outputs.log_display = true;
            Job::Simulation(s)
        }
        "fig6" => {
            let mut s = base(
                name,
                "Eight equal unit pixels in one FDMA slot, noiseless",
                Mode::FdmaTdma,
                grid(1, 8, 1),
                TargetSpec::Uniform { value: 1.0 },
            );
            s.plan = Some(table5_plan);
            s.adc.enabled = false;
            s.outputs.spectra = true;
            s.outputs.streams = true;
            s.outputs.complementary = true;
            Job::Simulation(s)
        }
        "fig9-valid" => Job::Simulation(fig9(
            name,
            "60 x 60 FDMA-TDMA image with the 128-8192 Hz ladder",
            PlanSpec::Ladder {
                duration: 0.25,
                p: 14,
                m: 6,
                channels: 7,
            },
            true,
        )),
        "fig9-invalid" => Job::Simulation(fig9(
            name,
            "60 x 60 FDMA-TDMA image with four carriers off the ladder",
            PlanSpec::Explicit {
                duration: 0.25,
                p: 14,
                frequencies: INVALID_FDMA_SET.to_vec(),
            },
            false,
        )),
        "hdr66-fm" => Job::Simulation(hdr66(
            name,
            Mode::FmTdma,
            PlanSpec::Single {
                duration: 1.0,
                p: 16,
                carrier: 8192.0,
            },
        )),
        "hdr66-fdma" => Job::Simulation(hdr66(name, Mode::FdmaTdma, table5_plan)),
        "spectral-line" => {
            let mut s = base(
                name,
                "Filtered line pixel stepped down the slit, CDMA on a 38 x 52 grid",
                Mode::Cdma,
                grid(38, 52, 19),
                TargetSpec::SpectralLine {
                    bands: LINE_FILTER_BANDS
                        .iter()
                        .map(|&(center_nm, bandwidth_nm)| SpectralBand {
                            center_nm,
                            bandwidth_nm,
                        })
                        .collect(),
                    start_row: 2,
                    steps: 3,
                    temperature_k: DEFAULT_SOURCE_TEMP_K,
                    optics: OpticsConfig::line_camera(),
                    anchors: AnchorPreset::Span412,
                },
            );
            s.cdma = Some(CdmaSpec {
                code_length: Some(2048),
                bit_rate: 1000.0,
                fs: 100_000.0,
            });
            s.noise = NoiseConfig {
                awgn_sigma: 0.05,
                dark_offset: 0.5,
                ..NoiseConfig::default()
            };
            s.seed = 2020;
            Job::Simulation(s)
        }
        "dispersion-check" => Job::DispersionCheck(DispersionCheck {
            name: name.into(),
            description: "Grating dispersion, column calibration and lens relay checks".into(),
            optics: OpticsConfig::line_camera(),
            wavelength_nm: 750.0,
            reference_nm_per_mrad: 1.62,
            band_nm: [412.0, 732.0],
            columns: 52,
            anchors: AnchorPreset::Span412,
            output_dir: None,
        }),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    if let Job::Simulation(s) = &job {
        s.check()?;
    }
    Ok(job)
}
