//! Deterministic simulator for Coded Access Optical Sensor (CAOS) imaging.
//!
//! A CAOS camera codes selected pixel irradiances in time on a digital
//! micromirror device and recovers them from a single point photodetector
//! using RF-style signal processing. This crate models the three
//! multiple-access modes end to end:
//!
//! - **CDMA**: every pixel carries an orthogonal Walsh code; decoded by
//!   correlation.
//! - **FM-TDMA**: one pixel per time slot on a single square-wave carrier;
//!   decoded from the FFT magnitude at the carrier bin.
//! - **FDMA-TDMA**: several pixels per slot on a power-of-two ladder of
//!   carriers whose odd harmonics never land on another carrier.
//!
//! The pipeline is `scene -> encoder -> channel -> decoder -> metrics`, driven
//! by `runner::run` from a JSON `scenario::Scenario`.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod decoder;
pub mod encoder;
mod error;
pub mod freq_plan;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod runner;
pub mod scenario;
pub mod scene;
pub mod waveform;

pub use error::{Error, Result};

pub use channel::{add_noise, quantize, AdcConfig, NoiseConfig};
pub use decoder::{
    assemble_image, decode_cdma, decode_slot, fft_radix2, recover_channel_irradiance, DecodedImage,
    Mode, Spectrum,
};
pub use encoder::{
    complementary_stream, encode_cdma, encode_fdma_tdma, encode_fm_tdma, schedule_fdma_tdma,
    walsh_matrix, CdmaConfig, TdmaSchedule, WalshAssignment,
};
pub use freq_plan::{
    available_slots, bin_of, design_plan, validate_plan, ChannelSet, FrequencyPlan,
    ValidationReport,
};
pub use scene::{CaosGrid, Scene};
pub use waveform::{SampledSignal, SamplingWindow, SquareWaveSpec};
