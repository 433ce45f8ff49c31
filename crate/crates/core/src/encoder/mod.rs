//! Scene to photodetector streams for the three CAOS modes.
//!
//! The DMD has only two mirror states, so every code is on/off: a pixel's
//! light either reaches the point detector (PD1) or is steered away. Pixels
//! outside the current TDMA slot are parked toward the complementary arm.

pub mod walsh;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::freq_plan::ChannelSet;
use crate::scene::{CaosGrid, Scene};
use crate::waveform::{
    as_integer, synth_square, synth_square_unaligned, SampledSignal, SamplingWindow, SquareWaveSpec,
};
use crate::{Error, Result};

pub use walsh::{fwht, walsh_entry, walsh_matrix, WalshAssignment, WalshMatrix};

/// CDMA code clocking: each code bit is held for `samples_per_bit` ADC samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdmaConfig {
    pub bit_rate: f64,
    pub samples_per_bit: usize,
}

impl CdmaConfig {
    pub fn new(bit_rate: f64, fs: f64) -> Result<Self> {
        let spb = as_integer(fs / bit_rate)
            .filter(|&s| s >= 1)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "fs = {fs} is not an integer multiple of bit rate {bit_rate}"
                ))
            })?;
        Ok(Self {
            bit_rate,
            samples_per_bit: spb as usize,
        })
    }

    pub fn fs(&self) -> f64 {
        self.bit_rate * self.samples_per_bit as f64
    }

    pub fn check(&self) -> Result<()> {
        if !(self.bit_rate > 0.0) || self.samples_per_bit == 0 {
            return Err(Error::InvalidParameter(
                "CDMA bit rate and samples per bit must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Emits the PD1 stream for all pixels coded at once.
///
/// Bit `b` carries `sum_i I_i (c_i[b] + 1) / 2`, the on/off image of the
/// bipolar Walsh code.
pub fn encode_cdma(
    scene: &Scene,
    assignment: &WalshAssignment,
    cfg: &CdmaConfig,
) -> Result<SampledSignal> {
    cfg.check()?;
    let npix = scene.pixel_count();
    if npix > assignment.pixel_count() {
        return Err(Error::MissingCode {
            pixel: assignment.pixel_count(),
        });
    }
    if npix < assignment.pixel_count() {
        return Err(Error::LengthMismatch {
            expected: assignment.pixel_count(),
            actual: npix,
        });
    }
    let l = assignment.code_length;
    let mut coded = vec![0.0; l];
    for (&row, &irr) in assignment.pixel_to_row.iter().zip(&scene.irradiance) {
        coded[row] = irr;
    }
    // H is symmetric, so H v gives sum_i I_i c_i[b] for every bit b at once.
    fwht(&mut coded)?;
    let total = scene.total();
    let spb = cfg.samples_per_bit;
    let mut samples = Vec::with_capacity(l * spb);
    for w in coded {
        let level = 0.5 * (total + w);
        samples.extend(std::iter::repeat_n(level, spb));
    }
    Ok(SampledSignal::new(samples, cfg.fs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub pixel: usize,
    /// Index into the ascending channel list.
    pub channel: usize,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdmaSlot {
    pub index: usize,
    pub assignments: Vec<SlotAssignment>,
}

impl TdmaSlot {
    pub fn pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().map(|a| a.pixel)
    }
}

/// Pixel groups per TDMA slot and the carrier each pixel rides on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdmaSchedule {
    pub slots: Vec<TdmaSlot>,
    pub slot_duration: f64,
    pub pixel_count: usize,
}

impl TdmaSchedule {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Total encoding time, `slots * T`.
    pub fn encoding_time(&self) -> f64 {
        self.slots.len() as f64 * self.slot_duration
    }
}

/// Groups pixels in raster order, `P` per slot, lowest carrier first.
pub fn schedule_fdma_tdma(pixel_count: usize, channels: &ChannelSet) -> TdmaSchedule {
    let p = channels.len().max(1);
    let slots = (0..pixel_count)
        .collect::<Vec<_>>()
        .chunks(p)
        .enumerate()
        .map(|(index, group)| TdmaSlot {
            index,
            assignments: group
                .iter()
                .enumerate()
                .map(|(channel, &pixel)| SlotAssignment {
                    pixel,
                    channel,
                    frequency: channels.channels[channel],
                })
                .collect(),
        })
        .collect();
    TdmaSchedule {
        slots,
        slot_duration: channels.window.duration,
        pixel_count,
    }
}

/// Unit-amplitude carrier waveforms for one channel set, synthesised once.
#[derive(Clone, Debug)]
pub struct CarrierBank {
    pub channels: ChannelSet,
    waves: Vec<Vec<f64>>,
}

impl CarrierBank {
    /// Whole-cycle carriers only.
    pub fn new(channels: &ChannelSet) -> Result<Self> {
        Self::build(channels, false)
    }

    /// Also synthesises carriers with partial cycles in the window.
    pub fn permissive(channels: &ChannelSet) -> Result<Self> {
        Self::build(channels, true)
    }

    fn build(channels: &ChannelSet, allow_unaligned: bool) -> Result<Self> {
        let waves = channels
            .channels
            .iter()
            .map(|&f| {
                let spec = SquareWaveSpec::new(f, 1.0);
                let s = if allow_unaligned {
                    synth_square_unaligned(&spec, &channels.window)?
                } else {
                    synth_square(&spec, &channels.window)?
                };
                Ok(s.samples)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            channels: channels.clone(),
            waves,
        })
    }

    pub fn wave(&self, channel: usize) -> &[f64] {
        &self.waves[channel]
    }

    /// PD1 stream of one slot: `sum_j I_j square(f_j)[n]`.
    pub fn encode_slot(&self, scene: &Scene, slot: &TdmaSlot) -> Result<SampledSignal> {
        let window = &self.channels.window;
        let mut out = SampledSignal::zeros(window.q, window.fs);
        for a in &slot.assignments {
            if a.channel >= self.waves.len() || self.channels.channels[a.channel] != a.frequency {
                return Err(Error::UnknownChannel {
                    frequency: a.frequency,
                });
            }
            let irr = *scene.irradiance.get(a.pixel).ok_or(Error::LengthMismatch {
                expected: a.pixel + 1,
                actual: scene.pixel_count(),
            })?;
            if irr != 0.0 {
                out.add_scaled(&self.waves[a.channel], irr);
            }
        }
        Ok(out)
    }
}

fn check_window(channels: &ChannelSet, window: &SamplingWindow) -> Result<()> {
    let w = &channels.window;
    if w.q != window.q || w.fs != window.fs || w.duration != window.duration {
        return Err(Error::WindowMismatch(format!(
            "plan has fs = {}, T = {}, Q = {}; window has fs = {}, T = {}, Q = {}",
            w.fs, w.duration, w.q, window.fs, window.duration, window.q
        )));
    }
    Ok(())
}

/// One PD1 stream per slot, in slot order.
pub fn encode_fdma_tdma(
    scene: &Scene,
    schedule: &TdmaSchedule,
    channels: &ChannelSet,
    window: &SamplingWindow,
) -> Result<Vec<SampledSignal>> {
    check_window(channels, window)?;
    let bank = CarrierBank::new(channels)?;
    schedule
        .slots
        .par_iter()
        .map(|slot| bank.encode_slot(scene, slot))
        .collect()
}

/// One pixel per slot on a single carrier; FDMA-TDMA with a one-channel plan.
pub fn encode_fm_tdma(
    scene: &Scene,
    grid: &CaosGrid,
    carrier: f64,
    window: &SamplingWindow,
) -> Result<Vec<SampledSignal>> {
    if !scene.matches(grid) {
        return Err(Error::LengthMismatch {
            expected: grid.pixel_count(),
            actual: scene.pixel_count(),
        });
    }
    let channels = ChannelSet::single(carrier, *window)?;
    let schedule = schedule_fdma_tdma(grid.pixel_count(), &channels);
    encode_fdma_tdma(scene, &schedule, &channels, window)
}

/// The PD2 stream: light from the slot's pixels while they are off, plus
/// every parked pixel. PD1 + PD2 equals the total scene irradiance.
pub fn complementary_stream(
    slot_stream: &SampledSignal,
    scene: &Scene,
    slot: &TdmaSlot,
) -> Result<SampledSignal> {
    let slot_sum: f64 = slot
        .pixels()
        .map(|p| {
            scene
                .irradiance
                .get(p)
                .copied()
                .ok_or(Error::LengthMismatch {
                    expected: p + 1,
                    actual: scene.pixel_count(),
                })
        })
        .sum::<Result<f64>>()?;
    let parked = scene.total() - slot_sum;
    let samples = slot_stream
        .samples
        .iter()
        .map(|&s| (slot_sum - s) + parked)
        .collect();
    Ok(SampledSignal::new(samples, slot_stream.fs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq_plan::design_plan;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_cdma_follows_its_code() {
        let scene = Scene::new(1, 1, vec![1.0]).unwrap();
        let a = WalshAssignment::new(8, vec![5]).unwrap();
        let cfg = CdmaConfig::new(1000.0, 3000.0).unwrap();
        let s = encode_cdma(&scene, &a, &cfg).unwrap();
        assert_eq!(s.len(), 24);
        assert_eq!(s.fs, 3000.0);
        for b in 0..8 {
            let expected = if walsh_entry(5, b) == 1 { 1.0 } else { 0.0 };
            assert!(s.samples[3 * b..3 * b + 3].iter().all(|&x| x == expected));
        }
    }

    #[test]
    fn cdma_zero_scene_is_silent() {
        let grid = CaosGrid::new(3, 3, 1).unwrap();
        let a = WalshAssignment::minimal(9).unwrap();
        let cfg = CdmaConfig::new(1000.0, 100_000.0).unwrap();
        let s = encode_cdma(&Scene::zeros(&grid), &a, &cfg).unwrap();
        assert!(s.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cdma_requires_a_code_per_pixel() {
        let scene = Scene::new(1, 3, vec![1.0; 3]).unwrap();
        let a = WalshAssignment::raster(2, 8).unwrap();
        let cfg = CdmaConfig::new(1.0, 1.0).unwrap();
        assert!(matches!(
            encode_cdma(&scene, &a, &cfg),
            Err(Error::MissingCode { pixel: 2 })
        ));
        assert!(CdmaConfig::new(1000.0, 1500.0).is_err());
    }

    #[test]
    fn schedule_slot_counts() {
        let w = SamplingWindow::from_exponent(0.25, 14).unwrap();
        let p7 = design_plan(0.25, 14, 6, 7).unwrap().channel_set();
        assert_eq!(schedule_fdma_tdma(3600, &p7).slot_count(), 515);
        let p8 = design_plan(1.0, 16, 7, 8).unwrap().channel_set();
        let s = schedule_fdma_tdma(1276, &p8);
        assert_eq!(s.slot_count(), 160);
        assert_eq!(s.encoding_time(), 160.0);
        let s = schedule_fdma_tdma(5, &p8);
        assert_eq!(s.slot_count(), 1);
        let freqs: Vec<f64> = s.slots[0].assignments.iter().map(|a| a.frequency).collect();
        assert_eq!(freqs, vec![64., 128., 256., 512., 1024.]);
        let fm = ChannelSet::single(8192.0, w).unwrap();
        assert_eq!(schedule_fdma_tdma(3600, &fm).encoding_time(), 900.0);
    }

    #[test]
    fn one_pixel_slot_is_a_scaled_square() {
        let plan = design_plan(1.0, 12, 3, 4).unwrap();
        let set = plan.channel_set();
        let scene = Scene::new(1, 1, vec![0.25]).unwrap();
        let sched = schedule_fdma_tdma(1, &set);
        let streams = encode_fdma_tdma(&scene, &sched, &set, &plan.window()).unwrap();
        let unit = synth_square(&SquareWaveSpec::new(4.0, 0.25), &plan.window()).unwrap();
        assert_eq!(streams, vec![unit]);
    }

    #[test]
    fn window_mismatch_rejected() {
        let plan = design_plan(1.0, 12, 3, 4).unwrap();
        let other = SamplingWindow::from_exponent(1.0, 13).unwrap();
        let scene = Scene::new(1, 1, vec![1.0]).unwrap();
        let set = plan.channel_set();
        let sched = schedule_fdma_tdma(1, &set);
        assert!(matches!(
            encode_fdma_tdma(&scene, &sched, &set, &other),
            Err(Error::WindowMismatch(_))
        ));
    }

    #[test]
    fn fm_tdma_one_slot_per_pixel() {
        let grid = CaosGrid::new(2, 3, 1).unwrap();
        let scene = Scene::new(2, 3, vec![1.0, 0.0, 0.5, 0.0, 2.0, 0.1]).unwrap();
        let w = SamplingWindow::new(1024.0, 1.0).unwrap();
        let streams = encode_fm_tdma(&scene, &grid, 128.0, &w).unwrap();
        assert_eq!(streams.len(), 6);
        assert!(streams[1].samples.iter().all(|&x| x == 0.0));
        assert_eq!(streams[4].samples[0], 2.0);
        assert!(encode_fm_tdma(&scene, &grid, 100.0, &w).is_err());
    }

    #[test]
    fn complementary_arm() {
        let plan = design_plan(1.0, 10, 2, 3).unwrap();
        let set = plan.channel_set();
        let scene = Scene::new(1, 5, vec![1.0, 0.5, 0.25, 2.0, 3.0]).unwrap();
        let sched = schedule_fdma_tdma(5, &set);
        let streams = encode_fdma_tdma(&scene, &sched, &set, &plan.window()).unwrap();
        for (slot, s) in sched.slots.iter().zip(&streams) {
            let pd2 = complementary_stream(s, &scene, slot).unwrap();
            for (a, b) in s.samples.iter().zip(&pd2.samples) {
                assert!((a + b - scene.total()).abs() < 1e-12);
            }
        }
        // Single unit pixel: PD2 = 1 - square.
        let one = Scene::new(1, 1, vec![1.0]).unwrap();
        let sched = schedule_fdma_tdma(1, &set);
        let s = encode_fdma_tdma(&one, &sched, &set, &plan.window()).unwrap();
        let pd2 = complementary_stream(&s[0], &one, &sched.slots[0]).unwrap();
        assert!(pd2
            .samples
            .iter()
            .zip(&s[0].samples)
            .all(|(b, a)| *b == 1.0 - a));
        // Empty slot: constant parked light.
        let empty = TdmaSlot {
            index: 0,
            assignments: vec![],
        };
        let pd2 = complementary_stream(&SampledSignal::zeros(4, 4.0), &scene, &empty).unwrap();
        assert!(pd2.samples.iter().all(|&x| x == scene.total()));
    }

    proptest! {
        #[test]
        fn schedule_partitions_pixels(npix in 0usize..2000, p in 1usize..=10) {
            let w = SamplingWindow::from_exponent(1.0, 16).unwrap();
            let freqs: Vec<f64> = (0..p).map(|j| 64.0 * (1 << j) as f64).collect();
            let set = ChannelSet::explicit(&freqs, w).unwrap();
            let s = schedule_fdma_tdma(npix, &set);
            prop_assert_eq!(s.slot_count(), npix.div_ceil(p));
            let mut seen = vec![0u8; npix];
            for slot in &s.slots {
                let mut f: Vec<f64> = slot.assignments.iter().map(|a| a.frequency).collect();
                let n = f.len();
                f.dedup();
                prop_assert_eq!(f.len(), n);
                for px in slot.pixels() { seen[px] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn fdma_slot_is_periodic_in_slowest_carrier(
            irr in proptest::collection::vec(0.0f64..2.0, 1..6),
        ) {
            let plan = design_plan(1.0, 12, 3, 5).unwrap();
            let set = plan.channel_set();
            let scene = Scene::new(1, irr.len(), irr.clone()).unwrap();
            let sched = schedule_fdma_tdma(irr.len(), &set);
            let s = encode_fdma_tdma(&scene, &sched, &set, &plan.window()).unwrap();
            let period = plan.q / plan.bins[0];
            for n in period..plan.q {
                prop_assert_eq!(s[0].samples[n], s[0].samples[n - period]);
            }
        }
    }
}
