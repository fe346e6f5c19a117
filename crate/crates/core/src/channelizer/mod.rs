//! Per-channel extraction from a wideband capture: the on-channel 2 Msps
//! stream and the narrow off-channel noise probe used by the squelch.

mod firdes;
mod plan;
mod resampler;

pub use firdes::{design_lowpass, FirSpec, FirTaps, Window, TAP_COUNT_FACTOR};
pub use plan::{all_channels, BleChannel, ChannelKind, ChannelPlan, CHANNEL_HALF_WIDTH_HZ};
pub use resampler::{rational_ratio, XlatingResampler, DIRECT_MAX_TAPS};

use num_complex::Complex32;

use crate::error::{Error, Result};
use crate::iq_io::IQCapture;

pub const CHANNEL_RATE_HZ: f64 = 2e6;
pub const NOISE_PROBE_OFFSET_HZ: f64 = 790e3;

/// A resampled stream. Output `i` represents input sample time
/// `(first + i) * M / L`, with the filter delay already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStream {
    pub channel: Option<u8>,
    pub rate_hz: f64,
    pub samples: Vec<Complex32>,
    pub first: u64,
    pub ratio: (u64, u64),
}

impl ChannelStream {
    /// Input sample index represented by output `i`.
    pub fn input_origin(&self, i: usize) -> f64 {
        (self.first + i as u64) as f64 * self.ratio.1 as f64 / self.ratio.0 as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelizerConfig {
    pub on_channel: FirSpec,
    pub noise: FirSpec,
    pub noise_offset_hz: f64,
    pub out_rate_hz: f64,
    /// Scale the noise probe so white noise comes out at the same power as
    /// through the on-channel filter. The on/off energy ratio then reads as
    /// an in-channel SNR.
    pub match_noise_bandwidth: bool,
}

impl Default for ChannelizerConfig {
    fn default() -> Self {
        ChannelizerConfig {
            on_channel: FirSpec::lowpass(500e3, 300e3),
            noise: FirSpec::lowpass(22.5e3, 10e3),
            noise_offset_hz: NOISE_PROBE_OFFSET_HZ,
            out_rate_hz: CHANNEL_RATE_HZ,
            match_noise_bandwidth: true,
        }
    }
}

impl ChannelizerConfig {
    pub fn on_taps(&self, sample_rate_hz: f64) -> Result<FirTaps> {
        design_lowpass(&self.on_channel, sample_rate_hz)
    }

    pub fn noise_taps(&self, sample_rate_hz: f64) -> Result<FirTaps> {
        let unit = design_lowpass(&self.noise, sample_rate_hz)?;
        if !self.match_noise_bandwidth {
            return Ok(unit);
        }
        let on = self.on_taps(sample_rate_hz)?;
        let gain = self.noise.gain * (on.sum_of_squares() / unit.sum_of_squares()).sqrt();
        design_lowpass(&self.noise.with_gain(gain), sample_rate_hz)
    }

    /// Mixer offset for the noise probe of a channel at `channel_offset_hz`:
    /// above the carrier when it fits inside the band, below otherwise.
    pub fn noise_probe_offset(&self, channel_offset_hz: f64, sample_rate_hz: f64) -> Result<f64> {
        let edge = self.noise.cutoff_hz + self.noise.transition_hz;
        let half = sample_rate_hz / 2.0;
        [self.noise_offset_hz, -self.noise_offset_hz]
            .into_iter()
            .map(|d| channel_offset_hz + d)
            .find(|f| f.abs() + edge < half)
            .ok_or_else(|| {
                Error::Coverage(format!(
                    "neither +/-{} Hz noise probe around {channel_offset_hz} Hz fits in the band",
                    self.noise_offset_hz
                ))
            })
    }
}

fn run(
    input: &[Complex32],
    taps: &FirTaps,
    offset_hz: f64,
    out_rate_hz: f64,
    channel: Option<u8>,
) -> Result<ChannelStream> {
    let mut rs = XlatingResampler::new(taps, offset_hz, out_rate_hz)?;
    let mut samples = Vec::with_capacity(rs.output_len(input.len() as u64) as usize);
    rs.push(input, &mut samples);
    rs.finish(&mut samples);
    Ok(ChannelStream {
        channel,
        rate_hz: out_rate_hz,
        samples,
        first: 0,
        ratio: rs.ratio(),
    })
}

/// Mixes by `-offset_hz`, filters with `taps` and resamples to `out_rate_hz`.
pub fn xlate_decimate(
    input: &IQCapture,
    offset_hz: f64,
    taps: &FirTaps,
    out_rate_hz: f64,
) -> Result<ChannelStream> {
    if taps.sample_rate_hz() != input.meta.sample_rate_hz {
        return Err(Error::Argument(format!(
            "taps designed for {} Hz, capture is {} Hz",
            taps.sample_rate_hz(),
            input.meta.sample_rate_hz
        )));
    }
    run(&input.samples, taps, offset_hz, out_rate_hz, None)
}

/// Off-channel noise stream for a channel centered `channel_center_offset_hz`
/// from the capture center.
pub fn noise_channel(
    input: &IQCapture,
    channel_center_offset_hz: f64,
    cfg: &ChannelizerConfig,
) -> Result<ChannelStream> {
    let rate = input.meta.sample_rate_hz;
    let offset = cfg.noise_probe_offset(channel_center_offset_hz, rate)?;
    let taps = cfg.noise_taps(rate)?;
    run(&input.samples, &taps, offset, cfg.out_rate_hz, None)
}

/// On-channel stream for BLE channel `channel`.
pub fn channel_stream(input: &IQCapture, channel: u8, cfg: &ChannelizerConfig) -> Result<ChannelStream> {
    let ch =
        BleChannel::new(channel).ok_or_else(|| Error::Argument(format!("channel {channel} out of range")))?;
    let plan = ChannelPlan::for_capture(&input.meta);
    if !plan.contains(channel) {
        return Err(Error::Coverage(format!(
            "channel {channel} not covered by the capture"
        )));
    }
    let offset = ch.center_freq_hz - input.meta.center_freq_hz;
    let taps = cfg.on_taps(input.meta.sample_rate_hz)?;
    let mut s = run(&input.samples, &taps, offset, cfg.out_rate_hz, Some(channel))?;
    s.channel = Some(channel);
    Ok(s)
}
