//! Multi-packet wideband scenes.

use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;
use std::f64::consts::PI;

use super::{assemble_packet, gfsk_modulate_span, GfskConfig};
use crate::ble::{AccessAddress, ADVERTISING_CRC_INIT};
use crate::channelizer::{BleChannel, ChannelPlan};
use crate::error::{Error, Result};
use crate::iq_io::{CaptureMeta, IQCapture};

/// Noise bandwidth that configured SNRs refer to.
pub const SNR_REFERENCE_BANDWIDTH_HZ: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePacket {
    /// Header followed by payload.
    pub pdu: Vec<u8>,
    pub channel: u8,
    pub aa: AccessAddress,
    pub crc_init: u32,
    /// Leading edge of the first preamble symbol, seconds from capture start.
    pub t_start_s: f64,
    pub amplitude: f64,
    pub cfo_hz: f64,
}

impl ScenePacket {
    pub fn advertising(pdu: Vec<u8>, channel: u8, t_start_s: f64) -> Self {
        ScenePacket {
            pdu,
            channel,
            aa: AccessAddress::ADVERTISING,
            crc_init: ADVERTISING_CRC_INIT,
            t_start_s,
            amplitude: 1.0,
            cfo_hz: 0.0,
        }
    }

    pub fn air_bits(&self) -> usize {
        crate::ble::air_bits(self.pdu.len().saturating_sub(2))
    }

    pub fn t_end_s(&self, symbol_rate_hz: f64) -> f64 {
        self.t_start_s + self.air_bits() as f64 / symbol_rate_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub meta: CaptureMeta,
    pub duration_s: f64,
    /// Mean noise power per complex sample, dB relative to full scale.
    /// Negative infinity disables noise.
    pub noise_floor_dbfs: f64,
    pub seed: u64,
    pub gfsk: GfskConfig,
}

impl SceneConfig {
    pub fn new(meta: CaptureMeta, duration_s: f64) -> Self {
        SceneConfig {
            meta,
            duration_s,
            noise_floor_dbfs: -60.0,
            seed: 0,
            gfsk: GfskConfig::default(),
        }
    }
}

/// Noise floor that puts a packet of `amplitude` at `snr_db` over noise
/// measured in a 1 MHz bandwidth, for a capture at `rate_hz`.
pub fn noise_floor_for_snr(amplitude: f64, snr_db: f64, rate_hz: f64) -> f64 {
    20.0 * amplitude.log10() - snr_db + 10.0 * (rate_hz / SNR_REFERENCE_BANDWIDTH_HZ).log10()
}

pub(crate) fn add_noise(samples: &mut [Complex32], power: f64, rng: &mut ChaCha8Rng) {
    if !(power > 0.0) {
        return;
    }
    let sigma = (power / 2.0).sqrt();
    for s in samples.iter_mut() {
        let i: f64 = rng.sample(StandardNormal);
        let q: f64 = rng.sample(StandardNormal);
        *s += Complex32::new((sigma * i) as f32, (sigma * q) as f32);
    }
}

/// The carrier stays on for this long after the last symbol so the final
/// frequency pulse decays instead of being cut off.
pub const BURST_TAIL_SYMBOLS: f64 = 1.0;

/// Modulated burst for one packet on the capture's sample grid: returns the
/// absolute index of the first sample and the samples.
pub(crate) fn render_burst(
    packet: &ScenePacket,
    offset_hz: f64,
    rate_hz: f64,
    gfsk: &GfskConfig,
) -> Result<(usize, Vec<Complex32>)> {
    let bits = assemble_packet(&packet.pdu, packet.channel, packet.aa, packet.crc_init)?;
    let start = packet.t_start_s * rate_hz;
    // Snap to the grid first so exact sample times are not pushed over by
    // rounding in the product.
    let grid_ceil = |x: f64| (x - 1e-6).ceil().max(0.0) as usize;
    let first = grid_ceil(start);
    let tail = BURST_TAIL_SYMBOLS / gfsk.symbol_rate_hz;
    let end = grid_ceil((packet.t_end_s(gfsk.symbol_rate_hz) + tail) * rate_hz);
    let cfg = GfskConfig {
        amplitude: packet.amplitude,
        ..*gfsk
    };
    let mut burst = gfsk_modulate_span(&bits, &cfg, rate_hz, start - first as f64, end - first)?;
    let w = 2.0 * PI * offset_hz / rate_hz;
    if w == 0.0 {
        return Ok((first, burst));
    }
    for (i, s) in burst.iter_mut().enumerate() {
        let ph = w * (first + i) as f64;
        *s *= Complex32::new(ph.cos() as f32, ph.sin() as f32);
    }
    Ok((first, burst))
}

fn check_overlaps(packets: &[ScenePacket], symbol_rate_hz: f64) -> Result<()> {
    let mut spans: Vec<(u8, f64, f64)> = packets
        .iter()
        .map(|p| (p.channel, p.t_start_s, p.t_end_s(symbol_rate_hz)))
        .collect();
    spans.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    for w in spans.windows(2) {
        if w[0].0 == w[1].0 && w[1].1 < w[0].2 {
            return Err(Error::Argument(format!(
                "packets at {} s and {} s overlap on channel {}",
                w[0].1, w[1].1, w[0].0
            )));
        }
    }
    Ok(())
}

pub fn compose_scene(packets: &[ScenePacket], cfg: &SceneConfig) -> Result<IQCapture> {
    cfg.meta.validate()?;
    cfg.gfsk.validate()?;
    if !(cfg.duration_s >= 0.0 && cfg.duration_s.is_finite()) {
        return Err(Error::Argument(format!("bad scene duration {}", cfg.duration_s)));
    }
    let plan = ChannelPlan::for_capture(&cfg.meta);
    for p in packets {
        if !plan.contains(p.channel) {
            return Err(Error::Coverage(format!(
                "channel {} is not covered by a {} Hz capture at {} Hz",
                p.channel, cfg.meta.sample_rate_hz, cfg.meta.center_freq_hz
            )));
        }
    }
    check_overlaps(packets, cfg.gfsk.symbol_rate_hz)?;

    let rate = cfg.meta.sample_rate_hz;
    let n = (cfg.duration_s * rate).round() as usize;
    let mut samples = vec![Complex32::new(0.0, 0.0); n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    add_noise(&mut samples, 10f64.powf(cfg.noise_floor_dbfs / 10.0), &mut rng);

    let bursts: Vec<(usize, Vec<Complex32>)> = packets
        .par_iter()
        .map(|p| {
            let ch = BleChannel::new(p.channel).expect("covered channel");
            let offset = ch.center_freq_hz - cfg.meta.center_freq_hz + p.cfo_hz;
            render_burst(p, offset, rate, &cfg.gfsk)
        })
        .collect::<Result<_>>()?;
    for (first, burst) in bursts {
        for (s, b) in samples.iter_mut().skip(first).zip(burst) {
            *s += b;
        }
    }
    IQCapture::new(cfg.meta.clone(), samples)
}

fn default_noise() -> f64 {
    -60.0
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PacketSpec {
    channel: u8,
    t_start_s: f64,
    pdu: String,
    #[serde(default)]
    aa: Option<String>,
    #[serde(default)]
    crc_init: Option<String>,
    #[serde(default = "default_amplitude")]
    amplitude: f64,
    #[serde(default)]
    cfo_hz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSpec {
    sample_rate_hz: f64,
    center_freq_hz: f64,
    duration_s: f64,
    #[serde(default = "default_noise")]
    noise_floor_dbfs: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    label: Option<String>,
    #[serde(default, rename = "packet")]
    packets: Vec<PacketSpec>,
}

/// A parsed scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescription {
    pub config: SceneConfig,
    pub packets: Vec<ScenePacket>,
}

fn parse_hex24(s: &str, field: &'static str) -> Result<u32> {
    let v = u32::from_str_radix(s.trim_start_matches("0x"), 16)
        .map_err(|e| Error::parse(field, e.to_string()))?;
    if v > 0xFF_FFFF {
        return Err(Error::parse(field, "wider than 24 bits"));
    }
    Ok(v)
}

/// Parses a TOML scene description:
///
/// ```toml
/// sample_rate_hz = 25e6
/// center_freq_hz = 2406.25e6
/// duration_s = 0.01
/// noise_floor_dbfs = -60
/// seed = 7
///
/// [[packet]]
/// channel = 37
/// t_start_s = 0.001
/// pdu = "4219696...0a"
/// ```
pub fn parse_scene(text: &str) -> Result<SceneDescription> {
    let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let mut meta = CaptureMeta::new(spec.sample_rate_hz, spec.center_freq_hz)?;
    meta.label = spec.label;
    let packets = spec
        .packets
        .into_iter()
        .map(|p| {
            let pdu = hex::decode(p.pdu.trim()).map_err(|e| Error::parse("pdu", e.to_string()))?;
            let aa = match p.aa {
                Some(s) => s
                    .parse()
                    .map_err(|e: std::num::ParseIntError| Error::parse("aa", e.to_string()))?,
                None => AccessAddress::ADVERTISING,
            };
            let crc_init = match p.crc_init {
                Some(s) => parse_hex24(&s, "crc_init")?,
                None => ADVERTISING_CRC_INIT,
            };
            Ok(ScenePacket {
                pdu,
                channel: p.channel,
                aa,
                crc_init,
                t_start_s: p.t_start_s,
                amplitude: p.amplitude,
                cfo_hz: p.cfo_hz,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneDescription {
        config: SceneConfig {
            meta,
            duration_s: spec.duration_s,
            noise_floor_dbfs: spec.noise_floor_dbfs,
            seed: spec.seed,
            gfsk: GfskConfig::default(),
        },
        packets,
    })
}
