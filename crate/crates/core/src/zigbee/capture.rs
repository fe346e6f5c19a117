//! 802.15.4 channels inside a wideband capture: decode and scene synthesis.

use log::{debug, info};
use num_complex::Complex32;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use std::f64::consts::PI;

use crate::channelizer::{FirSpec, XlatingResampler};
use crate::error::{Error, Result};
use crate::iq_io::{CaptureMeta, IQCapture};
use crate::synth::{add_noise, SceneConfig};

use super::frame::{short_data_header, ZigbeeFrame, ZigbeePpdu};
use super::phy::{oqpsk_waveform, ChipReceiver, ZigbeeRxConfig, CHIP_RATE_HZ};
use super::pn::{spread, CHIPS_PER_SYMBOL};

pub const ZIGBEE_CHANNEL_RATE_HZ: f64 = 4e6;
pub const ZIGBEE_CUTOFF_HZ: f64 = 1.3e6;
/// Half-width a channel needs inside the capture band to count as covered.
pub const ZIGBEE_HALF_WIDTH_HZ: f64 = 1.3e6;
pub const FIRST_CHANNEL: u8 = 11;
pub const LAST_CHANNEL: u8 = 26;

/// Center frequency of 2.4 GHz channel `k` (11..=26).
pub fn zigbee_channel_freq(k: u8) -> Option<f64> {
    (FIRST_CHANNEL..=LAST_CHANNEL)
        .contains(&k)
        .then(|| (2405.0 + 5.0 * f64::from(k - FIRST_CHANNEL)) * 1e6)
}

/// Channels whose band lies inside the capture.
pub fn zigbee_channels_covered(meta: &CaptureMeta) -> Vec<u8> {
    let (lo, hi) = meta.band();
    (FIRST_CHANNEL..=LAST_CHANNEL)
        .filter(|k| {
            let f = zigbee_channel_freq(*k).unwrap_or(0.0);
            f - ZIGBEE_HALF_WIDTH_HZ >= lo && f + ZIGBEE_HALF_WIDTH_HZ <= hi
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZigbeeConfig {
    /// Restrict decoding to these channels; `None` decodes all covered ones.
    pub channels: Option<Vec<u8>>,
    pub filter: FirSpec,
    pub rx: ZigbeeRxConfig,
    pub threads: Option<usize>,
}

impl Default for ZigbeeConfig {
    fn default() -> Self {
        ZigbeeConfig {
            channels: None,
            filter: FirSpec::lowpass(ZIGBEE_CUTOFF_HZ, 500e3),
            rx: ZigbeeRxConfig::default(),
            threads: None,
        }
    }
}

/// A frame decoded from a capture.
#[derive(Debug, Clone, PartialEq)]
pub struct ZigbeeRecord {
    pub channel: u8,
    /// Start of the first preamble chip, seconds from capture start.
    pub t_start_s: f64,
    pub frame: ZigbeeFrame,
}

fn decode_channel(capture: &IQCapture, channel: u8, cfg: &ZigbeeConfig) -> Result<Vec<ZigbeeRecord>> {
    let rate = capture.meta.sample_rate_hz;
    let freq = zigbee_channel_freq(channel)
        .ok_or_else(|| Error::Argument(format!("802.15.4 channel {channel} out of range 11..=26")))?;
    let taps = crate::channelizer::design_lowpass(&cfg.filter, rate)?;
    let mut rs = XlatingResampler::new(&taps, freq - capture.meta.center_freq_hz, ZIGBEE_CHANNEL_RATE_HZ)?;
    let mut stream = Vec::new();
    rs.push(&capture.samples, &mut stream);
    rs.finish(&mut stream);
    let spc = (ZIGBEE_CHANNEL_RATE_HZ / CHIP_RATE_HZ) as usize;
    let rx = ChipReceiver::new(spc, cfg.rx)?;
    let frames = rx.receive(&stream);
    debug!("channel {channel}: {} frames", frames.len());
    Ok(frames
        .into_iter()
        .map(|f| ZigbeeRecord {
            channel,
            t_start_s: f.start_sample as f64 / ZIGBEE_CHANNEL_RATE_HZ,
            frame: f.frame,
        })
        .collect())
}

/// Decodes every covered (or selected) 802.15.4 channel of a capture.
/// Records are sorted by start time, then channel.
pub fn zigbee_decode(capture: &IQCapture, cfg: &ZigbeeConfig) -> Result<Vec<ZigbeeRecord>> {
    let covered = zigbee_channels_covered(&capture.meta);
    let channels: Vec<u8> = match &cfg.channels {
        Some(list) => {
            if let Some(k) = list.iter().find(|k| !covered.contains(k)) {
                return Err(Error::Coverage(format!(
                    "802.15.4 channel {k} is not covered by the capture"
                )));
            }
            list.clone()
        }
        None => covered,
    };
    if channels.is_empty() {
        return Err(Error::Coverage("capture covers no 802.15.4 channel".into()));
    }
    let work = || {
        channels
            .par_iter()
            .map(|k| decode_channel(capture, *k, cfg))
            .collect::<Result<Vec<_>>>()
    };
    let per_channel = crate::pipeline::with_pool(cfg.threads, work)??;
    let mut records: Vec<ZigbeeRecord> = per_channel.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        a.t_start_s
            .total_cmp(&b.t_start_s)
            .then(a.channel.cmp(&b.channel))
    });
    info!(
        "{} 802.15.4 frames ({} fcs ok)",
        records.len(),
        records.iter().filter(|r| r.frame.fcs_ok).count()
    );
    Ok(records)
}

/// One frame to place in a synthesized capture.
#[derive(Debug, Clone, PartialEq)]
pub struct ZigbeeScenePacket {
    pub channel: u8,
    pub t_start_s: f64,
    pub ppdu: ZigbeePpdu,
    pub amplitude: f64,
    pub cfo_hz: f64,
}

impl ZigbeeScenePacket {
    pub fn new(ppdu: ZigbeePpdu, channel: u8, t_start_s: f64) -> Self {
        ZigbeeScenePacket {
            channel,
            t_start_s,
            ppdu,
            amplitude: 1.0,
            cfo_hz: 0.0,
        }
    }

    pub fn chips(&self) -> usize {
        self.ppdu.to_bytes().len() * 2 * CHIPS_PER_SYMBOL
    }

    pub fn t_end_s(&self) -> f64 {
        self.t_start_s + self.chips() as f64 / CHIP_RATE_HZ
    }
}

fn render(p: &ZigbeeScenePacket, meta: &CaptureMeta) -> Result<(usize, Vec<Complex32>)> {
    let rate = meta.sample_rate_hz;
    let freq = zigbee_channel_freq(p.channel)
        .ok_or_else(|| Error::Argument(format!("802.15.4 channel {} out of range 11..=26", p.channel)))?;
    let chips = spread(&p.ppdu.to_bytes());
    let grid_ceil = |x: f64| (x - 1e-6).ceil().max(0.0) as usize;
    let first = grid_ceil(p.t_start_s * rate);
    let last = ((p.t_end_s() * rate) + 1e-6).floor() as usize;
    let t0_chips = (first as f64 / rate - p.t_start_s) * CHIP_RATE_HZ;
    let mut burst = oqpsk_waveform(&chips, rate, t0_chips, last + 1 - first);
    let w = 2.0 * PI * (freq - meta.center_freq_hz + p.cfo_hz) / rate;
    for (i, s) in burst.iter_mut().enumerate() {
        let ph = w * (first + i) as f64;
        *s *= Complex32::from_polar(p.amplitude as f32, ph as f32);
    }
    Ok((first, burst))
}

/// Synthesizes a capture holding `packets` over the scene's noise floor.
pub fn compose_zigbee_scene(packets: &[ZigbeeScenePacket], cfg: &SceneConfig) -> Result<IQCapture> {
    cfg.meta.validate()?;
    if !(cfg.duration_s >= 0.0 && cfg.duration_s.is_finite()) {
        return Err(Error::Argument(format!("bad scene duration {}", cfg.duration_s)));
    }
    let covered = zigbee_channels_covered(&cfg.meta);
    for p in packets {
        if !covered.contains(&p.channel) {
            return Err(Error::Coverage(format!(
                "802.15.4 channel {} is not covered by a {} Hz capture at {} Hz",
                p.channel, cfg.meta.sample_rate_hz, cfg.meta.center_freq_hz
            )));
        }
    }
    let mut spans: Vec<(u8, f64, f64)> = packets
        .iter()
        .map(|p| (p.channel, p.t_start_s, p.t_end_s()))
        .collect();
    spans.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if let Some(w) = spans.windows(2).find(|w| w[0].0 == w[1].0 && w[1].1 < w[0].2) {
        return Err(Error::Argument(format!(
            "frames at {} s and {} s overlap on channel {}",
            w[0].1, w[1].1, w[0].0
        )));
    }
    let n = (cfg.duration_s * cfg.meta.sample_rate_hz).round() as usize;
    let mut samples = vec![Complex32::new(0.0, 0.0); n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    add_noise(&mut samples, 10f64.powf(cfg.noise_floor_dbfs / 10.0), &mut rng);
    let bursts = packets
        .par_iter()
        .map(|p| render(p, &cfg.meta))
        .collect::<Result<Vec<_>>>()?;
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

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSpec {
    channel: u8,
    t_start_s: f64,
    payload: String,
    #[serde(default)]
    mac_header: Option<String>,
    #[serde(default)]
    seq: u8,
    #[serde(default = "default_amplitude")]
    amplitude: f64,
    #[serde(default)]
    cfo_hz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZigbeeSceneSpec {
    sample_rate_hz: f64,
    center_freq_hz: f64,
    duration_s: f64,
    #[serde(default = "default_noise")]
    noise_floor_dbfs: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    label: Option<String>,
    #[serde(default, rename = "frame")]
    frames: Vec<FrameSpec>,
}

/// Parses a TOML 802.15.4 scene. Frames without `mac_header` get a short
/// address data header (PAN 0x1234, broadcast destination, source 0x0001).
///
/// ```toml
/// sample_rate_hz = 4e6
/// center_freq_hz = 2450e6
/// duration_s = 0.005
///
/// [[frame]]
/// channel = 20
/// t_start_s = 0.0005
/// payload = "ffeeffee"
/// ```
pub fn parse_zigbee_scene(text: &str) -> Result<(SceneConfig, Vec<ZigbeeScenePacket>)> {
    let spec: ZigbeeSceneSpec = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let mut meta = CaptureMeta::new(spec.sample_rate_hz, spec.center_freq_hz)?;
    meta.label = spec.label;
    let frames = spec
        .frames
        .into_iter()
        .map(|f| {
            let payload =
                hex::decode(f.payload.trim()).map_err(|e| Error::parse("payload", e.to_string()))?;
            let header = match f.mac_header {
                Some(h) => hex::decode(h.trim()).map_err(|e| Error::parse("mac_header", e.to_string()))?,
                None => short_data_header(f.seq, 0x1234, 0xFFFF, 0x0001),
            };
            Ok(ZigbeeScenePacket {
                channel: f.channel,
                t_start_s: f.t_start_s,
                ppdu: ZigbeePpdu::from_parts(&header, &payload)?,
                amplitude: f.amplitude,
                cfo_hz: f.cfo_hz,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = SceneConfig::new(meta, spec.duration_s);
    cfg.noise_floor_dbfs = spec.noise_floor_dbfs;
    cfg.seed = spec.seed;
    Ok((cfg, frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::noise_floor_for_snr;

    #[test]
    fn channel_plan() {
        assert_eq!(zigbee_channel_freq(11), Some(2405e6));
        assert_eq!(zigbee_channel_freq(26), Some(2480e6));
        assert_eq!(zigbee_channel_freq(10), None);
        let meta = CaptureMeta::new(25e6, 2406.25e6).unwrap();
        assert_eq!(zigbee_channels_covered(&meta), vec![11, 12, 13]);
        let meta = CaptureMeta::new(4e6, 2450e6).unwrap();
        assert_eq!(zigbee_channels_covered(&meta), vec![20]);
    }

    #[test]
    fn wideband_scene_roundtrip() {
        let meta = CaptureMeta::new(25e6, 2406.25e6).unwrap();
        let mut cfg = SceneConfig::new(meta, 0.004);
        cfg.noise_floor_dbfs = noise_floor_for_snr(1.0, 30.0, 25e6);
        cfg.seed = 4;
        let frames: Vec<ZigbeeScenePacket> = [(11u8, 0.2e-3), (12, 0.5e-3), (13, 1.7e-3), (11, 2.1e-3)]
            .iter()
            .enumerate()
            .map(|(i, (ch, t))| {
                let ppdu = ZigbeePpdu::from_parts(
                    &short_data_header(i as u8, 0x1234, 0xFFFF, 1),
                    &[0xFF, 0xEE, 0xFF, 0xEE, i as u8],
                )
                .unwrap();
                ZigbeeScenePacket::new(ppdu, *ch, *t)
            })
            .collect();
        let cap = compose_zigbee_scene(&frames, &cfg).unwrap();
        let got = zigbee_decode(&cap, &ZigbeeConfig::default()).unwrap();
        assert_eq!(got.len(), frames.len());
        for (g, f) in got.iter().zip(&frames) {
            assert_eq!(g.channel, f.channel);
            assert!(g.frame.fcs_ok);
            assert_eq!(g.frame.mpdu(), f.ppdu.mpdu);
            assert!(
                (g.t_start_s - f.t_start_s).abs() < 0.5e-6,
                "{} vs {}",
                g.t_start_s,
                f.t_start_s
            );
        }
    }

    #[test]
    fn coverage_errors() {
        let meta = CaptureMeta::new(4e6, 2450e6).unwrap();
        let cfg = SceneConfig::new(meta.clone(), 0.001);
        let ppdu = ZigbeePpdu::from_parts(&short_data_header(0, 1, 2, 3), &[]).unwrap();
        let far = ZigbeeScenePacket::new(ppdu, 11, 0.0);
        assert!(matches!(
            compose_zigbee_scene(&[far], &cfg),
            Err(Error::Coverage(_))
        ));
        let cap = IQCapture::new(meta, vec![Complex32::new(0.0, 0.0); 100]).unwrap();
        let sel = ZigbeeConfig {
            channels: Some(vec![12]),
            ..Default::default()
        };
        assert!(matches!(zigbee_decode(&cap, &sel), Err(Error::Coverage(_))));
    }

    #[test]
    fn scene_file() {
        let (cfg, frames) = parse_zigbee_scene(
            "sample_rate_hz = 4e6\ncenter_freq_hz = 2450e6\nduration_s = 0.003\nseed = 2\n\
             [[frame]]\nchannel = 20\nt_start_s = 0.0002\npayload = \"ffeeffee\"\nseq = 9\n",
        )
        .unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(cfg.seed, 2);
        let cap = compose_zigbee_scene(&frames, &cfg).unwrap();
        let got = zigbee_decode(&cap, &ZigbeeConfig::default()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].frame.payload, vec![0xFF, 0xEE, 0xFF, 0xEE]);
        assert_eq!(got[0].frame.sequence(), 9);
        assert!(parse_zigbee_scene("sample_rate_hz = 4e6\n").is_err());
    }
}
