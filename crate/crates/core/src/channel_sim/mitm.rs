//! Relay experiment: a packet either goes straight to the destination, or is
//! sniffed by a middleman, optionally mutated, re-assembled with a fresh CRC
//! and replayed.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{apply_channel, ChannelModel};
use crate::ble::pdu::data_header_length;
use crate::ble::{AdvHeader, BlePacket};
use crate::channelizer::{all_channels, BleChannel};
use crate::error::{Error, Result};
use crate::iq_io::{CaptureMeta, IQCapture};
use crate::pipeline::{PipelineConfig, Receiver};
use crate::synth::{compose_scene, SceneConfig, ScenePacket, BLE_SYMBOL_RATE_HZ};

/// Sample rate of the per-trial captures, tuned to the packet's channel.
pub const TRIAL_RATE_HZ: f64 = 4e6;
/// Silence before and after each burst.
const MARGIN_S: f64 = 60e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    None,
    /// Replace every occurrence of `find` in the payload.
    Replace {
        find: Vec<u8>,
        with: Vec<u8>,
    },
    /// Replace the whole payload.
    ReplacePayload(Vec<u8>),
    /// Flip payload bits, numbered LSB first within each byte.
    FlipBits(Vec<usize>),
}

impl Mutation {
    pub fn apply(&self, payload: &[u8]) -> Vec<u8> {
        match self {
            Mutation::None => payload.to_vec(),
            Mutation::ReplacePayload(p) => p.clone(),
            Mutation::FlipBits(bits) => {
                let mut out = payload.to_vec();
                for b in bits {
                    if let Some(byte) = out.get_mut(b / 8) {
                        *byte ^= 1 << (b % 8);
                    }
                }
                out
            }
            Mutation::Replace { find, with } => {
                if find.is_empty() {
                    return payload.to_vec();
                }
                let mut out = Vec::with_capacity(payload.len());
                let mut i = 0;
                while i < payload.len() {
                    if payload[i..].starts_with(find) {
                        out.extend_from_slice(with);
                        i += find.len();
                    } else {
                        out.push(payload[i]);
                        i += 1;
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitmConfig {
    pub model_direct: ChannelModel,
    pub model_sniff: ChannelModel,
    pub model_replay: ChannelModel,
    pub mutation: Mutation,
    pub trials: u64,
}

impl MitmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        self.model_direct.validate()?;
        self.model_sniff.validate()?;
        self.model_replay.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct MitmReport {
    pub sent: u64,
    pub delivered_direct: u64,
    pub sniffed: u64,
    pub delivered_replay: u64,
    pub loss_direct: f64,
    pub loss_replay: f64,
    /// Replayed deliveries whose payload differs from the original.
    pub mutated_delivered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Direct,
    Sniff,
    Replay,
}

/// Seed for one leg of one trial, so serial and parallel runs agree.
pub fn trial_seed(base: u64, trial: u64, leg: Leg) -> u64 {
    let mut z = base
        ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (leg as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Receivers for single-channel trial captures, one per BLE channel.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    receivers: BTreeMap<u8, Receiver>,
}

impl TrialSetup {
    pub fn new() -> Result<Self> {
        Self::with_pipeline(&PipelineConfig {
            threads: Some(1),
            harvest_connect_req: false,
            ..PipelineConfig::default()
        })
    }

    pub fn with_pipeline(cfg: &PipelineConfig) -> Result<Self> {
        let receivers = all_channels()
            .map(|ch| Ok((ch.index, Receiver::new(&trial_meta(&ch)?, cfg)?)))
            .collect::<Result<_>>()?;
        Ok(TrialSetup { receivers })
    }

    /// Transmits `packet` through `model` and returns what the receiver
    /// decoded with a valid CRC.
    pub fn transmit(&self, packet: &ScenePacket, model: &ChannelModel) -> Result<Vec<BlePacket>> {
        let ch = BleChannel::new(packet.channel)
            .ok_or_else(|| Error::Argument(format!("channel {} out of range", packet.channel)))?;
        let meta = trial_meta(&ch)?;
        let mut p = packet.clone();
        p.t_start_s = MARGIN_S;
        let mut scene = SceneConfig::new(
            meta.clone(),
            2.0 * MARGIN_S + p.air_bits() as f64 / BLE_SYMBOL_RATE_HZ,
        );
        scene.noise_floor_dbfs = f64::NEG_INFINITY;
        let clean = compose_scene(&[p], &scene)?;
        let rx = apply_channel(&clean.samples, model, TRIAL_RATE_HZ)?;
        let capture = IQCapture::new(meta, rx)?;
        let rec =
            self.receivers[&ch.index].recover_with_connections(&capture, &[(packet.aa, packet.crc_init)])?;
        Ok(rec.packets.into_iter().filter(|p| p.crc_ok).collect())
    }

    /// True when the destination decodes `packet` intact.
    pub fn delivered(&self, packet: &ScenePacket, model: &ChannelModel) -> Result<Option<BlePacket>> {
        Ok(self
            .transmit(packet, model)?
            .into_iter()
            .find(|r| r.aa == packet.aa && r.pdu_bytes() == packet.pdu))
    }
}

fn trial_meta(ch: &BleChannel) -> Result<CaptureMeta> {
    CaptureMeta::new(TRIAL_RATE_HZ, ch.center_freq_hz)
}

fn seeded(model: &ChannelModel, trial: u64, leg: Leg) -> ChannelModel {
    ChannelModel {
        seed: trial_seed(model.seed, trial, leg),
        ..*model
    }
}

/// Re-assembles a received packet with a mutated payload: the header length
/// follows the new payload and the CRC is recomputed on transmission.
fn mutated_packet(original: &ScenePacket, received: &BlePacket, mutation: &Mutation) -> Result<ScenePacket> {
    let payload = mutation.apply(&received.payload);
    let mut head = received.header.to_bytes();
    if received.channel >= 37 {
        let mut h = AdvHeader::from_bytes(head);
        h.length = payload.len() as u8;
        head = h.to_bytes();
    } else {
        let raw = u16::from_le_bytes(head) & !(0x1F << 8) | ((payload.len() as u16 & 0x1F) << 8);
        head = raw.to_le_bytes();
        if data_header_length(raw) as usize != payload.len() {
            return Err(Error::Argument("mutated data payload too long".into()));
        }
    }
    Ok(ScenePacket {
        pdu: [&head[..], &payload].concat(),
        ..original.clone()
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    direct: u64,
    sniffed: u64,
    replay: u64,
    mutated: u64,
}

fn run_trial<F>(setup: &TrialSetup, source: &F, cfg: &MitmConfig, trial: u64) -> Result<Outcome>
where
    F: Fn(u64) -> ScenePacket + Sync,
{
    let packet = source(trial);
    let mut out = Outcome::default();
    if setup
        .delivered(&packet, &seeded(&cfg.model_direct, trial, Leg::Direct))?
        .is_some()
    {
        out.direct = 1;
    }
    let sniffed = setup.delivered(&packet, &seeded(&cfg.model_sniff, trial, Leg::Sniff))?;
    if let Some(got) = sniffed {
        out.sniffed = 1;
        let forged = mutated_packet(&packet, &got, &cfg.mutation)?;
        if setup
            .delivered(&forged, &seeded(&cfg.model_replay, trial, Leg::Replay))?
            .is_some()
        {
            out.replay = 1;
            if forged.pdu != packet.pdu {
                out.mutated = 1;
            }
        }
    }
    Ok(out)
}

/// Runs `cfg.trials` independent trials with packets from `source(trial)`.
pub fn mitm_simulate<F>(setup: &TrialSetup, source: F, cfg: &MitmConfig) -> Result<MitmReport>
where
    F: Fn(u64) -> ScenePacket + Sync,
{
    cfg.validate()?;
    let total = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(setup, &source, cfg, t))
        .try_reduce(Outcome::default, |a, b| {
            Ok(Outcome {
                direct: a.direct + b.direct,
                sniffed: a.sniffed + b.sniffed,
                replay: a.replay + b.replay,
                mutated: a.mutated + b.mutated,
            })
        })?;
    let sent = cfg.trials;
    Ok(MitmReport {
        sent,
        delivered_direct: total.direct,
        sniffed: total.sniffed,
        delivered_replay: total.replay,
        loss_direct: 1.0 - total.direct as f64 / sent as f64,
        loss_replay: 1.0 - total.replay as f64 / sent as f64,
        mutated_delivered: total.mutated,
    })
}

/// Fraction of `trials` packets delivered intact over one leg.
pub fn leg_success<F>(setup: &TrialSetup, source: &F, model: &ChannelModel, trials: u64) -> Result<f64>
where
    F: Fn(u64) -> ScenePacket + Sync,
{
    let ok = (0..trials)
        .into_par_iter()
        .map(|t| {
            setup
                .delivered(&source(t), &seeded(model, t, Leg::Direct))
                .map(|d| d.is_some() as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(ok as f64 / trials as f64)
}

/// SNR (dB) at which `model` delivers a fraction `target` of packets, found
/// by bisection over `[lo_db, hi_db]`. Every evaluation reuses the same
/// trial seeds, so the success curve being searched is monotone up to the
/// channel noise realizations.
pub fn calibrate_snr<F>(
    setup: &TrialSetup,
    source: &F,
    model: &ChannelModel,
    target: f64,
    trials: u64,
    (mut lo, mut hi): (f64, f64),
    iterations: u32,
) -> Result<f64>
where
    F: Fn(u64) -> ScenePacket + Sync,
{
    if !(0.0..=1.0).contains(&target) || lo >= hi {
        return Err(Error::Argument("bad calibration target or bracket".into()));
    }
    let at = |snr: f64| {
        leg_success(
            setup,
            source,
            &ChannelModel {
                snr_db: snr,
                ..*model
            },
            trials,
        )
    };
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
