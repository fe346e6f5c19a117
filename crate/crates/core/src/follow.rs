//! Connection following: CONNECT_REQ parameters, channel selection
//! algorithm #1 and per-event annotation of captured data packets.

use crate::ble::pdu::{BdAddr, LL_DATA_LEN};
use crate::ble::{AccessAddress, BlePacket};
use crate::error::{Error, Result};

pub const DATA_CHANNELS: u8 = 37;
/// Connection timing unit in seconds.
pub const UNIT_S: f64 = 1.25e-3;
const CHANNEL_MAP_MASK: u64 = (1 << 37) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectionParams {
    pub aa: AccessAddress,
    pub crc_init: u32,
    pub win_size: u8,
    pub win_offset: u16,
    pub interval: u16,
    pub latency: u16,
    pub timeout: u16,
    /// Bit `k` set means data channel `k` is used.
    pub channel_map: u64,
    pub hop: u8,
    pub sca: u8,
}

impl ConnectionParams {
    pub fn used_channels(&self) -> Vec<u8> {
        (0..DATA_CHANNELS)
            .filter(|k| self.channel_map >> k & 1 == 1)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let reason = if self.used_channels().len() < 2 {
            Some("channel map uses fewer than 2 channels")
        } else if !(5..=16).contains(&self.hop) {
            Some("hop increment outside 5..=16")
        } else if !(6..=3200).contains(&self.interval) {
            Some("interval outside 6..=3200")
        } else {
            None
        };
        match reason {
            Some(r) => Err(Error::Validity {
                reason: r.into(),
                params: format!("{self:?}"),
            }),
            None => Ok(()),
        }
    }

    pub fn interval_s(&self) -> f64 {
        self.interval as f64 * UNIT_S
    }

    /// Start of the transmit window relative to the end of the CONNECT_REQ.
    pub fn window_start_s(&self) -> f64 {
        UNIT_S + self.win_offset as f64 * UNIT_S
    }

    pub fn to_ll_data(&self) -> [u8; LL_DATA_LEN] {
        let mut out = [0u8; LL_DATA_LEN];
        out[0..4].copy_from_slice(&self.aa.0.to_le_bytes());
        out[4..7].copy_from_slice(&self.crc_init.to_le_bytes()[..3]);
        out[7] = self.win_size;
        out[8..10].copy_from_slice(&self.win_offset.to_le_bytes());
        out[10..12].copy_from_slice(&self.interval.to_le_bytes());
        out[12..14].copy_from_slice(&self.latency.to_le_bytes());
        out[14..16].copy_from_slice(&self.timeout.to_le_bytes());
        out[16..21].copy_from_slice(&(self.channel_map & CHANNEL_MAP_MASK).to_le_bytes()[..5]);
        out[21] = (self.hop & 0x1F) | (self.sca & 0x07) << 5;
        out
    }

    pub fn from_ll_data(ll: &[u8; LL_DATA_LEN]) -> Result<Self> {
        let u16_at = |i: usize| u16::from_le_bytes([ll[i], ll[i + 1]]);
        let mut map = [0u8; 8];
        map[..5].copy_from_slice(&ll[16..21]);
        let params = ConnectionParams {
            aa: AccessAddress(u32::from_le_bytes(ll[0..4].try_into().unwrap())),
            crc_init: u32::from_le_bytes([ll[4], ll[5], ll[6], 0]),
            win_size: ll[7],
            win_offset: u16_at(8),
            interval: u16_at(10),
            latency: u16_at(12),
            timeout: u16_at(14),
            channel_map: u64::from_le_bytes(map) & CHANNEL_MAP_MASK,
            hop: ll[21] & 0x1F,
            sca: ll[21] >> 5,
        };
        params.validate()?;
        Ok(params)
    }
}

/// CONNECT_REQ payload: InitA, AdvA, LLData.
pub fn connect_req_payload(init_a: BdAddr, adv_a: BdAddr, params: &ConnectionParams) -> Vec<u8> {
    [&init_a.0[..], &adv_a.0[..], &params.to_ll_data()[..]].concat()
}

pub fn parse_connect_req(payload: &[u8]) -> Result<ConnectionParams> {
    if payload.len() != 12 + LL_DATA_LEN {
        return Err(Error::parse(
            "CONNECT_REQ",
            format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                12 + LL_DATA_LEN
            ),
        ));
    }
    ConnectionParams::from_ll_data(payload[12..].try_into().unwrap())
}

/// Data channel used by each of the first `n_events` connection events.
pub fn hop_sequence(params: &ConnectionParams, n_events: usize) -> Vec<u8> {
    let used = params.used_channels();
    let mut unmapped = 0u8;
    (0..n_events)
        .map(|_| {
            unmapped = (unmapped + params.hop) % DATA_CHANNELS;
            if params.channel_map >> unmapped & 1 == 1 {
                unmapped
            } else {
                used[unmapped as usize % used.len()]
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionEvent {
    pub index: usize,
    pub channel: u8,
    pub t_expected_s: f64,
    /// Indices into the annotated packet list.
    pub packets: Vec<usize>,
    pub missing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowConfig {
    /// Match tolerance around each expected event time; `None` uses a
    /// quarter of the connection interval.
    pub tolerance_s: Option<f64>,
    /// Last instant covered by the capture.
    pub span_end_s: f64,
}

/// Event table for a connection established by a CONNECT_REQ that ended at
/// `t_connect_s`. Only events expected before `span_end_s` are listed.
pub fn annotate_session(
    packets: &[BlePacket],
    params: &ConnectionParams,
    t_connect_s: f64,
    cfg: &FollowConfig,
) -> Result<Vec<ConnectionEvent>> {
    params.validate()?;
    let tolerance = cfg.tolerance_s.unwrap_or(params.interval_s() / 4.0);
    let anchor = t_connect_s + params.window_start_s();
    if cfg.span_end_s < anchor {
        return Ok(Vec::new());
    }
    let n = ((cfg.span_end_s - anchor) / params.interval_s()).floor() as usize + 1;
    let channels = hop_sequence(params, n);
    let mut events: Vec<ConnectionEvent> = channels
        .into_iter()
        .enumerate()
        .map(|(index, channel)| ConnectionEvent {
            index,
            channel,
            t_expected_s: anchor + index as f64 * params.interval_s(),
            packets: Vec::new(),
            missing: false,
        })
        .collect();
    for (i, p) in packets.iter().enumerate() {
        if p.aa != params.aa || p.t_start_s < t_connect_s {
            continue;
        }
        let k = ((p.t_start_s - anchor) / params.interval_s()).round();
        if k < 0.0 || k as usize >= events.len() {
            continue;
        }
        let ev = &mut events[k as usize];
        if ev.channel == p.channel && (p.t_start_s - ev.t_expected_s).abs() <= tolerance {
            ev.packets.push(i);
        }
    }
    for ev in &mut events {
        ev.missing = ev.packets.is_empty();
    }
    Ok(events)
}
