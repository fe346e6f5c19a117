//! Candidate matching over the 56-symbol window and full packet decode.

use std::collections::BTreeMap;
use std::fmt;

use super::aa::{aa_offenses, AccessAddress};
use super::bits::{bits_to_bytes, bits_to_u32, hamming};
use super::crc::{crc24, crc_from_bytes, ADVERTISING_CRC_INIT};
use super::pdu::{
    parse_adv_pdu, AdvHeader, AdvPdu, PacketHeader, ADV_HEADER_RFU_BITS, DATA_HEADER_RFU_BITS,
    MAX_ADV_PAYLOAD,
};
use super::whitening::{whiten, Whitener};
use crate::channelizer::ChannelKind;
use crate::demod::{HardSymbolStream, SYMBOL_RATE_HZ};
use crate::error::{Error, Result};

pub const WINDOW_SYMBOLS: usize = 56;
pub const PREAMBLE_BITS: usize = 8;
pub const AA_BITS: usize = 32;
pub const HEADER_BITS: usize = 16;
pub const CRC_BITS: usize = 24;

/// On-air length in bits of a packet with `payload_len` payload bytes.
pub fn air_bits(payload_len: usize) -> usize {
    PREAMBLE_BITS + AA_BITS + HEADER_BITS + 8 * payload_len + CRC_BITS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    pub threshold: u32,
    pub window_symbols: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            threshold: 3,
            window_symbols: WINDOW_SYMBOLS,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold < 1 {
            return Err(Error::Config("metric threshold must be at least 1".into()));
        }
        if self.window_symbols != WINDOW_SYMBOLS {
            return Err(Error::Config(format!(
                "match window is fixed at {WINDOW_SYMBOLS} symbols"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlePacket {
    pub channel: u8,
    pub kind: ChannelKind,
    pub aa: AccessAddress,
    pub header: PacketHeader,
    pub payload: Vec<u8>,
    pub crc: u32,
    pub crc_ok: bool,
    pub metric: u32,
    pub snr_db: f64,
    /// Seconds from the first capture sample to the first preamble symbol.
    pub t_start_s: f64,
}

impl BlePacket {
    /// Header bytes followed by the payload.
    pub fn pdu_bytes(&self) -> Vec<u8> {
        [&self.header.to_bytes()[..], &self.payload].concat()
    }

    pub fn air_bits(&self) -> usize {
        air_bits(self.payload.len())
    }

    pub fn adv_pdu(&self) -> Option<Result<AdvPdu>> {
        match &self.header {
            PacketHeader::Advertising(h) => Some(parse_adv_pdu(h, &self.payload)),
            PacketHeader::Data(_) => None,
        }
    }

    /// Validity-rule offenses of the address; zero for the advertising one,
    /// which is a reference rather than a candidate there.
    pub fn aa_offenses(&self) -> u32 {
        match self.kind {
            ChannelKind::Advertising => 0,
            ChannelKind::Data => aa_offenses(self.aa),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Metric(u32),
    Truncated,
    BadLength(u8),
    UnknownAccessAddress(AccessAddress),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Metric(m) => write!(f, "matching metric {m} at or above threshold"),
            Rejection::Truncated => write!(f, "symbol stream ends inside the packet"),
            Rejection::BadLength(l) => write!(f, "header length {l} out of range"),
            Rejection::UnknownAccessAddress(aa) => write!(f, "no CRC init known for {aa}"),
        }
    }
}

fn kind_of(channel: u8) -> ChannelKind {
    if channel >= 37 {
        ChannelKind::Advertising
    } else {
        ChannelKind::Data
    }
}

fn rfu_count(header_bits: &[u8], kind: ChannelKind) -> u32 {
    let positions: &[usize] = match kind {
        ChannelKind::Advertising => &ADV_HEADER_RFU_BITS,
        ChannelKind::Data => &DATA_HEADER_RFU_BITS,
    };
    positions.iter().map(|&p| header_bits[p] as u32).sum()
}

/// Metric of a 56-symbol window: preamble Hamming distance, plus the access
/// address term, plus the number of set reserved header bits.
pub fn match_candidate(window: &[u8], kind: ChannelKind, channel: u8, cfg: &MatchConfig) -> Result<u32> {
    if window.len() != cfg.window_symbols {
        return Err(Error::Argument(format!(
            "match window has {} symbols, expected {}",
            window.len(),
            cfg.window_symbols
        )));
    }
    let aa_bits = &window[PREAMBLE_BITS..PREAMBLE_BITS + AA_BITS];
    let (expected_aa, aa_term) = match kind {
        ChannelKind::Advertising => {
            let adv = AccessAddress::ADVERTISING;
            (adv, hamming(aa_bits, &adv.bits()))
        }
        ChannelKind::Data => {
            let seen = AccessAddress(bits_to_u32(aa_bits));
            (seen, aa_offenses(seen))
        }
    };
    let preamble = hamming(&window[..PREAMBLE_BITS], &expected_aa.preamble());
    let header = whiten(&window[PREAMBLE_BITS + AA_BITS..], channel)?;
    Ok(preamble + aa_term + rfu_count(&header, kind))
}

/// Packet decoder for one scanned channel. Data-channel packets are only
/// admitted for access addresses whose CRC init is known.
#[derive(Debug, Clone, Default)]
pub struct Decoder {
    pub cfg: MatchConfig,
    connections: BTreeMap<AccessAddress, u32>,
}

impl Decoder {
    pub fn new(cfg: MatchConfig) -> Self {
        Decoder {
            cfg,
            connections: BTreeMap::new(),
        }
    }

    pub fn add_connection(&mut self, aa: AccessAddress, crc_init: u32) {
        self.connections.insert(aa, crc_init & 0xFF_FFFF);
    }

    pub fn connections(&self) -> &BTreeMap<AccessAddress, u32> {
        &self.connections
    }

    pub fn crc_init(&self, aa: AccessAddress, kind: ChannelKind) -> Option<u32> {
        match kind {
            ChannelKind::Advertising => Some(ADVERTISING_CRC_INIT),
            ChannelKind::Data => self.connections.get(&aa).copied(),
        }
    }

    /// Metric of the window starting at `position` in `bits`, or `None` if
    /// fewer than 56 symbols remain.
    pub fn metric_at(&self, bits: &[u8], position: usize, channel: u8) -> Option<u32> {
        let window = bits.get(position..position + self.cfg.window_symbols)?;
        match_candidate(window, kind_of(channel), channel, &self.cfg).ok()
    }

    /// Decodes the packet whose preamble starts at `position`. `timing` gives
    /// the capture time of each symbol.
    pub fn decode(
        &self,
        bits: &[u8],
        timing: &[f64],
        position: usize,
        channel: u8,
    ) -> std::result::Result<BlePacket, Rejection> {
        let kind = kind_of(channel);
        let metric = self
            .metric_at(bits, position, channel)
            .ok_or(Rejection::Truncated)?;
        if metric >= self.cfg.threshold {
            return Err(Rejection::Metric(metric));
        }
        let aa_at = position + PREAMBLE_BITS;
        let aa = match kind {
            ChannelKind::Advertising => AccessAddress::ADVERTISING,
            ChannelKind::Data => AccessAddress(bits_to_u32(&bits[aa_at..aa_at + AA_BITS])),
        };
        let crc_init = self
            .crc_init(aa, kind)
            .ok_or(Rejection::UnknownAccessAddress(aa))?;

        let body_at = aa_at + AA_BITS;
        let mut white = Whitener::new(channel).map_err(|_| Rejection::Truncated)?;
        let mut dewhiten = |range: &[u8]| -> Vec<u8> {
            let clear: Vec<u8> = range.iter().map(|b| b ^ white.next().unwrap()).collect();
            bits_to_bytes(&clear)
        };
        let head_bytes = dewhiten(&bits[body_at..body_at + HEADER_BITS]);
        let head = [head_bytes[0], head_bytes[1]];
        let header = match kind {
            ChannelKind::Advertising => PacketHeader::Advertising(AdvHeader::from_bytes(head)),
            ChannelKind::Data => PacketHeader::Data(u16::from_le_bytes(head)),
        };
        let len = header.length();
        if kind == ChannelKind::Advertising && len as usize > MAX_ADV_PAYLOAD {
            return Err(Rejection::BadLength(len));
        }
        let rest_at = body_at + HEADER_BITS;
        let rest_end = rest_at + 8 * len as usize + CRC_BITS;
        let rest = bits.get(rest_at..rest_end).ok_or(Rejection::Truncated)?;
        let rest = dewhiten(rest);
        let (payload, crc_bytes) = rest.split_at(len as usize);
        let crc = crc_from_bytes(crc_bytes);
        let pdu = [&head[..], payload].concat();
        let crc_ok = crc24(&pdu, crc_init) == crc;

        Ok(BlePacket {
            channel,
            kind,
            aa,
            header,
            payload: payload.to_vec(),
            crc,
            crc_ok,
            metric,
            snr_db: f64::NAN,
            // Symbol timing marks symbol centers; report the leading edge.
            t_start_s: timing
                .get(position)
                .map_or(f64::NAN, |t| t - 0.5 / SYMBOL_RATE_HZ),
        })
    }
}

/// Decodes the packet at `position` of a hard symbol stream using only the
/// advertising CRC init; data-channel packets are rejected as unknown.
pub fn decode_packet(
    symbols: &HardSymbolStream,
    position: usize,
    channel: u8,
    cfg: &MatchConfig,
) -> std::result::Result<BlePacket, Rejection> {
    Decoder::new(*cfg).decode(&symbols.bits, &symbols.timing, position, channel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ble::pdu::{AdvPdu, BdAddr, PduType};
    use crate::ble::ADVERTISING_CRC_INIT;
    use crate::channelizer::ChannelStream;
    use crate::demod::{demodulate, MmConfig};
    use crate::synth::{assemble_adv, assemble_packet, gfsk_modulate, GfskConfig};
    use num_complex::Complex32;

    fn golden_pdu() -> AdvPdu {
        AdvPdu::AdvNonconnInd {
            adv_a: "41:e0:30:2e:66:69".parse().unwrap(),
            adv_data: hex::decode("0303aafe0e16aafe10bb0074616a64696e690a").unwrap(),
        }
    }

    fn stream(bits: Vec<u8>) -> HardSymbolStream {
        let timing = (0..bits.len()).map(|i| (i as f64 + 0.5) * 1e-6).collect();
        HardSymbolStream {
            rate_hz: 1e6,
            soft: bits.iter().map(|b| *b as f32 - 0.5).collect(),
            bits,
            timing,
        }
    }

    fn padded(bits: &[u8], lead: usize) -> Vec<u8> {
        let mut out: Vec<u8> = (0..lead).map(|i| ((i * 5 + 3) % 7 % 2) as u8).collect();
        out.extend_from_slice(bits);
        out.extend((0..40).map(|i| (i % 3 == 0) as u8));
        out
    }

    #[test]
    fn golden_bit_loopback() {
        let bits = assemble_adv(&golden_pdu(), true, false, 37).unwrap();
        assert_eq!(bits.len(), 280);
        let s = stream(padded(&bits, 17));
        let pkt = decode_packet(&s, 17, 37, &MatchConfig::default()).unwrap();
        assert_eq!(pkt.metric, 0);
        assert!(pkt.crc_ok);
        assert!((pkt.t_start_s - 17e-6).abs() < 1e-12);
        match pkt.header {
            PacketHeader::Advertising(h) => {
                assert_eq!(h.pdu_type, PduType::AdvNonconnInd);
                assert!(h.tx_add && !h.rx_add);
                assert_eq!(h.length, 25);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(pkt.adv_pdu().unwrap().unwrap(), golden_pdu());
    }

    #[test]
    fn metric_counts_preamble_flips() {
        let bits = assemble_adv(&golden_pdu(), true, false, 37).unwrap();
        let cfg = MatchConfig::default();
        let mut w = bits[..56].to_vec();
        assert_eq!(
            match_candidate(&w, ChannelKind::Advertising, 37, &cfg).unwrap(),
            0
        );
        w[3] ^= 1;
        assert_eq!(
            match_candidate(&w, ChannelKind::Advertising, 37, &cfg).unwrap(),
            1
        );
        w[20] ^= 1;
        assert_eq!(
            match_candidate(&w, ChannelKind::Advertising, 37, &cfg).unwrap(),
            2
        );
        assert!(match_candidate(&w[..55], ChannelKind::Advertising, 37, &cfg).is_err());
    }

    #[test]
    fn header_rfu_bits_count() {
        let bits = assemble_adv(&golden_pdu(), true, false, 37).unwrap();
        let cfg = MatchConfig::default();
        for (pos, expect) in [(40 + 4, 1), (40 + 5, 1), (40 + 14, 1), (40 + 15, 1), (40 + 6, 0)] {
            let mut w = bits[..56].to_vec();
            w[pos] ^= 1;
            assert_eq!(
                match_candidate(&w, ChannelKind::Advertising, 37, &cfg).unwrap(),
                expect,
                "bit {pos}"
            );
        }
    }

    #[test]
    fn preamble_error_boundary() {
        let bits = assemble_adv(&golden_pdu(), true, false, 37).unwrap();
        let cfg = MatchConfig::default();
        for a in 0..8 {
            for b in a + 1..8 {
                let mut x = bits.clone();
                x[a] ^= 1;
                x[b] ^= 1;
                let pkt = decode_packet(&stream(padded(&x, 0)), 0, 37, &cfg).unwrap();
                assert!(pkt.crc_ok);
                assert_eq!(pkt.metric, 2);
                for c in b + 1..8 {
                    let mut y = x.clone();
                    y[c] ^= 1;
                    let r = decode_packet(&stream(padded(&y, 0)), 0, 37, &cfg);
                    assert_eq!(r.unwrap_err(), Rejection::Metric(3));
                }
            }
        }
    }

    #[test]
    fn all_zero_stream_rejected() {
        let s = stream(vec![0; 400]);
        for pos in [0, 100, 300] {
            assert!(matches!(
                decode_packet(&s, pos, 37, &MatchConfig::default()),
                Err(Rejection::Metric(_))
            ));
        }
    }

    #[test]
    fn payload_errors_fail_crc() {
        let bits = assemble_adv(&golden_pdu(), true, false, 37).unwrap();
        let mut x = bits.clone();
        x[56 + 30] ^= 1;
        x[56 + 101] ^= 1;
        let pkt = decode_packet(&stream(padded(&x, 5)), 5, 37, &MatchConfig::default()).unwrap();
        assert!(!pkt.crc_ok);
        assert_eq!(pkt.metric, 0);
        assert_eq!(pkt.payload.len(), 25);
    }

    #[test]
    fn truncated_stream() {
        let bits = assemble_adv(&golden_pdu(), true, false, 37).unwrap();
        let s = stream(bits[..200].to_vec());
        assert_eq!(
            decode_packet(&s, 0, 37, &MatchConfig::default()).unwrap_err(),
            Rejection::Truncated
        );
    }

    #[test]
    fn data_channel_needs_known_address() {
        let aa = AccessAddress(0x50654A13);
        assert_eq!(aa_offenses(aa), 0);
        let pdu = [0x0E, 4, 0xDE, 0xAD, 0xBE, 0xEF];
        let bits = assemble_packet(&pdu, 9, aa, 0x123456).unwrap();
        let s = stream(padded(&bits, 8));
        let mut dec = Decoder::new(MatchConfig::default());
        assert_eq!(
            dec.decode(&s.bits, &s.timing, 8, 9).unwrap_err(),
            Rejection::UnknownAccessAddress(aa)
        );
        dec.add_connection(aa, 0x123456);
        let pkt = dec.decode(&s.bits, &s.timing, 8, 9).unwrap();
        assert!(pkt.crc_ok);
        assert_eq!(pkt.header, PacketHeader::Data(0x040E));
        assert_eq!(pkt.payload, &pdu[2..]);
        assert_eq!(pkt.pdu_bytes(), pdu);
    }

    #[test]
    fn advertising_crc_init_is_fixed() {
        let dec = Decoder::default();
        assert_eq!(
            dec.crc_init(AccessAddress::ADVERTISING, ChannelKind::Advertising),
            Some(ADVERTISING_CRC_INIT)
        );
    }

    #[test]
    fn modulated_loopback_at_channel_rate() {
        let pdu = AdvPdu::AdvInd {
            adv_a: BdAddr([0x11, 0x22, 0x33, 0x44, 0x55, 0x66]),
            adv_data: (0..20).collect(),
        };
        let bits = assemble_adv(&pdu, false, false, 38).unwrap();
        let lead = padded(&[], 30)[..30].to_vec();
        let all = [&lead[..], &bits[..], &lead[..]].concat();
        let samples: Vec<Complex32> = gfsk_modulate(&all, &GfskConfig::default(), 2e6).unwrap();
        let ch = ChannelStream {
            channel: Some(38),
            rate_hz: 2e6,
            samples,
            first: 0,
            ratio: (1, 1),
        };
        let hard = demodulate(&ch, &MmConfig::default()).unwrap();
        let dec = Decoder::default();
        let found: Vec<BlePacket> = (0..hard.len())
            .filter_map(|p| dec.decode(&hard.bits, &hard.timing, p, 38).ok())
            .collect();
        assert_eq!(found.len(), 1);
        assert!(found[0].crc_ok);
        assert_eq!(found[0].metric, 0);
        assert!(
            (found[0].t_start_s - 30e-6).abs() < 0.5e-6,
            "{}",
            found[0].t_start_s
        );
    }
}
