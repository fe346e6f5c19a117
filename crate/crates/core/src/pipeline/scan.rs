//! Per-channel candidate scanner: squelch gate, matching metric, decode.

use num_complex::Complex32;

use crate::ble::{BlePacket, Decoder, Rejection};
use crate::demod::{HardSymbolStream, SYMBOL_RATE_HZ};
use crate::squelch::{squelch_decide, SquelchConfig};

/// Counters from scanning one or more channels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub windows: u64,
    pub squelch_open: u64,
    pub admitted: u64,
    pub crc_ok: u64,
    pub crc_failed: u64,
    /// Admitted on a data channel with an access address of unknown CRC init.
    pub unverified: u64,
    pub truncated: u64,
    pub bad_length: u64,
}

impl ScanStats {
    pub fn merge(&mut self, o: &ScanStats) {
        self.windows += o.windows;
        self.squelch_open += o.squelch_open;
        self.admitted += o.admitted;
        self.crc_ok += o.crc_ok;
        self.crc_failed += o.crc_failed;
        self.unverified += o.unverified;
        self.truncated += o.truncated;
        self.bad_length += o.bad_length;
    }
}

/// Running sums of |s|^2 so any window's energy is one subtraction.
pub(crate) struct EnergyIndex {
    prefix: Vec<f64>,
}

impl EnergyIndex {
    pub(crate) fn new(samples: &[Complex32]) -> Self {
        let mut prefix = Vec::with_capacity(samples.len() + 1);
        let mut acc = 0.0f64;
        prefix.push(acc);
        for s in samples {
            acc += s.norm_sqr() as f64;
            prefix.push(acc);
        }
        EnergyIndex { prefix }
    }

    pub(crate) fn len(&self) -> usize {
        self.prefix.len() - 1
    }

    pub(crate) fn energy(&self, start: usize, len: usize) -> Option<f64> {
        let end = start.checked_add(len)?;
        if end > self.len() {
            return None;
        }
        Some((self.prefix[end] - self.prefix[start]).max(0.0))
    }
}

pub(crate) struct ChannelScan<'a> {
    pub channel: u8,
    pub symbols: &'a HardSymbolStream,
    pub on: &'a EnergyIndex,
    pub off: &'a EnergyIndex,
    /// Channel stream rate and the absolute index of its first sample.
    pub rate_hz: f64,
    pub first: u64,
}

impl ChannelScan<'_> {
    fn window_start(&self, pos: usize) -> Option<usize> {
        let t = self.symbols.timing[pos] - 0.5 / SYMBOL_RATE_HZ;
        let idx = (t * self.rate_hz).round() - self.first as f64;
        (idx >= 0.0).then_some(idx as usize)
    }

    pub fn run(&self, decoder: &Decoder, squelch: &SquelchConfig) -> (Vec<BlePacket>, ScanStats) {
        let mut stats = ScanStats::default();
        let mut packets = Vec::new();
        let bits = &self.symbols.bits;
        let window = decoder.cfg.window_symbols;
        let mut pos = 0;
        while pos + window <= bits.len() {
            stats.windows += 1;
            let Some(start) = self.window_start(pos) else {
                pos += 1;
                continue;
            };
            let energies = self
                .on
                .energy(start, squelch.window_samples)
                .zip(self.off.energy(start, squelch.window_samples));
            let Some((on, off)) = energies else {
                break;
            };
            let gate = squelch_decide(on, off, squelch);
            if !gate.asserted {
                pos += 1;
                continue;
            }
            stats.squelch_open += 1;
            match decoder.metric_at(bits, pos, self.channel) {
                Some(m) if m < decoder.cfg.threshold => {}
                _ => {
                    pos += 1;
                    continue;
                }
            }
            stats.admitted += 1;
            match decoder.decode(bits, &self.symbols.timing, pos, self.channel) {
                Ok(mut pkt) => {
                    pkt.snr_db = gate.snr_db;
                    if pkt.crc_ok {
                        stats.crc_ok += 1;
                        pos += pkt.air_bits();
                    } else {
                        stats.crc_failed += 1;
                        pos += 1;
                    }
                    packets.push(pkt);
                }
                Err(r) => {
                    match r {
                        Rejection::UnknownAccessAddress(_) => stats.unverified += 1,
                        Rejection::Truncated => stats.truncated += 1,
                        Rejection::BadLength(_) => stats.bad_length += 1,
                        Rejection::Metric(_) => {}
                    }
                    pos += 1;
                }
            }
        }
        (packets, stats)
    }
}
