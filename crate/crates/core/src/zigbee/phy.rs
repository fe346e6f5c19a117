//! 2.4 GHz O-QPSK PHY: half-sine pulse shaping and a non-coherent
//! MSK-style receiver.
//!
//! Half-sine O-QPSK is MSK: the phase moves +-pi/2 per chip. Writing
//! `a_n = +-1` for chip `n`, the signal at the chip center `(n + 1) Tc` is
//! `a_n` for even `n` (I only) and `j a_n` for odd `n` (Q only), so the
//! phase step across one chip is `+-pi/2` with sign `a_n a_(n-1) (-1)^(n+1)`. The receiver slices that sign and undoes the
//! product chip by chip, restarting each symbol from the last chip of the
//! previously decided table row.

use num_complex::Complex32;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

use super::frame::{parse_ppdu, ZigbeeFrame, MAX_PSDU, PREAMBLE_BYTES, SFD};
use super::pn::{pn_table, spread, CHIPS_PER_SYMBOL};

pub const CHIP_RATE_HZ: f64 = 2e6;
pub const SYMBOL_RATE_HZ: f64 = 62.5e3;

/// Chips in the synchronization header: preamble and SFD.
pub const SHR_CHIPS: usize = (PREAMBLE_BYTES + 1) * 2 * CHIPS_PER_SYMBOL;
/// The sync search matches the last preamble symbol and the SFD.
const SYNC_FIRST_CHIP: usize = SHR_CHIPS - 3 * CHIPS_PER_SYMBOL;

#[inline]
fn bipolar(chip: u8) -> f64 {
    if chip & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Baseband waveform of `chips` sampled at `rate_hz`. Sample `i` is taken
/// `t0_chips + i * CHIP_RATE_HZ / rate_hz` chip periods after the first chip
/// starts; samples outside `[0, chips.len()]` are zero. A virtual chip ahead
/// of the first Q pulse keeps the envelope constant from the first sample.
pub fn oqpsk_waveform(chips: &[u8], rate_hz: f64, t0_chips: f64, count: usize) -> Vec<Complex32> {
    let n = chips.len() as f64;
    let step = CHIP_RATE_HZ / rate_hz;
    (0..count)
        .map(|i| {
            let tau = t0_chips + i as f64 * step;
            if !(0.0..=n).contains(&tau) || chips.is_empty() {
                return Complex32::new(0.0, 0.0);
            }
            // I pulse k carries chip 2k over [2k, 2k + 2).
            let k = (tau / 2.0).floor();
            let ci = 2 * k as usize;
            let i_val = chips
                .get(ci)
                .map_or(0.0, |c| bipolar(*c) * (FRAC_PI_2 * (tau - 2.0 * k)).sin());
            // Q pulse k carries chip 2k + 1 over [2k + 1, 2k + 3).
            let kq = ((tau - 1.0) / 2.0).floor();
            let q_val = if kq < 0.0 {
                (FRAC_PI_2 * (tau + 1.0)).sin()
            } else {
                let cq = 2 * kq as usize + 1;
                chips
                    .get(cq)
                    .map_or(0.0, |c| bipolar(*c) * (FRAC_PI_2 * (tau - 2.0 * kq - 1.0)).sin())
            };
            Complex32::new(i_val as f32, q_val as f32)
        })
        .collect()
}

/// Modulates a serialized PPDU at `samples_per_chip` samples per chip. The
/// output spans `[0, N Tc]` for N chips: `N * samples_per_chip + 1` samples,
/// the last one at the final chip's center.
pub fn oqpsk_modulate(ppdu: &[u8], samples_per_chip: usize) -> Result<Vec<Complex32>> {
    if samples_per_chip < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 samples per chip, got {samples_per_chip}"
        )));
    }
    if ppdu.len() > PREAMBLE_BYTES + 2 + MAX_PSDU {
        return Err(Error::Argument(format!(
            "PPDU of {} bytes is oversize",
            ppdu.len()
        )));
    }
    if let Some(&phr) = ppdu.get(PREAMBLE_BYTES + 1) {
        if usize::from(phr) > MAX_PSDU {
            return Err(Error::Argument(format!("length field {phr} exceeds {MAX_PSDU}")));
        }
    }
    let chips = spread(ppdu);
    let rate = CHIP_RATE_HZ * samples_per_chip as f64;
    Ok(oqpsk_waveform(
        &chips,
        rate,
        0.0,
        chips.len() * samples_per_chip + 1,
    ))
}

/// Phase-step sign across one chip period for chip `n`, as the receiver
/// slices it, given the chips on air (0/1). Chip -1 is the virtual chip.
fn transition_signs(chips: &[u8]) -> Vec<bool> {
    let mut prev = 1.0;
    chips
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let a = bipolar(*c);
            let parity = if n % 2 == 1 { 1.0 } else { -1.0 };
            let s = a * prev * parity > 0.0;
            prev = a;
            s
        })
        .collect()
}

/// Imaginary part of `s[m] * conj(s[m - spc])` for every `m`; zero for the
/// first `spc` entries.
pub fn chip_phase_steps(samples: &[Complex32], samples_per_chip: usize) -> Vec<f32> {
    let spc = samples_per_chip;
    (0..samples.len())
        .map(|m| {
            if m < spc {
                0.0
            } else {
                (samples[m] * samples[m - spc].conj()).im
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZigbeeRxConfig {
    /// Largest mismatch over the 96 sync chips (last preamble symbol and
    /// SFD) that still counts as a frame start.
    pub sync_max_errors: u32,
}

impl Default for ZigbeeRxConfig {
    fn default() -> Self {
        ZigbeeRxConfig { sync_max_errors: 12 }
    }
}

/// A frame found in a sample stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    /// Sample index where the first preamble chip starts (may be negative
    /// when the preamble began before the stream).
    pub start_sample: i64,
    pub frame: ZigbeeFrame,
    /// Chip distance of the sync match.
    pub sync_errors: u32,
}

/// Chip-level receiver over one stream at an integer number of samples per
/// chip.
#[derive(Debug, Clone)]
pub struct ChipReceiver {
    spc: usize,
    cfg: ZigbeeRxConfig,
    sync: Vec<bool>,
}

impl ChipReceiver {
    pub fn new(samples_per_chip: usize, cfg: ZigbeeRxConfig) -> Result<Self> {
        if samples_per_chip < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 samples per chip, got {samples_per_chip}"
            )));
        }
        let mut shr = vec![0u8; PREAMBLE_BYTES];
        shr.push(SFD);
        let signs = transition_signs(&spread(&shr));
        Ok(ChipReceiver {
            spc: samples_per_chip,
            cfg,
            sync: signs[SYNC_FIRST_CHIP..].to_vec(),
        })
    }

    fn step_index(&self, m0: i64, chip: usize) -> i64 {
        m0 + ((chip + 1) * self.spc) as i64
    }

    fn sync_distance(&self, steps: &[f32], m0: i64, limit: u32) -> Option<u32> {
        let mut d = 0;
        for (k, want) in self.sync.iter().enumerate() {
            let idx = self.step_index(m0, SYNC_FIRST_CHIP + k);
            let got = steps[idx as usize] > 0.0;
            if got != *want {
                d += 1;
                if d > limit {
                    return None;
                }
            }
        }
        Some(d)
    }

    fn sync_score(&self, steps: &[f32], m0: i64) -> f32 {
        self.sync
            .iter()
            .enumerate()
            .map(|(k, want)| {
                let v = steps[self.step_index(m0, SYNC_FIRST_CHIP + k) as usize];
                if *want {
                    v
                } else {
                    -v
                }
            })
            .sum()
    }

    /// Decides `count` symbols starting at symbol `first_symbol`. `prev` is
    /// the chip before the first one (+-1).
    fn symbols(
        &self,
        steps: &[f32],
        m0: i64,
        first_symbol: usize,
        count: usize,
        mut prev: f64,
    ) -> Option<(Vec<u8>, u32)> {
        let table = pn_table();
        let mut out = Vec::with_capacity(count);
        let mut errors = 0;
        for s in first_symbol..first_symbol + count {
            let mut block = 0u32;
            for i in 0..CHIPS_PER_SYMBOL {
                let n = s * CHIPS_PER_SYMBOL + i;
                let idx = self.step_index(m0, n);
                let step = *steps.get(usize::try_from(idx).ok()?)?;
                let raw = if step > 0.0 { 1.0 } else { -1.0 };
                let parity = if n % 2 == 1 { 1.0 } else { -1.0 };
                let a = prev * raw * parity;
                if a > 0.0 {
                    block |= 1 << i;
                }
                prev = a;
            }
            let (sym, d) = table.nearest(block);
            out.push(sym);
            errors += d;
            prev = bipolar((table.row(sym) >> (CHIPS_PER_SYMBOL - 1)) as u8);
        }
        Some((out, errors))
    }

    fn try_frame(&self, steps: &[f32], m0: i64) -> Option<(ZigbeeFrame, usize)> {
        let table = pn_table();
        let after_sfd = bipolar((table.row(SFD >> 4) >> (CHIPS_PER_SYMBOL - 1)) as u8);
        let first = SHR_CHIPS / CHIPS_PER_SYMBOL;
        let (phr, e0) = self.symbols(steps, m0, first, 2, after_sfd)?;
        let len = phr[0] | (phr[1] << 4);
        if usize::from(len) > MAX_PSDU {
            return None;
        }
        let prev = bipolar((table.row(phr[1]) >> (CHIPS_PER_SYMBOL - 1)) as u8);
        let (body, e1) = self.symbols(steps, m0, first + 2, 2 * usize::from(len), prev)?;
        let mut bytes = vec![len];
        bytes.extend(body.chunks_exact(2).map(|p| p[0] | (p[1] << 4)));
        let mut frame = parse_ppdu(&bytes).ok()?;
        frame.chip_errors = e0 + e1;
        let chips = SHR_CHIPS + (1 + usize::from(len)) * 2 * CHIPS_PER_SYMBOL;
        Some((frame, chips))
    }

    /// Finds and decodes every frame in `samples`.
    pub fn receive(&self, samples: &[Complex32]) -> Vec<ReceivedFrame> {
        let steps = chip_phase_steps(samples, self.spc);
        let len = steps.len() as i64;
        let mut out = Vec::new();
        // Earliest start whose sync chips are all inside the stream.
        let mut m0 = -((SYNC_FIRST_CHIP * self.spc) as i64) + self.spc as i64;
        let last_sync = self.step_index(0, SHR_CHIPS - 1);
        while m0 + last_sync < len {
            let Some(d) = self.sync_distance(&steps, m0, self.cfg.sync_max_errors) else {
                m0 += 1;
                continue;
            };
            // Settle on the alignment with the strongest soft correlation
            // within the next two chips.
            let (mut best, mut best_d, mut best_score) = (m0, d, self.sync_score(&steps, m0));
            for cand in m0 + 1..=m0 + 2 * self.spc as i64 {
                if cand + last_sync >= len {
                    break;
                }
                let Some(dc) = self.sync_distance(&steps, cand, self.cfg.sync_max_errors) else {
                    continue;
                };
                let score = self.sync_score(&steps, cand);
                if score > best_score {
                    (best, best_d, best_score) = (cand, dc, score);
                }
            }
            match self.try_frame(&steps, best) {
                Some((frame, chips)) => {
                    out.push(ReceivedFrame {
                        start_sample: best,
                        frame,
                        sync_errors: best_d,
                    });
                    m0 = best + (chips * self.spc) as i64;
                }
                None => m0 = best + 1,
            }
        }
        out
    }
}
