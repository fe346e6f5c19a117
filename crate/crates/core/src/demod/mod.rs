//! GFSK demodulation: differential phase detector, Mueller & Muller symbol
//! timing recovery and the hard-decision slicer.

mod clock;

pub use clock::{ClockRecovery, Interpolator, MmConfig, INTERP_PHASES, INTERP_TAPS};

use num_complex::Complex32;
use std::f32::consts::PI;

use crate::channelizer::{ChannelStream, CHANNEL_RATE_HZ};
use crate::error::{Error, Result};

pub const SYMBOL_RATE_HZ: f64 = 1e6;

/// Soft values with the capture time (seconds) each one represents.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSymbolStream {
    pub rate_hz: f64,
    pub values: Vec<f32>,
    pub timing: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardSymbolStream {
    pub rate_hz: f64,
    pub bits: Vec<u8>,
    pub soft: Vec<f32>,
    pub timing: Vec<f64>,
}

impl HardSymbolStream {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Phase step between two samples, in `(-pi, pi]`; zero when either is zero.
#[inline]
pub fn phase_step(prev: Complex32, cur: Complex32) -> f32 {
    let p = cur * prev.conj();
    if p.re == 0.0 && p.im == 0.0 {
        return 0.0;
    }
    let v = p.im.atan2(p.re);
    if v <= -PI {
        PI
    } else {
        v
    }
}

/// Streaming differential detector. Output `n` sits halfway between input
/// samples `n - 1` and `n`.
#[derive(Debug, Clone, Default)]
pub struct DifferentialDemod {
    last: Option<Complex32>,
}

impl DifferentialDemod {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, input: &[Complex32], out: &mut Vec<f32>) {
        for &s in input {
            if let Some(prev) = self.last {
                out.push(phase_step(prev, s));
            }
            self.last = Some(s);
        }
    }
}

pub fn differential_demod(stream: &ChannelStream) -> Result<SoftSymbolStream> {
    if stream.rate_hz != CHANNEL_RATE_HZ {
        return Err(Error::Argument(format!(
            "differential detector expects a {} Hz stream, got {}",
            CHANNEL_RATE_HZ, stream.rate_hz
        )));
    }
    let mut values = Vec::with_capacity(stream.samples.len().saturating_sub(1));
    DifferentialDemod::new().push(&stream.samples, &mut values);
    let timing = (1..=values.len())
        .map(|n| (stream.first as f64 + n as f64 - 0.5) / stream.rate_hz)
        .collect();
    Ok(SoftSymbolStream {
        rate_hz: stream.rate_hz,
        values,
        timing,
    })
}

pub fn mm_clock_recover(soft: &SoftSymbolStream, cfg: &MmConfig) -> Result<SoftSymbolStream> {
    cfg.validate()?;
    let (t0, dt) = match soft.timing.as_slice() {
        [] => (0.0, 1.0 / soft.rate_hz),
        [t] => (*t, 1.0 / soft.rate_hz),
        [a, b, ..] => (*a, b - a),
    };
    let mut cr = ClockRecovery::new(*cfg, t0, dt);
    let mut values = Vec::with_capacity(soft.values.len() / 2 + 1);
    let mut timing = Vec::with_capacity(soft.values.len() / 2 + 1);
    cr.push(&soft.values, &mut values, &mut timing);
    Ok(SoftSymbolStream {
        rate_hz: soft.rate_hz / cfg.omega,
        values,
        timing,
    })
}

#[inline]
pub fn decide(soft: f32) -> u8 {
    u8::from(soft > 0.0)
}

pub fn hard_decide(soft: &SoftSymbolStream) -> HardSymbolStream {
    HardSymbolStream {
        rate_hz: soft.rate_hz,
        bits: soft.values.iter().map(|v| decide(*v)).collect(),
        soft: soft.values.clone(),
        timing: soft.timing.clone(),
    }
}

/// Clock recovery run backwards in time over the whole stream; output is in
/// ascending time order.
pub fn mm_clock_recover_reverse(soft: &SoftSymbolStream, cfg: &MmConfig) -> Result<SoftSymbolStream> {
    let mut rev = SoftSymbolStream {
        rate_hz: soft.rate_hz,
        values: soft.values.iter().rev().copied().collect(),
        timing: soft.timing.iter().rev().copied().collect(),
    };
    if rev.timing.len() == 1 {
        rev.timing.push(rev.timing[0] - 1.0 / soft.rate_hz);
    }
    let mut out = mm_clock_recover(&rev, cfg)?;
    out.values.reverse();
    out.timing.reverse();
    Ok(out)
}

/// Mean power of `samples` (sample `i` at `(first + i) / rate_hz`) over
/// `[t0, t1)`, zero outside the stream.
struct PowerIndex {
    prefix: Vec<f64>,
    rate_hz: f64,
    first: f64,
}

impl PowerIndex {
    fn new(stream: &ChannelStream) -> Self {
        let mut prefix = Vec::with_capacity(stream.samples.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for s in &stream.samples {
            acc += s.norm_sqr() as f64;
            prefix.push(acc);
        }
        PowerIndex {
            prefix,
            rate_hz: stream.rate_hz,
            first: stream.first as f64,
        }
    }

    fn mean(&self, t0: f64, t1: f64) -> f64 {
        let n = self.prefix.len() - 1;
        let idx = |t: f64| ((t * self.rate_hz - self.first).ceil().max(0.0) as usize).min(n);
        let (a, b) = (idx(t0), idx(t1));
        if b <= a {
            return 0.0;
        }
        (self.prefix[b] - self.prefix[a]) / (b - a) as f64
    }
}

/// Window either side of a disagreement used to locate the burst.
const SPLICE_WINDOW_SYMBOLS: f64 = 8.0;

/// Merges forward and reverse clock recovery. The timing error detector is
/// blind on an alternating preamble, so a loop entering a burst from noise
/// may sample the preamble at its transitions until the access address pulls
/// it in. The reverse loop enters from the other side. Where the two loops
/// disagree by more than a quarter symbol, the one that has already seen the
/// burst wins: reverse when the signal lies after the stretch, forward when
/// it lies before.
fn splice_passes(fwd: SoftSymbolStream, bwd: SoftSymbolStream, power: &PowerIndex) -> SoftSymbolStream {
    let period = 1.0 / fwd.rate_hz;
    let tol = 0.25 * period;
    let window = SPLICE_WINDOW_SYMBOLS * period;
    let (tf, tb) = (&fwd.timing, &bwd.timing);
    // Nearest reverse symbol for each forward symbol, or None on disagreement.
    let mut pair = Vec::with_capacity(tf.len());
    let mut j = 0;
    for &t in tf {
        while j + 1 < tb.len() && (tb[j + 1] - t).abs() <= (tb[j] - t).abs() {
            j += 1;
        }
        pair.push((!tb.is_empty() && (tb[j] - t).abs() < tol).then_some(j));
    }

    let mut out = SoftSymbolStream {
        rate_hz: fwd.rate_hz,
        values: Vec::with_capacity(tf.len()),
        timing: Vec::with_capacity(tf.len()),
    };
    let mut i = 0;
    let mut last_pair: Option<usize> = None;
    while i < tf.len() {
        if let Some(jj) = pair[i] {
            out.values.push(fwd.values[i]);
            out.timing.push(tf[i]);
            last_pair = Some(jj);
            i += 1;
            continue;
        }
        let start = i;
        while i < tf.len() && pair[i].is_none() {
            i += 1;
        }
        let (seg_t0, seg_t1) = (tf[start], tf[i - 1]);
        let before = power.mean(seg_t0 - window, seg_t0);
        let after = power.mean(seg_t1, seg_t1 + window);
        if after > before {
            let lo = last_pair.map_or(0, |p| p + 1);
            let hi = pair.get(i).copied().flatten().unwrap_or(tb.len());
            for (&t, &v) in tb[lo..hi.max(lo)].iter().zip(&bwd.values[lo..hi.max(lo)]) {
                if t > out.timing.last().copied().unwrap_or(f64::NEG_INFINITY) {
                    out.values.push(v);
                    out.timing.push(t);
                }
            }
        } else {
            out.values.extend_from_slice(&fwd.values[start..i]);
            out.timing.extend_from_slice(&tf[start..i]);
        }
    }
    out
}

/// Differential detection, clock recovery and slicing of one channel stream.
/// Clock recovery runs in both directions and the passes are merged so that
/// a burst's preamble is sampled at symbol centers.
pub fn demodulate(stream: &ChannelStream, cfg: &MmConfig) -> Result<HardSymbolStream> {
    let soft = differential_demod(stream)?;
    let fwd = mm_clock_recover(&soft, cfg)?;
    let bwd = mm_clock_recover_reverse(&soft, cfg)?;
    Ok(hard_decide(&splice_passes(fwd, bwd, &PowerIndex::new(stream))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI as PI64;

    fn stream(samples: Vec<Complex32>) -> ChannelStream {
        ChannelStream {
            channel: None,
            rate_hz: 2e6,
            samples,
            first: 0,
            ratio: (1, 1),
        }
    }

    fn exp_tone(freq: f64, n: usize, phase: f64) -> Vec<Complex32> {
        (0..n)
            .map(|i| {
                let a = 2.0 * PI64 * freq * i as f64 / 2e6 + phase;
                Complex32::new(a.cos() as f32, a.sin() as f32)
            })
            .collect()
    }

    #[test]
    fn constant_phase_gives_zero() {
        let s = differential_demod(&stream(vec![Complex32::new(0.3, -0.4); 50])).unwrap();
        assert_eq!(s.values.len(), 49);
        assert!(s.values.iter().all(|v| *v == 0.0));
        assert!((s.timing[0] - 0.5 / 2e6).abs() < 1e-15);
    }

    #[test]
    fn quarter_pi_per_sample_at_250khz() {
        let s = differential_demod(&stream(exp_tone(250e3, 100, 0.0))).unwrap();
        for v in s.values {
            assert!((v - std::f32::consts::FRAC_PI_4).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_samples_give_zero() {
        let s = differential_demod(&stream(vec![
            Complex32::new(0.0, 0.0),
            Complex32::new(0.0, 0.0),
            Complex32::new(1.0, 0.0),
        ]))
        .unwrap();
        assert_eq!(s.values, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_wrong_rate() {
        let mut st = stream(vec![]);
        st.rate_hz = 4e6;
        assert!(differential_demod(&st).is_err());
    }

    #[test]
    fn phase_offset_invariant_and_cfo_shift() {
        let base = exp_tone(100e3, 200, 0.0);
        let a = differential_demod(&stream(base.clone())).unwrap();
        let rot = Complex32::from_polar(1.0, 1.234);
        let b = differential_demod(&stream(base.iter().map(|s| s * rot).collect())).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-5);
        }
        let shifted = differential_demod(&stream(exp_tone(110e3, 200, 0.0))).unwrap();
        let expected = (2.0 * PI64 * 10e3 / 2e6) as f32;
        for (x, y) in a.values.iter().zip(&shifted.values) {
            assert!((y - x - expected).abs() < 1e-5);
        }
    }

    #[test]
    fn slicer_ties_decide_zero() {
        let soft = SoftSymbolStream {
            rate_hz: 1e6,
            values: vec![0.4, -0.2, 0.0],
            timing: vec![0.0, 1e-6, 2e-6],
        };
        let h = hard_decide(&soft);
        assert_eq!(h.bits, vec![1, 0, 0]);
        let neg = SoftSymbolStream {
            values: vec![-0.4, 0.2, -0.7],
            ..soft
        };
        assert_eq!(hard_decide(&neg).bits, vec![0, 1, 0]);
    }

    #[test]
    fn preamble_recovered_after_noise_lead_in() {
        use crate::ble::{AccessAddress, AA_BITS, PREAMBLE_BITS};
        use crate::synth::{gfsk_modulate, GfskConfig};
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        let aa = AccessAddress(0x50654A13);
        let mut bits = aa.preamble().to_vec();
        bits.extend(aa.bits());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        bits.extend((0..80).map(|_| rng.random_range(0..2u8)));
        let burst = gfsk_modulate(&bits, &GfskConfig::default(), 2e6).unwrap();
        let lead = 61;
        let head = PREAMBLE_BITS + AA_BITS;
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut noise = |s: f32| Complex32::new(rng.random_range(-s..s), rng.random_range(-s..s));
            let mut samples: Vec<Complex32> = (0..lead).map(|_| noise(0.05)).collect();
            samples.extend(burst.iter().map(|b| b + noise(0.05)));
            samples.extend((0..60).map(|_| noise(0.05)));
            let hard = demodulate(&stream(samples), &MmConfig::default()).unwrap();
            let k = hard.timing.iter().position(|t| *t > lead as f64 / 2e6).unwrap();
            assert_eq!(&hard.bits[k..k + head], &bits[..head], "seed {seed}");
        }
    }
}
