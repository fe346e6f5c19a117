//! GFSK modulator with an analytic Gaussian-filtered frequency pulse.

use num_complex::Complex32;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const BLE_SYMBOL_RATE_HZ: f64 = 1e6;

/// Symbols on either side of a pulse's center that it is allowed to touch.
const PULSE_SPAN_SYMBOLS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfskConfig {
    pub bt: f64,
    pub modulation_index: f64,
    pub amplitude: f64,
    pub symbol_rate_hz: f64,
}

impl Default for GfskConfig {
    fn default() -> Self {
        GfskConfig {
            bt: 0.5,
            modulation_index: 0.5,
            amplitude: 1.0,
            symbol_rate_hz: BLE_SYMBOL_RATE_HZ,
        }
    }
}

impl GfskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.45..=0.55).contains(&self.modulation_index) {
            return Err(Error::Config(format!(
                "modulation index {} outside 0.45..=0.55",
                self.modulation_index
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config("amplitude must be positive".into()));
        }
        if !(self.bt > 0.0) {
            return Err(Error::Config("BT product must be positive".into()));
        }
        Ok(())
    }

    /// Peak frequency deviation in Hz.
    pub fn deviation_hz(&self) -> f64 {
        self.modulation_index / 2.0 * self.symbol_rate_hz
    }

    pub fn samples_per_symbol(&self, rate_hz: f64) -> f64 {
        rate_hz / self.symbol_rate_hz
    }
}

/// Integral of a unit rectangle (one symbol long) smoothed by the Gaussian
/// filter, in symbol units. Rises from 0 to 1 around `u = 0`.
struct PhasePulse {
    alpha: f64,
}

impl PhasePulse {
    fn new(bt: f64) -> Self {
        PhasePulse {
            alpha: PI * bt * (2.0 / 2f64.ln()).sqrt(),
        }
    }

    fn antiderivative(&self, u: f64) -> f64 {
        let a = self.alpha;
        u * libm::erf(a * u) + (-(a * u) * (a * u)).exp() / (a * PI.sqrt())
    }

    fn q(&self, u: f64) -> f64 {
        if u <= -PULSE_SPAN_SYMBOLS {
            0.0
        } else if u >= PULSE_SPAN_SYMBOLS {
            1.0
        } else {
            0.5 * (self.antiderivative(u + 0.5) - self.antiderivative(u - 0.5)) + 0.5
        }
    }
}

/// Modulates `bits` starting at time zero: symbol `k` occupies
/// `[k, k + 1)` symbol periods. Returns `ceil(len * sps)` samples.
pub fn gfsk_modulate(bits: &[u8], cfg: &GfskConfig, rate_hz: f64) -> Result<Vec<Complex32>> {
    let n = (bits.len() as f64 * cfg.samples_per_symbol(rate_hz)).ceil() as usize;
    gfsk_modulate_span(bits, cfg, rate_hz, 0.0, n)
}

/// Samples at times `(first_sample + i) / rate_hz - t0` for `i < count`,
/// where the first symbol's leading edge is at `t0`, measured in the caller's
/// time frame (`first_sample` may be any absolute sample index).
pub(crate) fn gfsk_modulate_span(
    bits: &[u8],
    cfg: &GfskConfig,
    rate_hz: f64,
    t0_samples: f64,
    count: usize,
) -> Result<Vec<Complex32>> {
    cfg.validate()?;
    if cfg.samples_per_symbol(rate_hz) < 2.0 {
        return Err(Error::Argument(format!(
            "rate {rate_hz} Hz gives fewer than 2 samples per symbol"
        )));
    }
    let pulse = PhasePulse::new(cfg.bt);
    let sps = cfg.samples_per_symbol(rate_hz);
    // Phase per symbol of a settled +1 run: 2*pi*dev*T = pi*h.
    let per_symbol = 2.0 * PI * cfg.deviation_hz() / cfg.symbol_rate_hz;
    let nrz: Vec<f64> = bits.iter().map(|b| if b & 1 == 1 { 1.0 } else { -1.0 }).collect();
    let mut settled = vec![0.0; nrz.len() + 1];
    for (k, a) in nrz.iter().enumerate() {
        settled[k + 1] = settled[k] + a;
    }
    let span = PULSE_SPAN_SYMBOLS as i64;
    let amp = cfg.amplitude as f32;
    let out = (0..count)
        .map(|i| {
            // Time in symbols relative to the first symbol's center.
            let u = (i as f64 - t0_samples) / sps - 0.5;
            let center = u.round() as i64;
            let lo = (center - span).max(0);
            let hi = (center + span).min(nrz.len() as i64 - 1);
            let mut phase = settled[lo.clamp(0, nrz.len() as i64) as usize];
            for k in lo..=hi {
                phase += nrz[k as usize] * pulse.q(u - k as f64);
            }
            let phase = per_symbol * phase;
            Complex32::new(amp * phase.cos() as f32, amp * phase.sin() as f32)
        })
        .collect();
    Ok(out)
}
