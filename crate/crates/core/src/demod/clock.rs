//! Mueller & Muller timing recovery with an 8-tap fractional interpolator.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const INTERP_TAPS: usize = 8;
pub const INTERP_PHASES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmConfig {
    /// Nominal samples per symbol.
    pub omega: f64,
    pub gain_mu: f64,
    pub gain_omega: f64,
    pub omega_relative_limit: f64,
    pub mu_initial: f64,
}

impl Default for MmConfig {
    fn default() -> Self {
        let gain_mu = 0.175;
        MmConfig {
            omega: 2.0,
            gain_mu,
            gain_omega: 0.25 * gain_mu * gain_mu,
            omega_relative_limit: 0.005,
            mu_initial: 0.5,
        }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 1.0) {
            return Err(Error::Argument(format!("omega {} must exceed 1", self.omega)));
        }
        if !(self.gain_mu > 0.0 && self.gain_omega > 0.0) {
            return Err(Error::Argument("loop gains must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.mu_initial) {
            return Err(Error::Argument(format!(
                "mu_initial {} not in [0, 1)",
                self.mu_initial
            )));
        }
        if !(self.omega_relative_limit >= 0.0) {
            return Err(Error::Argument(
                "omega_relative_limit must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Bank of 8-tap windowed-sinc interpolators. `interpolate(x, mu)` estimates
/// the signal at `x[3] + mu`.
#[derive(Debug, Clone)]
pub struct Interpolator {
    bank: Vec<[f32; INTERP_TAPS]>,
}

impl Default for Interpolator {
    fn default() -> Self {
        Self::new()
    }
}

impl Interpolator {
    pub fn new() -> Self {
        let half = INTERP_TAPS as f64 / 2.0;
        let bank = (0..=INTERP_PHASES)
            .map(|q| {
                let mu = q as f64 / INTERP_PHASES as f64;
                let mut taps = [0f64; INTERP_TAPS];
                for (j, tap) in taps.iter_mut().enumerate() {
                    let t = j as f64 - (half - 1.0) - mu;
                    let sinc = if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };
                    let window = if t.abs() < half {
                        0.5 + 0.5 * (PI * t / half).cos()
                    } else {
                        0.0
                    };
                    *tap = sinc * window;
                }
                let sum: f64 = taps.iter().sum();
                let mut out = [0f32; INTERP_TAPS];
                for (o, t) in out.iter_mut().zip(taps) {
                    *o = (t / sum) as f32;
                }
                out
            })
            .collect();
        Interpolator { bank }
    }

    #[inline]
    pub fn interpolate(&self, x: &[f32], mu: f64) -> f32 {
        let q = (mu * INTERP_PHASES as f64).round() as usize;
        let taps = &self.bank[q.min(INTERP_PHASES)];
        taps.iter().zip(&x[..INTERP_TAPS]).map(|(h, v)| h * v).sum()
    }
}

#[inline]
fn slice(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Streaming M&M loop. Input value `n` represents time `t0 + n * dt`.
#[derive(Debug, Clone)]
pub struct ClockRecovery {
    cfg: MmConfig,
    interp: Interpolator,
    omega: f64,
    omega_limit: f64,
    mu: f64,
    last: Option<f32>,
    buf: Vec<f32>,
    /// Absolute input index of `buf[0]`.
    buf_start: u64,
    /// Absolute input index of the next interpolation window.
    next: u64,
    t0: f64,
    dt: f64,
}

impl ClockRecovery {
    pub fn new(cfg: MmConfig, t0: f64, dt: f64) -> Self {
        ClockRecovery {
            cfg,
            interp: Interpolator::new(),
            omega: cfg.omega,
            omega_limit: cfg.omega * cfg.omega_relative_limit,
            mu: cfg.mu_initial,
            last: None,
            buf: Vec::new(),
            buf_start: 0,
            next: 0,
            t0,
            dt,
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn push(&mut self, input: &[f32], values: &mut Vec<f32>, timing: &mut Vec<f64>) {
        self.buf.extend_from_slice(input);
        let end = self.buf_start + self.buf.len() as u64;
        let center = (INTERP_TAPS / 2 - 1) as f64;
        while self.next + INTERP_TAPS as u64 <= end {
            let at = (self.next - self.buf_start) as usize;
            let out = self.interp.interpolate(&self.buf[at..], self.mu);
            values.push(out);
            timing.push(self.t0 + (self.next as f64 + center + self.mu) * self.dt);

            let err = match self.last {
                Some(last) => (slice(last) * out - slice(out) * last) as f64,
                None => 0.0,
            };
            self.last = Some(out);
            self.omega += self.cfg.gain_omega * err;
            self.omega =
                self.cfg.omega + (self.omega - self.cfg.omega).clamp(-self.omega_limit, self.omega_limit);
            self.mu += self.omega + self.cfg.gain_mu * err;
            let whole = self.mu.floor();
            self.next = (self.next as i64 + whole as i64).max(0) as u64;
            self.mu -= whole;
        }
        let drop = (self.next.saturating_sub(self.buf_start) as usize).min(self.buf.len());
        if drop > 4096 {
            self.buf.drain(..drop);
            self.buf_start += drop as u64;
        }
    }
}
