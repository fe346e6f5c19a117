//! Energy squelch: an absolute level test on the on-channel window plus an
//! on/off-channel energy ratio test. The ratio doubles as the reported SNR.

use num_complex::Complex32;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquelchConfig {
    /// Minimum mean |s|^2 per on-channel sample.
    pub abs_threshold: f64,
    pub ratio_threshold_db: f64,
    /// 56 symbols at 2 samples/symbol.
    pub window_samples: usize,
}

impl Default for SquelchConfig {
    fn default() -> Self {
        SquelchConfig {
            abs_threshold: 1e-4,
            ratio_threshold_db: 10.0,
            window_samples: 112,
        }
    }
}

impl SquelchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_threshold > 0.0) {
            return Err(Error::Config(
                "squelch absolute threshold must be positive".into(),
            ));
        }
        if self.window_samples == 0 {
            return Err(Error::Config("squelch window must be non-empty".into()));
        }
        if !self.ratio_threshold_db.is_finite() {
            return Err(Error::Config("squelch ratio threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquelchDecision {
    pub asserted: bool,
    pub on_energy: f64,
    pub off_energy: f64,
    /// `+inf` when the off-channel window is silent.
    pub snr_db: f64,
}

/// Sum of |s|^2 over the window.
pub fn window_energy(samples: &[Complex32]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("energy window is empty".into()));
    }
    Ok(samples.iter().map(|s| s.norm_sqr() as f64).sum())
}

pub fn snr_db(on: f64, off: f64) -> f64 {
    if off > 0.0 {
        10.0 * (on / off).log10()
    } else if on > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

pub fn squelch_decide(on: f64, off: f64, cfg: &SquelchConfig) -> SquelchDecision {
    let snr = snr_db(on, off);
    let loud = on / cfg.window_samples as f64 >= cfg.abs_threshold;
    SquelchDecision {
        asserted: loud && snr >= cfg.ratio_threshold_db,
        on_energy: on,
        off_energy: off,
        snr_db: snr,
    }
}
