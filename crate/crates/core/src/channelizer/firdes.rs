//! Windowed-sinc low-pass design.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Transition-width factor of the tap-count rule `N = floor(k * fs / df)`.
pub const TAP_COUNT_FACTOR: f64 = 3.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirSpec {
    /// Cutoff of the ideal sinc prototype, Hz.
    pub cutoff_hz: f64,
    pub transition_hz: f64,
    pub window: Window,
    /// Passband (DC) gain.
    pub gain: f64,
}

impl FirSpec {
    pub fn lowpass(cutoff_hz: f64, transition_hz: f64) -> Self {
        FirSpec {
            cutoff_hz,
            transition_hz,
            window: Window::Hann,
            gain: 1.0,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.cutoff_hz > 0.0) {
            return Err(Error::Design(format!(
                "cutoff {} Hz must be positive",
                self.cutoff_hz
            )));
        }
        if !(self.transition_hz > 0.0) {
            return Err(Error::Design(format!(
                "transition width {} Hz must be positive",
                self.transition_hz
            )));
        }
        if !(self.cutoff_hz + self.transition_hz < sample_rate_hz / 2.0) {
            return Err(Error::Design(format!(
                "cutoff + transition ({} Hz) must stay below Nyquist ({} Hz)",
                self.cutoff_hz + self.transition_hz,
                sample_rate_hz / 2.0
            )));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::Design(format!("gain {} must be positive", self.gain)));
        }
        Ok(())
    }

    /// Tap count for this spec at `sample_rate_hz`, always odd.
    pub fn tap_count(&self, sample_rate_hz: f64) -> usize {
        let n = (TAP_COUNT_FACTOR * sample_rate_hz / self.transition_hz).floor() as usize;
        if n.is_multiple_of(2) {
            n + 1
        } else {
            n
        }
    }
}

/// Linear-phase FIR coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FirTaps {
    pub coefficients: Vec<f64>,
    pub(crate) spec: FirSpec,
    pub(crate) sample_rate_hz: f64,
}

impl FirTaps {
    pub fn count(&self) -> usize {
        self.coefficients.len()
    }

    pub fn spec(&self) -> &FirSpec {
        &self.spec
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Group delay in input samples.
    pub fn group_delay(&self) -> f64 {
        (self.count() - 1) as f64 / 2.0
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.coefficients.iter().map(|h| h * h).sum()
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> (f64, f64) {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        self.coefficients
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, h)| {
                let a = w * n as f64;
                (re + h * a.cos(), im - h * a.sin())
            })
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        let (re, im) = self.response(freq_hz);
        10.0 * (re * re + im * im).log10()
    }

    /// Taps for evaluating the filter `frac` samples (in `[0, 1)`) later than
    /// the integer grid. `frac = 0` reproduces `coefficients`.
    pub fn fractional_phase(&self, frac: f64) -> Vec<f64> {
        prototype(&self.spec, self.sample_rate_hz, self.count(), frac)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hann-windowed sinc sampled at `n - center + frac`, normalized to `spec.gain`.
fn prototype(spec: &FirSpec, sample_rate_hz: f64, count: usize, frac: f64) -> Vec<f64> {
    let center = (count - 1) as f64 / 2.0;
    let fc = spec.cutoff_hz / sample_rate_hz;
    let mut taps: Vec<f64> = (0..count)
        .map(|n| {
            let t = n as f64 - center + frac;
            if count == 1 {
                return 1.0;
            }
            let window = match spec.window {
                Window::Hann if t.abs() <= center => 0.5 + 0.5 * (PI * t / center).cos(),
                Window::Hann => 0.0,
            };
            2.0 * fc * sinc(2.0 * fc * t) * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    let scale = spec.gain / sum;
    taps.iter_mut().for_each(|h| *h *= scale);
    taps
}

pub fn design_lowpass(spec: &FirSpec, sample_rate_hz: f64) -> Result<FirTaps> {
    spec.validate(sample_rate_hz)?;
    let count = spec.tap_count(sample_rate_hz);
    Ok(FirTaps {
        coefficients: prototype(spec, sample_rate_hz, count, 0.0),
        spec: *spec,
        sample_rate_hz,
    })
}
