//! Channel impairments and the capture-mutate-replay relay harness.

mod mitm;

pub use mitm::{
    calibrate_snr, leg_success, mitm_simulate, trial_seed, Leg, MitmConfig, MitmReport, Mutation, TrialSetup,
    TRIAL_RATE_HZ,
};

use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::synth::add_noise;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    /// Burst power over per-sample noise power; `+inf` adds no noise.
    pub snr_db: f64,
    pub cfo_hz: f64,
    pub sro_ppm: f64,
    pub erasure_prob: f64,
    pub attenuation_db: f64,
    pub seed: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::ideal()
    }
}

impl ChannelModel {
    pub fn ideal() -> Self {
        ChannelModel {
            snr_db: f64::INFINITY,
            cfo_hz: 0.0,
            sro_ppm: 0.0,
            erasure_prob: 0.0,
            attenuation_db: 0.0,
            seed: 0,
        }
    }

    pub fn with_snr(snr_db: f64) -> Self {
        ChannelModel {
            snr_db,
            ..ChannelModel::ideal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.erasure_prob) {
            return Err(Error::Config(format!(
                "erasure probability {} outside [0, 1]",
                self.erasure_prob
            )));
        }
        if self.snr_db.is_nan() || !self.cfo_hz.is_finite() || !self.attenuation_db.is_finite() {
            return Err(Error::Config("channel model has non-finite parameters".into()));
        }
        if !(self.sro_ppm.is_finite() && self.sro_ppm.abs() < 1e5) {
            return Err(Error::Config(format!("sample-rate offset {} ppm", self.sro_ppm)));
        }
        Ok(())
    }
}

/// Cubic (Catmull-Rom) resampling: output `n` is the input at `n * step`.
fn resample(x: &[Complex32], step: f64) -> Vec<Complex32> {
    let at = |i: i64| -> Complex32 {
        if i < 0 || i as usize >= x.len() {
            Complex32::new(0.0, 0.0)
        } else {
            x[i as usize]
        }
    };
    let n = ((x.len() as f64) / step).floor() as usize;
    (0..n)
        .map(|k| {
            let t = k as f64 * step;
            let i = t.floor() as i64;
            let f = (t - i as f64) as f32;
            let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
            let a = p1 * 2.0;
            let b = p2 - p0;
            let c = p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3;
            let d = p1 * 3.0 - p0 - p2 * 3.0 + p3;
            (a + (b + (c + d * f) * f) * f) * 0.5
        })
        .collect()
}

/// Mean power of the non-silent samples.
fn burst_power(x: &[Complex32]) -> f64 {
    let (sum, n) = x
        .iter()
        .map(|s| s.norm_sqr() as f64)
        .filter(|p| *p > 0.0)
        .fold((0.0, 0usize), |(s, n), p| (s + p, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Passes a burst through the channel: attenuation, sample-rate offset,
/// carrier offset, then white noise at the model's SNR relative to the
/// burst's own power. An erased burst is replaced by that noise alone.
/// Deterministic in `model.seed`.
pub fn apply_channel(samples: &[Complex32], model: &ChannelModel, rate_hz: f64) -> Result<Vec<Complex32>> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let erased = model.erasure_prob > 0.0 && rng.random::<f64>() < model.erasure_prob;

    let gain = 10f64.powf(-model.attenuation_db / 20.0) as f32;
    let mut y: Vec<Complex32> = samples.iter().map(|s| s * gain).collect();
    if model.sro_ppm != 0.0 {
        y = resample(&y, 1.0 + model.sro_ppm * 1e-6);
    }
    if model.cfo_hz != 0.0 {
        let w = 2.0 * PI * model.cfo_hz / rate_hz;
        for (n, s) in y.iter_mut().enumerate() {
            let ph = w * n as f64;
            *s *= Complex32::new(ph.cos() as f32, ph.sin() as f32);
        }
    }
    let noise = if model.snr_db.is_finite() {
        burst_power(&y) * 10f64.powf(-model.snr_db / 10.0)
    } else {
        0.0
    };
    if erased {
        y.iter_mut().for_each(|s| *s = Complex32::new(0.0, 0.0));
    }
    add_noise(&mut y, noise, &mut rng);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burst(n: usize) -> Vec<Complex32> {
        (0..n)
            .map(|i| Complex32::from_polar(0.5, i as f32 * 0.3))
            .collect()
    }

    #[test]
    fn ideal_channel_only_attenuates() {
        let x = burst(500);
        let m = ChannelModel {
            attenuation_db: 6.0,
            ..ChannelModel::ideal()
        };
        let y = apply_channel(&x, &m, 4e6).unwrap();
        let g = 10f32.powf(-6.0 / 20.0);
        assert_eq!(y, x.iter().map(|s| s * g).collect::<Vec<_>>());
        assert_eq!(apply_channel(&x, &ChannelModel::ideal(), 4e6).unwrap(), x);
    }

    #[test]
    fn seeded_reproducible() {
        let x = burst(800);
        let m = ChannelModel {
            snr_db: 5.0,
            cfo_hz: 3e3,
            sro_ppm: 40.0,
            seed: 99,
            ..ChannelModel::ideal()
        };
        assert_eq!(
            apply_channel(&x, &m, 4e6).unwrap(),
            apply_channel(&x, &m, 4e6).unwrap()
        );
        let other = ChannelModel { seed: 100, ..m };
        assert_ne!(
            apply_channel(&x, &m, 4e6).unwrap(),
            apply_channel(&x, &other, 4e6).unwrap()
        );
    }

    #[test]
    fn noise_power_follows_snr() {
        let x = burst(200_000);
        let m = ChannelModel {
            seed: 1,
            ..ChannelModel::with_snr(10.0)
        };
        let y = apply_channel(&x, &m, 4e6).unwrap();
        let noise: f64 = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).norm_sqr() as f64)
            .sum::<f64>()
            / x.len() as f64;
        let measured = 10.0 * (0.25 / noise).log10();
        assert!((measured - 10.0).abs() < 0.1, "{measured}");
    }

    #[test]
    fn erasure_leaves_only_noise() {
        let x = burst(1000);
        let m = ChannelModel {
            erasure_prob: 1.0,
            ..ChannelModel::ideal()
        };
        assert!(apply_channel(&x, &m, 4e6)
            .unwrap()
            .iter()
            .all(|s| s.norm() == 0.0));
        let bad = ChannelModel {
            erasure_prob: 1.5,
            ..ChannelModel::ideal()
        };
        assert!(apply_channel(&x, &bad, 4e6).is_err());
    }

    #[test]
    fn cfo_rotates_phase() {
        let x = vec![Complex32::new(1.0, 0.0); 100];
        let m = ChannelModel {
            cfo_hz: 1e5,
            ..ChannelModel::ideal()
        };
        let y = apply_channel(&x, &m, 4e6).unwrap();
        let step = (y[11] * y[10].conj()).arg() as f64;
        assert!((step - 2.0 * PI * 1e5 / 4e6).abs() < 1e-5);
    }

    #[test]
    fn sro_stretches_length() {
        let x = burst(100_000);
        let m = ChannelModel {
            sro_ppm: 100.0,
            ..ChannelModel::ideal()
        };
        let y = apply_channel(&x, &m, 4e6).unwrap();
        assert_eq!(y.len(), (100_000.0 / 1.0001f64).floor() as usize);
    }
}
