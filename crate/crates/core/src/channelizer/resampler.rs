//! Streaming frequency-translating rational resampler.
//!
//! Output sample `k` is the filtered, mixed input evaluated at input time
//! `k * M / L` (the filter's group delay is removed, so on- and off-channel
//! paths with different tap counts stay time-aligned). Each output depends
//! only on absolute input indices, so results are bitwise independent of how
//! the input is chunked.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::{Complex32, Complex64};
use rustfft::{Fft, FftPlanner};

use super::firdes::FirTaps;
use crate::error::{Error, Result};

/// Filters longer than this run through FFT overlap-save.
pub const DIRECT_MAX_TAPS: usize = 400;

const RESYNC: u64 = 4096;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn integral_hz(rate: f64, what: &str) -> Result<u64> {
    let r = rate.round();
    if !(rate.is_finite() && rate > 0.0 && (rate - r).abs() < 1e-6) {
        return Err(Error::Argument(format!(
            "{what} {rate} Hz must be a whole number of Hz"
        )));
    }
    Ok(r as u64)
}

/// `out / in` in lowest terms as `(L, M)`.
pub fn rational_ratio(in_rate_hz: f64, out_rate_hz: f64) -> Result<(u64, u64)> {
    let fin = integral_hz(in_rate_hz, "input rate")?;
    let fout = integral_hz(out_rate_hz, "output rate")?;
    if fout > fin {
        return Err(Error::Argument(format!(
            "output rate {fout} Hz exceeds input rate {fin} Hz"
        )));
    }
    let g = gcd(fin, fout);
    Ok((fout / g, fin / g))
}

/// Oscillator `exp(-j 2 pi f n / fs)` indexed by absolute sample number.
#[derive(Debug, Clone)]
struct Mixer {
    cycles_per_sample: f64,
    step: Complex64,
}

impl Mixer {
    fn new(offset_hz: f64, rate_hz: f64) -> Self {
        let cycles_per_sample = offset_hz / rate_hz;
        Mixer {
            cycles_per_sample,
            step: Complex64::from_polar(1.0, -2.0 * PI * cycles_per_sample),
        }
    }

    fn exact(&self, n: u64) -> Complex64 {
        let turns = (self.cycles_per_sample * n as f64).rem_euclid(1.0);
        Complex64::from_polar(1.0, -2.0 * PI * turns)
    }

    /// Mixes `input` whose first sample has absolute index `start`.
    fn mix(&self, start: u64, input: &[Complex32], re: &mut Vec<f32>, im: &mut Vec<f32>) {
        let block = start - start % RESYNC;
        let mut osc = self.exact(block);
        for _ in block..start {
            osc *= self.step;
        }
        for (i, s) in input.iter().enumerate() {
            let n = start + i as u64;
            if n.is_multiple_of(RESYNC) {
                osc = self.exact(n);
            }
            let x = Complex64::new(s.re as f64, s.im as f64) * osc;
            re.push(x.re as f32);
            im.push(x.im as f32);
            osc *= self.step;
        }
    }
}

fn dot(h: &[f32], x: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let hc = h.chunks_exact(8);
    let xc = x.chunks_exact(8);
    let (hr, xr) = (hc.remainder(), xc.remainder());
    for (a, b) in hc.zip(xc) {
        for i in 0..8 {
            acc[i] += a[i] * b[i];
        }
    }
    let mut tail = 0f32;
    for (a, b) in hr.iter().zip(xr) {
        tail += a * b;
    }
    acc.iter().sum::<f32>() + tail
}

struct FftBank {
    len: usize,
    valid: usize,
    forward: Arc<dyn Fft<f32>>,
    inverse: Arc<dyn Fft<f32>>,
    /// Per-phase filter spectra, pre-scaled by 1/len.
    spectra: Vec<Vec<Complex32>>,
    scratch: Vec<Complex32>,
    /// Block index currently cached and its per-phase results.
    cached_block: Option<u64>,
    cached: Vec<Option<Vec<Complex32>>>,
    spectrum: Vec<Complex32>,
}

enum Engine {
    /// Per-phase taps, time reversed.
    Direct(Vec<Vec<f32>>),
    Fft(Box<FftBank>),
}

/// Mixer + anti-alias filter + L/M resampler, consumed in chunks.
pub struct XlatingResampler {
    mixer: Mixer,
    interp: u64,
    decim: u64,
    taps: usize,
    center: i64,
    engine: Engine,
    re: Vec<f32>,
    im: Vec<f32>,
    /// Absolute input index of `re[0]`; negative indices are zero padding.
    buf_start: i64,
    consumed_in: u64,
    next_out: u64,
    finished: bool,
}

impl XlatingResampler {
    pub fn new(taps: &FirTaps, offset_hz: f64, out_rate_hz: f64) -> Result<Self> {
        Self::with_engine(taps, offset_hz, out_rate_hz, taps.count() > DIRECT_MAX_TAPS)
    }

    /// Forces direct (`use_fft = false`) or FFT evaluation.
    pub fn with_engine(taps: &FirTaps, offset_hz: f64, out_rate_hz: f64, use_fft: bool) -> Result<Self> {
        let in_rate = taps.sample_rate_hz();
        if !(offset_hz.abs() < in_rate / 2.0) {
            return Err(Error::Coverage(format!(
                "offset {offset_hz} Hz lies outside the captured band (+/-{} Hz)",
                in_rate / 2.0
            )));
        }
        let (interp, decim) = rational_ratio(in_rate, out_rate_hz)?;
        let n = taps.count();
        let phases: Vec<Vec<f64>> = (0..interp)
            .map(|p| taps.fractional_phase(p as f64 / interp as f64))
            .collect();
        let engine = if use_fft {
            let len = (4 * n).next_power_of_two().max(1024);
            let mut planner = FftPlanner::<f32>::new();
            let forward = planner.plan_fft_forward(len);
            let inverse = planner.plan_fft_inverse(len);
            let spectra = phases
                .iter()
                .map(|h| {
                    let mut buf: Vec<Complex32> = (0..len)
                        .map(|i| Complex32::new(h.get(i).map_or(0.0, |v| (*v / len as f64) as f32), 0.0))
                        .collect();
                    forward.process(&mut buf);
                    buf
                })
                .collect();
            let scratch_len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            Engine::Fft(Box::new(FftBank {
                len,
                valid: len - n + 1,
                forward,
                inverse,
                spectra,
                scratch: vec![Complex32::new(0.0, 0.0); scratch_len],
                cached_block: None,
                cached: vec![None; interp as usize],
                spectrum: vec![Complex32::new(0.0, 0.0); len],
            }))
        } else {
            Engine::Direct(
                phases
                    .iter()
                    .map(|h| h.iter().rev().map(|v| *v as f32).collect())
                    .collect(),
            )
        };
        let pad = n - 1;
        Ok(XlatingResampler {
            mixer: Mixer::new(offset_hz, in_rate),
            interp,
            decim,
            taps: n,
            center: ((n - 1) / 2) as i64,
            engine,
            re: vec![0.0; pad],
            im: vec![0.0; pad],
            buf_start: -(pad as i64),
            consumed_in: 0,
            next_out: 0,
            finished: false,
        })
    }

    pub fn ratio(&self) -> (u64, u64) {
        (self.interp, self.decim)
    }

    /// Number of outputs emitted so far (the index of the next output).
    pub fn emitted(&self) -> u64 {
        self.next_out
    }

    /// Input time, in input samples, that output `k` represents.
    pub fn origin(&self, k: u64) -> f64 {
        (k as f64) * self.decim as f64 / self.interp as f64
    }

    /// Total outputs for `n` input samples: `ceil(n * L / M)`.
    pub fn output_len(&self, inputs: u64) -> u64 {
        (inputs * self.interp).div_ceil(self.decim)
    }

    pub fn push(&mut self, input: &[Complex32], out: &mut Vec<Complex32>) {
        assert!(!self.finished, "push after finish");
        self.mixer
            .mix(self.consumed_in, input, &mut self.re, &mut self.im);
        self.consumed_in += input.len() as u64;
        self.drain(out);
    }

    pub fn finish(&mut self, out: &mut Vec<Complex32>) {
        if self.finished {
            return;
        }
        self.finished = true;
        self.drain(out);
    }

    fn buffered_end(&self) -> i64 {
        self.buf_start + self.re.len() as i64
    }

    /// Makes sure absolute input indices below `end` are present, padding
    /// zeros past the real input once finished.
    fn ensure(&mut self, end: i64) -> bool {
        if end <= self.buffered_end() {
            return true;
        }
        if !self.finished {
            return false;
        }
        let extra = (end - self.buffered_end()) as usize;
        self.re.extend(std::iter::repeat_n(0.0, extra));
        self.im.extend(std::iter::repeat_n(0.0, extra));
        true
    }

    fn drain(&mut self, out: &mut Vec<Complex32>) {
        let total = if self.finished {
            Some(self.output_len(self.consumed_in))
        } else {
            None
        };
        loop {
            let k = self.next_out;
            if total.is_some_and(|t| k >= t) {
                break;
            }
            let km = k * self.decim;
            let base = (km / self.interp) as i64;
            let phase = (km % self.interp) as usize;
            let fft_valid = match &self.engine {
                Engine::Fft(bank) => Some(bank.valid as u64),
                Engine::Direct(_) => None,
            };
            let ok = match fft_valid {
                None => {
                    let need = base + self.center + 1;
                    if self.ensure(need) {
                        let Engine::Direct(bank) = &self.engine else {
                            unreachable!()
                        };
                        let h = &bank[phase];
                        let s = (base - self.center - self.buf_start) as usize;
                        let re = dot(h, &self.re[s..s + self.taps]);
                        let im = dot(h, &self.im[s..s + self.taps]);
                        out.push(Complex32::new(re, im));
                        true
                    } else {
                        false
                    }
                }
                Some(valid) => {
                    let m = (base + self.center) as u64;
                    let block = m / valid;
                    let need = ((block + 1) * valid) as i64;
                    if self.ensure(need) {
                        let v = self.fft_value(block, phase, (m - block * valid) as usize);
                        out.push(v);
                        true
                    } else {
                        false
                    }
                }
            };
            if !ok {
                break;
            }
            self.next_out += 1;
        }
        self.compact();
    }

    fn fft_value(&mut self, block: u64, phase: usize, offset: usize) -> Complex32 {
        let taps = self.taps;
        let buf_start = self.buf_start;
        let Engine::Fft(bank) = &mut self.engine else {
            unreachable!()
        };
        if bank.cached_block != Some(block) {
            let first = (block * bank.valid as u64) as i64 - (taps as i64 - 1) - buf_start;
            let first = first as usize;
            for i in 0..bank.len {
                bank.spectrum[i] = Complex32::new(self.re[first + i], self.im[first + i]);
            }
            bank.forward
                .process_with_scratch(&mut bank.spectrum, &mut bank.scratch);
            bank.cached_block = Some(block);
            bank.cached.iter_mut().for_each(|c| *c = None);
        }
        if bank.cached[phase].is_none() {
            let mut y: Vec<Complex32> = bank
                .spectrum
                .iter()
                .zip(&bank.spectra[phase])
                .map(|(x, h)| x * h)
                .collect();
            bank.inverse.process_with_scratch(&mut y, &mut bank.scratch);
            bank.cached[phase] = Some(y);
        }
        bank.cached[phase].as_ref().unwrap()[taps - 1 + offset]
    }

    /// Drops input no longer needed by the next output.
    fn compact(&mut self) {
        let km = self.next_out * self.decim;
        let base = (km / self.interp) as i64;
        let keep_from = match &self.engine {
            Engine::Direct(_) => base - self.center,
            Engine::Fft(bank) => {
                let m = (base + self.center) as u64;
                let block = m / bank.valid as u64;
                (block * bank.valid as u64) as i64 - (self.taps as i64 - 1)
            }
        };
        let drop = keep_from - self.buf_start;
        if drop > 0 && drop as usize >= self.re.len() / 2 && drop as usize > 4096 {
            let drop = (drop as usize).min(self.re.len());
            self.re.drain(..drop);
            self.im.drain(..drop);
            self.buf_start += drop as i64;
        }
    }
}
