//! Wideband IQ capture files.
//!
//! A capture is a raw file of interleaved little-endian `f32` I/Q pairs (the
//! `cf32` layout most SDR recorders emit) plus a JSON sidecar named
//! `<file name>.meta.json` carrying the sample rate and tuning.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest input rate the channelizer can bring down to a 2 Msps channel.
pub const MIN_SAMPLE_RATE_HZ: f64 = 2e6;

const BYTES_PER_SAMPLE: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    #[serde(default)]
    pub start_time_s: Option<f64>,
    #[serde(default)]
    pub label: Option<String>,
}

impl CaptureMeta {
    pub fn new(sample_rate_hz: f64, center_freq_hz: f64) -> Result<Self> {
        let meta = CaptureMeta {
            sample_rate_hz,
            center_freq_hz,
            start_time_s: None,
            label: None,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz >= MIN_SAMPLE_RATE_HZ) {
            return Err(Error::Config(format!(
                "sample rate {} Hz is below the {} Hz floor",
                self.sample_rate_hz, MIN_SAMPLE_RATE_HZ
            )));
        }
        if !(self.center_freq_hz.is_finite() && self.center_freq_hz > 0.0) {
            return Err(Error::Config(format!(
                "center frequency {} Hz must be positive",
                self.center_freq_hz
            )));
        }
        Ok(())
    }

    /// Lowest and highest frequency represented by the complex capture.
    pub fn band(&self) -> (f64, f64) {
        let half = self.sample_rate_hz / 2.0;
        (self.center_freq_hz - half, self.center_freq_hz + half)
    }
}

/// An in-memory capture. Sample `i` was taken at `start_time_s + i / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct IQCapture {
    pub meta: CaptureMeta,
    pub samples: Vec<Complex32>,
}

impl IQCapture {
    pub fn new(meta: CaptureMeta, samples: Vec<Complex32>) -> Result<Self> {
        meta.validate()?;
        check_finite(&samples, 0)?;
        Ok(IQCapture { meta, samples })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.meta.sample_rate_hz
    }

    /// Time of sample `index`, relative to the epoch if the capture carries one.
    pub fn sample_time(&self, index: u64) -> f64 {
        self.meta.start_time_s.unwrap_or(0.0) + index as f64 / self.meta.sample_rate_hz
    }
}

/// Rate/center values used when a capture has no sidecar.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetaOverride {
    pub sample_rate_hz: Option<f64>,
    pub center_freq_hz: Option<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn check_finite(samples: &[Complex32], base: u64) -> Result<()> {
    match samples
        .iter()
        .position(|s| !(s.re.is_finite() && s.im.is_finite()))
    {
        Some(i) => Err(Error::NonFinite {
            index: base + i as u64,
        }),
        None => Ok(()),
    }
}

fn load_meta(path: &Path, overrides: MetaOverride) -> Result<CaptureMeta> {
    let side = sidecar_path(path);
    let mut meta = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::from_str::<CaptureMeta>(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", side.display())))?
    } else {
        match (overrides.sample_rate_hz, overrides.center_freq_hz) {
            (Some(rate), Some(center)) => CaptureMeta {
                sample_rate_hz: rate,
                center_freq_hz: center,
                start_time_s: None,
                label: None,
            },
            _ => {
                return Err(Error::Config(format!(
                    "no sidecar {} and no --rate/--center override",
                    side.display()
                )))
            }
        }
    };
    if let Some(rate) = overrides.sample_rate_hz {
        meta.sample_rate_hz = rate;
    }
    if let Some(center) = overrides.center_freq_hz {
        meta.center_freq_hz = center;
    }
    meta.validate()?;
    Ok(meta)
}

/// Chunked reader over a capture file. Yields samples in file order.
pub struct CaptureReader {
    meta: CaptureMeta,
    path: PathBuf,
    inner: BufReader<File>,
    total: u64,
    position: u64,
    chunk: usize,
    warned_clip: bool,
}

impl CaptureReader {
    pub fn open(path: impl AsRef<Path>, overrides: MetaOverride) -> Result<Self> {
        let path = path.as_ref();
        let meta = load_meta(path, overrides)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let bytes = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if bytes % BYTES_PER_SAMPLE != 0 {
            return Err(Error::Format(format!(
                "{}: {bytes} bytes is not a whole number of 8-byte samples",
                path.display()
            )));
        }
        Ok(CaptureReader {
            meta,
            path: path.to_owned(),
            inner: BufReader::with_capacity(1 << 20, file),
            total: bytes / BYTES_PER_SAMPLE,
            position: 0,
            chunk: 1 << 18,
            warned_clip: false,
        })
    }

    pub fn with_chunk_size(mut self, samples: usize) -> Self {
        self.chunk = samples.max(1);
        self
    }

    pub fn meta(&self) -> &CaptureMeta {
        &self.meta
    }

    pub fn total_samples(&self) -> u64 {
        self.total
    }

    /// Reads up to `max` samples; `None` at end of file.
    pub fn read_chunk(&mut self, max: usize) -> Result<Option<Vec<Complex32>>> {
        let remaining = self.total - self.position;
        if remaining == 0 {
            return Ok(None);
        }
        let n = (max as u64).min(remaining) as usize;
        let mut raw = vec![0u8; n * BYTES_PER_SAMPLE as usize];
        self.inner
            .read_exact(&mut raw)
            .map_err(|e| Error::io(&self.path, e))?;
        let samples: Vec<Complex32> = raw
            .chunks_exact(8)
            .map(|b| {
                Complex32::new(
                    f32::from_le_bytes([b[0], b[1], b[2], b[3]]),
                    f32::from_le_bytes([b[4], b[5], b[6], b[7]]),
                )
            })
            .collect();
        check_finite(&samples, self.position)?;
        if !self.warned_clip && samples.iter().any(|s| s.re.abs() > 1.0 || s.im.abs() > 1.0) {
            log::warn!("{}: samples exceed nominal full scale", self.path.display());
            self.warned_clip = true;
        }
        self.position += n as u64;
        Ok(Some(samples))
    }
}

impl Iterator for CaptureReader {
    type Item = Result<Vec<Complex32>>;

    fn next(&mut self) -> Option<Self::Item> {
        let chunk = self.chunk;
        self.read_chunk(chunk).transpose()
    }
}

pub fn read_capture(path: impl AsRef<Path>) -> Result<IQCapture> {
    read_capture_with(path, MetaOverride::default())
}

pub fn read_capture_with(path: impl AsRef<Path>, overrides: MetaOverride) -> Result<IQCapture> {
    let mut reader = CaptureReader::open(path, overrides)?;
    let mut samples = Vec::with_capacity(reader.total_samples() as usize);
    while let Some(chunk) = reader.read_chunk(1 << 20)? {
        samples.extend_from_slice(&chunk);
    }
    Ok(IQCapture {
        meta: reader.meta.clone(),
        samples,
    })
}

pub fn write_capture(capture: &IQCapture, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    capture.meta.validate()?;
    check_finite(&capture.samples, 0)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::with_capacity(1 << 20, file);
    for s in &capture.samples {
        out.write_all(&s.re.to_le_bytes())
            .and_then(|_| out.write_all(&s.im.to_le_bytes()))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;

    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&capture.meta).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(())
}
