//! The recovery pipeline: channelize every covered channel (on-channel and
//! noise paths), demodulate, then scan for packets behind the squelch.
//!
//! Advertising channels are scanned first; CONNECT_REQs found there supply
//! the CRC inits needed to verify data-channel traffic.

mod scan;

pub use scan::ScanStats;

use std::path::Path;

use log::{debug, info, warn};
use num_complex::Complex32;
use rayon::prelude::*;

use crate::ble::{AccessAddress, AdvPdu, BlePacket, Decoder, MatchConfig};
use crate::channelizer::{
    BleChannel, ChannelPlan, ChannelStream, ChannelizerConfig, FirTaps, XlatingResampler,
};
use crate::demod::{demodulate, HardSymbolStream, MmConfig};
use crate::error::{Error, Result};
use crate::follow::parse_connect_req;
use crate::iq_io::{CaptureMeta, CaptureReader, IQCapture, MetaOverride};
use crate::report::CaptureReport;
use crate::squelch::SquelchConfig;
use scan::{ChannelScan, EnergyIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Restrict recovery to these channel indices; `None` scans all covered.
    pub channels: Option<Vec<u8>>,
    pub channelizer: ChannelizerConfig,
    pub squelch: SquelchConfig,
    pub matching: MatchConfig,
    pub clock: MmConfig,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Known connections (access address, CRC init) for data channels.
    pub connections: Vec<(AccessAddress, u32)>,
    /// Learn connections from CONNECT_REQs seen on advertising channels.
    pub harvest_connect_req: bool,
    /// Samples per read when streaming from a file.
    pub chunk_samples: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            channels: None,
            channelizer: ChannelizerConfig::default(),
            squelch: SquelchConfig::default(),
            matching: MatchConfig::default(),
            clock: MmConfig::default(),
            threads: None,
            connections: Vec::new(),
            harvest_connect_req: true,
            chunk_samples: 1 << 20,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.squelch.validate()?;
        self.matching.validate()?;
        self.clock.validate()?;
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        if self.chunk_samples == 0 {
            return Err(Error::Config("chunk size must be positive".into()));
        }
        Ok(())
    }

    fn plan(&self, meta: &CaptureMeta) -> Result<ChannelPlan> {
        let covered = ChannelPlan::for_capture(meta);
        let plan = match &self.channels {
            Some(want) => {
                for ch in want.iter().filter(|c| !covered.contains(**c)) {
                    warn!("channel {ch} is not covered by the capture; skipping");
                }
                covered.restrict(want)
            }
            None => covered,
        };
        if plan.is_empty() {
            return Err(Error::Coverage(format!(
                "no BLE channel fits in {} Hz around {} Hz",
                meta.sample_rate_hz, meta.center_freq_hz
            )));
        }
        Ok(plan)
    }
}

/// Packets (sorted by start time, then channel) and the per-device report.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub packets: Vec<BlePacket>,
    pub report: CaptureReport,
}

struct Chain {
    channel: BleChannel,
    on: XlatingResampler,
    off: XlatingResampler,
    on_out: Vec<Complex32>,
    off_out: Vec<Complex32>,
}

impl Chain {
    fn new(channel: BleChannel, meta: &CaptureMeta, rx: &Receiver) -> Result<Self> {
        let cfg = &rx.cfg.channelizer;
        let rate = meta.sample_rate_hz;
        let offset = channel.center_freq_hz - meta.center_freq_hz;
        let on = XlatingResampler::new(&rx.on_taps, offset, cfg.out_rate_hz)?;
        let probe = cfg.noise_probe_offset(offset, rate)?;
        let off = XlatingResampler::new(&rx.off_taps, probe, cfg.out_rate_hz)?;
        Ok(Chain {
            channel,
            on,
            off,
            on_out: Vec::new(),
            off_out: Vec::new(),
        })
    }

    fn push(&mut self, chunk: &[Complex32]) {
        self.on.push(chunk, &mut self.on_out);
        self.off.push(chunk, &mut self.off_out);
    }

    fn finish(mut self, cfg: &PipelineConfig) -> Result<Demodulated> {
        self.on.finish(&mut self.on_out);
        self.off.finish(&mut self.off_out);
        let stream = ChannelStream {
            channel: Some(self.channel.index),
            rate_hz: cfg.channelizer.out_rate_hz,
            samples: std::mem::take(&mut self.on_out),
            first: 0,
            ratio: self.on.ratio(),
        };
        let symbols = demodulate(&stream, &cfg.clock)?;
        Ok(Demodulated {
            channel: self.channel,
            on: EnergyIndex::new(&stream.samples),
            off: EnergyIndex::new(&self.off_out),
            rate_hz: stream.rate_hz,
            symbols,
        })
    }
}

struct Demodulated {
    channel: BleChannel,
    symbols: HardSymbolStream,
    on: EnergyIndex,
    off: EnergyIndex,
    rate_hz: f64,
}

impl Demodulated {
    fn scan(&self, decoder: &Decoder, squelch: &SquelchConfig) -> (Vec<BlePacket>, ScanStats) {
        ChannelScan {
            channel: self.channel.index,
            symbols: &self.symbols,
            on: &self.on,
            off: &self.off,
            rate_hz: self.rate_hz,
            first: 0,
        }
        .run(decoder, squelch)
    }
}

/// Runs `f` on a pool of `threads` workers. Callers already on a rayon
/// worker keep their pool: installing into a fresh one from there lets the
/// blocked worker steal sibling jobs, which nests them on its stack.
pub(crate) fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    if rayon::current_thread_index().is_some() {
        return Ok(f());
    }
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config(format!("thread pool: {e}"))),
    }
}

/// A configured receiver for captures sharing one rate and tuning. Filter
/// designs are made once and reused for every capture.
#[derive(Debug, Clone)]
pub struct Receiver {
    cfg: PipelineConfig,
    meta: CaptureMeta,
    plan: ChannelPlan,
    on_taps: FirTaps,
    off_taps: FirTaps,
}

impl Receiver {
    pub fn new(meta: &CaptureMeta, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        meta.validate()?;
        let plan = cfg.plan(meta)?;
        let rate = meta.sample_rate_hz;
        Ok(Receiver {
            cfg: cfg.clone(),
            meta: meta.clone(),
            plan,
            on_taps: cfg.channelizer.on_taps(rate)?,
            off_taps: cfg.channelizer.noise_taps(rate)?,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn channels(&self) -> Vec<u8> {
        self.plan.indices()
    }

    fn check(&self, meta: &CaptureMeta) -> Result<()> {
        if meta.sample_rate_hz != self.meta.sample_rate_hz || meta.center_freq_hz != self.meta.center_freq_hz
        {
            return Err(Error::Argument(format!(
                "receiver set up for {} Hz at {} Hz, capture is {} Hz at {} Hz",
                self.meta.sample_rate_hz, self.meta.center_freq_hz, meta.sample_rate_hz, meta.center_freq_hz
            )));
        }
        Ok(())
    }

    /// Recovers packets from an in-memory capture.
    pub fn recover(&self, capture: &IQCapture) -> Result<Recovery> {
        self.recover_with_connections(capture, &[])
    }

    /// Like [`Receiver::recover`], with extra known connections.
    pub fn recover_with_connections(
        &self,
        capture: &IQCapture,
        connections: &[(AccessAddress, u32)],
    ) -> Result<Recovery> {
        self.check(&capture.meta)?;
        let cfg = &self.cfg;
        let work = || {
            let chains = self
                .plan
                .channels
                .par_iter()
                .map(|ch| {
                    let mut chain = Chain::new(*ch, &capture.meta, self)?;
                    chain.push(&capture.samples);
                    chain.finish(cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            finish_recovery(
                &capture.meta,
                capture.samples.len() as u64,
                chains,
                cfg,
                connections,
            )
        };
        with_pool(cfg.threads, work)?
    }

    /// Streams a capture through the pipeline chunk by chunk.
    pub fn recover_reader(&self, reader: &mut CaptureReader) -> Result<Recovery> {
        let meta = reader.meta().clone();
        self.check(&meta)?;
        let cfg = &self.cfg;
        let work = || {
            let mut chains = self
                .plan
                .channels
                .iter()
                .map(|ch| Chain::new(*ch, &meta, self))
                .collect::<Result<Vec<_>>>()?;
            let mut total = 0u64;
            while let Some(chunk) = reader.read_chunk(cfg.chunk_samples)? {
                total += chunk.len() as u64;
                chains.par_iter_mut().for_each(|c| c.push(&chunk));
            }
            let chains = chains
                .into_par_iter()
                .map(|c| c.finish(cfg))
                .collect::<Result<Vec<_>>>()?;
            finish_recovery(&meta, total, chains, cfg, &[])
        };
        with_pool(cfg.threads, work)?
    }
}

/// Recovers packets from an in-memory capture.
pub fn run_recovery(capture: &IQCapture, cfg: &PipelineConfig) -> Result<Recovery> {
    Receiver::new(&capture.meta, cfg)?.recover(capture)
}

/// Streams a capture file through the pipeline.
pub fn run_recovery_file(
    path: impl AsRef<Path>,
    overrides: MetaOverride,
    cfg: &PipelineConfig,
) -> Result<Recovery> {
    let mut reader = CaptureReader::open(path, overrides)?;
    let meta = reader.meta().clone();
    Receiver::new(&meta, cfg)?.recover_reader(&mut reader)
}

fn finish_recovery(
    meta: &CaptureMeta,
    total_samples: u64,
    chains: Vec<Demodulated>,
    cfg: &PipelineConfig,
    extra: &[(AccessAddress, u32)],
) -> Result<Recovery> {
    let mut decoder = Decoder::new(cfg.matching);
    for (aa, init) in cfg.connections.iter().chain(extra) {
        decoder.add_connection(*aa, *init);
    }
    let (adv, data): (Vec<&Demodulated>, Vec<&Demodulated>) =
        chains.iter().partition(|c| c.channel.is_advertising());

    let scan_all = |set: &[&Demodulated], decoder: &Decoder| {
        set.par_iter()
            .map(|c| c.scan(decoder, &cfg.squelch))
            .collect::<Vec<_>>()
    };
    let mut results = scan_all(&adv, &decoder);
    if cfg.harvest_connect_req {
        for pkt in results.iter().flat_map(|(p, _)| p) {
            if let Some(Ok(AdvPdu::ConnectReq { .. })) = pkt.adv_pdu().filter(|_| pkt.crc_ok) {
                match parse_connect_req(&pkt.payload) {
                    Ok(params) => {
                        debug!("learned connection {} from CONNECT_REQ", params.aa);
                        decoder.add_connection(params.aa, params.crc_init);
                    }
                    Err(e) => warn!("ignoring CONNECT_REQ at {:.6} s: {e}", pkt.t_start_s),
                }
            }
        }
    }
    if !data.is_empty() {
        results.extend(scan_all(&data, &decoder));
    }

    let mut stats = ScanStats::default();
    let mut packets = Vec::new();
    for (pkts, s) in results {
        stats.merge(&s);
        packets.extend(pkts);
    }
    packets.sort_by(|a, b| {
        a.t_start_s
            .total_cmp(&b.t_start_s)
            .then(a.channel.cmp(&b.channel))
    });
    info!(
        "{} packets ({} crc ok, {} crc failed, {} unverified)",
        packets.len(),
        stats.crc_ok,
        stats.crc_failed,
        stats.unverified
    );
    let channels = chains.iter().map(|c| c.channel.index).collect();
    let report = CaptureReport::from_packets(&packets, meta, total_samples, channels, stats);
    Ok(Recovery { packets, report })
}
