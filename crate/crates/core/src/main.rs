use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use widesniff::ble::pdu::MAX_ADV_DATA;
use widesniff::ble::{AdvPdu, BdAddr, BlePacket};
use widesniff::channel_sim::{calibrate_snr, mitm_simulate, ChannelModel, MitmConfig, Mutation, TrialSetup};
use widesniff::channelizer::ChannelKind;
use widesniff::export::{export_pcap, format_packet_log, parse_packet_log};
use widesniff::follow::{annotate_session, parse_connect_req, FollowConfig};
use widesniff::iq_io::{read_capture_with, write_capture, MetaOverride};
use widesniff::pipeline::{run_recovery_file, PipelineConfig};
use widesniff::report::{render_report, render_run_info, CaptureReport, ReportFormat};
use widesniff::synth::{compose_scene, parse_scene, ScenePacket};
use widesniff::zigbee::{compose_zigbee_scene, parse_zigbee_scene, zigbee_decode, ZigbeeConfig};
use widesniff::{Error, Result};

#[derive(Parser)]
#[command(
    name = "widesniff",
    version,
    about = "Offline BLE and 802.15.4 packet recovery from wideband IQ captures"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Recover BLE packets from a capture.
    Decode(DecodeArgs),
    /// Render a BLE scene description into a capture.
    Synth(SynthArgs),
    /// Run the capture-mutate-replay relay experiment.
    MitmSim(MitmArgs),
    /// Annotate a packet log with the connection events of its CONNECT_REQ.
    Follow(FollowArgs),
    /// Recover 802.15.4 frames from a capture.
    ZigbeeDecode(ZigbeeDecodeArgs),
    /// Render an 802.15.4 scene description into a capture.
    ZigbeeSynth(SynthArgs),
    /// Per-device report from a packet log.
    Report(ReportArgs),
}

#[derive(Args)]
struct CaptureArgs {
    /// Capture file (cf32); metadata comes from `<capture>.meta.json`.
    capture: PathBuf,
    /// Sample rate in Hz, overriding or replacing the sidecar.
    #[arg(long)]
    rate: Option<f64>,
    /// Center frequency in Hz, overriding or replacing the sidecar.
    #[arg(long)]
    center: Option<f64>,
    /// Comma-separated channel indices to decode.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<u8>>,
    #[arg(long)]
    threads: Option<usize>,
}

impl CaptureArgs {
    fn overrides(&self) -> MetaOverride {
        MetaOverride {
            sample_rate_hz: self.rate,
            center_freq_hz: self.center,
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    /// Write packets as a pcap (link type 256).
    #[arg(long)]
    pcap: Option<PathBuf>,
    /// Write the per-device report here instead of stderr.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the packet log here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    squelch_abs: Option<f64>,
    #[arg(long)]
    squelch_ratio_db: Option<f64>,
    #[arg(long, default_value_t = 3)]
    metric_threshold: u32,
    /// Known connection as `AA:CRCINIT` in hex, e.g. `50654a3c:1a2b3c`.
    #[arg(long = "connection")]
    connections: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML).
    scene: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Csv => ReportFormat::Delimited,
        }
    }
}

#[derive(Args)]
struct MitmArgs {
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-sample SNR of the direct leg in dB.
    #[arg(long, default_value_t = 20.0)]
    snr_direct: f64,
    #[arg(long, default_value_t = 20.0)]
    snr_sniff: f64,
    #[arg(long, default_value_t = 20.0)]
    snr_replay: f64,
    #[arg(long, default_value_t = 0.0)]
    cfo_hz: f64,
    /// Calibrate the legs to these success targets before running:
    /// direct success and per-leg relay success, e.g. `0.93,0.755`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    calibrate: Option<Vec<f64>>,
    /// Trials per bisection step when calibrating.
    #[arg(long, default_value_t = 400)]
    calibration_trials: u64,
    /// BLE channel the packets are sent on.
    #[arg(long, default_value_t = 37)]
    channel: u8,
    /// Advertising data of the transmitted packets (hex).
    #[arg(long, default_value = "ffeeffee")]
    payload: String,
    /// Replace this byte string (hex) in the payload...
    #[arg(long, requires = "with")]
    find: Option<String>,
    /// ...with this one (hex).
    #[arg(long, requires = "find")]
    with: Option<String>,
    /// Flip PDU payload bits (LSB-first bit indices; bits 0..48 are AdvA).
    #[arg(long, value_delimiter = ',', conflicts_with = "find")]
    flip_bits: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Text,
    Json,
}

#[derive(Args)]
struct FollowArgs {
    /// Packet log written by `decode`.
    packets: PathBuf,
    /// Match tolerance in seconds (default: a quarter interval).
    #[arg(long)]
    tolerance: Option<f64>,
    /// End of the captured span in seconds (default: last packet).
    #[arg(long)]
    span_end: Option<f64>,
}

#[derive(Args)]
struct ZigbeeDecodeArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    /// Maximum chip errors accepted in the sync pattern.
    #[arg(long, default_value_t = 12)]
    sync_max_errors: u32,
}

#[derive(Args)]
struct ReportArgs {
    /// Packet log written by `decode`.
    packets: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn hex_arg(s: &str, field: &'static str) -> Result<Vec<u8>> {
    hex::decode(s).map_err(|e| Error::Parse {
        field,
        reason: e.to_string(),
    })
}

fn parse_connection(s: &str) -> Result<(widesniff::ble::AccessAddress, u32)> {
    let bad = |reason: String| Error::Parse {
        field: "connection",
        reason,
    };
    let (aa, init) = s
        .split_once(':')
        .ok_or_else(|| bad(format!("expected AA:CRCINIT, got {s:?}")))?;
    let aa = aa
        .parse()
        .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
    let init = u32::from_str_radix(init, 16).map_err(|e| bad(e.to_string()))?;
    if init > 0xFF_FFFF {
        return Err(bad("CRC init wider than 24 bits".into()));
    }
    Ok((aa, init))
}

fn decode(a: DecodeArgs) -> Result<()> {
    let mut cfg = PipelineConfig {
        channels: a.capture.channels.clone(),
        threads: a.capture.threads,
        ..PipelineConfig::default()
    };
    if let Some(v) = a.squelch_abs {
        cfg.squelch.abs_threshold = v;
    }
    if let Some(v) = a.squelch_ratio_db {
        cfg.squelch.ratio_threshold_db = v;
    }
    cfg.matching.threshold = a.metric_threshold;
    cfg.connections = a
        .connections
        .iter()
        .map(|s| parse_connection(s))
        .collect::<Result<_>>()?;
    cfg.validate()?;

    let rec = run_recovery_file(&a.capture.capture, a.capture.overrides(), &cfg)?;
    info!("{} packets", rec.packets.len());
    let log = format_packet_log(&rec.packets);
    match &a.output {
        Some(p) => write_text(p, &log)?,
        None => print!("{log}"),
    }
    if let Some(p) = &a.pcap {
        export_pcap(&rec.packets, p, 0.0)?;
    }
    let mut text = render_report(&rec.report, ReportFormat::Text);
    if let Some(run) = &rec.report.run {
        text.push('\n');
        text.push_str(&render_run_info(run));
    }
    match &a.report {
        Some(p) => write_text(p, &text)?,
        None => eprint!("{text}"),
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let scene = parse_scene(&read_text(&a.scene)?)?;
    let cap = compose_scene(&scene.packets, &scene.config)?;
    write_capture(&cap, &a.output)?;
    info!("{} packets, {} samples", scene.packets.len(), cap.samples.len());
    Ok(())
}

fn mitm(a: MitmArgs) -> Result<()> {
    let adv_data = hex_arg(&a.payload, "payload")?;
    if adv_data.len() > MAX_ADV_DATA {
        return Err(Error::Argument(format!(
            "advertising data longer than {MAX_ADV_DATA} bytes"
        )));
    }
    if a.channel > 39 {
        return Err(Error::Argument(format!("channel {} out of range", a.channel)));
    }
    let channel = a.channel;
    let source = move |t: u64| {
        let pdu = AdvPdu::AdvNonconnInd {
            adv_a: BdAddr([t as u8, (t >> 8) as u8, 0x30, 0x2e, 0x66, 0x69]),
            adv_data: adv_data.clone(),
        };
        ScenePacket::advertising(pdu.encode(true, false).expect("payload fits"), channel, 0.0)
    };
    let mutation = match (&a.find, &a.with, &a.flip_bits) {
        (Some(f), Some(w), _) => Mutation::Replace {
            find: hex_arg(f, "find")?,
            with: hex_arg(w, "with")?,
        },
        (_, _, Some(bits)) => Mutation::FlipBits(bits.clone()),
        _ => Mutation::None,
    };
    let leg = |snr: f64, k: u64| ChannelModel {
        snr_db: snr,
        cfo_hz: a.cfo_hz,
        seed: a.seed.wrapping_add(k),
        ..ChannelModel::ideal()
    };
    let setup = TrialSetup::new()?;
    let (mut direct, mut sniff, mut replay) = (a.snr_direct, a.snr_sniff, a.snr_replay);
    if let Some(t) = &a.calibrate {
        direct = calibrate_snr(
            &setup,
            &source,
            &leg(0.0, 0),
            t[0],
            a.calibration_trials,
            (-5.0, 25.0),
            14,
        )?;
        sniff = calibrate_snr(
            &setup,
            &source,
            &leg(0.0, 1),
            t[1],
            a.calibration_trials,
            (-5.0, 25.0),
            14,
        )?;
        replay = sniff;
        info!("calibrated: direct {direct:.2} dB, relay legs {sniff:.2} dB");
    }
    let cfg = MitmConfig {
        model_direct: leg(direct, 0),
        model_sniff: leg(sniff, 1),
        model_replay: leg(replay, 2),
        mutation,
        trials: a.trials,
    };
    let r = mitm_simulate(&setup, source, &cfg)?;
    match a.format {
        OutFormat::Json => println!("{}", serde_json::to_string_pretty(&r).expect("report serializes")),
        OutFormat::Text => {
            println!("snr_db direct {direct:.2} sniff {sniff:.2} replay {replay:.2}");
            println!("sent {}", r.sent);
            println!(
                "delivered_direct {} loss_direct {:.4}",
                r.delivered_direct, r.loss_direct
            );
            println!("sniffed {}", r.sniffed);
            println!(
                "delivered_replay {} loss_replay {:.4}",
                r.delivered_replay, r.loss_replay
            );
            println!("mutated_delivered {}", r.mutated_delivered);
        }
    }
    Ok(())
}

fn follow(a: FollowArgs) -> Result<()> {
    let packets: Vec<BlePacket> = parse_packet_log(&read_text(&a.packets)?)?;
    let (req, params) = packets
        .iter()
        .filter(|p| p.kind == ChannelKind::Advertising && p.crc_ok)
        .find_map(|p| match p.adv_pdu() {
            Some(Ok(pdu @ AdvPdu::ConnectReq { .. })) => Some((p, parse_connect_req(&pdu.payload()))),
            _ => None,
        })
        .ok_or_else(|| Error::Argument("no CRC-valid CONNECT_REQ in the packet log".into()))?;
    let params = params?;
    let t_connect = req.t_start_s + req.air_bits() as f64 * 1e-6;
    let span_end = a
        .span_end
        .or_else(|| packets.last().map(|p| p.t_start_s))
        .unwrap_or(t_connect);
    let events = annotate_session(
        &packets,
        &params,
        t_connect,
        &FollowConfig {
            tolerance_s: a.tolerance,
            span_end_s: span_end,
        },
    )?;
    println!(
        "# aa {} crc_init {:06x} interval {} hop {} channels {}",
        params.aa,
        params.crc_init,
        params.interval,
        params.hop,
        params.used_channels().len()
    );
    println!("# event\tchannel\tt_expected_s\tpackets\tstatus");
    for ev in &events {
        println!(
            "{}\t{}\t{:.6}\t{}\t{}",
            ev.index,
            ev.channel,
            ev.t_expected_s,
            ev.packets.len(),
            if ev.missing { "missing" } else { "ok" }
        );
    }
    let missing = events.iter().filter(|e| e.missing).count();
    eprintln!("{} events, {missing} missing", events.len());
    Ok(())
}

fn zigbee_decode_cmd(a: ZigbeeDecodeArgs) -> Result<()> {
    let cap = read_capture_with(&a.capture.capture, a.capture.overrides())?;
    let mut cfg = ZigbeeConfig {
        channels: a.capture.channels.clone(),
        threads: a.capture.threads,
        ..ZigbeeConfig::default()
    };
    cfg.rx.sync_max_errors = a.sync_max_errors;
    let records = zigbee_decode(&cap, &cfg)?;
    println!("# time_s\tchannel\tseq\tchip_errors\tfcs\tmac_header\tpayload");
    for r in &records {
        let f = &r.frame;
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.t_start_s,
            r.channel,
            f.sequence(),
            f.chip_errors,
            if f.fcs_ok { "ok" } else { "bad" },
            hex::encode(&f.mac_header),
            hex::encode(&f.payload)
        );
    }
    Ok(())
}

fn zigbee_synth(a: SynthArgs) -> Result<()> {
    let (cfg, frames) = parse_zigbee_scene(&read_text(&a.scene)?)?;
    let cap = compose_zigbee_scene(&frames, &cfg)?;
    write_capture(&cap, &a.output)?;
    info!("{} frames, {} samples", frames.len(), cap.samples.len());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let packets = parse_packet_log(&read_text(&a.packets)?)?;
    print!(
        "{}",
        render_report(&CaptureReport::from_packet_list(&packets), a.format.into())
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Decode(a) => decode(a),
        Cmd::Synth(a) => synth(a),
        Cmd::MitmSim(a) => mitm(a),
        Cmd::Follow(a) => follow(a),
        Cmd::ZigbeeDecode(a) => zigbee_decode_cmd(a),
        Cmd::ZigbeeSynth(a) => zigbee_synth(a),
        Cmd::Report(a) => report(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
