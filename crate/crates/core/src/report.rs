//! Per-device recovery report: false positives, recovered packets and the
//! mean reported SNR for each access address.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::ble::{AccessAddress, BlePacket};
use crate::iq_io::CaptureMeta;
use crate::pipeline::ScanStats;

pub const REPORT_COLUMNS: [&str; 4] = [
    "Device(AA)",
    "False-positive packet count",
    "Recovered packet count",
    "Reported SNR dB",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceRow {
    pub device: String,
    pub false_positives: u64,
    pub recovered: u64,
    /// Mean squelch SNR over recovered packets.
    pub mean_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub label: Option<String>,
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    pub duration_s: f64,
    pub channels: Vec<u8>,
    pub windows: u64,
    pub squelch_open: u64,
    pub unverified: u64,
    pub truncated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptureReport {
    pub devices: Vec<DeviceRow>,
    pub totals: DeviceRow,
    pub run: Option<RunInfo>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl CaptureReport {
    /// Groups packets by access address. CRC-valid packets count as
    /// recovered, CRC failures as false positives.
    pub fn from_packet_list(packets: &[BlePacket]) -> Self {
        let mut groups: BTreeMap<AccessAddress, (u64, Vec<f64>)> = BTreeMap::new();
        for p in packets {
            let g = groups.entry(p.aa).or_default();
            if p.crc_ok {
                g.1.push(p.snr_db);
            } else {
                g.0 += 1;
            }
        }
        let devices: Vec<DeviceRow> = groups
            .iter()
            .map(|(aa, (fp, snrs))| DeviceRow {
                device: aa.to_string(),
                false_positives: *fp,
                recovered: snrs.len() as u64,
                mean_snr_db: mean(snrs),
            })
            .collect();
        let all: Vec<f64> = groups.values().flat_map(|g| g.1.iter().copied()).collect();
        let totals = DeviceRow {
            device: "total".into(),
            false_positives: devices.iter().map(|d| d.false_positives).sum(),
            recovered: devices.iter().map(|d| d.recovered).sum(),
            mean_snr_db: mean(&all),
        };
        CaptureReport {
            devices,
            totals,
            run: None,
        }
    }

    pub fn from_packets(
        packets: &[BlePacket],
        meta: &CaptureMeta,
        total_samples: u64,
        channels: Vec<u8>,
        stats: ScanStats,
    ) -> Self {
        let mut report = Self::from_packet_list(packets);
        report.run = Some(RunInfo {
            label: meta.label.clone(),
            sample_rate_hz: meta.sample_rate_hz,
            center_freq_hz: meta.center_freq_hz,
            duration_s: total_samples as f64 / meta.sample_rate_hz,
            channels,
            windows: stats.windows,
            squelch_open: stats.squelch_open,
            unverified: stats.unverified,
            truncated: stats.truncated,
        });
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Delimited,
}

fn snr_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |s| format!("{s:.1}"))
}

fn cells(row: &DeviceRow) -> [String; 4] {
    [
        row.device.clone(),
        row.false_positives.to_string(),
        row.recovered.to_string(),
        snr_cell(row.mean_snr_db),
    ]
}

pub fn render_report(report: &CaptureReport, format: ReportFormat) -> String {
    let rows: Vec<[String; 4]> = report.devices.iter().map(cells).collect();
    let mut out = String::new();
    match format {
        ReportFormat::Delimited => {
            out.push_str(&REPORT_COLUMNS.join(","));
            out.push('\n');
            for r in &rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Text => {
            let mut all = rows.clone();
            if !rows.is_empty() {
                all.push(cells(&report.totals));
            }
            let widths: Vec<usize> = (0..4)
                .map(|c| {
                    all.iter()
                        .map(|r| r[c].len())
                        .chain([REPORT_COLUMNS[c].len()])
                        .max()
                        .unwrap()
                })
                .collect();
            let line = |out: &mut String, cols: [&str; 4]| {
                let text: Vec<String> = cols
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if i == 0 {
                            format!("{c:<w$}", w = widths[i])
                        } else {
                            format!("{c:>w$}", w = widths[i])
                        }
                    })
                    .collect();
                writeln!(out, "{}", text.join("  ").trim_end()).unwrap();
            };
            line(&mut out, REPORT_COLUMNS);
            for r in &all {
                line(&mut out, [&r[0], &r[1], &r[2], &r[3]]);
            }
        }
    }
    out
}

/// One-paragraph description of the run behind a report.
pub fn render_run_info(run: &RunInfo) -> String {
    let channels: Vec<String> = run.channels.iter().map(|c| c.to_string()).collect();
    format!(
        "capture {}: {:.3} s at {} Hz around {} Hz\nchannels {}\n{} windows, {} with squelch open, {} unverified, {} truncated\n",
        run.label.as_deref().unwrap_or("-"),
        run.duration_s,
        run.sample_rate_hz,
        run.center_freq_hz,
        channels.join(","),
        run.windows,
        run.squelch_open,
        run.unverified,
        run.truncated
    )
}
