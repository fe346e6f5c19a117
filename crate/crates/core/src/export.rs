//! Packet export: classic pcap with the BLE link-layer pseudo-header, and
//! the tab-separated packet log the CLI subcommands exchange.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::ble::{crc_to_bytes, AccessAddress, AdvHeader, BlePacket, PacketHeader};
use crate::channelizer::{BleChannel, ChannelKind};
use crate::error::{Error, Result};

pub const PCAP_MAGIC: u32 = 0xA1B2_C3D4;
pub const LINKTYPE_BLE_LL_WITH_PHDR: u32 = 256;
pub const PCAP_SNAPLEN: u32 = 65535;

pub const FLAG_DEWHITENED: u16 = 0x0001;
pub const FLAG_SIGNAL_VALID: u16 = 0x0002;
pub const FLAG_NOISE_VALID: u16 = 0x0004;
pub const FLAG_CRC_CHECKED: u16 = 0x0400;
pub const FLAG_CRC_VALID: u16 = 0x0800;

pub const PSEUDO_HEADER_LEN: usize = 10;

pub fn pcap_flags(packet: &BlePacket) -> u16 {
    let mut f = FLAG_DEWHITENED | FLAG_CRC_CHECKED;
    if packet.crc_ok {
        f |= FLAG_CRC_VALID;
    }
    f
}

/// Record body: pseudo-header, then AA, PDU and CRC as on air.
pub fn pcap_record(packet: &BlePacket) -> Vec<u8> {
    let rf = BleChannel::new(packet.channel).map_or(packet.channel, |c| c.rf_channel());
    let reference = match packet.kind {
        ChannelKind::Advertising => AccessAddress::ADVERTISING,
        ChannelKind::Data => packet.aa,
    };
    let mut out = Vec::with_capacity(PSEUDO_HEADER_LEN + 4 + 2 + packet.payload.len() + 3);
    out.push(rf);
    out.push(0);
    out.push(0);
    out.push(packet.aa_offenses().min(255) as u8);
    out.extend_from_slice(&reference.0.to_le_bytes());
    out.extend_from_slice(&pcap_flags(packet).to_le_bytes());
    out.extend_from_slice(&packet.aa.0.to_le_bytes());
    out.extend_from_slice(&packet.pdu_bytes());
    out.extend_from_slice(&crc_to_bytes(packet.crc));
    out
}

/// Writes packets as a pcap stream. Record times are `time_origin_s` plus
/// each packet's offset into the capture.
pub fn write_pcap<W: Write>(mut w: W, packets: &[BlePacket], time_origin_s: f64) -> std::io::Result<()> {
    w.write_all(&PCAP_MAGIC.to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&4u16.to_le_bytes())?;
    w.write_all(&0i32.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&PCAP_SNAPLEN.to_le_bytes())?;
    w.write_all(&LINKTYPE_BLE_LL_WITH_PHDR.to_le_bytes())?;
    for p in packets {
        let t = (time_origin_s + p.t_start_s).max(0.0);
        let mut secs = t.floor();
        let mut usec = ((t - secs) * 1e6).round();
        if usec >= 1e6 {
            secs += 1.0;
            usec -= 1e6;
        }
        let body = pcap_record(p);
        w.write_all(&(secs as u32).to_le_bytes())?;
        w.write_all(&(usec as u32).to_le_bytes())?;
        w.write_all(&(body.len() as u32).to_le_bytes())?;
        w.write_all(&(body.len() as u32).to_le_bytes())?;
        w.write_all(&body)?;
    }
    w.flush()
}

pub fn export_pcap(packets: &[BlePacket], path: impl AsRef<Path>, time_origin_s: f64) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pcap(BufWriter::new(file), packets, time_origin_s).map_err(|e| Error::io(path, e))
}

pub const PACKET_LOG_HEADER: &str = "# time_s\tchannel\taa\tmetric\tsnr_db\tcrc\tpdu\tcrc_hex";

/// One line per packet: time, channel, access address, metric, SNR, CRC
/// flag, PDU hex and CRC hex, tab separated.
pub fn format_packet_log(packets: &[BlePacket]) -> String {
    let mut out = String::from(PACKET_LOG_HEADER);
    out.push('\n');
    for p in packets {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:06x}\n",
            p.t_start_s,
            p.channel,
            p.aa,
            p.metric,
            p.snr_db,
            if p.crc_ok { "ok" } else { "bad" },
            hex::encode(p.pdu_bytes()),
            p.crc
        ));
    }
    out
}

fn field<'a>(cols: &[&'a str], i: usize, name: &'static str, line: usize) -> Result<&'a str> {
    cols.get(i)
        .copied()
        .ok_or_else(|| Error::Format(format!("line {line}: missing column {name}")))
}

fn bad(line: usize, name: &str, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: bad {name}: {e}"))
}

pub fn parse_packet_log(text: &str) -> Result<Vec<BlePacket>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let raw = raw.trim_end();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        let t: f64 = field(&cols, 0, "time", line)?
            .parse()
            .map_err(|e| bad(line, "time", e))?;
        let channel: u8 = field(&cols, 1, "channel", line)?
            .parse()
            .map_err(|e| bad(line, "channel", e))?;
        let ch = BleChannel::new(channel).ok_or_else(|| bad(line, "channel", channel))?;
        let aa: AccessAddress = field(&cols, 2, "aa", line)?
            .parse()
            .map_err(|e| bad(line, "aa", e))?;
        let metric: u32 = field(&cols, 3, "metric", line)?
            .parse()
            .map_err(|e| bad(line, "metric", e))?;
        let snr: f64 = field(&cols, 4, "snr", line)?
            .parse()
            .map_err(|e| bad(line, "snr", e))?;
        let crc_ok = match field(&cols, 5, "crc", line)? {
            "ok" => true,
            "bad" => false,
            other => return Err(bad(line, "crc flag", other)),
        };
        let pdu = hex::decode(field(&cols, 6, "pdu", line)?).map_err(|e| bad(line, "pdu", e))?;
        if pdu.len() < 2 {
            return Err(bad(line, "pdu", "shorter than a header"));
        }
        let crc = u32::from_str_radix(field(&cols, 7, "crc_hex", line)?, 16)
            .map_err(|e| bad(line, "crc_hex", e))?;
        let header = match ch.kind {
            ChannelKind::Advertising => PacketHeader::Advertising(AdvHeader::from_bytes([pdu[0], pdu[1]])),
            ChannelKind::Data => PacketHeader::Data(u16::from_le_bytes([pdu[0], pdu[1]])),
        };
        out.push(BlePacket {
            channel,
            kind: ch.kind,
            aa,
            header,
            payload: pdu[2..].to_vec(),
            crc,
            crc_ok,
            metric,
            snr_db: snr,
            t_start_s: t,
        });
    }
    Ok(out)
}
