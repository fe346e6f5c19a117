//! PPDU and MPDU framing: synchronization header, PHY header, MAC header,
//! payload and FCS.

use std::fmt;

use crate::error::{Error, Result};

use super::fcs::{append_fcs, fcs16};

pub const PREAMBLE_BYTES: usize = 4;
pub const SFD: u8 = 0xA7;
pub const MAX_PSDU: usize = 127;
pub const FCS_BYTES: usize = 2;

/// A PHY frame: four zero bytes, the SFD, a 7-bit length and the MPDU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZigbeePpdu {
    pub mpdu: Vec<u8>,
}

impl ZigbeePpdu {
    pub fn new(mpdu: Vec<u8>) -> Result<Self> {
        if mpdu.len() > MAX_PSDU {
            return Err(Error::Argument(format!(
                "MPDU of {} bytes exceeds {MAX_PSDU}",
                mpdu.len()
            )));
        }
        Ok(ZigbeePpdu { mpdu })
    }

    /// Builds the MPDU from a MAC header and payload, appending the FCS.
    pub fn from_parts(mac_header: &[u8], payload: &[u8]) -> Result<Self> {
        Self::new(append_fcs(&[mac_header, payload].concat()))
    }

    pub fn length(&self) -> u8 {
        self.mpdu.len() as u8
    }

    /// Serialized frame, preamble first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; PREAMBLE_BYTES];
        out.push(SFD);
        out.push(self.length());
        out.extend_from_slice(&self.mpdu);
        out
    }
}

/// The MAC frame type field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameType {
    Beacon,
    Data,
    Ack,
    Command,
    Reserved(u8),
}

impl FrameType {
    fn from_code(code: u8) -> Self {
        match code {
            0 => FrameType::Beacon,
            1 => FrameType::Data,
            2 => FrameType::Ack,
            3 => FrameType::Command,
            c => FrameType::Reserved(c),
        }
    }
}

/// Decoded frame-control field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameControl {
    pub frame_type: FrameType,
    pub security: bool,
    pub frame_pending: bool,
    pub ack_request: bool,
    pub pan_id_compression: bool,
    pub dest_addr_mode: u8,
    pub frame_version: u8,
    pub src_addr_mode: u8,
}

impl FrameControl {
    pub fn from_u16(v: u16) -> Self {
        FrameControl {
            frame_type: FrameType::from_code((v & 0x7) as u8),
            security: v & (1 << 3) != 0,
            frame_pending: v & (1 << 4) != 0,
            ack_request: v & (1 << 5) != 0,
            pan_id_compression: v & (1 << 6) != 0,
            dest_addr_mode: ((v >> 10) & 0x3) as u8,
            frame_version: ((v >> 12) & 0x3) as u8,
            src_addr_mode: ((v >> 14) & 0x3) as u8,
        }
    }

    /// Bytes of MAC header implied by the addressing modes: frame control,
    /// sequence number, then PAN identifiers and addresses.
    pub fn header_len(&self) -> Result<usize> {
        let addr = |mode: u8, which: &'static str| match mode {
            0 => Ok(0),
            2 => Ok(2),
            3 => Ok(8),
            _ => Err(Error::parse(which, format!("reserved addressing mode {mode}"))),
        };
        let dest = addr(self.dest_addr_mode, "dest_addr_mode")?;
        let src = addr(self.src_addr_mode, "src_addr_mode")?;
        let dest_pan = if dest > 0 { 2 } else { 0 };
        let src_pan = if src > 0 && !(self.pan_id_compression && dest > 0) {
            2
        } else {
            0
        };
        Ok(3 + dest_pan + dest + src_pan + src)
    }
}

/// Header for a data frame with short addresses and PAN ID compression.
pub fn short_data_header(seq: u8, pan: u16, dest: u16, src: u16) -> Vec<u8> {
    let fc: u16 = 0x0001 | (1 << 6) | (2 << 10) | (2 << 14);
    let mut h = fc.to_le_bytes().to_vec();
    h.push(seq);
    h.extend_from_slice(&pan.to_le_bytes());
    h.extend_from_slice(&dest.to_le_bytes());
    h.extend_from_slice(&src.to_le_bytes());
    h
}

/// A parsed MAC frame. An auxiliary security header, if any, is left at the
/// start of `payload`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZigbeeFrame {
    pub mac_header: Vec<u8>,
    pub payload: Vec<u8>,
    pub fcs: u16,
    pub fcs_ok: bool,
    /// Total chip distance of the symbol decisions, 0 when not received
    /// over the air.
    pub chip_errors: u32,
}

impl ZigbeeFrame {
    pub fn frame_control(&self) -> FrameControl {
        FrameControl::from_u16(u16::from_le_bytes([self.mac_header[0], self.mac_header[1]]))
    }

    pub fn sequence(&self) -> u8 {
        self.mac_header[2]
    }

    pub fn mpdu(&self) -> Vec<u8> {
        let mut out = [&self.mac_header[..], &self.payload].concat();
        out.extend_from_slice(&self.fcs.to_le_bytes());
        out
    }
}

impl fmt::Display for ZigbeeFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hdr {} payload {} fcs {:04x} {}",
            hex::encode(&self.mac_header),
            hex::encode(&self.payload),
            self.fcs,
            if self.fcs_ok { "ok" } else { "bad" }
        )
    }
}

/// Parses the bytes that follow the SFD: the PHY length byte and the MPDU.
/// Bytes beyond the MPDU are ignored.
pub fn parse_ppdu(bytes: &[u8]) -> Result<ZigbeeFrame> {
    let (&phr, rest) = bytes
        .split_first()
        .ok_or_else(|| Error::parse("length", "missing PHY header"))?;
    let len = usize::from(phr);
    if len > MAX_PSDU {
        return Err(Error::Format(format!("frame length {len} exceeds {MAX_PSDU}")));
    }
    if rest.len() < len {
        return Err(Error::parse(
            "mpdu",
            format!("truncated: {} of {len} bytes", rest.len()),
        ));
    }
    let mpdu = &rest[..len];
    if len < 3 + FCS_BYTES {
        return Err(Error::parse(
            "mac_header",
            format!("MPDU of {len} bytes too short"),
        ));
    }
    let fc = FrameControl::from_u16(u16::from_le_bytes([mpdu[0], mpdu[1]]));
    let header_len = fc.header_len()?;
    if header_len + FCS_BYTES > len {
        return Err(Error::parse(
            "mac_header",
            format!("{header_len}-byte header does not fit a {len}-byte MPDU"),
        ));
    }
    let body = &mpdu[..len - FCS_BYTES];
    let fcs = u16::from_le_bytes([mpdu[len - 2], mpdu[len - 1]]);
    Ok(ZigbeeFrame {
        mac_header: body[..header_len].to_vec(),
        payload: body[header_len..].to_vec(),
        fcs,
        fcs_ok: fcs16(body) == fcs,
        chip_errors: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn marker_payload_roundtrip() {
        let ppdu = ZigbeePpdu::from_parts(
            &short_data_header(7, 0x1234, 0xFFFF, 0x0001),
            &[0xFF, 0xEE, 0xFF, 0xEE],
        )
        .unwrap();
        let bytes = ppdu.to_bytes();
        assert_eq!(&bytes[..6], &[0, 0, 0, 0, SFD, 15]);
        let f = parse_ppdu(&bytes[5..]).unwrap();
        assert_eq!(f.payload, vec![0xFF, 0xEE, 0xFF, 0xEE]);
        assert!(f.fcs_ok);
        assert_eq!(f.sequence(), 7);
        assert_eq!(f.frame_control().frame_type, FrameType::Data);
        assert_eq!(f.mpdu(), ppdu.mpdu);
    }

    #[test]
    fn flipped_bit_fails_fcs() {
        let ppdu = ZigbeePpdu::from_parts(&short_data_header(1, 1, 2, 3), &[0xFF, 0xEE, 0xFF, 0xEE]).unwrap();
        let mut bytes = ppdu.to_bytes();
        bytes[5 + 1 + 9 + 2] ^= 0x10;
        assert!(!parse_ppdu(&bytes[5..]).unwrap().fcs_ok);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_ppdu(&[]), Err(Error::Parse { .. })));
        assert!(matches!(parse_ppdu(&[200, 0, 0]), Err(Error::Format(_))));
        assert!(matches!(
            parse_ppdu(&[10, 1, 2, 3]),
            Err(Error::Parse { field: "mpdu", .. })
        ));
        // Reserved destination addressing mode.
        let fc: u16 = 1 | (1 << 10);
        let mut m = fc.to_le_bytes().to_vec();
        m.extend([0, 0, 0, 0]);
        assert!(matches!(
            parse_ppdu(&[[6u8].as_slice(), &m].concat()),
            Err(Error::Parse { .. })
        ));
        assert!(ZigbeePpdu::new(vec![0; 128]).is_err());
    }

    #[test]
    fn header_lengths() {
        let fc = |d: u16, s: u16, comp: bool| {
            FrameControl::from_u16((d << 10) | (s << 14) | if comp { 1 << 6 } else { 0 })
        };
        assert_eq!(fc(0, 0, false).header_len().unwrap(), 3);
        assert_eq!(fc(2, 2, true).header_len().unwrap(), 9);
        assert_eq!(fc(2, 2, false).header_len().unwrap(), 11);
        assert_eq!(fc(3, 3, false).header_len().unwrap(), 23);
        assert_eq!(fc(0, 3, true).header_len().unwrap(), 13);
    }

    proptest! {
        #[test]
        fn build_then_parse(seq: u8, pan: u16, dst: u16, src: u16,
                            payload in proptest::collection::vec(any::<u8>(), 0..=116)) {
            let hdr = short_data_header(seq, pan, dst, src);
            let ppdu = ZigbeePpdu::from_parts(&hdr, &payload).unwrap();
            let f = parse_ppdu(&ppdu.to_bytes()[5..]).unwrap();
            prop_assert_eq!(f.mac_header, hdr);
            prop_assert_eq!(f.payload, payload);
            prop_assert!(f.fcs_ok);
        }
    }
}
