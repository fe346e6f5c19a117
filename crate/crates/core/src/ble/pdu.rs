//! Advertising-channel PDU headers and payloads.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MAX_ADV_PAYLOAD: usize = 37;
pub const MAX_ADV_DATA: usize = 31;
pub const MAX_DATA_PAYLOAD: usize = 31;
pub const LL_DATA_LEN: usize = 22;
pub const CONNECT_REQ_LEN: usize = 34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PduType {
    AdvInd,
    AdvDirectInd,
    AdvNonconnInd,
    ScanReq,
    ScanRsp,
    ConnectReq,
    AdvScanInd,
    Unknown(u8),
}

impl PduType {
    pub fn from_code(code: u8) -> Self {
        match code & 0x0F {
            0 => PduType::AdvInd,
            1 => PduType::AdvDirectInd,
            2 => PduType::AdvNonconnInd,
            3 => PduType::ScanReq,
            4 => PduType::ScanRsp,
            5 => PduType::ConnectReq,
            6 => PduType::AdvScanInd,
            other => PduType::Unknown(other),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            PduType::AdvInd => 0,
            PduType::AdvDirectInd => 1,
            PduType::AdvNonconnInd => 2,
            PduType::ScanReq => 3,
            PduType::ScanRsp => 4,
            PduType::ConnectReq => 5,
            PduType::AdvScanInd => 6,
            PduType::Unknown(c) => *c & 0x0F,
        }
    }
}

impl fmt::Display for PduType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PduType::AdvInd => write!(f, "ADV_IND"),
            PduType::AdvDirectInd => write!(f, "ADV_DIRECT_IND"),
            PduType::AdvNonconnInd => write!(f, "ADV_NONCONN_IND"),
            PduType::ScanReq => write!(f, "SCAN_REQ"),
            PduType::ScanRsp => write!(f, "SCAN_RSP"),
            PduType::ConnectReq => write!(f, "CONNECT_REQ"),
            PduType::AdvScanInd => write!(f, "ADV_SCAN_IND"),
            PduType::Unknown(c) => write!(f, "UNKNOWN({c})"),
        }
    }
}

/// 16-bit advertising header. Bit 0 of byte 0 goes on air first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AdvHeader {
    pub pdu_type: PduType,
    pub rfu_a: u8,
    pub tx_add: bool,
    pub rx_add: bool,
    pub length: u8,
    pub rfu_b: u8,
}

impl AdvHeader {
    pub fn new(pdu_type: PduType, tx_add: bool, rx_add: bool, length: u8) -> Self {
        AdvHeader {
            pdu_type,
            rfu_a: 0,
            tx_add,
            rx_add,
            length,
            rfu_b: 0,
        }
    }

    pub fn from_bytes(b: [u8; 2]) -> Self {
        AdvHeader {
            pdu_type: PduType::from_code(b[0]),
            rfu_a: (b[0] >> 4) & 0x03,
            tx_add: b[0] & 0x40 != 0,
            rx_add: b[0] & 0x80 != 0,
            length: b[1] & 0x3F,
            rfu_b: b[1] >> 6,
        }
    }

    pub fn to_bytes(&self) -> [u8; 2] {
        [
            self.pdu_type.code()
                | (self.rfu_a & 0x03) << 4
                | (self.tx_add as u8) << 6
                | (self.rx_add as u8) << 7,
            (self.length & 0x3F) | (self.rfu_b & 0x03) << 6,
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.rfu_a == 0 && self.rfu_b == 0 && self.length as usize <= MAX_ADV_PAYLOAD
    }
}

/// Bits of the 16-bit header that must be zero, as header bit positions.
pub const ADV_HEADER_RFU_BITS: [usize; 4] = [4, 5, 14, 15];
pub const DATA_HEADER_RFU_BITS: [usize; 6] = [5, 6, 7, 13, 14, 15];

/// Length field of a data-channel header (5 bits, byte 1).
pub fn data_header_length(header: u16) -> u8 {
    ((header >> 8) & 0x1F) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketHeader {
    Advertising(AdvHeader),
    Data(u16),
}

impl PacketHeader {
    pub fn to_bytes(&self) -> [u8; 2] {
        match self {
            PacketHeader::Advertising(h) => h.to_bytes(),
            PacketHeader::Data(raw) => raw.to_le_bytes(),
        }
    }

    pub fn length(&self) -> u8 {
        match self {
            PacketHeader::Advertising(h) => h.length,
            PacketHeader::Data(raw) => data_header_length(*raw),
        }
    }
}

/// Device address in on-air byte order. Displayed most significant byte
/// first, the way addresses are usually printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BdAddr(pub [u8; 6]);

impl BdAddr {
    fn take(bytes: &[u8], at: usize, field: &'static str) -> Result<BdAddr> {
        bytes
            .get(at..at + 6)
            .map(|s| BdAddr(s.try_into().unwrap()))
            .ok_or_else(|| {
                Error::parse(
                    field,
                    format!("needs 6 bytes at offset {at}, have {}", bytes.len()),
                )
            })
    }
}

impl fmt::Display for BdAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.0.iter().rev().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl FromStr for BdAddr {
    type Err = Error;

    /// Accepts `41:e0:30:2e:66:69` or `41e0302e6669`, most significant first.
    fn from_str(s: &str) -> Result<Self> {
        let digits: String = s.chars().filter(|c| *c != ':').collect();
        let bytes = hex::decode(&digits).map_err(|e| Error::parse("address", e.to_string()))?;
        let mut arr: [u8; 6] = bytes
            .try_into()
            .map_err(|_| Error::parse("address", "expected 6 bytes"))?;
        arr.reverse();
        Ok(BdAddr(arr))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdvPdu {
    AdvInd {
        adv_a: BdAddr,
        adv_data: Vec<u8>,
    },
    AdvDirectInd {
        adv_a: BdAddr,
        init_a: BdAddr,
    },
    AdvNonconnInd {
        adv_a: BdAddr,
        adv_data: Vec<u8>,
    },
    ScanReq {
        scan_a: BdAddr,
        adv_a: BdAddr,
    },
    ScanRsp {
        adv_a: BdAddr,
        scan_rsp_data: Vec<u8>,
    },
    ConnectReq {
        init_a: BdAddr,
        adv_a: BdAddr,
        ll_data: [u8; LL_DATA_LEN],
    },
    AdvScanInd {
        adv_a: BdAddr,
        adv_data: Vec<u8>,
    },
    Unknown {
        pdu_type: u8,
        payload: Vec<u8>,
    },
}

impl AdvPdu {
    pub fn pdu_type(&self) -> PduType {
        match self {
            AdvPdu::AdvInd { .. } => PduType::AdvInd,
            AdvPdu::AdvDirectInd { .. } => PduType::AdvDirectInd,
            AdvPdu::AdvNonconnInd { .. } => PduType::AdvNonconnInd,
            AdvPdu::ScanReq { .. } => PduType::ScanReq,
            AdvPdu::ScanRsp { .. } => PduType::ScanRsp,
            AdvPdu::ConnectReq { .. } => PduType::ConnectReq,
            AdvPdu::AdvScanInd { .. } => PduType::AdvScanInd,
            AdvPdu::Unknown { pdu_type, .. } => PduType::from_code(*pdu_type),
        }
    }

    pub fn adv_a(&self) -> Option<BdAddr> {
        match self {
            AdvPdu::AdvInd { adv_a, .. }
            | AdvPdu::AdvDirectInd { adv_a, .. }
            | AdvPdu::AdvNonconnInd { adv_a, .. }
            | AdvPdu::ScanReq { adv_a, .. }
            | AdvPdu::ScanRsp { adv_a, .. }
            | AdvPdu::ConnectReq { adv_a, .. }
            | AdvPdu::AdvScanInd { adv_a, .. } => Some(*adv_a),
            AdvPdu::Unknown { .. } => None,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let cat = |a: &BdAddr, rest: &[u8]| [&a.0[..], rest].concat();
        match self {
            AdvPdu::AdvInd { adv_a, adv_data }
            | AdvPdu::AdvNonconnInd { adv_a, adv_data }
            | AdvPdu::AdvScanInd { adv_a, adv_data } => cat(adv_a, adv_data),
            AdvPdu::ScanRsp { adv_a, scan_rsp_data } => cat(adv_a, scan_rsp_data),
            AdvPdu::AdvDirectInd { adv_a, init_a } => cat(adv_a, &init_a.0),
            AdvPdu::ScanReq { scan_a, adv_a } => cat(scan_a, &adv_a.0),
            AdvPdu::ConnectReq {
                init_a,
                adv_a,
                ll_data,
            } => [&init_a.0[..], &adv_a.0[..], &ll_data[..]].concat(),
            AdvPdu::Unknown { payload, .. } => payload.clone(),
        }
    }

    /// Header matching this PDU's payload length.
    pub fn header(&self, tx_add: bool, rx_add: bool) -> Result<AdvHeader> {
        let len = self.payload().len();
        if len > MAX_ADV_PAYLOAD {
            return Err(Error::Argument(format!(
                "advertising payload of {len} bytes exceeds {MAX_ADV_PAYLOAD}"
            )));
        }
        Ok(AdvHeader::new(self.pdu_type(), tx_add, rx_add, len as u8))
    }

    /// Header bytes followed by payload, ready for CRC and whitening.
    pub fn encode(&self, tx_add: bool, rx_add: bool) -> Result<Vec<u8>> {
        let header = self.header(tx_add, rx_add)?;
        Ok([&header.to_bytes()[..], &self.payload()].concat())
    }
}

fn rest_max(bytes: &[u8], field: &'static str, max: usize) -> Result<Vec<u8>> {
    if bytes.len() > max {
        return Err(Error::parse(
            field,
            format!("{} bytes exceeds {max}", bytes.len()),
        ));
    }
    Ok(bytes.to_vec())
}

pub fn parse_adv_pdu(header: &AdvHeader, payload: &[u8]) -> Result<AdvPdu> {
    if header.length as usize != payload.len() {
        return Err(Error::parse(
            "length",
            format!(
                "header says {} bytes, payload has {}",
                header.length,
                payload.len()
            ),
        ));
    }
    let pdu = match header.pdu_type {
        PduType::AdvInd => AdvPdu::AdvInd {
            adv_a: BdAddr::take(payload, 0, "AdvA")?,
            adv_data: rest_max(&payload[6..], "AdvData", MAX_ADV_DATA)?,
        },
        PduType::AdvNonconnInd => AdvPdu::AdvNonconnInd {
            adv_a: BdAddr::take(payload, 0, "AdvA")?,
            adv_data: rest_max(&payload[6..], "AdvData", MAX_ADV_DATA)?,
        },
        PduType::AdvScanInd => AdvPdu::AdvScanInd {
            adv_a: BdAddr::take(payload, 0, "AdvA")?,
            adv_data: rest_max(&payload[6..], "AdvData", MAX_ADV_DATA)?,
        },
        PduType::ScanRsp => AdvPdu::ScanRsp {
            adv_a: BdAddr::take(payload, 0, "AdvA")?,
            scan_rsp_data: rest_max(&payload[6..], "ScanRspData", MAX_ADV_DATA)?,
        },
        PduType::AdvDirectInd => AdvPdu::AdvDirectInd {
            adv_a: BdAddr::take(payload, 0, "AdvA")?,
            init_a: BdAddr::take(payload, 6, "InitA")?,
        },
        PduType::ScanReq => AdvPdu::ScanReq {
            scan_a: BdAddr::take(payload, 0, "ScanA")?,
            adv_a: BdAddr::take(payload, 6, "AdvA")?,
        },
        PduType::ConnectReq => {
            let init_a = BdAddr::take(payload, 0, "InitA")?;
            let adv_a = BdAddr::take(payload, 6, "AdvA")?;
            let ll_data = payload
                .get(12..12 + LL_DATA_LEN)
                .ok_or_else(|| {
                    Error::parse(
                        "LLData",
                        format!("needs {LL_DATA_LEN} bytes after InitA and AdvA"),
                    )
                })?
                .try_into()
                .unwrap();
            AdvPdu::ConnectReq {
                init_a,
                adv_a,
                ll_data,
            }
        }
        PduType::Unknown(code) => AdvPdu::Unknown {
            pdu_type: code,
            payload: payload.to_vec(),
        },
    };
    Ok(pdu)
}
