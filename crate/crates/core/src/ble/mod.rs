//! BLE link layer: whitening, CRC-24, access-address rules, candidate
//! matching, packet decoding and advertising PDU parsing.

mod aa;
pub mod bits;
mod crc;
mod packet;
pub mod pdu;
mod whitening;

pub use aa::{aa_offenses, AaRule, AccessAddress, AA_RULES};
pub use crc::{crc24, crc_from_bytes, crc_to_bytes, reverse24, ADVERTISING_CRC_INIT};
pub use packet::{
    air_bits, decode_packet, match_candidate, BlePacket, Decoder, MatchConfig, Rejection, AA_BITS, CRC_BITS,
    HEADER_BITS, PREAMBLE_BITS, WINDOW_SYMBOLS,
};
pub use pdu::{parse_adv_pdu, AdvHeader, AdvPdu, BdAddr, PacketHeader, PduType};
pub use whitening::{whiten, whiten_bytes, whitening_sequence, Whitener};
