//! Transmit side: on-air bit assembly, GFSK modulation and wideband scene
//! composition. Doubles as the oracle for the receive chain.

mod gfsk;
mod scene;

pub(crate) use gfsk::gfsk_modulate_span;
pub use gfsk::{gfsk_modulate, GfskConfig, BLE_SYMBOL_RATE_HZ};
pub(crate) use scene::add_noise;
pub use scene::{
    compose_scene, noise_floor_for_snr, parse_scene, SceneConfig, SceneDescription, ScenePacket,
    BURST_TAIL_SYMBOLS,
};

use crate::ble::bits::{bytes_to_bits, u32_to_bits};
use crate::ble::pdu::{data_header_length, AdvHeader, AdvPdu, MAX_ADV_PAYLOAD};
use crate::ble::{crc24, crc_to_bytes, whiten, AccessAddress, ADVERTISING_CRC_INIT};
use crate::error::{Error, Result};

/// On-air bits for a PDU (header followed by payload): preamble, access
/// address, then the whitened PDU and CRC.
pub fn assemble_packet(pdu: &[u8], channel: u8, aa: AccessAddress, crc_init: u32) -> Result<Vec<u8>> {
    if pdu.len() < 2 {
        return Err(Error::Argument("PDU needs a 2-byte header".into()));
    }
    let payload_len = pdu.len() - 2;
    let declared = if channel >= 37 {
        let h = AdvHeader::from_bytes([pdu[0], pdu[1]]);
        if payload_len > MAX_ADV_PAYLOAD {
            return Err(Error::Argument(format!(
                "advertising payload of {payload_len} bytes exceeds {MAX_ADV_PAYLOAD}"
            )));
        }
        h.length as usize
    } else {
        data_header_length(u16::from_le_bytes([pdu[0], pdu[1]])) as usize
    };
    if declared != payload_len {
        return Err(Error::Argument(format!(
            "header length {declared} disagrees with {payload_len} payload bytes"
        )));
    }
    let crc = crc24(pdu, crc_init);
    let body = [pdu, &crc_to_bytes(crc)[..]].concat();
    let mut bits = Vec::with_capacity(8 + 32 + 8 * body.len());
    bits.extend_from_slice(&aa.preamble());
    bits.extend_from_slice(&u32_to_bits(aa.0));
    bits.extend(whiten(&bytes_to_bits(&body), channel)?);
    Ok(bits)
}

/// Assembles an advertising PDU for an advertising channel.
pub fn assemble_adv(pdu: &AdvPdu, tx_add: bool, rx_add: bool, channel: u8) -> Result<Vec<u8>> {
    let bytes = pdu.encode(tx_add, rx_add)?;
    assemble_packet(&bytes, channel, AccessAddress::ADVERTISING, ADVERTISING_CRC_INIT)
}
