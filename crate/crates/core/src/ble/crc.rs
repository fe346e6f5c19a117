//! BLE CRC-24, polynomial x^24 + x^10 + x^9 + x^6 + x^4 + x^3 + x + 1.
//!
//! The register runs bit-reflected so data can be fed LSB first a byte at a
//! time. CRC values are returned in wire form: `to_le_bytes()[..3]` are the
//! three CRC bytes as sent, each LSB first.

pub const ADVERTISING_CRC_INIT: u32 = 0x555555;

/// Reflected polynomial (0x00065B bit-reversed over 24 bits).
const POLY_REFLECTED: u32 = 0xDA6000;

const fn build_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut state = i as u32;
        let mut bit = 0;
        while bit < 8 {
            state = if state & 1 == 1 {
                (state >> 1) ^ POLY_REFLECTED
            } else {
                state >> 1
            };
            bit += 1;
        }
        table[i] = state;
        i += 1;
    }
    table
}

static TABLE: [u32; 256] = build_table();

pub fn reverse24(v: u32) -> u32 {
    (v & 0xFF_FFFF).reverse_bits() >> 8
}

/// CRC over header + payload with the given 24-bit CRCInit.
pub fn crc24(pdu: &[u8], init: u32) -> u32 {
    let mut state = reverse24(init);
    for &byte in pdu {
        state = (state >> 8) ^ TABLE[((state ^ byte as u32) & 0xFF) as usize];
    }
    state & 0xFF_FFFF
}

pub fn crc_to_bytes(crc: u32) -> [u8; 3] {
    let b = crc.to_le_bytes();
    [b[0], b[1], b[2]]
}

pub fn crc_from_bytes(bytes: &[u8]) -> u32 {
    bytes[0] as u32 | (bytes[1] as u32) << 8 | (bytes[2] as u32) << 16
}
