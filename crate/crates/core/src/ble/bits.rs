//! On-air bit order helpers. BLE sends every byte LSB first.

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|b| (0..8).map(move |i| (b >> i) & 1))
        .collect()
}

/// Packs LSB-first bits; a trailing partial byte is zero-filled.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, b)| acc | ((b & 1) << i)))
        .collect()
}

pub fn u32_to_bits(value: u32) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = ((value >> i) & 1) as u8;
    }
    out
}

pub fn bits_to_u32(bits: &[u8]) -> u32 {
    bits.iter()
        .take(32)
        .enumerate()
        .fold(0u32, |acc, (i, b)| acc | (((b & 1) as u32) << i))
}

pub fn hamming(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).filter(|(x, y)| (*x & 1) != (*y & 1)).count() as u32
}
