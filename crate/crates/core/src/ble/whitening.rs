//! Data whitening: XOR with the output of a 7-bit LFSR (x^7 + x^4 + 1)
//! seeded from the channel index.

use crate::error::{Error, Result};

fn seed(channel: u8) -> Result<u8> {
    if channel > 39 {
        return Err(Error::Argument(format!("channel {channel} out of range 0..=39")));
    }
    // Position 0 holds 1, positions 1..=6 the index MSB first; position 6
    // (bit 0 here) is the output tap.
    Ok(0x40 | channel)
}

/// Iterator over whitening bits for a channel.
#[derive(Debug, Clone)]
pub struct Whitener {
    lfsr: u8,
}

impl Whitener {
    pub fn new(channel: u8) -> Result<Self> {
        Ok(Whitener { lfsr: seed(channel)? })
    }
}

impl Iterator for Whitener {
    type Item = u8;

    #[inline]
    fn next(&mut self) -> Option<u8> {
        let out = self.lfsr & 1;
        self.lfsr >>= 1;
        if out == 1 {
            self.lfsr ^= 0x44;
        }
        Some(out)
    }
}

pub fn whitening_sequence(channel: u8, len: usize) -> Result<Vec<u8>> {
    Ok(Whitener::new(channel)?.take(len).collect())
}

/// Whitens (or de-whitens) a bit sequence.
pub fn whiten(bits: &[u8], channel: u8) -> Result<Vec<u8>> {
    Ok(bits
        .iter()
        .zip(Whitener::new(channel)?)
        .map(|(b, w)| (b & 1) ^ w)
        .collect())
}

/// Whitens bytes in place, LSB first.
pub fn whiten_bytes(bytes: &mut [u8], channel: u8) -> Result<()> {
    let mut w = Whitener::new(channel)?;
    for byte in bytes.iter_mut() {
        for i in 0..8 {
            *byte ^= w.next().unwrap_or(0) << i;
        }
    }
    Ok(())
}
