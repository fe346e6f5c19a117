//! The MAC frame check sequence: CRC-16, polynomial x^16 + x^12 + x^5 + 1,
//! initial value 0, processed LSB first.

const POLY_REFLECTED: u16 = 0x8408;

const TABLE: [u16; 256] = {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u16;
        let mut b = 0;
        while b < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ POLY_REFLECTED
            } else {
                crc >> 1
            };
            b += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

pub fn fcs16(bytes: &[u8]) -> u16 {
    bytes
        .iter()
        .fold(0u16, |crc, b| (crc >> 8) ^ TABLE[usize::from((crc as u8) ^ b)])
}

/// Frame with its FCS appended, low byte first.
pub fn append_fcs(bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    out.extend_from_slice(&fcs16(bytes).to_le_bytes());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Long division of the message polynomial (bits in transmission order,
    /// LSB of each byte first) times x^16 by the generator; the remainder's
    /// x^15 coefficient is the first FCS bit on air.
    fn division_oracle(bytes: &[u8]) -> u16 {
        let gen: u32 = (1 << 16) | (1 << 12) | (1 << 5) | 1;
        let mut bits: Vec<u8> = bytes
            .iter()
            .flat_map(|b| (0..8).map(move |i| (b >> i) & 1))
            .collect();
        bits.extend([0u8; 16]);
        let mut rem: u32 = 0;
        for bit in bits {
            rem = (rem << 1) | u32::from(bit);
            if rem & (1 << 16) != 0 {
                rem ^= gen;
            }
        }
        // Remainder coefficient x^15 goes first, i.e. into bit 0.
        (0..16).fold(0u16, |acc, i| acc | ((((rem >> (15 - i)) & 1) as u16) << i))
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(fcs16(&[]), 0);
    }

    #[test]
    fn check_value() {
        // Zero-init, reflected 0x1021 over "123456789".
        assert_eq!(fcs16(b"123456789"), 0x2189);
    }

    #[test]
    fn matches_division_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..2000 {
            let n = rng.random_range(0..130);
            let data: Vec<u8> = (0..n).map(|_| rng.random()).collect();
            assert_eq!(fcs16(&data), division_oracle(&data));
        }
    }

    #[test]
    fn append_check_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..1000 {
            let n = rng.random_range(0..125);
            let data: Vec<u8> = (0..n).map(|_| rng.random()).collect();
            assert_eq!(fcs16(&append_fcs(&data)), 0);
        }
    }
}
