//! The 2.4 GHz O-QPSK symbol-to-chip table and the correlator.

use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const CHIPS_PER_SYMBOL: usize = 32;
pub const MIN_ROW_DISTANCE: u32 = 12;

/// Chips c0..c31 of symbol 0, c0 first.
const SYMBOL0: &str = "11011001110000110101001000101110";

/// Sixteen 32-chip rows. Bit `i` of a row is chip `c_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnTable {
    rows: [u32; 16],
}

impl PnTable {
    /// Builds the standard table and checks its distance structure: symbols
    /// 1..7 are symbol 0 cyclically delayed by 4k chips, symbols 8..15 are
    /// 0..7 with the odd-indexed chips inverted.
    pub fn standard() -> Result<Self> {
        let base = SYMBOL0
            .bytes()
            .enumerate()
            .fold(0u32, |acc, (i, b)| acc | (u32::from(b == b'1') << i));
        let mut rows = [0u32; 16];
        for k in 0..8 {
            rows[k] = base.rotate_left(4 * k as u32);
            rows[k + 8] = rows[k] ^ 0xAAAA_AAAA;
        }
        let table = PnTable { rows };
        let d = table.min_distance();
        if d < MIN_ROW_DISTANCE {
            return Err(Error::Design(format!(
                "chip table minimum distance {d} below {MIN_ROW_DISTANCE}"
            )));
        }
        Ok(table)
    }

    pub fn row(&self, symbol: u8) -> u32 {
        self.rows[usize::from(symbol & 0x0F)]
    }

    /// Chips of `symbol` as 0/1 values, c0 first.
    pub fn chips(&self, symbol: u8) -> [u8; CHIPS_PER_SYMBOL] {
        let row = self.row(symbol);
        std::array::from_fn(|i| ((row >> i) & 1) as u8)
    }

    /// Smallest Hamming distance over all 120 row pairs.
    pub fn min_distance(&self) -> u32 {
        let mut best = u32::MAX;
        for i in 0..16 {
            for j in i + 1..16 {
                best = best.min((self.rows[i] ^ self.rows[j]).count_ones());
            }
        }
        best
    }

    /// Row nearest to `block`; ties go to the lowest symbol value.
    pub fn nearest(&self, block: u32) -> (u8, u32) {
        let mut best = (0u8, u32::MAX);
        for (k, row) in self.rows.iter().enumerate() {
            let d = (row ^ block).count_ones();
            if d < best.1 {
                best = (k as u8, d);
            }
        }
        best
    }
}

/// The verified standard table, built once.
pub fn pn_table() -> &'static PnTable {
    static TABLE: OnceLock<PnTable> = OnceLock::new();
    TABLE.get_or_init(|| PnTable::standard().expect("standard chip table meets its distance bound"))
}

/// Packs 32 chips (0/1, c0 first) into a row word.
pub fn pack_chips(chips: &[u8]) -> u32 {
    chips
        .iter()
        .take(CHIPS_PER_SYMBOL)
        .enumerate()
        .fold(0u32, |acc, (i, c)| acc | (u32::from(*c & 1) << i))
}

/// Maps each 32-chip block to the nearest table row. Returns the symbols and
/// the chip distance of each decision. A trailing partial block is ignored.
pub fn chip_correlate(chips: &[u8]) -> (Vec<u8>, Vec<u32>) {
    let table = pn_table();
    chips
        .chunks_exact(CHIPS_PER_SYMBOL)
        .map(|block| table.nearest(pack_chips(block)))
        .unzip()
}

/// Chips for a byte sequence, low nibble of each byte first.
pub fn spread(bytes: &[u8]) -> Vec<u8> {
    let table = pn_table();
    bytes
        .iter()
        .flat_map(|b| [b & 0x0F, b >> 4])
        .flat_map(|sym| table.chips(sym))
        .collect()
}
