//! Access addresses and the validity rules a data-channel address must obey.

use std::fmt;

use super::bits::u32_to_bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccessAddress(pub u32);

impl AccessAddress {
    pub const ADVERTISING: AccessAddress = AccessAddress(0x8E89BED6);

    /// The 32 on-air bits, LSB first.
    pub fn bits(&self) -> [u8; 32] {
        u32_to_bits(self.0)
    }

    pub fn is_advertising(&self) -> bool {
        *self == Self::ADVERTISING
    }

    /// The 8-bit alternating preamble that precedes this address: it ends on
    /// the complement of the address's first bit.
    pub fn preamble(&self) -> [u8; 8] {
        let first = (self.0 & 1) as u8;
        let mut p = [0u8; 8];
        for (i, b) in p.iter_mut().enumerate() {
            *b = if i % 2 == 0 { first } else { first ^ 1 };
        }
        p
    }
}

impl fmt::Display for AccessAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.0)
    }
}

impl std::str::FromStr for AccessAddress {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim_start_matches("0x");
        u32::from_str_radix(s, 16).map(AccessAddress)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AaRule {
    LongRun,
    IsAdvertising,
    OneBitFromAdvertising,
    RepeatedOctet,
    TooManyTransitions,
    FlatHighBits,
}

pub const AA_RULES: [AaRule; 6] = [
    AaRule::LongRun,
    AaRule::IsAdvertising,
    AaRule::OneBitFromAdvertising,
    AaRule::RepeatedOctet,
    AaRule::TooManyTransitions,
    AaRule::FlatHighBits,
];

impl AaRule {
    pub fn violated_by(&self, aa: AccessAddress) -> bool {
        let v = aa.0;
        match self {
            AaRule::LongRun => longest_run(v) > 6,
            AaRule::IsAdvertising => aa.is_advertising(),
            AaRule::OneBitFromAdvertising => (v ^ AccessAddress::ADVERTISING.0).count_ones() == 1,
            AaRule::RepeatedOctet => {
                let b = v.to_le_bytes();
                b.iter().all(|x| *x == b[0])
            }
            AaRule::TooManyTransitions => ((v ^ (v >> 1)) & 0x7FFF_FFFF).count_ones() > 24,
            AaRule::FlatHighBits => (((v ^ (v >> 1)) >> 26) & 0x1F).count_ones() < 2,
        }
    }
}

fn longest_run(v: u32) -> u32 {
    let bits = u32_to_bits(v);
    let mut best = 1;
    let mut run = 1;
    for w in bits.windows(2) {
        if w[0] == w[1] {
            run += 1;
            best = best.max(run);
        } else {
            run = 1;
        }
    }
    best
}

/// Number of validity rules the address breaks.
pub fn aa_offenses(aa: AccessAddress) -> u32 {
    AA_RULES.iter().filter(|r| r.violated_by(aa)).count() as u32
}
