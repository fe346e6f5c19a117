//! BLE channel map and capture coverage.

use std::fmt;

use crate::iq_io::CaptureMeta;

/// Half-width each covered channel must fit within the capture.
pub const CHANNEL_HALF_WIDTH_HZ: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelKind {
    Advertising,
    Data,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Advertising => "advertising",
            ChannelKind::Data => "data",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleChannel {
    pub index: u8,
    pub center_freq_hz: f64,
    pub kind: ChannelKind,
}

impl BleChannel {
    /// Channel by link-layer index (0..=39).
    pub fn new(index: u8) -> Option<Self> {
        let mhz = match index {
            0..=10 => 2404 + 2 * index as u32,
            11..=36 => 2428 + 2 * (index as u32 - 11),
            37 => 2402,
            38 => 2426,
            39 => 2480,
            _ => return None,
        };
        Some(BleChannel {
            index,
            center_freq_hz: mhz as f64 * 1e6,
            kind: if index >= 37 {
                ChannelKind::Advertising
            } else {
                ChannelKind::Data
            },
        })
    }

    /// RF channel number, `(f - 2402 MHz) / 2 MHz`.
    pub fn rf_channel(&self) -> u8 {
        ((self.center_freq_hz - 2402e6) / 2e6).round() as u8
    }

    pub fn is_advertising(&self) -> bool {
        self.kind == ChannelKind::Advertising
    }
}

pub fn all_channels() -> impl Iterator<Item = BleChannel> {
    (0..40).filter_map(BleChannel::new)
}

/// The BLE channels a capture fully covers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlan {
    pub channels: Vec<BleChannel>,
}

impl ChannelPlan {
    pub fn for_capture(meta: &CaptureMeta) -> Self {
        let (lo, hi) = meta.band();
        ChannelPlan {
            channels: all_channels()
                .filter(|c| {
                    c.center_freq_hz - CHANNEL_HALF_WIDTH_HZ >= lo
                        && c.center_freq_hz + CHANNEL_HALF_WIDTH_HZ <= hi
                })
                .collect(),
        }
    }

    /// Keeps only the listed indices.
    pub fn restrict(mut self, indices: &[u8]) -> Self {
        self.channels.retain(|c| indices.contains(&c.index));
        self
    }

    pub fn contains(&self, index: u8) -> bool {
        self.channels.iter().any(|c| c.index == index)
    }

    pub fn indices(&self) -> Vec<u8> {
        self.channels.iter().map(|c| c.index).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}
