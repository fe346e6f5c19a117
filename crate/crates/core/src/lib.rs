//! Offline recovery of Bluetooth Low Energy and IEEE 802.15.4 packets from
//! wideband IQ captures, plus the synthesis and channel-simulation tools that
//! make every stage testable without radio hardware.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ble;
pub mod channel_sim;
pub mod channelizer;
pub mod demod;
pub mod error;
pub mod export;
pub mod follow;
pub mod iq_io;
pub mod pipeline;
pub mod report;
pub mod squelch;
pub mod synth;
pub mod zigbee;

pub use error::{Error, Result};
