//! IEEE 802.15.4 (2.4 GHz O-QPSK) PHY and MAC framing: chip spreading,
//! half-sine modulation, an MSK-style chip receiver, frame parsing and FCS.

mod capture;
mod fcs;
mod frame;
mod phy;
mod pn;

pub use capture::{
    compose_zigbee_scene, parse_zigbee_scene, zigbee_channel_freq, zigbee_channels_covered, zigbee_decode,
    ZigbeeConfig, ZigbeeRecord, ZigbeeScenePacket, ZIGBEE_CHANNEL_RATE_HZ, ZIGBEE_CUTOFF_HZ,
};
pub use fcs::{append_fcs, fcs16};
pub use frame::{
    parse_ppdu, short_data_header, FrameControl, FrameType, ZigbeeFrame, ZigbeePpdu, MAX_PSDU, SFD,
};
pub use phy::{
    chip_phase_steps, oqpsk_modulate, oqpsk_waveform, ChipReceiver, ReceivedFrame, ZigbeeRxConfig,
    CHIP_RATE_HZ, SHR_CHIPS, SYMBOL_RATE_HZ,
};
pub use pn::{chip_correlate, pack_chips, pn_table, spread, PnTable, CHIPS_PER_SYMBOL, MIN_ROW_DISTANCE};
