//! 802.15.4 frames carrying FF EE FF EE, modulated at 2 samples per chip,
//! then recovered from a wideband capture spanning channels 11 to 13.

use widesniff::iq_io::CaptureMeta;
use widesniff::synth::{noise_floor_for_snr, SceneConfig};
use widesniff::zigbee::{
    compose_zigbee_scene, oqpsk_modulate, short_data_header, zigbee_decode, ChipReceiver, ZigbeeConfig,
    ZigbeePpdu, ZigbeeRxConfig, ZigbeeScenePacket,
};

fn main() -> widesniff::Result<()> {
    let payload = [0xFF, 0xEE, 0xFF, 0xEE];
    let ppdu = ZigbeePpdu::from_parts(&short_data_header(1, 0x1234, 0xFFFF, 0x0001), &payload)?;

    // Baseband loopback.
    let wave = oqpsk_modulate(&ppdu.to_bytes(), 2)?;
    let frames = ChipReceiver::new(2, ZigbeeRxConfig::default())?.receive(&wave);
    println!("baseband: {} frame(s): {}", frames.len(), frames[0].frame);

    // Wideband capture.
    let meta = CaptureMeta::new(25e6, 2406.25e6)?;
    let mut cfg = SceneConfig::new(meta, 0.004);
    cfg.noise_floor_dbfs = noise_floor_for_snr(1.0, 25.0, 25e6);
    let scene: Vec<ZigbeeScenePacket> = [11u8, 12, 13]
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let ppdu = ZigbeePpdu::from_parts(&short_data_header(i as u8, 0x1234, 0xFFFF, 0x0001), &payload)
                .unwrap();
            ZigbeeScenePacket::new(ppdu, *ch, 0.3e-3 + i as f64 * 1.1e-3)
        })
        .collect();
    let cap = compose_zigbee_scene(&scene, &cfg)?;
    for r in zigbee_decode(&cap, &ZigbeeConfig::default())? {
        println!(
            "ch {} t {:.6} s seq {} chip errors {}: {}",
            r.channel,
            r.t_start_s,
            r.frame.sequence(),
            r.frame.chip_errors,
            r.frame
        );
    }
    Ok(())
}
