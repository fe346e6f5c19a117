//! Recovery rate against SNR (measured in a 1 MHz bandwidth) on a single
//! advertising channel.

use widesniff::ble::{AdvPdu, BdAddr};
use widesniff::iq_io::CaptureMeta;
use widesniff::pipeline::{PipelineConfig, Receiver};
use widesniff::synth::{compose_scene, noise_floor_for_snr, SceneConfig, ScenePacket};

fn main() -> widesniff::Result<()> {
    let meta = CaptureMeta::new(4e6, 2402e6)?;
    let rx = Receiver::new(
        &meta,
        &PipelineConfig {
            threads: Some(1),
            ..PipelineConfig::default()
        },
    )?;
    let per_point = 50;
    for snr in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0] {
        let mut ok = 0;
        for i in 0..per_point {
            let pdu = AdvPdu::AdvNonconnInd {
                adv_a: BdAddr([i as u8, 1, 2, 3, 4, 5]),
                adv_data: vec![0xFF, 0xEE, 0xFF, 0xEE],
            };
            let p = ScenePacket::advertising(pdu.encode(true, false)?, 37, 60e-6);
            let mut cfg = SceneConfig::new(meta.clone(), 300e-6);
            cfg.noise_floor_dbfs = noise_floor_for_snr(1.0, snr, meta.sample_rate_hz);
            cfg.seed = 1000 + i;
            let cap = compose_scene(std::slice::from_ref(&p), &cfg)?;
            let rec = rx.recover(&cap)?;
            ok += rec.packets.iter().any(|r| r.crc_ok && r.pdu_bytes() == p.pdu) as u32;
        }
        println!("{snr:>5.1} dB  {:>5.1}%", 100.0 * ok as f64 / per_point as f64);
    }
    Ok(())
}
