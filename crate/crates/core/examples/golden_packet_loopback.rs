//! Assembles a known advertising packet, modulates it into a wideband
//! capture and recovers it.

use widesniff::ble::AdvPdu;
use widesniff::iq_io::CaptureMeta;
use widesniff::pipeline::{run_recovery, PipelineConfig};
use widesniff::synth::{compose_scene, noise_floor_for_snr, SceneConfig, ScenePacket};

const GOLDEN: &str = "421969662e30e0410303aafe0e16aafe10bb0074616a64696e690a";

fn main() -> widesniff::Result<()> {
    let pdu = hex::decode(GOLDEN).expect("valid hex");
    let meta = CaptureMeta::new(25e6, 2406.25e6)?;
    let mut cfg = SceneConfig::new(meta, 0.001);
    cfg.noise_floor_dbfs = noise_floor_for_snr(1.0, 30.0, 25e6);
    let cap = compose_scene(&[ScenePacket::advertising(pdu, 37, 200e-6)], &cfg)?;

    let rec = run_recovery(&cap, &PipelineConfig::default())?;
    for p in &rec.packets {
        println!(
            "t {:.6} s ch {} aa {} metric {} snr {:.1} dB crc {}",
            p.t_start_s,
            p.channel,
            p.aa,
            p.metric,
            p.snr_db,
            if p.crc_ok { "ok" } else { "bad" }
        );
        if let Some(Ok(pdu)) = p.adv_pdu() {
            if let AdvPdu::AdvNonconnInd { adv_a, adv_data } = &pdu {
                println!(
                    "  {:?} AdvA {adv_a} data {}",
                    pdu.pdu_type(),
                    hex::encode(adv_data)
                );
            }
        }
    }
    Ok(())
}
