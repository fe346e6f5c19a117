//! Scatters packets over every channel a 25 Msps capture covers: advertising
//! PDUs on channel 37 and data PDUs of one known connection on the data
//! channels. Recovers them all and prints the per-device report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use widesniff::ble::{AccessAddress, AdvPdu, BdAddr};
use widesniff::channelizer::ChannelPlan;
use widesniff::iq_io::CaptureMeta;
use widesniff::pipeline::{run_recovery, PipelineConfig};
use widesniff::report::{render_report, ReportFormat};
use widesniff::synth::{compose_scene, noise_floor_for_snr, SceneConfig, ScenePacket};

const CONN_AA: AccessAddress = AccessAddress(0x50654A13);
const CONN_CRC_INIT: u32 = 0x0A1B2C;

fn main() -> widesniff::Result<()> {
    let meta = CaptureMeta::new(25e6, 2406.25e6)?;
    let channels = ChannelPlan::for_capture(&meta).indices();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let packets: Vec<ScenePacket> = (0..40)
        .map(|i| {
            let ch = channels[i % channels.len()];
            let t = 0.2e-3 + i as f64 * 0.45e-3;
            if ch >= 37 {
                let pdu = AdvPdu::AdvInd {
                    adv_a: BdAddr(rng.random()),
                    adv_data: (0..rng.random_range(0..=31)).map(|_| rng.random()).collect(),
                };
                ScenePacket::advertising(pdu.encode(false, false).unwrap(), ch, t)
            } else {
                // LL data PDU: LLID 2, then a 5-bit length.
                let len = rng.random_range(1..=27u8);
                let pdu = [vec![0x02, len], (0..len).map(|_| rng.random()).collect()].concat();
                ScenePacket {
                    aa: CONN_AA,
                    crc_init: CONN_CRC_INIT,
                    ..ScenePacket::advertising(pdu, ch, t)
                }
            }
        })
        .collect();

    let mut cfg = SceneConfig::new(meta, 0.02);
    cfg.noise_floor_dbfs = noise_floor_for_snr(1.0, 30.0, 25e6);
    cfg.seed = 3;
    let cap = compose_scene(&packets, &cfg)?;

    let pcfg = PipelineConfig {
        connections: vec![(CONN_AA, CONN_CRC_INIT)],
        ..PipelineConfig::default()
    };
    let rec = run_recovery(&cap, &pcfg)?;
    let ok = rec.packets.iter().filter(|p| p.crc_ok).count();
    println!(
        "sent {} packets on channels {channels:?}, recovered {ok}",
        packets.len()
    );
    print!("{}", render_report(&rec.report, ReportFormat::Text));
    Ok(())
}
