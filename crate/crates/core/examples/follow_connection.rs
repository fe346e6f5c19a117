//! Builds a connection: a CONNECT_REQ followed by data packets on the hop
//! sequence, with one event left out, then follows it from the recovered
//! packets alone.

use widesniff::ble::{AccessAddress, AdvPdu, BdAddr};
use widesniff::follow::{
    annotate_session, connect_req_payload, hop_sequence, parse_connect_req, ConnectionParams, FollowConfig,
};
use widesniff::iq_io::CaptureMeta;
use widesniff::pipeline::{run_recovery, PipelineConfig};
use widesniff::synth::{compose_scene, noise_floor_for_snr, SceneConfig, ScenePacket};

fn main() -> widesniff::Result<()> {
    let params = ConnectionParams {
        aa: AccessAddress(0x50654A13),
        crc_init: 0x0A1B2C,
        win_size: 1,
        win_offset: 0,
        interval: 6,
        latency: 0,
        timeout: 100,
        // Only data channels 0..6 fit in the capture band.
        channel_map: 0x7F,
        hop: 5,
        sca: 0,
    };
    let init_a: BdAddr = "c0:ff:ee:00:00:01".parse()?;
    let adv_a: BdAddr = "41:e0:30:2e:66:69".parse()?;
    let req = [vec![0x05, 34], connect_req_payload(init_a, adv_a, &params)].concat();
    let req_packet = ScenePacket::advertising(req, 37, 0.5e-3);
    let t_connect = req_packet.t_end_s(1e6);

    let events = 8;
    let skipped = 5;
    let mut scene = vec![req_packet];
    for (k, ch) in hop_sequence(&params, events).into_iter().enumerate() {
        if k == skipped {
            continue;
        }
        scene.push(ScenePacket {
            channel: ch,
            aa: params.aa,
            crc_init: params.crc_init,
            // Empty LL data PDU.
            ..ScenePacket::advertising(
                vec![0x01, 0x00],
                ch,
                t_connect + params.window_start_s() + k as f64 * params.interval_s(),
            )
        });
    }

    let meta = CaptureMeta::new(25e6, 2406.25e6)?;
    let mut cfg = SceneConfig::new(
        meta,
        t_connect + params.window_start_s() + events as f64 * params.interval_s(),
    );
    cfg.noise_floor_dbfs = noise_floor_for_snr(1.0, 30.0, 25e6);
    let cap = compose_scene(&scene, &cfg)?;
    let rec = run_recovery(&cap, &PipelineConfig::default())?;
    println!("recovered {} packets", rec.packets.len());

    // Re-derive the parameters from what was captured.
    let found = rec
        .packets
        .iter()
        .find_map(|p| match p.adv_pdu() {
            Some(Ok(pdu @ AdvPdu::ConnectReq { .. })) => Some((p, pdu)),
            _ => None,
        })
        .expect("CONNECT_REQ recovered");
    let got = parse_connect_req(&found.1.payload())?;
    let t0 = found.0.t_start_s + found.0.air_bits() as f64 * 1e-6;
    let table = annotate_session(
        &rec.packets,
        &got,
        t0,
        &FollowConfig {
            tolerance_s: None,
            span_end_s: cap.duration_s(),
        },
    )?;
    for ev in &table {
        println!(
            "event {:>2} ch {:>2} t {:.6} s {}",
            ev.index,
            ev.channel,
            ev.t_expected_s,
            if ev.missing { "MISSING" } else { "ok" }
        );
    }
    Ok(())
}
