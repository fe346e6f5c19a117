//! Relay experiment: calibrate the legs, then compare direct delivery with
//! sniff-mutate-replay delivery.

use widesniff::ble::{AdvPdu, BdAddr};
use widesniff::channel_sim::{calibrate_snr, mitm_simulate, ChannelModel, MitmConfig, Mutation, TrialSetup};
use widesniff::synth::ScenePacket;

fn source(t: u64) -> ScenePacket {
    let pdu = AdvPdu::AdvNonconnInd {
        adv_a: BdAddr([t as u8, (t >> 8) as u8, 0x30, 0x2e, 0x66, 0x69]),
        adv_data: vec![0xFF, 0xEE, 0xFF, 0xEE],
    };
    ScenePacket::advertising(pdu.encode(true, false).unwrap(), 37, 0.0)
}

fn main() -> widesniff::Result<()> {
    let setup = TrialSetup::new()?;
    let base = ChannelModel::with_snr(0.0);
    let direct = calibrate_snr(&setup, &source, &base, 0.93, 400, (-5.0, 25.0), 12)?;
    let relay = calibrate_snr(&setup, &source, &base, 0.57f64.sqrt(), 400, (-5.0, 25.0), 12)?;
    println!("direct leg {direct:.2} dB, relay legs {relay:.2} dB (per-sample SNR at 4 Msps)");

    let cfg = MitmConfig {
        model_direct: ChannelModel {
            seed: 1,
            ..ChannelModel::with_snr(direct)
        },
        model_sniff: ChannelModel {
            seed: 2,
            ..ChannelModel::with_snr(relay)
        },
        model_replay: ChannelModel {
            seed: 3,
            ..ChannelModel::with_snr(relay)
        },
        mutation: Mutation::Replace {
            find: vec![0xFF, 0xEE, 0xFF, 0xEE],
            with: vec![0x00, 0x11, 0x00, 0x11],
        },
        trials: 2000,
    };
    let r = mitm_simulate(&setup, source, &cfg)?;
    println!("{r:#?}");
    Ok(())
}
