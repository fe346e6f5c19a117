//! Pulls one BLE channel and its noise probe out of a wideband capture and
//! compares their power while a packet is on the air.

use widesniff::channelizer::{channel_stream, noise_channel, BleChannel, ChannelizerConfig};
use widesniff::iq_io::CaptureMeta;
use widesniff::synth::{compose_scene, noise_floor_for_snr, SceneConfig, ScenePacket};

fn mean_power(s: &[num_complex::Complex32]) -> f64 {
    s.iter().map(|x| x.norm_sqr() as f64).sum::<f64>() / s.len() as f64
}

fn main() -> widesniff::Result<()> {
    let meta = CaptureMeta::new(25e6, 2406.25e6)?;
    let mut cfg = SceneConfig::new(meta, 0.002);
    cfg.noise_floor_dbfs = noise_floor_for_snr(1.0, 25.0, 25e6);
    let pdu = [vec![0x42, 8], (1..=8).collect()].concat();
    let cap = compose_scene(&[ScenePacket::advertising(pdu, 2, 0.5e-3)], &cfg)?;

    let chcfg = ChannelizerConfig::default();
    let on = channel_stream(&cap, 2, &chcfg)?;
    let ch = BleChannel::new(2).expect("valid channel");
    let off = noise_channel(&cap, ch.center_freq_hz - cap.meta.center_freq_hz, &chcfg)?;
    println!(
        "channel 2 at {} Hz: {} samples at {} Hz",
        ch.center_freq_hz,
        on.samples.len(),
        on.rate_hz
    );

    // Packet occupies 0.5 ms .. 0.6 ms; both streams run at 2 Msps.
    let burst = 1000..1180;
    let quiet = 2000..3000;
    let snr = 10.0 * (mean_power(&on.samples[burst.clone()]) / mean_power(&off.samples[burst])).log10();
    let idle = 10.0 * (mean_power(&on.samples[quiet.clone()]) / mean_power(&off.samples[quiet])).log10();
    println!("on/off ratio during burst {snr:.1} dB, idle {idle:.1} dB");
    Ok(())
}
