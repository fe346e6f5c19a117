//! Designs the two channelizer filters and prints their tap counts and a few
//! points of the magnitude response.

use widesniff::channelizer::{design_lowpass, FirSpec};

fn main() -> widesniff::Result<()> {
    let rate = 25e6;
    for (name, spec) in [
        ("noise probe", FirSpec::lowpass(22.5e3, 10e3)),
        ("on-channel", FirSpec::lowpass(500e3, 300e3)),
    ] {
        let taps = design_lowpass(&spec, rate)?;
        println!(
            "{name}: cutoff {} Hz, transition {} Hz -> {} taps, group delay {} samples",
            spec.cutoff_hz,
            spec.transition_hz,
            taps.count(),
            taps.group_delay()
        );
        for f in [
            0.0,
            spec.cutoff_hz,
            spec.cutoff_hz + spec.transition_hz,
            2.0 * (spec.cutoff_hz + spec.transition_hz),
        ] {
            println!("  {:>10.0} Hz  {:>8.2} dB", f, taps.magnitude_db(f));
        }
    }
    Ok(())
}
