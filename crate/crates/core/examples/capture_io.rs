//! Writes a short noise capture with its JSON sidecar, then streams it back
//! in chunks.

use widesniff::iq_io::{read_capture, write_capture, CaptureMeta, CaptureReader, MetaOverride};
use widesniff::synth::{compose_scene, SceneConfig};

fn main() -> widesniff::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("noise.cf32");

    let mut meta = CaptureMeta::new(4e6, 2402e6)?;
    meta.label = Some("noise".into());
    let cap = compose_scene(&[], &SceneConfig::new(meta, 0.01))?;
    write_capture(&cap, &path)?;
    println!("wrote {} samples to {}", cap.samples.len(), path.display());

    let back = read_capture(&path)?;
    assert_eq!(back.samples, cap.samples);
    println!("sidecar: {:?}", back.meta);

    let mut reader = CaptureReader::open(&path, MetaOverride::default())?.with_chunk_size(8192);
    let mut chunks = 0;
    while let Some(chunk) = reader.read_chunk(8192)? {
        chunks += 1;
        let _ = chunk;
    }
    println!("streamed {} samples in {chunks} chunks", reader.total_samples());
    Ok(())
}
