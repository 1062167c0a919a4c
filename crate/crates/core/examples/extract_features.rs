//! Writes a short 8 kHz wav (two vowel-like segments around a pause), then
//! runs the front end on it: MFCC + RASTA + deltas, energy VAD, CMVN.
//!
//!     cargo run --example extract_features [-- path/to/file.wav]

use std::error::Error;
use std::f64::consts::PI;

use pbmsv::features::{compute_mfcc, extract_features, load_audio, FeatureConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn write_demo_wav(path: &std::path::Path) -> Result<(), Box<dyn Error>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 8000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..8000 * 2 {
        let t = i as f64 / 8000.0;
        let voiced = (0.2..0.8).contains(&t) || (1.1..1.8).contains(&t);
        let f0 = if t < 1.0 { 140.0 } else { 180.0 };
        let mut s = 0.002 * rng.gen_range(-1.0..1.0);
        if voiced {
            for (k, a) in [(1.0, 0.5), (2.0, 0.25), (5.0, 0.12), (9.0, 0.05)] {
                s += a * (2.0 * PI * f0 * k * t).sin();
            }
        }
        w.write_sample((s * 0.5 * i16::MAX as f64) as i16)?;
    }
    w.finalize()?;
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = dir.path().join("demo.wav");
            write_demo_wav(&p)?;
            p
        }
    };
    let wave = load_audio(&path)?;
    println!("{}: {:.2}s at {} Hz", path.display(), wave.duration_secs(), wave.sample_rate);

    let cfg = FeatureConfig::default();
    let raw = compute_mfcc(&wave.resample(cfg.sample_rate)?, &cfg)?;
    let feats = extract_features(&wave, &cfg, "demo")?;
    println!("{} frames before VAD, {} kept, dim {}", raw.len(), feats.len(), feats.dim());
    let mean = feats.frames.mean_axis(ndarray::Axis(0)).unwrap();
    let std = feats.frames.std_axis(ndarray::Axis(0), 0.0);
    println!("after CMVN: max |mean| {:.1e}, std range {:.3}..{:.3}",
        mean.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        std.iter().cloned().fold(f64::INFINITY, f64::min),
        std.iter().cloned().fold(0.0, f64::max));
    Ok(())
}
