use std::path::Path;

use crate::error::{Error, Result};

/// Mono PCM samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("zero-length audio"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Linear-interpolation resampling to `target` Hz.
    pub fn resample(&self, target: u32) -> Result<Self> {
        if target == 0 {
            return Err(Error::invalid("target sample rate must be positive"));
        }
        if target == self.sample_rate {
            return Ok(self.clone());
        }
        let ratio = self.sample_rate as f64 / target as f64;
        let n_out = ((self.samples.len() as f64) / ratio).floor().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..n_out)
            .map(|i| {
                let pos = i as f64 * ratio;
                let i0 = (pos.floor() as usize).min(last);
                let i1 = (i0 + 1).min(last);
                let frac = pos - i0 as f64;
                self.samples[i0] * (1.0 - frac) + self.samples[i1] * frac
            })
            .collect();
        Waveform::new(samples, target)
    }
}

/// Read an uncompressed RIFF/WAVE file. Channels are averaged to mono. The
/// declared sample rate is kept; resampling happens in the feature front end.
pub fn load_audio(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::io(path, io)
        }
        other => Error::UnsupportedEncoding(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if !(1..=32).contains(&bits) {
                return Err(Error::UnsupportedEncoding(format!("{bits}-bit integer PCM")));
            }
            let pos_scale = ((1i64 << (bits - 1)) - 1) as f64;
            let neg_scale = (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| {
                    s.map(|v| {
                        if v >= 0 {
                            v as f64 / pos_scale
                        } else {
                            v as f64 / neg_scale
                        }
                    })
                })
                .collect::<std::result::Result<_, _>>()
        }
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::UnsupportedEncoding(format!(
                    "{}-bit float PCM",
                    spec.bits_per_sample
                )));
            }
            reader
                .samples::<f32>()
                .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| Error::UnsupportedEncoding(format!("{}: {e}", path.display())))?;

    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|ch| ch.iter().sum::<f64>() / channels as f64)
        .collect();
    if samples.is_empty() {
        return Err(Error::invalid(format!("{}: zero-length audio", path.display())));
    }
    Waveform::new(samples, spec.sample_rate)
}
