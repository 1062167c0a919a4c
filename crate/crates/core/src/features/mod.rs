//! Acoustic front end: PCM loading, MFCC with deltas, RASTA filtering,
//! energy VAD and utterance-level CMVN.

mod audio;
mod cache;
mod cmvn;
mod mfcc;
mod rasta;
mod vad;

pub use audio::{load_audio, Waveform};
pub use cache::{decode_features, encode_features, read_feature_manifest, read_features, write_feature_manifest, write_features};
pub use cmvn::cmvn;
pub use mfcc::{compute_mfcc, frame_log_energy, num_frames};
pub use rasta::{apply_rasta, rasta_filter_trajectory, RASTA_DEN, RASTA_NUM};
pub use vad::{detect_speech, VAD_ABSOLUTE_FLOOR_DB, VAD_RELATIVE_DB};

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub num_static: usize,
    pub rasta_enabled: bool,
    pub vad_enabled: bool,
    pub cmvn_enabled: bool,
    pub num_mel_filters: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
    pub preemphasis: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_ms: 20.0,
            hop_ms: 10.0,
            num_static: 19,
            rasta_enabled: true,
            vad_enabled: true,
            cmvn_enabled: true,
            num_mel_filters: 24,
            fft_size: 512,
            sample_rate: 16_000,
            preemphasis: 0.97,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        3 * self.num_static
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_ms > 0.0) || !(self.hop_ms > 0.0) {
            return Err(Error::invalid("window and hop must be positive"));
        }
        if self.hop_ms > self.window_ms {
            return Err(Error::invalid("hop_ms must not exceed window_ms"));
        }
        if self.num_static == 0 {
            return Err(Error::invalid("num_static must be at least 1"));
        }
        if self.num_mel_filters < self.num_static + 1 {
            return Err(Error::invalid(
                "num_mel_filters must exceed num_static (c0 is dropped)",
            ));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }
}

/// A sequence of `L` feature frames of dimension `F`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: Array2<f64>,
    pub utterance_id: String,
    pub phrase_id: Option<String>,
    pub speaker_id: Option<String>,
}

impl FeatureMatrix {
    /// Wrap a frame matrix, rejecting non-finite entries.
    pub fn new(utterance_id: impl Into<String>, frames: Array2<f64>) -> Result<Self> {
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite feature value".into()));
        }
        Ok(Self {
            frames,
            utterance_id: utterance_id.into(),
            phrase_id: None,
            speaker_id: None,
        })
    }

    pub fn with_labels(mut self, speaker: Option<&str>, phrase: Option<&str>) -> Self {
        self.speaker_id = speaker.map(str::to_owned);
        self.phrase_id = phrase.map(str::to_owned);
        self
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.frames.row(t)
    }

    /// Keep only the frames whose mask entry is set.
    pub fn select(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::dims(self.len(), mask.len()));
        }
        let keep: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        Ok(Self {
            frames: self.frames.select(Axis(0), &keep),
            ..self.clone()
        })
    }
}

/// Full front end: MFCC (+RASTA on statics) -> VAD -> CMVN over retained frames.
pub fn extract_features(
    wave: &Waveform,
    cfg: &FeatureConfig,
    utterance_id: &str,
) -> Result<FeatureMatrix> {
    let wave = if wave.sample_rate != cfg.sample_rate {
        wave.resample(cfg.sample_rate)?
    } else {
        wave.clone()
    };
    let mut m = compute_mfcc(&wave, cfg)?;
    m.utterance_id = utterance_id.to_owned();
    if cfg.vad_enabled {
        let energy = frame_log_energy(&wave, cfg)?;
        let mask = detect_speech(&m, &energy)?;
        m = m.select(&mask)?;
    }
    if cfg.cmvn_enabled {
        if m.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{utterance_id}: {} frame(s) left after VAD, cmvn needs 2",
                m.len()
            )));
        }
        m = cmvn(&m)?;
    }
    Ok(m)
}
