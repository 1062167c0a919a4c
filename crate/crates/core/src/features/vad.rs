use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Frames more than this many dB below the utterance maximum are dropped.
pub const VAD_RELATIVE_DB: f64 = 30.0;
/// Frames at or below this absolute energy are never speech (digital silence).
pub const VAD_ABSOLUTE_FLOOR_DB: f64 = -80.0;

/// Energy VAD. The mask depends only on `energy`; `m` is used for the length check.
pub fn detect_speech(m: &FeatureMatrix, energy: &[f64]) -> Result<Vec<bool>> {
    if energy.len() != m.len() {
        return Err(Error::dims(m.len(), energy.len()));
    }
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = max - VAD_RELATIVE_DB;
    let mask: Vec<bool> = energy
        .iter()
        .map(|&e| e >= threshold && e > VAD_ABSOLUTE_FLOOR_DB)
        .collect();
    if !mask.iter().any(|&b| b) {
        return Err(Error::NoSpeech);
    }
    Ok(mask)
}
