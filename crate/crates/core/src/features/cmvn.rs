use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Per-dimension zero mean / unit variance over the utterance (variance with
/// `1/L`). Constant columns become all zeros.
pub fn cmvn(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    let n = m.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "cmvn needs at least 2 frames, got {n}"
        )));
    }
    let mut out = m.clone();
    for mut col in out.frames.columns_mut() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var <= 1e-20 * (1.0 + mean * mean) {
            col.fill(0.0);
        } else {
            let inv = 1.0 / var.sqrt();
            col.mapv_inplace(|v| (v - mean) * inv);
        }
    }
    Ok(out)
}
