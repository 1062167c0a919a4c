use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Numerator of the RASTA band-pass, `0.1 * (2, 1, 0, -1, -2)`.
pub const RASTA_NUM: [f64; 5] = [0.2, 0.1, 0.0, -0.1, -0.2];
/// Denominator `1 - 0.98 z^-1`.
pub const RASTA_DEN: [f64; 2] = [1.0, -0.98];

/// Causal RASTA filter over one trajectory, zero initial state:
/// `y[n] = 0.98 y[n-1] + sum_k b_k x[n-k]`.
pub fn rasta_filter_trajectory(x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let mut acc = 0.0;
        for (k, &b) in RASTA_NUM.iter().enumerate() {
            if n >= k {
                acc += b * x[n - k];
            }
        }
        if n >= 1 {
            acc -= RASTA_DEN[1] * y[n - 1];
        }
        y[n] = acc;
    }
    y
}

/// Filter every column of `m` along time. Intended for static cepstra.
pub fn apply_rasta(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    if m.is_empty() {
        return Err(Error::invalid("rasta on empty feature matrix"));
    }
    let mut out = m.clone();
    for mut col in out.frames.columns_mut() {
        let y = rasta_filter_trajectory(&col.to_vec());
        col.iter_mut().zip(y).for_each(|(c, v)| *c = v);
    }
    Ok(out)
}
