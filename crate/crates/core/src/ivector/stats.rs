use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gmm::{normalize_log_posteriors, GmmModel};

/// Zero-order and UBM-centred first-order Baum-Welch statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub zero_order: Array1<f64>,
    /// `[C x F]`, `sum_t Pr(c|x_t) (x_t - mu_c)` with `mu_c` from the UBM.
    pub first_order_centered: Array2<f64>,
    /// Hash of the model the posteriors came from.
    pub source_model_id: String,
}

impl SuffStats {
    pub fn num_components(&self) -> usize {
        self.zero_order.len()
    }

    pub fn dim(&self) -> usize {
        self.first_order_centered.ncols()
    }
}

/// Posteriors from `posterior_model` (a PBM or the UBM), centring always
/// against `centralize_model`.
pub fn accumulate_stats(
    posterior_model: &GmmModel,
    centralize_model: &GmmModel,
    x: &FeatureMatrix,
) -> Result<SuffStats> {
    let (c, f) = (centralize_model.num_components(), centralize_model.dim());
    if posterior_model.num_components() != c {
        return Err(Error::dims(c, posterior_model.num_components()));
    }
    if posterior_model.dim() != f {
        return Err(Error::dims(f, posterior_model.dim()));
    }
    if x.dim() != f {
        return Err(Error::dims(f, x.dim()));
    }
    if x.is_empty() {
        return Err(Error::InsufficientData(format!("utterance '{}' is empty", x.utterance_id)));
    }
    let mut n = Array1::zeros(c);
    let mut first = Array2::zeros((c, f));
    let mut lp = vec![0.0; c];
    for row in x.frames.rows() {
        let row = row.as_slice().expect("feature rows are contiguous");
        posterior_model.weighted_log_densities_into(row, &mut lp);
        normalize_log_posteriors(&mut lp);
        for k in 0..c {
            let p = lp[k];
            if p == 0.0 {
                continue;
            }
            n[k] += p;
            let mu = centralize_model.means().row(k);
            for d in 0..f {
                first[[k, d]] += p * (row[d] - mu[d]);
            }
        }
    }
    Ok(SuffStats {
        zero_order: n,
        first_order_centered: first,
        source_model_id: posterior_model.hash(),
    })
}
