use ndarray::ArrayView2;

use super::{train::accumulate, GmmModel, GmmStats};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub relevance_factor: f64,
    pub iterations: usize,
    pub update_means: bool,
    pub update_weights: bool,
    pub update_variances: bool,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            relevance_factor: 10.0,
            iterations: 3,
            update_means: true,
            update_weights: false,
            update_variances: false,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relevance_factor > 0.0) {
            return Err(Error::invalid("relevance factor must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("MAP needs at least one iteration"));
        }
        Ok(())
    }
}

/// Relevance-MAP update of `prior` from statistics gathered against the
/// current iterate. Means interpolate `(F_c + r mu_c) / (N_c + r)`; a
/// component with zero occupancy keeps the prior parameters exactly.
pub(crate) fn map_from_stats(prior: &GmmModel, stats: &GmmStats, cfg: &MapConfig) -> Result<GmmModel> {
    let r = cfg.relevance_factor;
    let (c, f) = (prior.num_components(), prior.dim());
    let mut means = prior.means().clone();
    let mut weights = prior.weights().clone();
    let mut vars = prior.variances().clone();
    let total: f64 = stats.occupancy.sum();
    for k in 0..c {
        let n = stats.occupancy[k];
        if n == 0.0 {
            continue;
        }
        let alpha = n / (n + r);
        let mut new_mean = vec![0.0; f];
        for d in 0..f {
            new_mean[d] = if cfg.update_means {
                (stats.first[[k, d]] + r * prior.means()[[k, d]]) / (n + r)
            } else {
                prior.means()[[k, d]]
            };
        }
        if cfg.update_variances {
            for d in 0..f {
                let mu0 = prior.means()[[k, d]];
                let ex2 = stats.second[[k, d]] / n;
                let v = alpha * ex2 + (1.0 - alpha) * (prior.variances()[[k, d]] + mu0 * mu0)
                    - new_mean[d] * new_mean[d];
                vars[[k, d]] = v.max(prior.variances()[[k, d]] * 1e-3);
            }
        }
        if cfg.update_weights && total > 0.0 {
            weights[k] = alpha * n / total + (1.0 - alpha) * prior.weights()[k];
        }
        for d in 0..f {
            means[[k, d]] = new_mean[d];
        }
    }
    if cfg.update_weights {
        let s = weights.sum();
        weights.mapv_inplace(|w| w / s);
    }
    GmmModel::new(weights, means, vars)
}

/// MAP-adapt `prior` to the pooled frames of `data`. Each iteration aligns
/// against the previous iterate and interpolates toward the original prior.
pub fn map_adapt_many(prior: &GmmModel, data: &[&FeatureMatrix], cfg: &MapConfig) -> Result<GmmModel> {
    cfg.validate()?;
    let segments: Vec<ArrayView2<'_, f64>> = data
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| m.frames.view())
        .collect();
    if segments.is_empty() {
        return Err(Error::InsufficientData("MAP adaptation with no frames".into()));
    }
    if let Some(bad) = segments.iter().find(|s| s.ncols() != prior.dim()) {
        return Err(Error::dims(prior.dim(), bad.ncols()));
    }
    let mut current = prior.clone();
    for _ in 0..cfg.iterations {
        let stats = accumulate(&current, &segments);
        current = map_from_stats(prior, &stats, cfg)?;
    }
    Ok(current)
}

pub fn map_adapt(prior: &GmmModel, data: &FeatureMatrix, cfg: &MapConfig) -> Result<GmmModel> {
    map_adapt_many(prior, &[data], cfg)
}
