//! Diagonal-covariance Gaussian mixtures: likelihoods, posteriors, EM training
//! with binary splitting, relevance-MAP adaptation and the frame-averaged LLR.

mod map;
mod stats;
mod train;

pub use map::{map_adapt, map_adapt_many, MapConfig};
pub use stats::GmmStats;
pub use train::{train_ubm, train_ubm_traced, variance_floor, UbmTrainConfig};
pub(crate) use map::map_from_stats;
pub(crate) use train::{floor_from, reestimate, split_init};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::io;
use crate::numerics::{log_sum_exp, LN_2PI};

const MAGIC: &[u8; 4] = b"PBMG";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct GmmModel {
    weights: Array1<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
    // log w_c - 0.5 (F ln 2pi + sum_d ln var_cd)
    log_norm: Array1<f64>,
    inv_var: Array2<f64>,
}

impl PartialEq for GmmModel {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
            && self.means == other.means
            && self.variances == other.variances
    }
}

impl GmmModel {
    pub fn new(weights: Array1<f64>, means: Array2<f64>, variances: Array2<f64>) -> Result<Self> {
        let c = weights.len();
        if c == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if means.nrows() != c || variances.nrows() != c {
            return Err(Error::dims(c, means.nrows().min(variances.nrows())));
        }
        if means.ncols() != variances.ncols() || means.ncols() == 0 {
            return Err(Error::dims(means.ncols(), variances.ncols()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("mixture weights must be finite and non-negative"));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("variances must be finite and positive"));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite mean".into()));
        }
        let f = means.ncols() as f64;
        let log_norm = Array1::from_shape_fn(c, |k| {
            let log_det: f64 = variances.row(k).iter().map(|v| v.ln()).sum();
            weights[k].ln() - 0.5 * (f * LN_2PI + log_det)
        });
        let inv_var = variances.mapv(|v| 1.0 / v);
        Ok(Self {
            weights,
            means,
            variances,
            log_norm,
            inv_var,
        })
    }

    /// Copy of `self` with new means; weights and variances are shared.
    pub fn with_means(&self, means: Array2<f64>) -> Result<Self> {
        if means.dim() != self.means.dim() {
            return Err(Error::dims(self.means.len(), means.len()));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite mean".into()));
        }
        Ok(Self {
            means,
            ..self.clone()
        })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn variances(&self) -> &Array2<f64> {
        &self.variances
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            Err(Error::dims(self.dim(), n))
        } else {
            Ok(())
        }
    }

    /// `ln w_c + ln N(x; mu_c, Sigma_c)` for every component, into `out`.
    #[inline]
    pub(crate) fn weighted_log_densities_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mu = self.means.row(k);
            let iv = self.inv_var.row(k);
            let (mu, iv) = (mu.as_slice().unwrap(), iv.as_slice().unwrap());
            let mut q = 0.0;
            for d in 0..x.len() {
                let diff = x[d] - mu[d];
                q += diff * diff * iv[d];
            }
            *o = self.log_norm[k] - 0.5 * q;
        }
    }

    pub fn weighted_log_densities(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let x = x.to_vec();
        let mut out = vec![0.0; self.num_components()];
        self.weighted_log_densities_into(&x, &mut out);
        Ok(out)
    }

    /// `ln sum_c w_c p_c(x)`.
    pub fn log_likelihood(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(log_sum_exp(&self.weighted_log_densities(x)?))
    }

    /// Component responsibilities `Pr(c | x)`.
    pub fn posteriors(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let mut lp = self.weighted_log_densities(x)?;
        normalize_log_posteriors(&mut lp);
        Ok(lp)
    }

    /// Per-frame log-likelihoods of an utterance.
    pub fn frame_log_likelihoods(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_dim(m.dim())?;
        let mut buf = vec![0.0; self.num_components()];
        Ok(m.frames
            .rows()
            .into_iter()
            .map(|row| {
                let owned;
                let x = match row.as_slice() {
                    Some(s) => s,
                    None => {
                        owned = row.to_vec();
                        &owned
                    }
                };
                self.weighted_log_densities_into(x, &mut buf);
                log_sum_exp(&buf)
            })
            .collect())
    }

    /// `(1/L) sum_t ln p(x_t)`.
    pub fn avg_log_likelihood(&self, m: &FeatureMatrix) -> Result<f64> {
        if m.is_empty() {
            return Err(Error::InsufficientData("empty utterance".into()));
        }
        let ll = self.frame_log_likelihoods(m)?;
        Ok(ll.iter().sum::<f64>() / ll.len() as f64)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        io::write_header(&mut out, MAGIC, VERSION);
        self.encode_body(&mut out);
        out
    }

    pub(crate) fn encode_body(&self, out: &mut Vec<u8>) {
        io::write_u32(out, self.num_components() as u32);
        io::write_u32(out, self.dim() as u32);
        io::write_f64s(out, self.weights.iter().copied());
        io::write_f64s(out, self.means.iter().copied());
        io::write_f64s(out, self.variances.iter().copied());
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        io::read_header(&mut r, MAGIC, VERSION)?;
        let g = Self::decode_body(&mut r)?;
        io::expect_eof(&mut r)?;
        Ok(g)
    }

    pub(crate) fn decode_body(r: &mut &[u8]) -> Result<Self> {
        let c = io::read_u32(r)? as usize;
        let f = io::read_u32(r)? as usize;
        if c.checked_mul(f).map_or(true, |n| n * 8 > r.len()) {
            return Err(Error::Format(format!("mixture header {c}x{f} exceeds payload")));
        }
        let w = io::read_f64s(r, c)?;
        let m = io::read_f64s(r, c * f)?;
        let v = io::read_f64s(r, c * f)?;
        Self::new(
            Array1::from(w),
            Array2::from_shape_vec((c, f), m).map_err(|e| Error::Format(e.to_string()))?,
            Array2::from_shape_vec((c, f), v).map_err(|e| Error::Format(e.to_string()))?,
        )
    }

    pub fn hash(&self) -> String {
        io::content_hash(&self.encode())
    }
}

/// Turn weighted log densities into posteriors in place.
pub(crate) fn normalize_log_posteriors(lp: &mut [f64]) -> f64 {
    let total = log_sum_exp(lp);
    for v in lp.iter_mut() {
        *v = (*v - total).exp();
    }
    total
}

/// Frame-averaged log-likelihood ratio between two mixtures over `x`.
pub fn avg_llr(target: &GmmModel, background: &GmmModel, x: &FeatureMatrix) -> Result<f64> {
    if target.num_components() != background.num_components() || target.dim() != background.dim()
    {
        return Err(Error::dims(target.means.len(), background.means.len()));
    }
    if x.is_empty() {
        return Err(Error::InsufficientData("empty utterance".into()));
    }
    let a = target.frame_log_likelihoods(x)?;
    let b = background.frame_log_likelihoods(x)?;
    let sum: f64 = a.iter().zip(&b).map(|(p, q)| p - q).sum();
    Ok(sum / x.len() as f64)
}
