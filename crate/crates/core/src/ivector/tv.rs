use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::linalg::{cholesky, logdet};
use super::{IVector, SuffStats};
use crate::error::{Error, Result};
use crate::gmm::GmmModel;

/// Total-variability subspace `T` (`CF x R`) with a fixed diagonal residual
/// covariance `Sigma` taken from the UBM it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct TvSpace {
    t: DMatrix<f64>,
    sigma: DVector<f64>,
    num_components: usize,
    ubm_ref: String,
    // T' Sigma^-1 and the per-component blocks T_c' Sigma_c^-1 T_c.
    t_sinv: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
}

impl TvSpace {
    pub fn new(t: DMatrix<f64>, sigma: DVector<f64>, num_components: usize, ubm_ref: impl Into<String>) -> Result<Self> {
        let cf = sigma.len();
        if num_components == 0 || cf % num_components != 0 {
            return Err(Error::invalid(format!("{cf} supervector rows do not split into {num_components} components")));
        }
        if t.nrows() != cf {
            return Err(Error::dims(cf, t.nrows()));
        }
        if t.ncols() == 0 || t.ncols() > cf {
            return Err(Error::invalid(format!("rank {} outside 1..={cf}", t.ncols())));
        }
        if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("residual variances must be positive"));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite T matrix".into()));
        }
        let f = cf / num_components;
        let mut t_sinv = t.transpose();
        for (j, mut col) in t_sinv.column_iter_mut().enumerate() {
            col /= sigma[j];
        }
        let blocks = (0..num_components)
            .map(|c| {
                let rows = c * f..(c + 1) * f;
                let tc = t.rows(rows.start, f);
                t_sinv.columns(rows.start, f) * tc
            })
            .collect();
        Ok(Self {
            t,
            sigma,
            num_components,
            ubm_ref: ubm_ref.into(),
            t_sinv,
            blocks,
        })
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn rank(&self) -> usize {
        self.t.ncols()
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn dim(&self) -> usize {
        self.sigma.len() / self.num_components
    }

    /// Hash of the UBM whose statistics define this space.
    pub fn ubm_ref(&self) -> &str {
        &self.ubm_ref
    }

    fn check(&self, s: &SuffStats) -> Result<()> {
        if s.num_components() != self.num_components {
            return Err(Error::dims(self.num_components, s.num_components()));
        }
        if s.dim() != self.dim() {
            return Err(Error::dims(self.dim(), s.dim()));
        }
        if s.zero_order.iter().chain(s.first_order_centered.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite statistics".into()));
        }
        Ok(())
    }

    /// Precision `L = I + sum_c N_c T_c' Sigma_c^-1 T_c` and `b = T' Sigma^-1 F`.
    pub(crate) fn system(&self, s: &SuffStats) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check(s)?;
        let r = self.rank();
        let mut l = DMatrix::identity(r, r);
        for (c, block) in self.blocks.iter().enumerate() {
            let n = s.zero_order[c];
            if n != 0.0 {
                add_scaled(&mut l, n, block);
            }
        }
        let f = s
            .first_order_centered
            .as_slice()
            .map(DVector::from_column_slice)
            .unwrap_or_else(|| DVector::from_iterator(self.sigma.len(), s.first_order_centered.iter().copied()));
        Ok((l, &self.t_sinv * f))
    }
}

/// Posterior mean of the latent factor: `(I + T' Sigma^-1 N T)^-1 T' Sigma^-1 F`.
pub fn extract_ivector(tv: &TvSpace, s: &SuffStats, id: impl Into<String>) -> Result<IVector> {
    let (l, b) = tv.system(s)?;
    let w = cholesky(l, "i-vector precision")?.solve(&b);
    IVector::new(id, w)
}

fn add_scaled(dst: &mut DMatrix<f64>, a: f64, src: &DMatrix<f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += a * s;
    }
}

/// Initial `T`: Gaussian entries scaled by the UBM standard deviations.
fn init_t(sigma: &DVector<f64>, rank: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(sigma.len(), rank, |i, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        e * sigma[i].sqrt()
    })
}

fn ubm_sigma(ubm: &GmmModel) -> DVector<f64> {
    DVector::from_iterator(ubm.variances().len(), ubm.variances().iter().copied())
}

/// EM training of `T` from UBM statistics. Also returns the objective
/// `sum_u (b'L^-1 b - logdet L) / 2` before every iteration and at the end.
pub fn train_t_matrix_traced(
    ubm: &GmmModel,
    stats: &[SuffStats],
    rank: usize,
    iterations: usize,
    seed: u64,
) -> Result<(TvSpace, Vec<f64>)> {
    if stats.is_empty() {
        return Err(Error::InsufficientData("no statistics for T training".into()));
    }
    let (c, f) = (ubm.num_components(), ubm.dim());
    if rank == 0 || rank > c * f {
        return Err(Error::invalid(format!("rank {rank} outside 1..={}", c * f)));
    }
    if stats.len() < rank {
        log::warn!("training T of rank {rank} from only {} utterances", stats.len());
    }
    let sigma = ubm_sigma(ubm);
    let mut tv = TvSpace::new(init_t(&sigma, rank, seed), sigma.clone(), c, ubm.hash())?;
    let mut history = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let mut a = vec![DMatrix::<f64>::zeros(rank, rank); c];
        // Transposed first-order accumulator, `sum_u w_u F_u'`.
        let mut acc = DMatrix::<f64>::zeros(rank, c * f);
        let mut occupied = vec![0.0; c];
        let mut total = 0.0;
        for s in stats {
            let (l, b) = tv.system(s)?;
            let chol = cholesky(l, "i-vector precision")?;
            let w = chol.solve(&b);
            total += 0.5 * (b.dot(&w) - logdet(&chol));
            let mut eww = chol.inverse();
            eww.ger(1.0, &w, &w, 1.0);
            for k in 0..c {
                let n = s.zero_order[k];
                if n != 0.0 {
                    add_scaled(&mut a[k], n, &eww);
                    occupied[k] += n;
                }
            }
            for (i, v) in s.first_order_centered.iter().enumerate() {
                if *v != 0.0 {
                    acc.column_mut(i).axpy(*v, &w, 1.0);
                }
            }
        }
        history.push(total);
        let mut t = tv.t().clone();
        for k in 0..c {
            if occupied[k] == 0.0 {
                continue;
            }
            let chol = cholesky(a[k].clone(), "T-matrix normal equations")?;
            // T_c = C_c A_c^-1, solved as A_c T_c' = C_c'.
            let tc = chol.solve(&acc.columns(k * f, f).into_owned()).transpose();
            t.rows_mut(k * f, f).copy_from(&tc);
        }
        tv = TvSpace::new(t, sigma.clone(), c, ubm.hash())?;
    }
    history.push(objective(&tv, stats)?);
    Ok((tv, history))
}

pub fn train_t_matrix(ubm: &GmmModel, stats: &[SuffStats], rank: usize, iterations: usize, seed: u64) -> Result<TvSpace> {
    Ok(train_t_matrix_traced(ubm, stats, rank, iterations, seed)?.0)
}

pub(crate) fn objective(tv: &TvSpace, stats: &[SuffStats]) -> Result<f64> {
    let mut total = 0.0;
    for s in stats {
        let (l, b) = tv.system(s)?;
        let chol = cholesky(l, "i-vector precision")?;
        total += 0.5 * (b.dot(&chol.solve(&b)) - logdet(&chol));
    }
    Ok(total)
}
