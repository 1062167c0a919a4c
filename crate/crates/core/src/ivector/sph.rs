use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::IVector;
use crate::error::{Error, Result};

pub const SPH_EIGEN_FLOOR: f64 = 1e-8;

/// Iterated centring, whitening and length normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SphNormalizer {
    /// `(mean, whitening)` pairs in training order.
    pub stages: Vec<(DVector<f64>, DMatrix<f64>)>,
}

impl SphNormalizer {
    pub fn dim(&self) -> usize {
        self.stages[0].0.len()
    }

    pub fn iterations(&self) -> usize {
        self.stages.len()
    }

    fn apply_raw(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::dims(self.dim(), v.len()));
        }
        let mut x = v.clone();
        for (mean, w) in &self.stages {
            x = unit(w * (x - mean))?;
        }
        Ok(x)
    }
}

fn unit(v: DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroLength);
    }
    Ok(v / n)
}

/// Symmetric inverse square root of the sample covariance, eigenvalues
/// floored at [`SPH_EIGEN_FLOOR`].
fn whitening(xs: &[DVector<f64>], mean: &DVector<f64>) -> DMatrix<f64> {
    let r = mean.len();
    let mut cov = DMatrix::zeros(r, r);
    for x in xs {
        let d = x - mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= xs.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut floored = 0;
    let scale = eig.eigenvalues.map(|l| {
        if l < SPH_EIGEN_FLOOR {
            floored += 1;
        }
        1.0 / l.max(SPH_EIGEN_FLOOR).sqrt()
    });
    if floored > 0 {
        log::warn!("spherical normalization: {floored} of {r} eigenvalues floored");
    }
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&scale) * v.transpose()
}

pub fn train_sph(ivectors: &[IVector], iterations: usize) -> Result<SphNormalizer> {
    if iterations == 0 {
        return Err(Error::invalid("spherical normalization needs at least one iteration"));
    }
    let Some(first) = ivectors.first() else {
        return Err(Error::InsufficientData("no i-vectors for spherical normalization".into()));
    };
    let r = first.dim();
    if let Some(bad) = ivectors.iter().find(|v| v.dim() != r) {
        return Err(Error::dims(r, bad.dim()));
    }
    if ivectors.len() <= r {
        log::warn!("spherical normalization from {} vectors of dimension {r}", ivectors.len());
    }
    let mut xs: Vec<DVector<f64>> = ivectors.iter().map(|v| v.values.clone()).collect();
    let mut stages = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mean = xs.iter().fold(DVector::zeros(r), |acc, x| acc + x) / xs.len() as f64;
        let w = whitening(&xs, &mean);
        xs = xs.iter().map(|x| unit(&w * (x - &mean))).collect::<Result<_>>()?;
        stages.push((mean, w));
    }
    Ok(SphNormalizer { stages })
}

pub fn apply_sph(n: &SphNormalizer, w: &IVector) -> Result<IVector> {
    Ok(IVector {
        id: w.id.clone(),
        values: n.apply_raw(&w.values)?,
        normalized: true,
    })
}
