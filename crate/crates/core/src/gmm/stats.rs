use ndarray::{Array1, Array2, ArrayView1};

use super::{normalize_log_posteriors, GmmModel};

/// Zeroth, first and second order occupancy statistics of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmStats {
    pub occupancy: Array1<f64>,
    pub first: Array2<f64>,
    pub second: Array2<f64>,
    /// Sum of frame log-likelihoods (weighted) under the aligning model.
    pub log_likelihood: f64,
    pub frames: f64,
}

impl GmmStats {
    pub fn zeros(c: usize, f: usize) -> Self {
        Self {
            occupancy: Array1::zeros(c),
            first: Array2::zeros((c, f)),
            second: Array2::zeros((c, f)),
            log_likelihood: 0.0,
            frames: 0.0,
        }
    }

    /// Add one frame with an external weight (1 for plain EM, a state
    /// occupancy for HMMs). Returns the frame log-likelihood.
    pub(crate) fn accumulate(
        &mut self,
        model: &GmmModel,
        x: &[f64],
        weight: f64,
        scratch: &mut [f64],
    ) -> f64 {
        model.weighted_log_densities_into(x, scratch);
        let ll = normalize_log_posteriors(scratch);
        if weight == 0.0 {
            return ll;
        }
        self.log_likelihood += weight * ll;
        self.frames += weight;
        let f = x.len();
        for (c, &p) in scratch.iter().enumerate() {
            let g = p * weight;
            if g == 0.0 {
                continue;
            }
            self.occupancy[c] += g;
            let mut fr = self.first.row_mut(c);
            let fr = fr.as_slice_mut().unwrap();
            let mut sr = self.second.row_mut(c);
            let sr = sr.as_slice_mut().unwrap();
            for d in 0..f {
                let gx = g * x[d];
                fr[d] += gx;
                sr[d] += gx * x[d];
            }
        }
        ll
    }

    pub(crate) fn accumulate_row(
        &mut self,
        model: &GmmModel,
        row: ArrayView1<'_, f64>,
        weight: f64,
        scratch: &mut [f64],
    ) -> f64 {
        match row.as_slice() {
            Some(x) => self.accumulate(model, x, weight, scratch),
            None => self.accumulate(model, &row.to_vec(), weight, scratch),
        }
    }

    pub fn merge(&mut self, other: &GmmStats) {
        self.occupancy += &other.occupancy;
        self.first += &other.first;
        self.second += &other.second;
        self.log_likelihood += other.log_likelihood;
        self.frames += other.frames;
    }
}
