//! Left-to-right HMM background model trained without transcriptions: every
//! utterance is labelled with the same dummy word, so Baum-Welch learns a
//! speaker- and text-independent temporal structure. Scoring is Viterbi
//! forced alignment normalised by the utterance length.

mod align;
mod map;
mod train;

pub use align::{forward_loglik, viterbi_loglik, viterbi_path};
pub use map::{map_adapt_hmm, HmmMapConfig};
pub use train::{train_hmm_ubm, train_hmm_ubm_traced, HmmTrainConfig, INITIAL_SELF_LOOP};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gmm::GmmModel;
use crate::io;

const MAGIC: &[u8; 4] = b"PBMH";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    transitions: Array2<f64>,
    emissions: Vec<GmmModel>,
}

impl HmmModel {
    /// Paths start in state 0 and end in the last state; only self-loops
    /// and single forward steps are allowed, so the last row is `[.., 1]`.
    pub fn new(transitions: Array2<f64>, emissions: Vec<GmmModel>) -> Result<Self> {
        let s = emissions.len();
        if s == 0 {
            return Err(Error::invalid("HMM needs at least one state"));
        }
        if transitions.dim() != (s, s) {
            return Err(Error::dims(s * s, transitions.len()));
        }
        let f = emissions[0].dim();
        if let Some(bad) = emissions.iter().find(|g| g.dim() != f) {
            return Err(Error::dims(f, bad.dim()));
        }
        for i in 0..s {
            let row = transitions.row(i);
            if row.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
                return Err(Error::invalid(format!("transition row {i} outside [0, 1]")));
            }
            for j in 0..s {
                if (j < i || j > i + 1) && row[j] != 0.0 {
                    return Err(Error::invalid(format!(
                        "transition {i}->{j} violates left-to-right topology"
                    )));
                }
            }
            if (row.sum() - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("transition row {i} does not sum to 1")));
            }
        }
        Ok(Self {
            transitions,
            emissions,
        })
    }

    /// Left-to-right chain with the given self-loop probability.
    pub fn left_to_right(emissions: Vec<GmmModel>, self_loop: f64) -> Result<Self> {
        let s = emissions.len();
        let mut a = Array2::zeros((s, s));
        for i in 0..s {
            if i + 1 < s {
                a[[i, i]] = self_loop;
                a[[i, i + 1]] = 1.0 - self_loop;
            } else {
                a[[i, i]] = 1.0;
            }
        }
        Self::new(a, emissions)
    }

    pub fn num_states(&self) -> usize {
        self.emissions.len()
    }

    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    pub fn transitions(&self) -> &Array2<f64> {
        &self.transitions
    }

    pub fn emissions(&self) -> &[GmmModel] {
        &self.emissions
    }

    pub(crate) fn log_transition(&self, i: usize, j: usize) -> f64 {
        self.transitions[[i, j]].ln()
    }

    /// `[L x S]` emission log-likelihoods.
    pub(crate) fn emission_logliks(&self, x: &FeatureMatrix) -> Result<Array2<f64>> {
        let mut b = Array2::zeros((x.len(), self.num_states()));
        for (s, g) in self.emissions.iter().enumerate() {
            for (t, v) in g.frame_log_likelihoods(x)?.into_iter().enumerate() {
                b[[t, s]] = v;
            }
        }
        Ok(b)
    }

    pub(crate) fn check_utterance(&self, x: &FeatureMatrix) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::dims(self.dim(), x.dim()));
        }
        if x.len() < self.num_states() {
            return Err(Error::InsufficientData(format!(
                "utterance '{}' has {} frames, fewer than {} states",
                x.utterance_id,
                x.len(),
                self.num_states()
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        io::write_header(&mut out, MAGIC, VERSION);
        io::write_u32(&mut out, self.num_states() as u32);
        io::write_f64s(&mut out, self.transitions.iter().copied());
        for g in &self.emissions {
            g.encode_body(&mut out);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        io::read_header(&mut r, MAGIC, VERSION)?;
        let s = io::read_u32(&mut r)? as usize;
        if s.checked_mul(s).map_or(true, |n| n * 8 > r.len()) {
            return Err(Error::Format(format!("{s} states exceed payload")));
        }
        let a = io::read_f64s(&mut r, s * s)?;
        let emissions = (0..s)
            .map(|_| GmmModel::decode_body(&mut r))
            .collect::<Result<Vec<_>>>()?;
        io::expect_eof(&mut r)?;
        Self::new(
            Array2::from_shape_vec((s, s), a).map_err(|e| Error::Format(e.to_string()))?,
            emissions,
        )
    }

    pub fn hash(&self) -> String {
        io::content_hash(&self.encode())
    }
}

/// Difference of length-normalised Viterbi scores.
pub fn hmm_llr(target: &HmmModel, background: &HmmModel, x: &FeatureMatrix) -> Result<f64> {
    if target.num_states() != background.num_states() {
        return Err(Error::invalid(format!(
            "incompatible HMMs: {} vs {} states",
            target.num_states(),
            background.num_states()
        )));
    }
    if target.dim() != background.dim() {
        return Err(Error::dims(target.dim(), background.dim()));
    }
    Ok(viterbi_loglik(target, x)? - viterbi_loglik(background, x)?)
}
