use super::train::accumulate_corpus;
use super::HmmModel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gmm::{map_from_stats, MapConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct HmmMapConfig {
    pub relevance_factor: f64,
    pub iterations: usize,
    pub update_transitions: bool,
}

impl Default for HmmMapConfig {
    fn default() -> Self {
        Self {
            relevance_factor: 10.0,
            iterations: 3,
            update_transitions: false,
        }
    }
}

/// MAP adaptation of an HMM. Emission means follow relevance MAP with
/// forward-backward state occupancies; transitions, when enabled, use
/// `(n_ij + r a_ij) / (n_i + r)` against the prior's probabilities.
pub fn map_adapt_hmm(prior: &HmmModel, data: &[&FeatureMatrix], cfg: &HmmMapConfig) -> Result<HmmModel> {
    let gmm_cfg = MapConfig {
        relevance_factor: cfg.relevance_factor,
        iterations: cfg.iterations,
        ..MapConfig::default()
    };
    gmm_cfg.validate()?;
    let data: Vec<&FeatureMatrix> = data.iter().copied().filter(|m| !m.is_empty()).collect();
    if data.is_empty() {
        return Err(Error::InsufficientData("HMM MAP adaptation with no frames".into()));
    }
    let r = cfg.relevance_factor;
    let s = prior.num_states();
    let mut current = prior.clone();
    for _ in 0..cfg.iterations {
        let stats = accumulate_corpus(&current, &data)?;
        let emissions = prior
            .emissions()
            .iter()
            .zip(&stats.states)
            .map(|(g, st)| map_from_stats(g, st, &gmm_cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut a = prior.transitions().clone();
        if cfg.update_transitions {
            for i in 0..s.saturating_sub(1) {
                let (n_stay, n_next) = (stats.transitions[[i, i]], stats.transitions[[i, i + 1]]);
                let n = n_stay + n_next;
                let stay = (n_stay + r * prior.transitions()[[i, i]]) / (n + r);
                let next = (n_next + r * prior.transitions()[[i, i + 1]]) / (n + r);
                let z = stay + next;
                a[[i, i]] = stay / z;
                a[[i, i + 1]] = next / z;
            }
        }
        current = HmmModel::new(a, emissions)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{map_adapt_many, GmmModel};
    use ndarray::{array, Array2};

    fn utt(id: &str, v: Vec<f64>) -> FeatureMatrix {
        let n = v.len();
        FeatureMatrix::new(id, Array2::from_shape_vec((n, 1), v).unwrap()).unwrap()
    }

    fn two_state() -> HmmModel {
        let a = GmmModel::new(array![0.5, 0.5], array![[-3.0], [-1.0]], array![[1.0], [1.0]]).unwrap();
        let b = GmmModel::new(array![0.5, 0.5], array![[1.0], [3.0]], array![[1.0], [1.0]]).unwrap();
        HmmModel::left_to_right(vec![a, b], 0.8).unwrap()
    }

    #[test]
    fn transitions_fixed_without_flag() {
        let h = two_state();
        let x = utt("a", vec![-3.0, -2.5, -1.0, 1.0, 2.0, 3.2, 3.0]);
        let out = map_adapt_hmm(&h, &[&x], &HmmMapConfig::default()).unwrap();
        assert_eq!(out.transitions(), h.transitions());
        assert_ne!(out.emissions()[0].means(), h.emissions()[0].means());
    }

    #[test]
    fn transitions_move_with_flag_and_keep_topology() {
        let h = two_state();
        // Short first segment: the self-loop of state 0 should drop.
        let x = utt("a", vec![-3.0, 1.0, 2.0, 3.0, 2.5, 1.5, 3.0, 2.0]);
        let cfg = HmmMapConfig {
            update_transitions: true,
            relevance_factor: 1.0,
            ..HmmMapConfig::default()
        };
        let out = map_adapt_hmm(&h, &[&x], &cfg).unwrap();
        assert!(out.transitions()[[0, 0]] < 0.8);
        assert!((out.transitions().row(0).sum() - 1.0).abs() < 1e-12);
        assert_eq!(out.transitions()[[1, 0]], 0.0);
        assert_eq!(out.transitions()[[1, 1]], 1.0);
    }

    #[test]
    fn zero_occupancy_component_unchanged() {
        // Every state of a forced left-to-right path is visited, so occupancy
        // can only vanish at the component level.
        let two = GmmModel::new(array![0.5, 0.5], array![[0.0], [1.0e4]], array![[1.0], [1.0]]).unwrap();
        let h = HmmModel::left_to_right(vec![two], 0.5).unwrap();
        let x = utt("a", vec![0.1, 0.2, 0.3, 0.0]);
        let out = map_adapt_hmm(&h, &[&x], &HmmMapConfig::default()).unwrap();
        assert_eq!(out.emissions()[0].means()[[1, 0]], 1.0e4);
        assert_ne!(out.emissions()[0].means()[[0, 0]], 0.0);
    }

    #[test]
    fn single_state_matches_gmm_map() {
        let g = GmmModel::new(array![0.3, 0.7], array![[-1.0], [2.0]], array![[1.0], [0.5]]).unwrap();
        let h = HmmModel::left_to_right(vec![g.clone()], 0.5).unwrap();
        let a = utt("a", vec![0.0, 1.5, 2.5, -0.8]);
        let b = utt("b", vec![2.2, 1.9, -1.2]);
        let out = map_adapt_hmm(&h, &[&a, &b], &HmmMapConfig::default()).unwrap();
        let reference = map_adapt_many(&g, &[&a, &b], &MapConfig::default()).unwrap();
        for (p, q) in out.emissions()[0].means().iter().zip(reference.means().iter()) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_data_rejected() {
        let h = two_state();
        assert!(map_adapt_hmm(&h, &[], &HmmMapConfig::default()).is_err());
    }
}
