use ndarray::Array2;

use super::HmmModel;
use crate::error::Result;
use crate::features::FeatureMatrix;
use crate::numerics::log_add;

/// Best-path state sequence and its joint log-likelihood (not normalised).
pub fn viterbi_path(h: &HmmModel, x: &FeatureMatrix) -> Result<(Vec<usize>, f64)> {
    h.check_utterance(x)?;
    let b = h.emission_logliks(x)?;
    Ok(viterbi_from(h, &b))
}

pub(crate) fn viterbi_from(h: &HmmModel, b: &Array2<f64>) -> (Vec<usize>, f64) {
    let (l, s) = b.dim();
    let mut delta = Array2::from_elem((l, s), f64::NEG_INFINITY);
    let mut back = Array2::<usize>::zeros((l, s));
    delta[[0, 0]] = b[[0, 0]];
    for t in 1..l {
        for j in 0..s {
            let stay = delta[[t - 1, j]] + h.log_transition(j, j);
            let (best, from) = if j > 0 {
                let advance = delta[[t - 1, j - 1]] + h.log_transition(j - 1, j);
                if advance > stay {
                    (advance, j - 1)
                } else {
                    (stay, j)
                }
            } else {
                (stay, j)
            };
            delta[[t, j]] = best + b[[t, j]];
            back[[t, j]] = from;
        }
    }
    let mut path = vec![0; l];
    path[l - 1] = s - 1;
    for t in (1..l).rev() {
        path[t - 1] = back[[t, path[t]]];
    }
    (path, delta[[l - 1, s - 1]])
}

/// Forced-alignment score: best-path joint log-likelihood divided by `L`.
pub fn viterbi_loglik(h: &HmmModel, x: &FeatureMatrix) -> Result<f64> {
    Ok(viterbi_path(h, x)?.1 / x.len() as f64)
}

/// Forward log-probabilities `alpha[t][s]`.
pub(crate) fn forward(h: &HmmModel, b: &Array2<f64>) -> Array2<f64> {
    let (l, s) = b.dim();
    let mut alpha = Array2::from_elem((l, s), f64::NEG_INFINITY);
    alpha[[0, 0]] = b[[0, 0]];
    for t in 1..l {
        for j in 0..s {
            let mut v = alpha[[t - 1, j]] + h.log_transition(j, j);
            if j > 0 {
                v = log_add(v, alpha[[t - 1, j - 1]] + h.log_transition(j - 1, j));
            }
            alpha[[t, j]] = v + b[[t, j]];
        }
    }
    alpha
}

pub(crate) fn backward(h: &HmmModel, b: &Array2<f64>) -> Array2<f64> {
    let (l, s) = b.dim();
    let mut beta = Array2::from_elem((l, s), f64::NEG_INFINITY);
    beta[[l - 1, s - 1]] = 0.0;
    for t in (0..l - 1).rev() {
        for i in 0..s {
            let mut v = h.log_transition(i, i) + b[[t + 1, i]] + beta[[t + 1, i]];
            if i + 1 < s {
                v = log_add(
                    v,
                    h.log_transition(i, i + 1) + b[[t + 1, i + 1]] + beta[[t + 1, i + 1]],
                );
            }
            beta[[t, i]] = v;
        }
    }
    beta
}

/// Total (all-path) log-likelihood, not normalised.
pub fn forward_loglik(h: &HmmModel, x: &FeatureMatrix) -> Result<f64> {
    h.check_utterance(x)?;
    let b = h.emission_logliks(x)?;
    let alpha = forward(h, &b);
    Ok(alpha[[x.len() - 1, h.num_states() - 1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::GmmModel;
    use crate::numerics::log_sum_exp;
    use ndarray::array;
    use proptest::prelude::*;

    /// Every monotone alignment from state 0 to state S-1 with unit steps.
    fn enumerate_paths(l: usize, s: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut path = vec![0usize];
        fn rec(path: &mut Vec<usize>, l: usize, s: usize, out: &mut Vec<Vec<usize>>) {
            if path.len() == l {
                if *path.last().unwrap() == s - 1 {
                    out.push(path.clone());
                }
                return;
            }
            let cur = *path.last().unwrap();
            for next in [cur, cur + 1] {
                if next < s {
                    path.push(next);
                    rec(path, l, s, out);
                    path.pop();
                }
            }
        }
        rec(&mut path, l, s, &mut out);
        out
    }

    fn path_score(h: &HmmModel, b: &Array2<f64>, p: &[usize]) -> f64 {
        let mut v = b[[0, p[0]]];
        for t in 1..p.len() {
            v += h.transitions()[[p[t - 1], p[t]]].ln() + b[[t, p[t]]];
        }
        v
    }

    fn model(s: usize, params: &[f64]) -> HmmModel {
        let mut a = Array2::zeros((s, s));
        let ems = (0..s)
            .map(|i| {
                if i + 1 < s {
                    a[[i, i]] = params[i];
                    a[[i, i + 1]] = 1.0 - params[i];
                } else {
                    a[[i, i]] = 1.0;
                }
                GmmModel::new(
                    array![0.4, 0.6],
                    array![[params[3 + i], 0.0], [params[6 + i], 1.0]],
                    array![[1.0, 0.5], [0.7, 2.0]],
                )
                .unwrap()
            })
            .collect();
        HmmModel::new(a, ems).unwrap()
    }

    proptest! {
        #[test]
        fn viterbi_matches_exhaustive_enumeration(
            s in 1usize..=3,
            l in 3usize..=8,
            params in prop::collection::vec(0.05f64..0.95, 9),
            xs in prop::collection::vec(-2.0f64..2.0, 16),
        ) {
            let mut params = params;
            for p in params.iter_mut().skip(3) { *p = (*p - 0.5) * 6.0; }
            let h = model(s, &params);
            let x = FeatureMatrix::new("u", Array2::from_shape_vec((l, 2), xs[..2 * l].to_vec()).unwrap()).unwrap();
            let b = h.emission_logliks(&x).unwrap();
            let paths = enumerate_paths(l, s);
            let scores: Vec<f64> = paths.iter().map(|p| path_score(&h, &b, p)).collect();
            let (best_idx, best) = scores.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            let (path, v) = viterbi_path(&h, &x).unwrap();
            prop_assert!((v - best).abs() < 1e-10);
            prop_assert!((path_score(&h, &b, &path) - scores[best_idx]).abs() < 1e-10);
            let total = log_sum_exp(&scores);
            let fwd = forward_loglik(&h, &x).unwrap();
            prop_assert!((fwd - total).abs() < 1e-10);
            prop_assert!(v <= fwd + 1e-12);
        }
    }

    #[test]
    fn single_state_is_average_emission() {
        let g = GmmModel::new(array![0.5, 0.5], array![[0.0], [2.0]], array![[1.0], [1.0]])
            .unwrap();
        let h = HmmModel::left_to_right(vec![g.clone()], 0.8).unwrap();
        let x = FeatureMatrix::new("u", Array2::from_shape_vec((4, 1), vec![0.1, 1.0, 2.2, -0.4]).unwrap())
            .unwrap();
        let v = viterbi_loglik(&h, &x).unwrap();
        assert!((v - g.avg_log_likelihood(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn short_utterance_rejected() {
        let g = GmmModel::new(array![1.0], array![[0.0]], array![[1.0]]).unwrap();
        let h = HmmModel::left_to_right(vec![g.clone(), g.clone(), g], 0.5).unwrap();
        let x = FeatureMatrix::new("u", Array2::zeros((2, 1))).unwrap();
        assert!(viterbi_loglik(&h, &x).is_err());
    }

    #[test]
    fn duplicated_frames_stay_finite() {
        let g = GmmModel::new(array![1.0], array![[0.0]], array![[1.0]]).unwrap();
        let h = HmmModel::left_to_right(vec![g.clone(), g], 0.6).unwrap();
        let base: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let doubled: Vec<f64> = base.iter().flat_map(|&v| [v, v]).collect();
        let a = FeatureMatrix::new("a", Array2::from_shape_vec((10, 1), base).unwrap()).unwrap();
        let b = FeatureMatrix::new("b", Array2::from_shape_vec((20, 1), doubled).unwrap()).unwrap();
        let va = viterbi_loglik(&h, &a).unwrap();
        let vb = viterbi_loglik(&h, &b).unwrap();
        assert!(va.is_finite() && vb.is_finite());
        assert!((va - vb).abs() < 1.0);
    }
}
