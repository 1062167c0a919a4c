use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use super::align::{backward, forward};
use super::HmmModel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gmm::{split_init, GmmModel, GmmStats};

pub const INITIAL_SELF_LOOP: f64 = 0.8;
const UTTERANCES_PER_TASK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmTrainConfig {
    pub states: usize,
    pub components_per_state: usize,
    pub bw_iterations: usize,
    pub iterations_per_split: usize,
    pub seed: u64,
}

impl Default for HmmTrainConfig {
    fn default() -> Self {
        Self {
            states: 14,
            components_per_state: 8,
            bw_iterations: 10,
            iterations_per_split: 5,
            seed: 0,
        }
    }
}

/// Occupancy-weighted emission statistics per state plus expected
/// transition counts.
#[derive(Debug, Clone)]
pub(crate) struct HmmStats {
    pub states: Vec<GmmStats>,
    pub transitions: Array2<f64>,
    pub log_likelihood: f64,
}

impl HmmStats {
    fn zeros(h: &HmmModel) -> Self {
        let s = h.num_states();
        Self {
            states: h
                .emissions()
                .iter()
                .map(|g| GmmStats::zeros(g.num_components(), g.dim()))
                .collect(),
            transitions: Array2::zeros((s, s)),
            log_likelihood: 0.0,
        }
    }

    fn merge(&mut self, other: &HmmStats) {
        for (a, b) in self.states.iter_mut().zip(&other.states) {
            a.merge(b);
        }
        self.transitions += &other.transitions;
        self.log_likelihood += other.log_likelihood;
    }
}

/// Forward-backward over one utterance.
fn accumulate_utterance(h: &HmmModel, x: &FeatureMatrix, acc: &mut HmmStats) -> Result<()> {
    h.check_utterance(x)?;
    let b = h.emission_logliks(x)?;
    let alpha = forward(h, &b);
    let beta = backward(h, &b);
    let (l, s) = b.dim();
    let total = alpha[[l - 1, s - 1]];
    if !total.is_finite() {
        return Err(Error::Numerical(format!(
            "utterance '{}' has no finite alignment",
            x.utterance_id
        )));
    }
    acc.log_likelihood += total;
    let mut scratch: Vec<Vec<f64>> = h
        .emissions()
        .iter()
        .map(|g| vec![0.0; g.num_components()])
        .collect();
    for t in 0..l {
        let row = x.row(t);
        for st in 0..s {
            let gamma = (alpha[[t, st]] + beta[[t, st]] - total).exp();
            if gamma > 0.0 {
                acc.states[st].accumulate_row(&h.emissions()[st], row, gamma, &mut scratch[st]);
            }
        }
        if t + 1 < l {
            for i in 0..s {
                let base = alpha[[t, i]] - total;
                acc.transitions[[i, i]] +=
                    (base + h.log_transition(i, i) + b[[t + 1, i]] + beta[[t + 1, i]]).exp();
                if i + 1 < s {
                    acc.transitions[[i, i + 1]] += (base
                        + h.log_transition(i, i + 1)
                        + b[[t + 1, i + 1]]
                        + beta[[t + 1, i + 1]])
                        .exp();
                }
            }
        }
    }
    Ok(())
}

/// Deterministic chunked reduction over a corpus.
pub(crate) fn accumulate_corpus(h: &HmmModel, corpus: &[&FeatureMatrix]) -> Result<HmmStats> {
    let partial: Vec<Result<HmmStats>> = corpus
        .par_chunks(UTTERANCES_PER_TASK)
        .map(|chunk| {
            let mut acc = HmmStats::zeros(h);
            for x in chunk {
                accumulate_utterance(h, x, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = HmmStats::zeros(h);
    for p in partial {
        total.merge(&p?);
    }
    Ok(total)
}

/// ML update of a single emission mixture; a state with no occupancy is kept.
fn reestimate_emission(prev: &GmmModel, stats: &GmmStats, floor: &ndarray::Array1<f64>) -> Result<GmmModel> {
    if stats.occupancy.sum() <= 0.0 {
        return Ok(prev.clone());
    }
    crate::gmm::reestimate(prev, stats, floor)
}

fn reestimate_transitions(prev: &Array2<f64>, counts: &Array2<f64>) -> Array2<f64> {
    let s = prev.nrows();
    let mut a = prev.clone();
    for i in 0..s.saturating_sub(1) {
        let stay = counts[[i, i]];
        let next = counts[[i, i + 1]];
        let n = stay + next;
        if n > 0.0 {
            a[[i, i]] = stay / n;
            a[[i, i + 1]] = next / n;
        }
    }
    a
}

fn check_corpus(corpus: &[FeatureMatrix], states: usize) -> Result<usize> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("empty corpus".into()));
    }
    let f = corpus[0].dim();
    for x in corpus {
        if x.dim() != f {
            return Err(Error::dims(f, x.dim()));
        }
        if x.len() < states {
            return Err(Error::InsufficientData(format!(
                "utterance '{}' has {} frames, fewer than {states} states",
                x.utterance_id,
                x.len()
            )));
        }
    }
    Ok(f)
}

/// Baum-Welch training of a left-to-right HMM with one dummy label for all
/// data. Returns the model and the corpus log-likelihood before every
/// iteration and after the last.
pub fn train_hmm_ubm_traced(corpus: &[FeatureMatrix], cfg: &HmmTrainConfig) -> Result<(HmmModel, Vec<f64>)> {
    if cfg.states == 0 {
        return Err(Error::invalid("HMM needs at least one state"));
    }
    check_corpus(corpus, cfg.states)?;
    let all: Vec<ArrayView2<'_, f64>> = corpus.iter().map(|m| m.frames.view()).collect();
    let floor = crate::gmm::floor_from(&all);

    // Uniform segmentation: state s owns rows [s L / S, (s + 1) L / S).
    let mut emissions = Vec::with_capacity(cfg.states);
    for st in 0..cfg.states {
        let chunks: Vec<ArrayView2<'_, f64>> = corpus
            .iter()
            .map(|m| {
                let l = m.len();
                m.frames.slice(s![st * l / cfg.states..(st + 1) * l / cfg.states, ..])
            })
            .collect();
        let n: usize = chunks.iter().map(|c| c.nrows()).sum();
        if n < cfg.components_per_state {
            return Err(Error::InsufficientData(format!(
                "state {st} has {n} frames for {} components",
                cfg.components_per_state
            )));
        }
        emissions.push(split_init(
            &chunks,
            cfg.components_per_state,
            cfg.iterations_per_split,
            &floor,
            cfg.seed.wrapping_add(st as u64),
        )?);
    }
    let mut model = HmmModel::left_to_right(emissions, INITIAL_SELF_LOOP)?;

    let refs: Vec<&FeatureMatrix> = corpus.iter().collect();
    let mut history = Vec::with_capacity(cfg.bw_iterations + 1);
    for _ in 0..cfg.bw_iterations {
        let stats = accumulate_corpus(&model, &refs)?;
        history.push(stats.log_likelihood);
        let emissions = model
            .emissions()
            .iter()
            .zip(&stats.states)
            .map(|(g, st)| reestimate_emission(g, st, &floor))
            .collect::<Result<Vec<_>>>()?;
        let a = reestimate_transitions(model.transitions(), &stats.transitions);
        model = HmmModel::new(a, emissions)?;
    }
    history.push(accumulate_corpus(&model, &refs)?.log_likelihood);
    log::debug!("hmm S={} history={:?}", cfg.states, history);
    Ok((model, history))
}

pub fn train_hmm_ubm(
    corpus: &[FeatureMatrix],
    states: usize,
    components_per_state: usize,
    bw_iterations: usize,
    seed: u64,
) -> Result<HmmModel> {
    let cfg = HmmTrainConfig {
        states,
        components_per_state,
        bw_iterations,
        seed,
        ..HmmTrainConfig::default()
    };
    Ok(train_hmm_ubm_traced(corpus, &cfg)?.0)
}
