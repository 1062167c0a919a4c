use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{GmmModel, GmmStats};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Floor relative to the global per-dimension variance.
pub const VARIANCE_FLOOR_SCALE: f64 = 1e-4;
/// Components below this occupancy keep their previous mean and variance.
const MIN_OCCUPANCY: f64 = 1e-10;
const SPLIT_PERTURBATION: f64 = 0.2;
const SEGMENTS_PER_TASK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct UbmTrainConfig {
    /// Number of components; a power of two.
    pub components: usize,
    /// EM iterations after the last split.
    pub em_iterations: usize,
    /// EM iterations at every split level.
    pub iterations_per_split: usize,
    pub seed: u64,
}

impl Default for UbmTrainConfig {
    fn default() -> Self {
        Self {
            components: 512,
            em_iterations: 10,
            iterations_per_split: 5,
            seed: 0,
        }
    }
}

/// Global mean and variance of every frame across `segments`.
pub(crate) fn global_moments(segments: &[ArrayView2<'_, f64>]) -> (Array1<f64>, Array1<f64>, f64) {
    let f = segments[0].ncols();
    let mut sum = Array1::<f64>::zeros(f);
    let mut sq = Array1::<f64>::zeros(f);
    let mut n = 0.0;
    for seg in segments {
        for row in seg.rows() {
            sum += &row;
            sq += &row.mapv(|v| v * v);
            n += 1.0;
        }
    }
    let mean = sum / n;
    let var = sq / n - &mean * &mean;
    (mean, var.mapv(|v| v.max(0.0)), n)
}

/// `1e-4` times the global per-dimension variance (with an absolute minimum).
pub fn variance_floor(corpus: &[FeatureMatrix]) -> Result<Array1<f64>> {
    let segs = views(corpus)?;
    Ok(floor_from(&segs))
}

pub(crate) fn floor_from(segments: &[ArrayView2<'_, f64>]) -> Array1<f64> {
    let (_, var, _) = global_moments(segments);
    var.mapv(|v| (v * VARIANCE_FLOOR_SCALE).max(1e-12))
}

fn views(corpus: &[FeatureMatrix]) -> Result<Vec<ArrayView2<'_, f64>>> {
    let segs: Vec<_> = corpus
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| m.frames.view())
        .collect();
    if segs.is_empty() {
        return Err(Error::InsufficientData("empty corpus".into()));
    }
    let f = segs[0].ncols();
    if let Some(bad) = segs.iter().find(|s| s.ncols() != f) {
        return Err(Error::dims(f, bad.ncols()));
    }
    Ok(segs)
}

/// E-step over all segments with a fixed chunking so the reduction order,
/// and therefore the result, does not depend on the thread count.
pub(crate) fn accumulate(model: &GmmModel, segments: &[ArrayView2<'_, f64>]) -> GmmStats {
    let (c, f) = (model.num_components(), model.dim());
    let partial: Vec<GmmStats> = segments
        .par_chunks(SEGMENTS_PER_TASK)
        .map(|chunk| {
            let mut s = GmmStats::zeros(c, f);
            let mut scratch = vec![0.0; c];
            for seg in chunk {
                for row in seg.rows() {
                    s.accumulate_row(model, row, 1.0, &mut scratch);
                }
            }
            s
        })
        .collect();
    let mut total = GmmStats::zeros(c, f);
    for p in &partial {
        total.merge(p);
    }
    total
}

/// ML re-estimation from statistics. Starved components keep their parameters.
pub(crate) fn reestimate(prev: &GmmModel, stats: &GmmStats, floor: &Array1<f64>) -> Result<GmmModel> {
    let (c, f) = (prev.num_components(), prev.dim());
    let total: f64 = stats.occupancy.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numerical("no occupancy in EM statistics".into()));
    }
    let mut means = prev.means().clone();
    let mut vars = prev.variances().clone();
    for k in 0..c {
        let n = stats.occupancy[k];
        if n <= MIN_OCCUPANCY {
            continue;
        }
        for d in 0..f {
            let mu = stats.first[[k, d]] / n;
            let v = stats.second[[k, d]] / n - mu * mu;
            means[[k, d]] = mu;
            vars[[k, d]] = v.max(floor[d]);
        }
    }
    let weights = stats.occupancy.mapv(|n| n / total);
    let s = weights.sum();
    GmmModel::new(weights.mapv(|w| w / s), means, vars)
}

/// One EM iteration. Returns the updated model and the total log-likelihood
/// of the data under `model` (before the update).
pub(crate) fn em_step(
    model: &GmmModel,
    segments: &[ArrayView2<'_, f64>],
    floor: &Array1<f64>,
) -> Result<(GmmModel, f64)> {
    let stats = accumulate(model, segments);
    if !stats.log_likelihood.is_finite() {
        return Err(Error::Numerical(
            "non-finite log-likelihood (check the variance floor)".into(),
        ));
    }
    Ok((reestimate(model, &stats, floor)?, stats.log_likelihood))
}

fn split_all(model: &GmmModel) -> Result<GmmModel> {
    let (c, f) = (model.num_components(), model.dim());
    let mut w = Array1::zeros(2 * c);
    let mut m = Array2::zeros((2 * c, f));
    let mut v = Array2::zeros((2 * c, f));
    for k in 0..c {
        let var = model.variances().row(k);
        let (dmax, _) = var
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (d, &x)| if x > acc.1 { (d, x) } else { acc });
        let delta = SPLIT_PERTURBATION * var[dmax].sqrt();
        for (j, sign) in [(2 * k, -1.0), (2 * k + 1, 1.0)] {
            w[j] = model.weights()[k] / 2.0;
            m.row_mut(j).assign(&model.means().row(k));
            m[[j, dmax]] += sign * delta;
            v.row_mut(j).assign(&var);
        }
    }
    GmmModel::new(w, m, v)
}

/// Re-seed components whose weight collapsed on a random frame, taking half
/// the weight of the heaviest component.
fn reseed_dead(
    model: GmmModel,
    segments: &[ArrayView2<'_, f64>],
    global_var: &Array1<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<GmmModel> {
    let dead: Vec<usize> = (0..model.num_components())
        .filter(|&k| model.weights()[k] < 1e-8)
        .collect();
    if dead.is_empty() {
        return Ok(model);
    }
    let mut w = model.weights().clone();
    let mut m = model.means().clone();
    let mut v = model.variances().clone();
    for k in dead {
        let heavy = w
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, &x)| if x > acc.1 { (j, x) } else { acc })
            .0;
        let seg = &segments[rng.gen_range(0..segments.len())];
        let row = seg.row(rng.gen_range(0..seg.nrows()));
        m.row_mut(k).assign(&row);
        v.row_mut(k).assign(global_var);
        w[k] = w[heavy] / 2.0;
        w[heavy] /= 2.0;
    }
    let s = w.sum();
    GmmModel::new(w.mapv(|x| x / s), m, v)
}

/// Binary-splitting initialisation: global Gaussian, then split every
/// component along its maximum-variance dimension by +-0.2 sigma and run
/// `iterations_per_split` EM iterations per level until `components` is reached.
pub(crate) fn split_init(
    segments: &[ArrayView2<'_, f64>],
    components: usize,
    iterations_per_split: usize,
    floor: &Array1<f64>,
    seed: u64,
) -> Result<GmmModel> {
    if components == 0 || !components.is_power_of_two() {
        return Err(Error::invalid(format!(
            "component count {components} must be a power of two"
        )));
    }
    let (mean, var, _) = global_moments(segments);
    let global_var = Array1::from_shape_fn(var.len(), |d| var[d].max(floor[d]));
    let mut model = GmmModel::new(
        Array1::ones(1),
        mean.insert_axis(Axis(0)),
        global_var.clone().insert_axis(Axis(0)),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while model.num_components() < components {
        model = split_all(&model)?;
        for _ in 0..iterations_per_split {
            model = em_step(&model, segments, floor)?.0;
        }
        model = reseed_dead(model, segments, &global_var, &mut rng)?;
    }
    Ok(model)
}

/// Train a text-independent background mixture on the pooled corpus.
pub fn train_ubm(
    corpus: &[FeatureMatrix],
    components: usize,
    em_iterations: usize,
    seed: u64,
) -> Result<GmmModel> {
    let cfg = UbmTrainConfig {
        components,
        em_iterations,
        seed,
        ..UbmTrainConfig::default()
    };
    Ok(train_ubm_traced(corpus, &cfg)?.0)
}

/// As [`train_ubm`], also returning the pooled log-likelihood before every
/// final EM iteration and after the last one.
pub fn train_ubm_traced(
    corpus: &[FeatureMatrix],
    cfg: &UbmTrainConfig,
) -> Result<(GmmModel, Vec<f64>)> {
    let segments = views(corpus)?;
    let total: usize = segments.iter().map(|s| s.nrows()).sum();
    if total < 10 * cfg.components {
        return Err(Error::InsufficientData(format!(
            "{total} frames for {} components (need at least 10 per component)",
            cfg.components
        )));
    }
    let floor = floor_from(&segments);
    let mut model = split_init(
        &segments,
        cfg.components,
        cfg.iterations_per_split,
        &floor,
        cfg.seed,
    )?;
    let mut history = Vec::with_capacity(cfg.em_iterations + 1);
    for _ in 0..cfg.em_iterations {
        let (next, ll) = em_step(&model, &segments, &floor)?;
        history.push(ll);
        model = next;
    }
    let last = accumulate(&model, &segments).log_likelihood;
    if !last.is_finite() {
        return Err(Error::Numerical("non-finite log-likelihood".into()));
    }
    history.push(last);
    log::debug!("ubm C={} history={:?}", cfg.components, history);
    Ok((model, history))
}
