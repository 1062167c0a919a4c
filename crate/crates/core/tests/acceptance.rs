//! Acceptance suite. One PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails.
//!
//!     cargo test --release --test acceptance

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pbmsv::corpus::Split;
use pbmsv::eval::{compute_eer, compute_min_dcf, llr_difference_report, DcfParams, TrialLabel};
use pbmsv::features::FeatureMatrix;
use pbmsv::gmm::{avg_llr, map_adapt, train_ubm_traced, GmmModel, MapConfig, UbmTrainConfig};
use pbmsv::hmm::{hmm_llr, map_adapt_hmm, train_hmm_ubm_traced, viterbi_path, HmmMapConfig, HmmModel, HmmTrainConfig};
use pbmsv::ivector::{
    accumulate_stats, apply_sph, enroll_target_ivector, extract_ivector, ivector_trial_score, plda_score, train_plda,
    train_plda_traced, train_sph, train_t_matrix_traced, IVector, IvectorSystem, SuffStats, TvSpace,
};
use pbmsv::pbm::{
    build_sd_pbms, build_si_pbms, enroll_baseline, score_trial, score_trial_baseline, Flavor, Model,
    PbmSet,
};
use pbmsv::pipeline::{
    gen_synthetic_corpus, run_pipeline, synthesize, PipelineConfig, RunOutcome, SyntheticSpec, SystemFlavor,
};

type Check = Result<String, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn non_decreasing(name: &str, h: &[f64]) -> Result<(), String> {
    for (i, w) in h.windows(2).enumerate() {
        if w[1] < w[0] - 1e-8 * w[0].abs() {
            return Err(format!("{name} dropped at iteration {i}: {} -> {}", w[0], w[1]));
        }
    }
    Ok(())
}

/// Small labelled corpus for the unit-level criteria.
fn small_corpus() -> Result<(Vec<FeatureMatrix>, Vec<FeatureMatrix>, Vec<FeatureMatrix>, Vec<FeatureMatrix>), String> {
    let spec = SyntheticSpec {
        num_phrases: 3,
        num_speakers: 4,
        num_dev_speakers: 8,
        num_ubm_speakers: 10,
        enroll_sessions: 2,
        test_sessions: 2,
        dev_sessions: 2,
        ubm_utterances: 6,
        frames_per_utterance: 50,
        dim: 6,
        num_units: 6,
        units_per_phrase: 4,
        ..SyntheticSpec::default()
    };
    let (corpus, feats) = synthesize(&spec).map_err(err)?;
    let mut out: [Vec<FeatureMatrix>; 4] = Default::default();
    for m in feats {
        let split = corpus.get(&m.utterance_id).ok_or("unlabelled utterance")?.split;
        let k = match split {
            Split::Ubm => 0,
            Split::Dev => 1,
            Split::Enroll => 2,
            Split::Test => 3,
        };
        out[k].push(m);
    }
    let [ubm, dev, enroll, test] = out;
    Ok((ubm, dev, enroll, test))
}

fn ivector_classes(vs: &[IVector], feats: &[FeatureMatrix]) -> Vec<Vec<IVector>> {
    let mut by: BTreeMap<(String, String), Vec<IVector>> = BTreeMap::new();
    for (v, m) in vs.iter().zip(feats) {
        let key = (m.speaker_id.clone().unwrap_or_default(), m.phrase_id.clone().unwrap_or_default());
        by.entry(key).or_default().push(v.clone());
    }
    by.into_values().collect()
}

fn monotonicity() -> Check {
    let start = Instant::now();
    let (ubm_data, dev, _, _) = small_corpus()?;
    let (gmm, h_gmm) = train_ubm_traced(
        &ubm_data,
        &UbmTrainConfig {
            components: 8,
            em_iterations: 10,
            iterations_per_split: 3,
            seed: 1,
        },
    )
    .map_err(err)?;
    non_decreasing("GMM EM", &h_gmm)?;
    let (_, h_hmm) = train_hmm_ubm_traced(
        &ubm_data,
        &HmmTrainConfig {
            states: 3,
            components_per_state: 2,
            bw_iterations: 10,
            iterations_per_split: 3,
            seed: 1,
        },
    )
    .map_err(err)?;
    non_decreasing("Baum-Welch", &h_hmm)?;
    let pooled: Vec<FeatureMatrix> = ubm_data.iter().chain(&dev).cloned().collect();
    let stats: Vec<SuffStats> = pooled.iter().map(|m| accumulate_stats(&gmm, &gmm, m)).collect::<Result<_, _>>().map_err(err)?;
    let (tv, h_t) = train_t_matrix_traced(&gmm, &stats, 8, 10, 2).map_err(err)?;
    non_decreasing("T EM", &h_t)?;
    let ivs: Vec<IVector> = dev
        .iter()
        .map(|m| extract_ivector(&tv, &accumulate_stats(&gmm, &gmm, m)?, m.utterance_id.clone()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let (_, h_plda) = train_plda_traced(&ivector_classes(&ivs, &dev), 4, 4, 20, 3).map_err(err)?;
    non_decreasing("PLDA EM", &h_plda)?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), format!("took {t:?}"))?;
    Ok(format!(
        "GMM {} / BW {} / T {} / PLDA {} iterations non-decreasing in {:.1}s",
        h_gmm.len() - 1,
        h_hmm.len() - 1,
        h_t.len() - 1,
        h_plda.len() - 1,
        t.as_secs_f64()
    ))
}

fn random_gmm(rng: &mut ChaCha8Rng, c: usize, f: usize) -> GmmModel {
    let w: Vec<f64> = (0..c).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    GmmModel::new(
        Array1::from_iter(w.iter().map(|v| v / s)),
        Array2::from_shape_fn((c, f), |_| rng.gen_range(-2.0..2.0)),
        Array2::from_shape_fn((c, f), |_| rng.gen_range(0.3..2.0)),
    )
    .unwrap()
}

fn random_frames(rng: &mut ChaCha8Rng, id: &str, l: usize, f: usize) -> FeatureMatrix {
    FeatureMatrix::new(id, Array2::from_shape_fn((l, f), |_| rng.gen_range(-3.0..3.0))).unwrap()
}

/// Plain product-of-univariate-densities mixture posterior.
fn density_posteriors(g: &GmmModel, x: &[f64]) -> Vec<f64> {
    let dens: Vec<f64> = (0..g.num_components())
        .map(|c| {
            let mut p = g.weights()[c];
            for (d, &xd) in x.iter().enumerate() {
                let (mu, var) = (g.means()[[c, d]], g.variances()[[c, d]]);
                p *= (-(xd - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            }
            p
        })
        .collect();
    let total: f64 = dens.iter().sum();
    dens.iter().map(|p| p / total).collect()
}

fn all_paths(l: usize, s: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![vec![0usize]];
    for _ in 1..l {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                let last = *p.last().unwrap();
                [last, last + 1].into_iter().filter(move |&n| n < s).map(move |n| {
                    let mut q = p.clone();
                    q.push(n);
                    q
                })
            })
            .collect();
    }
    paths.retain(|p| *p.last().unwrap() == s - 1);
    paths
}

/// Threshold sweep by direct counting, accepting when `score > threshold`.
fn sweep(tgt: &[f64], non: &[f64]) -> Vec<(f64, f64)> {
    let mut all: Vec<f64> = tgt.iter().chain(non).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut th = vec![f64::NEG_INFINITY];
    for w in all.windows(2) {
        th.push(w[0] + (w[1] - w[0]) / 2.0);
    }
    th.push(f64::INFINITY);
    th.iter()
        .map(|&t| {
            let miss = tgt.iter().filter(|&&s| !(s > t)).count() as f64 / tgt.len() as f64;
            let fa = non.iter().filter(|&&s| s > t).count() as f64 / non.len() as f64;
            (miss, fa)
        })
        .collect()
}

fn sweep_eer(pts: &[(f64, f64)]) -> f64 {
    let i = pts.iter().position(|(m, f)| m - f >= 0.0).unwrap();
    let (m1, f1) = pts[i];
    if i == 0 || m1 == f1 {
        return m1;
    }
    let (m0, f0) = pts[i - 1];
    let (dm, df) = (m1 - m0, f1 - f0);
    m0 + (f0 - m0) / (dm - df) * dm
}

fn oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    // (a) posteriors
    let mut worst_a = 0.0f64;
    for _ in 0..50 {
        let g = random_gmm(&mut rng, 4, 3);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = g.posteriors(Array1::from(x.clone()).view()).map_err(err)?;
        for (a, b) in p.iter().zip(density_posteriors(&g, &x)) {
            worst_a = worst_a.max((a - b).abs());
        }
    }
    ensure(worst_a <= 1e-10, format!("(a) posterior error {worst_a:e}"))?;

    // (b) centred Baum-Welch statistics by a double loop over frames and components
    let g = random_gmm(&mut rng, 4, 3);
    let post = random_gmm(&mut rng, 4, 3);
    let x = random_frames(&mut rng, "u", 40, 3);
    let s = accumulate_stats(&post, &g, &x).map_err(err)?;
    let mut worst_b = 0.0f64;
    let mut n = vec![0.0; 4];
    let mut f1 = vec![[0.0; 3]; 4];
    for t in 0..x.len() {
        let row: Vec<f64> = x.row(t).to_vec();
        let gamma = density_posteriors(&post, &row);
        for c in 0..4 {
            n[c] += gamma[c];
            for d in 0..3 {
                f1[c][d] += gamma[c] * (row[d] - g.means()[[c, d]]);
            }
        }
    }
    for c in 0..4 {
        worst_b = worst_b.max((s.zero_order[c] - n[c]).abs());
        for d in 0..3 {
            worst_b = worst_b.max((s.first_order_centered[[c, d]] - f1[c][d]).abs());
        }
    }
    ensure(worst_b <= 1e-10, format!("(b) statistics error {worst_b:e}"))?;

    // (c) scalar i-vector: (1 + 1*3*1)^-1 * 1*2 = 0.5
    let tv = TvSpace::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0), 1, "m").map_err(err)?;
    let st = SuffStats {
        zero_order: Array1::from(vec![3.0]),
        first_order_centered: Array2::from_elem((1, 1), 2.0),
        source_model_id: "m".into(),
    };
    let w = extract_ivector(&tv, &st, "u").map_err(err)?.values[0];
    ensure((w - 0.5).abs() <= 1e-12, format!("(c) scalar i-vector {w}"))?;

    // (d) Viterbi against every admissible path
    let mut cases = 0;
    for s in 1..=3 {
        for l in s.max(2)..=8 {
            for _ in 0..5 {
                let ems: Vec<GmmModel> = (0..s).map(|_| random_gmm(&mut rng, 2, 2)).collect();
                let h = HmmModel::left_to_right(ems, rng.gen_range(0.1..0.9)).map_err(err)?;
                let x = random_frames(&mut rng, "v", l, 2);
                let score = |p: &[usize]| -> f64 {
                    let mut v = 0.0;
                    for t in 0..l {
                        if t > 0 {
                            v += h.transitions()[[p[t - 1], p[t]]].ln();
                        }
                        v += h.emissions()[p[t]].log_likelihood(x.row(t)).unwrap();
                    }
                    v
                };
                let (best, best_v) = all_paths(l, s)
                    .into_iter()
                    .map(|p| {
                        let v = score(&p);
                        (p, v)
                    })
                    .fold((vec![], f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
                let (path, v) = viterbi_path(&h, &x).map_err(err)?;
                ensure(path == best, format!("(d) argmax differs for S={s} L={l}"))?;
                ensure((v - best_v).abs() <= 1e-10, format!("(d) value {v} vs {best_v}"))?;
                cases += 1;
            }
        }
    }

    // (e) 1000 scores with ties
    let scores: Vec<f64> = (0..1000).map(|_| (rng.gen_range(-3.0f64..3.0) * 20.0).round() / 20.0).collect();
    let (tgt, non): (Vec<f64>, Vec<f64>) = {
        let t: Vec<f64> = scores[..300].iter().map(|s| s + 1.0).collect();
        (t, scores[300..].to_vec())
    };
    let pts = sweep(&tgt, &non);
    let dcf = DcfParams::default();
    let brute_dcf = pts.iter().map(|&(m, f)| dcf.c_miss * m * dcf.p_target + dcf.c_fa * f * (1.0 - dcf.p_target)).fold(f64::INFINITY, f64::min);
    let (eer, mdcf) = (compute_eer(&tgt, &non).map_err(err)?, compute_min_dcf(&tgt, &non, &dcf).map_err(err)?);
    ensure(eer == sweep_eer(&pts), format!("(e) EER {eer} vs {}", sweep_eer(&pts)))?;
    ensure(mdcf == brute_dcf, format!("(e) MinDCF {mdcf} vs {brute_dcf}"))?;
    Ok(format!(
        "posteriors {worst_a:.1e}, stats {worst_b:.1e}, scalar w={w}, {cases} Viterbi cases, EER {eer:.4} MinDCF {mdcf:.4} exact"
    ))
}

fn map_limits() -> Check {
    let one = |r: f64| MapConfig {
        relevance_factor: r,
        iterations: 1,
        ..MapConfig::default()
    };
    // r=10, N=10, mean 1, prior 0 -> 0.5
    let prior = GmmModel::new(Array1::from(vec![1.0]), Array2::zeros((1, 1)), Array2::ones((1, 1))).map_err(err)?;
    let data = FeatureMatrix::new("d", Array2::ones((10, 1))).map_err(err)?;
    let m = map_adapt(&prior, &data, &one(10.0)).map_err(err)?.means()[[0, 0]];
    ensure((m - 0.5).abs() <= 1e-12, format!("hand case gave {m}"))?;

    // Far-away component gets exactly zero occupancy.
    let two = GmmModel::new(
        Array1::from(vec![0.5, 0.5]),
        Array2::from_shape_vec((2, 2), vec![0.0, 0.0, 1e4, -1e4]).unwrap(),
        Array2::from_elem((2, 2), 0.5),
    )
    .map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let near = FeatureMatrix::new("n", Array2::from_shape_fn((30, 2), |_| rng.sample::<f64, _>(StandardNormal))).map_err(err)?;
    let a = map_adapt(&two, &near, &MapConfig::default()).map_err(err)?;
    ensure(a.means().row(1) == two.means().row(1), "zero-occupancy mean moved")?;
    ensure(a.variances().row(1) == two.variances().row(1), "zero-occupancy variance moved")?;
    ensure(a.means().row(0) != two.means().row(0), "occupied mean did not move")?;

    let g = random_gmm(&mut rng, 4, 3);
    let x = random_frames(&mut rng, "x", 200, 3);
    let big = map_adapt(&g, &x, &one(1e15)).map_err(err)?;
    let dev = big.means().iter().zip(g.means()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(dev <= 1e-9, format!("r=1e15 moved means by {dev:e}"))?;
    Ok(format!("hand case {m}, zero-occupancy exact, r->inf deviation {dev:.1e}"))
}

fn reductions() -> Check {
    let (ubm_data, dev, enroll, test) = small_corpus()?;
    let cfg = MapConfig::default();
    let gmm = pbmsv::gmm::train_ubm(&ubm_data, 8, 5, 1).map_err(err)?;
    let ubm = Model::Gmm(gmm.clone());

    // SD with no target data
    let si = build_si_pbms(&ubm, &dev, &cfg).map_err(err)?;
    let sd = build_sd_pbms(&ubm, &dev, &[], "sp000", &cfg).map_err(err)?;
    ensure(si.entries().len() == sd.entries().len(), "SD and SI phrase sets differ")?;
    for (p, m) in si.entries() {
        ensure(sd.get(p).map_err(err)?.encode() == m.encode(), format!("SD entry {p} differs from SI"))?;
    }

    // Single-entry set against the plain LLR with that entry as background
    let (phrase, pbm) = si.entries().iter().next().unwrap();
    let single = PbmSet::new(ubm.clone(), BTreeMap::from([(phrase.clone(), pbm.clone())]), Flavor::Si, None).map_err(err)?;
    let claimant = enroll_baseline(&ubm, "sp000", "ph0", &enroll[..2], &cfg).map_err(err)?;
    let ubm_single = PbmSet::new(ubm.clone(), BTreeMap::from([(phrase.clone(), ubm.clone())]), Flavor::Si, None).map_err(err)?;
    let mut worst_single = 0.0f64;
    for y in &test {
        let a = score_trial(&claimant, &single, y).map_err(err)?.llr;
        let b = avg_llr(claimant.model.as_gmm().map_err(err)?, pbm.as_gmm().map_err(err)?, y).map_err(err)?;
        let c = score_trial(&claimant, &ubm_single, y).map_err(err)?.llr;
        let d = score_trial_baseline(&claimant, &ubm, y).map_err(err)?;
        worst_single = worst_single.max((a - b).abs()).max((c - d).abs());
    }
    ensure(worst_single <= 1e-12, format!("single-entry deviation {worst_single:e}"))?;

    // i-vector path with every PBM equal to the UBM
    let pooled: Vec<FeatureMatrix> = ubm_data.iter().chain(&dev).cloned().collect();
    let stats: Vec<SuffStats> = pooled.iter().map(|m| accumulate_stats(&gmm, &gmm, m)).collect::<Result<_, _>>().map_err(err)?;
    let (tv, _) = train_t_matrix_traced(&gmm, &stats, 6, 3, 2).map_err(err)?;
    let raw: Vec<IVector> = dev
        .iter()
        .map(|m| extract_ivector(&tv, &accumulate_stats(&gmm, &gmm, m)?, m.utterance_id.clone()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let sph = train_sph(&raw, 2).map_err(err)?;
    let normed: Vec<IVector> = raw.iter().map(|v| apply_sph(&sph, v)).collect::<Result<_, _>>().map_err(err)?;
    let plda = train_plda(&ivector_classes(&normed, &dev), 6, 6, 5, 3).map_err(err)?;
    let sys = IvectorSystem::new(gmm.clone(), tv, sph, plda).map_err(err)?;
    let copies = PbmSet::new(
        ubm.clone(),
        si.phrases().map(|p| (p.to_owned(), ubm.clone())).collect(),
        Flavor::Si,
        None,
    )
    .map_err(err)?;
    let enrolled_base = enroll_target_ivector(&sys, None, "sp000:ph0", "ph0", &enroll[..2]).map_err(err)?;
    let phrase0 = copies.phrases().next().unwrap().to_owned();
    let enrolled_pbm = enroll_target_ivector(&sys, Some(&copies), "sp000:ph0", &phrase0, &enroll[..2]).map_err(err)?;
    let mut worst_iv = (&enrolled_base.values - &enrolled_pbm.values).amax();
    for y in &test {
        let a = ivector_trial_score(&sys, Some(&copies), &enrolled_pbm, y).map_err(err)?.llr;
        let b = ivector_trial_score(&sys, None, &enrolled_base, y).map_err(err)?.llr;
        worst_iv = worst_iv.max((a - b).abs());
    }
    ensure(worst_iv <= 1e-12, format!("i-vector deviation {worst_iv:e}"))?;

    // One-state HMM against a GMM, in training, MAP and scoring
    let (h, _) = train_hmm_ubm_traced(
        &ubm_data,
        &HmmTrainConfig {
            states: 1,
            components_per_state: 4,
            bw_iterations: 5,
            iterations_per_split: 5,
            seed: 11,
        },
    )
    .map_err(err)?;
    let (g, _) = train_ubm_traced(
        &ubm_data,
        &UbmTrainConfig {
            components: 4,
            em_iterations: 5,
            iterations_per_split: 5,
            seed: 11,
        },
    )
    .map_err(err)?;
    let e = &h.emissions()[0];
    let mut worst_hmm = [
        (e.means(), g.means()),
        (e.variances(), g.variances()),
    ]
    .iter()
    .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
    .fold(0.0f64, f64::max);
    worst_hmm = e.weights().iter().zip(g.weights()).map(|(a, b)| (a - b).abs()).fold(worst_hmm, f64::max);
    let refs: Vec<&FeatureMatrix> = enroll[..2].iter().collect();
    let th = map_adapt_hmm(&h, &refs, &HmmMapConfig::default()).map_err(err)?;
    let tg = pbmsv::gmm::map_adapt_many(&g, &refs, &cfg).map_err(err)?;
    for y in &test {
        let a = hmm_llr(&th, &h, y).map_err(err)?;
        let b = avg_llr(&tg, &g, y).map_err(err)?;
        worst_hmm = worst_hmm.max((a - b).abs());
    }
    ensure(worst_hmm <= 1e-6, format!("S=1 HMM deviation {worst_hmm:e}"))?;
    Ok(format!(
        "SD(empty)=SI bit-identical, single-entry {worst_single:.1e}, i-vector copies {worst_iv:.1e}, S=1 HMM {worst_hmm:.1e}"
    ))
}

/// Default corpus, C=64, baseline + SI + SD.
fn table2_run(dir: &Path, spec: &SyntheticSpec, flavors: Vec<SystemFlavor>) -> Result<(RunOutcome, Duration), String> {
    let start = Instant::now();
    gen_synthetic_corpus(spec, dir).map_err(err)?;
    let cfg = PipelineConfig {
        manifest: dir.join("manifest.txt"),
        features_dir: dir.join("features"),
        output: dir.join("run"),
        components: 64,
        flavors,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(&cfg).map_err(err)?;
    Ok((run, start.elapsed()))
}

fn eer(run: &RunOutcome, sys: &str, label: TrialLabel) -> Result<f64, String> {
    run.system(sys)
        .ok_or(format!("no system {sys}"))?
        .report
        .row(label)
        .map(|r| r.eer_pct)
        .ok_or(format!("{sys} has no {label} row"))
}

fn directional(run: &RunOutcome, took: Duration) -> Check {
    let mut parts = Vec::new();
    for sys in ["gmm-si", "gmm-sd"] {
        for label in [TrialLabel::TargetWrong, TrialLabel::ImposterWrong] {
            let (b, p) = (eer(run, "gmm-baseline", label)?, eer(run, sys, label)?);
            ensure(p < b, format!("{sys} {label} EER {p:.2} not below baseline {b:.2}"))?;
            parts.push(format!("{sys} {label} {p:.2}<{b:.2}"));
        }
        let (b, p) = (eer(run, "gmm-baseline", TrialLabel::ImposterCorrect)?, eer(run, sys, TrialLabel::ImposterCorrect)?);
        let ratio = b.max(p) / b.min(p);
        ensure(ratio <= 1.5, format!("{sys} imposter-correct {p:.2} vs {b:.2}, ratio {ratio:.2}"))?;
        parts.push(format!("{sys} imposter-correct ratio {ratio:.2}"));
    }
    ensure(took < Duration::from_secs(600), format!("took {took:?}"))?;
    Ok(format!("{}; {:.0}s", parts.join(", "), took.as_secs_f64()))
}

fn phrase_id(run: &RunOutcome, chance_run: &RunOutcome, phrases: usize) -> Check {
    let acc = run.system("gmm-si").and_then(|s| s.phrase_accuracy).ok_or("no SI phrase accuracy")?;
    let flat = chance_run.system("gmm-si").and_then(|s| s.phrase_accuracy).ok_or("no SI phrase accuracy")?;
    let chance = 1.0 / phrases as f64;
    ensure(acc >= 0.95, format!("accuracy {:.2}%", 100.0 * acc))?;
    ensure((flat - chance).abs() <= 0.05, format!("separation 0 gave {:.2}% vs chance {:.2}%", 100.0 * flat, 100.0 * chance))?;
    Ok(format!("{:.2}% separated, {:.2}% at separation 0 (chance {:.0}%)", 100.0 * acc, 100.0 * flat, 100.0 * chance))
}

fn lower_llr(run: &RunOutcome) -> Check {
    let base = &run.system("gmm-baseline").ok_or("no baseline")?.scores;
    let si = &run.system("gmm-si").ok_or("no SI system")?.scores;
    let fr = llr_difference_report(base, si, &run.trials).map_err(err)?;
    let mut parts = Vec::new();
    for f in &fr {
        ensure(f.fraction() >= 0.9, format!("{} only {:.2}% lower", f.label, 100.0 * f.fraction()))?;
        parts.push(format!("{} {:.2}% of {}", f.label, 100.0 * f.fraction(), f.trials));
    }
    ensure(fr.len() == 2, "expected target-wrong and imposter-wrong pools")?;
    Ok(parts.join(", "))
}

fn plda_recovery() -> Check {
    let phi = DMatrix::from_row_slice(4, 2, &[2.0, 0.0, 1.0, 1.5, -0.5, 1.0, 0.0, -1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let classes: Vec<Vec<IVector>> = (0..500)
        .map(|k| {
            let y = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let centre = &phi * y;
            (0..10)
                .map(|i| {
                    let e = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
                    IVector::new(format!("c{k}_{i}"), &centre + e).unwrap()
                })
                .collect()
        })
        .collect();
    let p = train_plda(&classes, 2, 0, 100, 3).map_err(err)?;
    let truth = &phi * phi.transpose();
    let rel = (p.between_covariance() - &truth).svd(false, false).singular_values.max()
        / truth.svd(false, false).singular_values.max();
    ensure(rel <= 0.2, format!("relative spectral error {rel:.3}"))?;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let a = IVector::new("a", DVector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0))).unwrap();
        let b = IVector::new("b", DVector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0))).unwrap();
        worst = worst.max((plda_score(&p, &a, &b).map_err(err)? - plda_score(&p, &b, &a).map_err(err)?).abs());
    }
    ensure(worst <= 1e-10, format!("asymmetry {worst:e}"))?;
    Ok(format!("5000 i-vectors, spectral error {:.1}%, asymmetry {worst:.1e}", 100.0 * rel))
}

fn determinism(dir: &Path) -> Check {
    let exe = env!("CARGO_BIN_EXE_pbmsv");
    let data = dir.join("data");
    let st = Command::new(exe)
        .args(["synth", "--out"])
        .arg(&data)
        .args(["--set", "num_speakers=6", "--set", "num_dev_speakers=6", "--set", "num_ubm_speakers=8", "--set", "num_phrases=3"])
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(err)?;
    ensure(st.success(), "synth failed")?;
    let conf = dir.join("run.conf");
    std::fs::write(
        &conf,
        "manifest = data/manifest.txt\nfeatures = data/features\nubm.components = 16\npbm.flavors = baseline,si,sd\n",
    )
    .map_err(err)?;
    for out in ["a", "b"] {
        let st = Command::new(exe)
            .args(["run", "--config"])
            .arg(&conf)
            .args(["--set", &format!("output={}", dir.join(out).display())])
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(err)?;
        ensure(st.success(), format!("run {out} failed"))?;
    }
    let mut files: Vec<_> = std::fs::read_dir(dir.join("a/scores")).map_err(err)?.map(|e| e.unwrap().file_name()).collect();
    files.sort();
    ensure(!files.is_empty(), "no score files")?;
    for f in &files {
        let a = std::fs::read(dir.join("a/scores").join(f)).map_err(err)?;
        let b = std::fs::read(dir.join("b/scores").join(f)).map_err(err)?;
        ensure(a == b, format!("{} differs between runs", f.to_string_lossy()))?;
    }
    Ok(format!("{} score files byte-identical across two runs", files.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, r: Check| {
        match r {
            Ok(msg) => println!("PASS  {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg}");
            }
        }
    };
    report("training monotonicity", monotonicity());
    report("oracle equivalences", oracles());
    report("MAP limit laws", map_limits());
    report("reduction identities", reductions());

    let tmp = tempfile::tempdir().expect("temp dir");
    let spec = SyntheticSpec::default();
    let main = table2_run(&tmp.path().join("sep"), &spec, vec![SystemFlavor::Baseline, SystemFlavor::Si, SystemFlavor::Sd]);
    let flat = table2_run(
        &tmp.path().join("flat"),
        &SyntheticSpec {
            phrase_separation: 0.0,
            ..spec.clone()
        },
        vec![SystemFlavor::Si],
    );
    match (&main, &flat) {
        (Ok((run, took)), Ok((flat, _))) => {
            report("directional non-target pattern", directional(run, *took));
            report("pass-phrase identification", phrase_id(run, flat, spec.num_phrases));
            report("lower LLR on wrong-phrase trials", lower_llr(run));
        }
        _ => {
            let why = main.as_ref().err().or(flat.as_ref().err()).cloned().unwrap_or_default();
            report("directional non-target pattern", Err(why.clone()));
            report("pass-phrase identification", Err(why.clone()));
            report("lower LLR on wrong-phrase trials", Err(why));
        }
    }
    report("PLDA generate and recover", plda_recovery());
    report("run determinism", determinism(&tmp.path().join("det")));

    if failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
