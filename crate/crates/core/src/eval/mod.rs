//! Trial protocol, score files and detection metrics.

mod metrics;
mod report;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use metrics::*;
pub use report::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrialLabel {
    Target,
    TargetWrong,
    ImposterCorrect,
    ImposterWrong,
}

impl TrialLabel {
    pub const ALL: [TrialLabel; 4] = [
        TrialLabel::Target,
        TrialLabel::TargetWrong,
        TrialLabel::ImposterCorrect,
        TrialLabel::ImposterWrong,
    ];
    pub const NONTARGET: [TrialLabel; 3] = [TrialLabel::TargetWrong, TrialLabel::ImposterCorrect, TrialLabel::ImposterWrong];

    pub fn token(self) -> &'static str {
        match self {
            TrialLabel::Target => "target",
            TrialLabel::TargetWrong => "target-wrong",
            TrialLabel::ImposterCorrect => "imposter-correct",
            TrialLabel::ImposterWrong => "imposter-wrong",
        }
    }

    /// Label implied by the claimed and the actual speaker/phrase.
    pub fn classify(model_speaker: &str, model_phrase: &str, utt_speaker: &str, utt_phrase: &str) -> Self {
        match (model_speaker == utt_speaker, model_phrase == utt_phrase) {
            (true, true) => TrialLabel::Target,
            (true, false) => TrialLabel::TargetWrong,
            (false, true) => TrialLabel::ImposterCorrect,
            (false, false) => TrialLabel::ImposterWrong,
        }
    }
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.token())
    }
}

impl FromStr for TrialLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrialLabel::ALL
            .into_iter()
            .find(|l| l.token() == s)
            .ok_or_else(|| Error::invalid(format!("unknown trial label '{s}'")))
    }
}

/// Split a `speaker:phrase` model id.
pub fn split_model_id(model_id: &str) -> Result<(&str, &str)> {
    match model_id.split_once(':') {
        Some((s, p)) if !s.is_empty() && !p.is_empty() && !p.contains(':') => Ok((s, p)),
        _ => Err(Error::invalid(format!("model id '{model_id}' is not speaker:phrase"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub model_id: String,
    pub utterance_id: String,
    pub label: TrialLabel,
}

impl Trial {
    pub fn key(&self) -> (&str, &str) {
        (&self.model_id, &self.utterance_id)
    }
}

fn check_trial(t: &Trial, corpus: &Corpus) -> Result<()> {
    let (spk, phrase) = split_model_id(&t.model_id)?;
    let e = corpus
        .get(&t.utterance_id)
        .ok_or_else(|| Error::invalid(format!("utterance '{}' not in manifest", t.utterance_id)))?;
    let Some(utt_phrase) = e.phrase() else {
        return Err(Error::invalid(format!("utterance '{}' has no phrase", t.utterance_id)));
    };
    let implied = TrialLabel::classify(spk, phrase, &e.speaker_id, utt_phrase);
    if implied != t.label {
        return Err(Error::invalid(format!(
            "trial {} {} labelled {} but manifest implies {implied}",
            t.model_id, t.utterance_id, t.label
        )));
    }
    Ok(())
}

/// Parse `model_id utterance_id label` lines, validating each label against
/// the manifest.
pub fn parse_trials(text: &str, corpus: &Corpus) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Malformed { line: i + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        let [model, utt, label] = f.as_slice() else {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        };
        let trial = Trial {
            model_id: model.to_string(),
            utterance_id: utt.to_string(),
            label: label.parse().map_err(|e: Error| bad(e.to_string()))?,
        };
        check_trial(&trial, corpus).map_err(|e| bad(e.to_string()))?;
        if !seen.insert((trial.model_id.clone(), trial.utterance_id.clone())) {
            return Err(bad(format!("duplicate trial {model} {utt}")));
        }
        out.push(trial);
    }
    Ok(out)
}

pub fn load_trials(path: &Path, corpus: &Corpus) -> Result<Vec<Trial>> {
    parse_trials(&io::read_text(path)?, corpus)
}

pub fn trials_to_text(trials: &[Trial]) -> String {
    let mut s = String::new();
    for t in trials {
        s += &format!("{} {} {}\n", t.model_id, t.utterance_id, t.label);
    }
    s
}

pub fn save_trials(path: &Path, trials: &[Trial]) -> Result<()> {
    io::write_atomic(path, trials_to_text(trials).as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub model_id: String,
    pub utterance_id: String,
    pub score: f64,
    pub selected: Option<String>,
}

/// Scores of one system, in the order they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    system_id: String,
    scores: Vec<Score>,
    index: HashMap<(String, String), usize>,
}

impl ScoreSet {
    pub fn new(system_id: impl Into<String>, scores: Vec<Score>) -> Result<Self> {
        let system_id = system_id.into();
        if system_id.contains(char::is_whitespace) {
            return Err(Error::invalid("system id must not contain whitespace"));
        }
        let mut index = HashMap::with_capacity(scores.len());
        for (i, s) in scores.iter().enumerate() {
            if !s.score.is_finite() {
                return Err(Error::Numerical(format!("score for {} {} is not finite", s.model_id, s.utterance_id)));
            }
            if index.insert((s.model_id.clone(), s.utterance_id.clone()), i).is_some() {
                return Err(Error::invalid(format!("trial {} {} scored twice", s.model_id, s.utterance_id)));
            }
        }
        Ok(Self {
            system_id,
            scores,
            index,
        })
    }

    pub fn system_id(&self) -> &str {
        &self.system_id
    }

    pub fn scores(&self) -> &[Score] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, model_id: &str, utterance_id: &str) -> Option<&Score> {
        self.index
            .get(&(model_id.to_owned(), utterance_id.to_owned()))
            .map(|&i| &self.scores[i])
    }

    /// Score of every trial, in trial order; fails unless the set covers
    /// exactly these trials.
    pub fn aligned(&self, trials: &[Trial]) -> Result<Vec<f64>> {
        if trials.len() != self.scores.len() {
            return Err(Error::invalid(format!(
                "system '{}' has {} scores for {} trials",
                self.system_id,
                self.scores.len(),
                trials.len()
            )));
        }
        trials
            .iter()
            .map(|t| {
                self.get(&t.model_id, &t.utterance_id).map(|s| s.score).ok_or_else(|| {
                    Error::invalid(format!("system '{}' has no score for {} {}", self.system_id, t.model_id, t.utterance_id))
                })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# system {}\n", self.system_id);
        for r in &self.scores {
            s += &format!("{} {} {}", r.model_id, r.utterance_id, r.score);
            if let Some(p) = &r.selected {
                s += " ";
                s += p;
            }
            s.push('\n');
        }
        s
    }

    /// Parse a score file. Without a `# system` header the id falls back to
    /// `default_system`.
    pub fn parse(text: &str, default_system: &str) -> Result<Self> {
        let mut system = default_system.to_owned();
        let mut scores = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(id) = rest.trim().strip_prefix("system ") {
                    system = id.trim().to_owned();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Malformed { line: i + 1, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if !(3..=4).contains(&f.len()) {
                return Err(bad(format!("expected 3 or 4 fields, found {}", f.len())));
            }
            let score: f64 = f[2].parse().map_err(|_| bad(format!("bad score '{}'", f[2])))?;
            scores.push(Score {
                model_id: f[0].to_owned(),
                utterance_id: f[1].to_owned(),
                score,
                selected: f.get(3).map(|p| p.to_string()),
            });
        }
        Self::new(system, scores)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("system");
        Self::parse(&io::read_text(path)?, stem)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_text().as_bytes())
    }
}

/// Target scores and the non-target scores of one label.
pub fn split_scores(scores: &ScoreSet, trials: &[Trial], nontarget: TrialLabel) -> Result<(Vec<f64>, Vec<f64>)> {
    let values = scores.aligned(trials)?;
    let (mut t, mut n) = (Vec::new(), Vec::new());
    for (trial, v) in trials.iter().zip(values) {
        if trial.label == TrialLabel::Target {
            t.push(v);
        } else if trial.label == nontarget {
            n.push(v);
        }
    }
    Ok((t, n))
}

/// EER and MinDCF of targets against each non-target type separately. A
/// type without trials is left out with a warning.
pub fn breakdown_by_nontarget(
    scores: &ScoreSet,
    trials: &[Trial],
    dcf: &DcfParams,
) -> Result<Vec<(TrialLabel, DetMetrics)>> {
    let mut out = Vec::new();
    for label in TrialLabel::NONTARGET {
        let (t, n) = split_scores(scores, trials, label)?;
        if n.is_empty() {
            log::warn!("system '{}': no {label} trials, metrics omitted", scores.system_id());
            continue;
        }
        out.push((label, det_metrics(&t, &n, dcf)?));
    }
    Ok(out)
}

/// Fraction of test utterances whose selected PBM phrase is the true one.
/// Each utterance counts once, by its first scored trial.
pub fn phrase_id_accuracy(scores: &ScoreSet, truth: &BTreeMap<String, String>) -> Result<f64> {
    let mut seen = HashSet::new();
    let (mut total, mut correct) = (0usize, 0usize);
    for s in scores.scores() {
        let Some(sel) = &s.selected else { continue };
        if !seen.insert(s.utterance_id.as_str()) {
            continue;
        }
        let t = truth
            .get(&s.utterance_id)
            .ok_or_else(|| Error::invalid(format!("no true phrase for '{}'", s.utterance_id)))?;
        total += 1;
        correct += (t == sel) as usize;
    }
    if total == 0 {
        return Err(Error::InsufficientData(format!(
            "system '{}' recorded no phrase selections",
            scores.system_id()
        )));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerFraction {
    pub label: TrialLabel,
    pub trials: usize,
    pub lower: usize,
}

impl LowerFraction {
    pub fn fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.lower as f64 / self.trials as f64
        }
    }
}

/// Per wrong-phrase pool, how many trials score strictly lower under `pbm`
/// than under `baseline`, i.e. `baseline - pbm > 0`.
pub fn llr_difference_report(baseline: &ScoreSet, pbm: &ScoreSet, trials: &[Trial]) -> Result<Vec<LowerFraction>> {
    let a = baseline.aligned(trials)?;
    let b = pbm.aligned(trials)?;
    Ok([TrialLabel::TargetWrong, TrialLabel::ImposterWrong]
        .into_iter()
        .map(|label| {
            let pool = trials.iter().zip(a.iter().zip(&b)).filter(|(t, _)| t.label == label);
            let (n, lower) = pool.fold((0, 0), |(n, l), (_, (x, y))| (n + 1, l + (x - y > 0.0) as usize));
            LowerFraction { label, trials: n, lower }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus() -> Corpus {
        Corpus::parse("a1 a p1 test\na2 a p2 test\nb1 b p1 test\nb2 b p2 test\nu1 c - ubm\n").unwrap()
    }

    #[test]
    fn empty_trial_file() {
        assert!(parse_trials("", &corpus()).unwrap().is_empty());
    }

    #[test]
    fn four_labels() {
        let text = "a:p1 a1 target\na:p1 a2 target-wrong\na:p1 b1 imposter-correct\na:p1 b2 imposter-wrong\n";
        let t = parse_trials(text, &corpus()).unwrap();
        assert_eq!(t.iter().map(|t| t.label).collect::<Vec<_>>(), TrialLabel::ALL);
        assert_eq!(parse_trials(&trials_to_text(&t), &corpus()).unwrap(), t);
    }

    #[test]
    fn inconsistent_label_reports_line() {
        let text = "a:p1 a1 target\na:p1 a1 target-wrong\n";
        match parse_trials(text, &corpus()) {
            Err(Error::Malformed { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        for bad in ["a:p1 zz target", "a:p1 u1 target", "ap1 a1 target", "a:p1 a1 nope", "a:p1 a1"] {
            assert!(matches!(parse_trials(bad, &corpus()), Err(Error::Malformed { line: 1, .. })), "{bad}");
        }
    }

    fn set(id: &str, trials: &[Trial], f: impl Fn(usize) -> f64) -> ScoreSet {
        let s = trials
            .iter()
            .enumerate()
            .map(|(i, t)| Score {
                model_id: t.model_id.clone(),
                utterance_id: t.utterance_id.clone(),
                score: f(i),
                selected: None,
            })
            .collect();
        ScoreSet::new(id, s).unwrap()
    }

    /// Synthetic trials: `per` of each label with label-dependent offsets.
    fn synthetic(per: usize, seed: u64, offsets: [f64; 4]) -> (Vec<Trial>, ScoreSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trials = Vec::new();
        let mut values = Vec::new();
        for (k, label) in TrialLabel::ALL.into_iter().enumerate() {
            for i in 0..per {
                trials.push(Trial {
                    model_id: format!("m{k}:p"),
                    utterance_id: format!("u{i}"),
                    label,
                });
                values.push(rng.gen_range(-1.0..1.0) + offsets[k]);
            }
        }
        let s = set("sys", &trials, |i| values[i]);
        (trials, s)
    }

    #[test]
    fn score_file_roundtrip() {
        let s = ScoreSet::new(
            "gmm-si",
            vec![
                Score {
                    model_id: "a:p1".into(),
                    utterance_id: "b2".into(),
                    score: 0.1 + 0.2,
                    selected: Some("p2".into()),
                },
                Score {
                    model_id: "a:p1".into(),
                    utterance_id: "a1".into(),
                    score: -1e-300,
                    selected: None,
                },
            ],
        )
        .unwrap();
        let back = ScoreSet::parse(&s.to_text(), "x").unwrap();
        assert_eq!(back, s);
        assert_eq!(ScoreSet::parse("a b 1\n", "fallback").unwrap().system_id(), "fallback");
        assert!(ScoreSet::parse("a b 1\na b 2\n", "x").is_err());
        assert!(ScoreSet::parse("a b NaN\n", "x").is_err());
        assert!(matches!(ScoreSet::parse("a b\n", "x"), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn identical_pools_identical_rows() {
        let (trials, _) = synthetic(30, 1, [0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tgt: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..2.0)).collect();
        let pool: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = set("s", &trials, |i| if i < 30 { tgt[i] } else { pool[i % 30] });
        let rows = breakdown_by_nontarget(&s, &trials, &DcfParams::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.1 == rows[0].1));
    }

    #[test]
    fn breakdown_orders_by_separation() {
        let (trials, s) = synthetic(200, 3, [1.5, 1.0, 0.5, 0.0]);
        let rows = breakdown_by_nontarget(&s, &trials, &DcfParams::default()).unwrap();
        assert!(rows[0].1.eer > rows[1].1.eer && rows[1].1.eer > rows[2].1.eer);
    }

    #[test]
    fn missing_type_is_omitted() {
        let (trials, s) = synthetic(10, 4, [1.0, 0.0, 0.0, 0.0]);
        let keep: Vec<Trial> = trials.iter().filter(|t| t.label != TrialLabel::ImposterCorrect).cloned().collect();
        let s = set("s", &keep, |i| s.get(&keep[i].model_id, &keep[i].utterance_id).unwrap().score);
        let rows = breakdown_by_nontarget(&s, &keep, &DcfParams::default()).unwrap();
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), [TrialLabel::TargetWrong, TrialLabel::ImposterWrong]);
    }

    #[test]
    fn phrase_accuracy_extremes_and_dedup() {
        let mk = |utt: &str, model: &str, sel: &str| Score {
            model_id: model.into(),
            utterance_id: utt.into(),
            score: 0.0,
            selected: Some(sel.into()),
        };
        let truth: BTreeMap<String, String> = [("u1", "p1"), ("u2", "p2")].map(|(a, b)| (a.into(), b.into())).into();
        let right = ScoreSet::new("s", vec![mk("u1", "a:p1", "p1"), mk("u1", "b:p1", "p1"), mk("u2", "a:p1", "p2")]).unwrap();
        assert_eq!(phrase_id_accuracy(&right, &truth).unwrap(), 1.0);
        let wrong = ScoreSet::new("s", vec![mk("u1", "a:p1", "p2"), mk("u2", "a:p1", "p1")]).unwrap();
        assert_eq!(phrase_id_accuracy(&wrong, &truth).unwrap(), 0.0);
        // u1 counts once, from its first trial.
        let mixed = ScoreSet::new("s", vec![mk("u1", "a:p1", "p1"), mk("u1", "b:p1", "p2"), mk("u2", "a:p1", "p1")]).unwrap();
        assert_eq!(phrase_id_accuracy(&mixed, &truth).unwrap(), 0.5);
        let unknown = ScoreSet::new("s", vec![mk("u9", "a:p1", "p1")]).unwrap();
        assert!(phrase_id_accuracy(&unknown, &truth).is_err());
    }

    #[test]
    fn llr_difference_extremes() {
        let (trials, base) = synthetic(25, 5, [0.0; 4]);
        let same = llr_difference_report(&base, &base, &trials).unwrap();
        assert!(same.iter().all(|r| r.lower == 0 && r.trials == 25));
        let shifted = set("pbm", &trials, |i| base.scores()[i].score - 1.0);
        let r = llr_difference_report(&base, &shifted, &trials).unwrap();
        assert!(r.iter().all(|r| r.fraction() == 1.0));
        assert_eq!(r.iter().map(|r| r.label).collect::<Vec<_>>(), [TrialLabel::TargetWrong, TrialLabel::ImposterWrong]);
        assert!(llr_difference_report(&base, &set("p", &trials[1..], |_| 0.0), &trials).is_err());
    }

    proptest! {
        #[test]
        fn pooled_eer_between_type_extremes(seed in 0u64..500, per in 5usize..60) {
            let (trials, s) = synthetic(per, seed, [1.0, 0.2, 0.6, -0.3]);
            let rows = breakdown_by_nontarget(&s, &trials, &DcfParams::default()).unwrap();
            let values = s.aligned(&trials).unwrap();
            let (t, n): (Vec<_>, Vec<_>) = trials.iter().zip(&values).partition(|(t, _)| t.label == TrialLabel::Target);
            let t: Vec<f64> = t.into_iter().map(|p| *p.1).collect();
            let n: Vec<f64> = n.into_iter().map(|p| *p.1).collect();
            let pooled = compute_eer(&t, &n).unwrap();
            let lo = rows.iter().map(|r| r.1.eer).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r.1.eer).fold(0.0, f64::max);
            prop_assert!(pooled >= lo - 1e-12 && pooled <= hi + 1e-12, "{lo} {pooled} {hi}");
        }
    }
}
