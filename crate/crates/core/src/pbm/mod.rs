//! Pass-phrase dependent background models.
//!
//! A PBM is the text-independent UBM MAP-adapted to every utterance of one
//! pass-phrase. Targets are enrolled from the PBM of their phrase, and at
//! test time the PBM that best explains the utterance replaces the UBM as
//! the alternative hypothesis.

mod store;

pub use store::{load_pbm_set, read_speaker_models, save_pbm_set, write_speaker_models, SdPbmCache};

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gmm::{avg_llr, map_adapt_many, GmmModel, MapConfig};
use crate::hmm::{hmm_llr, map_adapt_hmm, viterbi_loglik, HmmMapConfig, HmmModel};

/// A background or speaker model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gmm(GmmModel),
    Hmm(HmmModel),
}

impl Model {
    pub fn family(&self) -> &'static str {
        match self {
            Model::Gmm(_) => "gmm",
            Model::Hmm(_) => "hmm",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Gmm(g) => g.dim(),
            Model::Hmm(h) => h.dim(),
        }
    }

    pub fn as_gmm(&self) -> Result<&GmmModel> {
        match self {
            Model::Gmm(g) => Ok(g),
            Model::Hmm(_) => Err(Error::FamilyMismatch {
                expected: "gmm",
                found: "hmm",
            }),
        }
    }

    /// Length-normalised utterance log-likelihood: the frame average for a
    /// GMM, the Viterbi score divided by `L` for an HMM.
    pub fn score(&self, y: &FeatureMatrix) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::InsufficientData(format!("utterance '{}' is empty", y.utterance_id)));
        }
        match self {
            Model::Gmm(g) => g.avg_log_likelihood(y),
            Model::Hmm(h) => viterbi_loglik(h, y),
        }
    }

    /// Length-normalised log-likelihood ratio of `self` against `background`.
    pub fn llr(&self, background: &Model, y: &FeatureMatrix) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::InsufficientData(format!("utterance '{}' is empty", y.utterance_id)));
        }
        match (self, background) {
            (Model::Gmm(t), Model::Gmm(b)) => avg_llr(t, b, y),
            (Model::Hmm(t), Model::Hmm(b)) => hmm_llr(t, b, y),
            _ => Err(self.mismatch(background)),
        }
    }

    /// The background half of [`Model::llr`] for `y`, reusable across
    /// claimants.
    pub fn background_score(&self, y: &FeatureMatrix) -> Result<BackgroundScore> {
        if y.is_empty() {
            return Err(Error::InsufficientData(format!("utterance '{}' is empty", y.utterance_id)));
        }
        Ok(match self {
            Model::Gmm(g) => BackgroundScore::Frames(g.frame_log_likelihoods(y)?),
            Model::Hmm(h) => BackgroundScore::Viterbi(viterbi_loglik(h, y)?),
        })
    }

    /// [`Model::llr`] against a precomputed background; bit-identical.
    pub fn llr_with(&self, background: &BackgroundScore, y: &FeatureMatrix) -> Result<f64> {
        match (self, background) {
            (Model::Gmm(t), BackgroundScore::Frames(b)) => {
                if b.len() != y.len() {
                    return Err(Error::dims(y.len(), b.len()));
                }
                let a = t.frame_log_likelihoods(y)?;
                let sum: f64 = a.iter().zip(b).map(|(p, q)| p - q).sum();
                Ok(sum / y.len() as f64)
            }
            (Model::Hmm(t), BackgroundScore::Viterbi(b)) => Ok(viterbi_loglik(t, y)? - b),
            (Model::Gmm(_), _) => Err(Error::FamilyMismatch {
                expected: "gmm",
                found: "hmm",
            }),
            (Model::Hmm(_), _) => Err(Error::FamilyMismatch {
                expected: "hmm",
                found: "gmm",
            }),
        }
    }

    fn mismatch(&self, other: &Model) -> Error {
        Error::FamilyMismatch {
            expected: self.family(),
            found: other.family(),
        }
    }

    /// Same family and the same shape (C/F, or S/G/F).
    pub fn check_compatible(&self, other: &Model) -> Result<()> {
        match (self, other) {
            (Model::Gmm(a), Model::Gmm(b)) => gmm_shape(a, b),
            (Model::Hmm(a), Model::Hmm(b)) => {
                if a.num_states() != b.num_states() {
                    return Err(Error::invalid(format!(
                        "HMM state counts differ: {} vs {}",
                        a.num_states(),
                        b.num_states()
                    )));
                }
                a.emissions().iter().zip(b.emissions()).try_for_each(|(x, y)| gmm_shape(x, y))
            }
            _ => Err(self.mismatch(other)),
        }
    }

    fn adapt(&self, data: &[&FeatureMatrix], cfg: &MapConfig, transitions: bool) -> Result<Model> {
        match self {
            Model::Gmm(g) => {
                let cfg = MapConfig {
                    update_weights: false,
                    update_variances: false,
                    ..cfg.clone()
                };
                Ok(Model::Gmm(map_adapt_many(g, data, &cfg)?))
            }
            Model::Hmm(h) => {
                let cfg = HmmMapConfig {
                    relevance_factor: cfg.relevance_factor,
                    iterations: cfg.iterations,
                    update_transitions: transitions,
                };
                Ok(Model::Hmm(map_adapt_hmm(h, data, &cfg)?))
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Model::Gmm(g) => g.encode(),
            Model::Hmm(h) => h.encode(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        match bytes.get(..4) {
            Some(b"PBMG") => Ok(Model::Gmm(GmmModel::decode(bytes)?)),
            Some(b"PBMH") => Ok(Model::Hmm(HmmModel::decode(bytes)?)),
            _ => Err(Error::Format("unknown model magic".into())),
        }
    }

    pub fn hash(&self) -> String {
        crate::io::content_hash(&self.encode())
    }
}

fn gmm_shape(a: &GmmModel, b: &GmmModel) -> Result<()> {
    if a.num_components() != b.num_components() {
        return Err(Error::dims(a.num_components(), b.num_components()));
    }
    if a.dim() != b.dim() {
        return Err(Error::dims(a.dim(), b.dim()));
    }
    Ok(())
}

/// Per-frame log-likelihoods of a GMM background, or the normalised Viterbi
/// score of an HMM background.
#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundScore {
    Frames(Vec<f64>),
    Viterbi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Si,
    Sd,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Si => "si",
            Flavor::Sd => "sd",
        })
    }
}

impl std::str::FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "si" => Ok(Flavor::Si),
            "sd" => Ok(Flavor::Sd),
            other => Err(Error::invalid(format!("unknown PBM flavor '{other}'"))),
        }
    }
}

/// Phrase id -> adapted background model, plus the root UBM. Iteration
/// order (and therefore tie-breaking) follows the phrase id ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct PbmSet {
    root: Model,
    entries: BTreeMap<String, Model>,
    flavor: Flavor,
    owner: Option<String>,
}

impl PbmSet {
    pub fn new(root: Model, entries: BTreeMap<String, Model>, flavor: Flavor, owner: Option<String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("PBM set has no entries"));
        }
        match (flavor, &owner) {
            (Flavor::Sd, None) => return Err(Error::invalid("SD PBM set needs an owner")),
            (Flavor::Si, Some(_)) => return Err(Error::invalid("SI PBM set cannot have an owner")),
            _ => {}
        }
        for m in entries.values() {
            root.check_compatible(m)?;
        }
        Ok(Self {
            root,
            entries,
            flavor,
            owner,
        })
    }

    pub fn root(&self) -> &Model {
        &self.root
    }

    pub fn entries(&self) -> &BTreeMap<String, Model> {
        &self.entries
    }

    pub fn get(&self, phrase: &str) -> Result<&Model> {
        self.entries
            .get(phrase)
            .ok_or_else(|| Error::UnknownPhrase(phrase.to_owned()))
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn owner(&self) -> Option<&str> {
        self.owner.as_deref()
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn family(&self) -> &'static str {
        self.root.family()
    }
}

/// A pass-phrase specific target model and the background it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerModel {
    pub speaker_id: String,
    pub phrase_id: String,
    pub model: Model,
    /// Hash of the model it was adapted from (a PBM entry or the UBM).
    pub source: String,
}

impl SpeakerModel {
    pub fn model_id(&self) -> String {
        format!("{}:{}", self.speaker_id, self.phrase_id)
    }
}

fn phrase_of(m: &FeatureMatrix) -> Result<&str> {
    m.phrase_id
        .as_deref()
        .ok_or_else(|| Error::invalid(format!("utterance '{}' has no phrase id", m.utterance_id)))
}

/// Group utterances by phrase id, preserving input order inside a group.
pub fn group_by_phrase(corpus: &[FeatureMatrix]) -> Result<BTreeMap<String, Vec<&FeatureMatrix>>> {
    let mut groups: BTreeMap<String, Vec<&FeatureMatrix>> = BTreeMap::new();
    for m in corpus {
        groups.entry(phrase_of(m)?.to_owned()).or_default().push(m);
    }
    Ok(groups)
}

fn check_group(phrase: &str, data: &[&FeatureMatrix]) -> Result<()> {
    if data.iter().all(|m| m.is_empty()) {
        return Err(Error::InsufficientData(format!("phrase '{phrase}' has no frames")));
    }
    Ok(())
}

/// Speaker-independent PBMs: one MAP adaptation of the UBM per phrase of the
/// development corpus. GMM PBMs update means only; HMM PBMs also update
/// transitions.
pub fn build_si_pbms(ubm: &Model, dev: &[FeatureMatrix], cfg: &MapConfig) -> Result<PbmSet> {
    cfg.validate()?;
    let groups = group_by_phrase(dev)?;
    if groups.is_empty() {
        return Err(Error::InsufficientData("no development utterances".into()));
    }
    let mut entries = BTreeMap::new();
    for (phrase, data) in groups {
        check_group(&phrase, &data)?;
        let m = ubm.adapt(&data, cfg, true)?;
        entries.insert(phrase, m);
    }
    PbmSet::new(ubm.clone(), entries, Flavor::Si, None)
}

/// Adaptation data of one SD entry: the development group followed by the
/// owner's utterances of that phrase.
fn sd_group<'a>(dev: &[&'a FeatureMatrix], target: &'a [FeatureMatrix], phrase: &str) -> Vec<&'a FeatureMatrix> {
    let mut data = dev.to_vec();
    data.extend(target.iter().filter(|m| m.phrase_id.as_deref() == Some(phrase)));
    data
}

fn check_target(owner: &str, target: &[FeatureMatrix], phrases: &BTreeMap<String, Vec<&FeatureMatrix>>) -> Result<()> {
    for m in target {
        let p = phrase_of(m)?;
        if !phrases.contains_key(p) {
            return Err(Error::UnknownPhrase(p.to_owned()));
        }
        if let Some(s) = &m.speaker_id {
            if s != owner {
                return Err(Error::invalid(format!(
                    "utterance '{}' belongs to '{s}', not SD owner '{owner}'",
                    m.utterance_id
                )));
            }
        }
    }
    Ok(())
}

/// Speaker-dependent PBMs for `owner`: every phrase pools the development
/// data with the owner's own training data for that phrase.
pub fn build_sd_pbms(
    ubm: &Model,
    dev: &[FeatureMatrix],
    target: &[FeatureMatrix],
    owner: &str,
    cfg: &MapConfig,
) -> Result<PbmSet> {
    cfg.validate()?;
    let groups = group_by_phrase(dev)?;
    if groups.is_empty() {
        return Err(Error::InsufficientData("no development utterances".into()));
    }
    check_target(owner, target, &groups)?;
    let mut entries = BTreeMap::new();
    for (phrase, data) in &groups {
        let data = sd_group(data, target, phrase);
        check_group(phrase, &data)?;
        entries.insert(phrase.clone(), ubm.adapt(&data, cfg, true)?);
    }
    PbmSet::new(ubm.clone(), entries, Flavor::Sd, Some(owner.to_owned()))
}

fn enroll_from(
    prior: &Model,
    speaker: &str,
    phrase: &str,
    training: &[FeatureMatrix],
    cfg: &MapConfig,
) -> Result<SpeakerModel> {
    cfg.validate()?;
    let data: Vec<&FeatureMatrix> = training.iter().collect();
    if data.iter().all(|m| m.is_empty()) {
        return Err(Error::InsufficientData(format!("no enrollment frames for {speaker}:{phrase}")));
    }
    Ok(SpeakerModel {
        speaker_id: speaker.to_owned(),
        phrase_id: phrase.to_owned(),
        model: prior.adapt(&data, cfg, false)?,
        source: prior.hash(),
    })
}

/// Derive a target model from the PBM of its enrollment phrase. Only means
/// are adapted.
pub fn enroll_target(
    pbms: &PbmSet,
    speaker: &str,
    phrase: &str,
    training: &[FeatureMatrix],
    cfg: &MapConfig,
) -> Result<SpeakerModel> {
    if let Some(owner) = pbms.owner() {
        if owner != speaker {
            return Err(Error::invalid(format!("SD PBM set of '{owner}' used to enroll '{speaker}'")));
        }
    }
    enroll_from(pbms.get(phrase)?, speaker, phrase, training, cfg)
}

/// Baseline enrollment: adapt the target model directly from the UBM.
pub fn enroll_baseline(
    ubm: &Model,
    speaker: &str,
    phrase: &str,
    training: &[FeatureMatrix],
    cfg: &MapConfig,
) -> Result<SpeakerModel> {
    enroll_from(ubm, speaker, phrase, training, cfg)
}

/// Maximum-likelihood PBM for `y` together with its normalised score.
/// Ties go to the lowest phrase id.
pub fn select_pbm_scored<'a>(pbms: &'a PbmSet, y: &FeatureMatrix) -> Result<(&'a str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for (phrase, m) in pbms.entries() {
        let s = m.score(y)?;
        if !s.is_finite() {
            return Err(Error::Numerical(format!("non-finite likelihood of '{}' under PBM '{phrase}'", y.utterance_id)));
        }
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((phrase, s));
        }
    }
    Ok(best.expect("PBM sets are nonempty"))
}

pub fn select_pbm<'a>(pbms: &'a PbmSet, y: &FeatureMatrix) -> Result<&'a str> {
    Ok(select_pbm_scored(pbms, y)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub llr: f64,
    pub selected: Option<String>,
}

/// LLR of `y` between the claimant and the PBM selected for `y`, which is
/// not necessarily the PBM the claimant was enrolled from.
pub fn score_trial(claimant: &SpeakerModel, pbms: &PbmSet, y: &FeatureMatrix) -> Result<TrialScore> {
    claimant.model.check_compatible(pbms.root())?;
    let (phrase, _) = select_pbm_scored(pbms, y)?;
    let llr = claimant.model.llr(pbms.get(phrase)?, y)?;
    Ok(TrialScore {
        llr,
        selected: Some(phrase.to_owned()),
    })
}

/// LLR against the root UBM.
pub fn score_trial_baseline(claimant: &SpeakerModel, ubm: &Model, y: &FeatureMatrix) -> Result<f64> {
    claimant.model.check_compatible(ubm)?;
    claimant.model.llr(ubm, y)
}
