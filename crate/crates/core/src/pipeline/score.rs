//! Scoring whole trial lists. The background side of each trial depends only
//! on the test utterance (and, for SD sets, the claimed speaker), so it is
//! computed once and shared by every claimant.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::eval::{split_model_id, Score, ScoreSet, Trial};
use crate::features::FeatureMatrix;
use crate::ivector::{apply_sph, plda_score, IVector, IvectorSystem};
use crate::pbm::{select_pbm_scored, BackgroundScore, Model, PbmSet, SpeakerModel};

/// The alternative hypothesis of a system.
#[derive(Debug, Clone, Copy)]
pub enum Backgrounds<'a> {
    Ubm(&'a Model),
    Shared(&'a PbmSet),
    /// SD sets keyed by owner; a trial uses the claimed speaker's set.
    PerSpeaker(&'a BTreeMap<String, PbmSet>),
}

/// Enrolled i-vectors by model id.
pub type EnrolledIvectors = BTreeMap<String, IVector>;

impl<'a> Backgrounds<'a> {
    /// PBM set used for a claim by `speaker`, with a cache key.
    fn set_for(&self, speaker: &str) -> Result<(Option<&'a PbmSet>, &'a str)> {
        match *self {
            Backgrounds::Ubm(_) => Ok((None, "")),
            Backgrounds::Shared(s) => Ok((Some(s), "")),
            Backgrounds::PerSpeaker(m) => {
                let (owner, set) = m
                    .get_key_value(speaker)
                    .ok_or_else(|| Error::invalid(format!("no SD PBM set for speaker '{speaker}'")))?;
                Ok((Some(set), owner.as_str()))
            }
        }
    }
}

fn test_utt<'b>(test: &BTreeMap<&str, &'b FeatureMatrix>, id: &str) -> Result<&'b FeatureMatrix> {
    test.get(id)
        .copied()
        .ok_or_else(|| Error::invalid(format!("no features for test utterance '{id}'")))
}

/// Score every trial with GMM/HMM target models. Identical to calling
/// [`crate::pbm::score_trial`] (or the baseline) per trial.
pub fn score_system(
    system_id: &str,
    models: &[SpeakerModel],
    bg: Backgrounds<'_>,
    trials: &[Trial],
    test: &BTreeMap<&str, &FeatureMatrix>,
) -> Result<ScoreSet> {
    let by_id: HashMap<String, &SpeakerModel> = models.iter().map(|m| (m.model_id(), m)).collect();
    for m in models {
        match bg {
            Backgrounds::Ubm(u) => m.model.check_compatible(u)?,
            Backgrounds::Shared(s) => m.model.check_compatible(s.root())?,
            Backgrounds::PerSpeaker(_) => {}
        }
    }
    let mut cache: HashMap<(&str, &str), (Option<String>, BackgroundScore)> = HashMap::new();
    let mut out = Vec::with_capacity(trials.len());
    for t in trials {
        let claimant = by_id
            .get(&t.model_id)
            .ok_or_else(|| Error::invalid(format!("no enrolled model '{}'", t.model_id)))?;
        let y = test_utt(test, &t.utterance_id)?;
        let (set, owner) = bg.set_for(&claimant.speaker_id)?;
        let key = (owner, t.utterance_id.as_str());
        if !cache.contains_key(&key) {
            let entry = match (bg, set) {
                (Backgrounds::Ubm(u), _) => (None, u.background_score(y)?),
                (_, Some(set)) => {
                    claimant.model.check_compatible(set.root())?;
                    let (phrase, _) = select_pbm_scored(set, y)?;
                    (Some(phrase.to_owned()), set.get(phrase)?.background_score(y)?)
                }
                _ => unreachable!("PBM backgrounds always resolve to a set"),
            };
            cache.insert(key, entry);
        }
        let (selected, b) = &cache[&key];
        let llr = claimant.model.llr_with(b, y)?;
        if !llr.is_finite() {
            return Err(Error::Numerical(format!("non-finite score for {} {}", t.model_id, t.utterance_id)));
        }
        out.push(Score {
            model_id: t.model_id.clone(),
            utterance_id: t.utterance_id.clone(),
            score: llr,
            selected: selected.clone(),
        });
    }
    ScoreSet::new(system_id, out)
}

/// Score every trial with PLDA between the enrolled i-vector and the test
/// i-vector, the latter extracted with posteriors from the selected PBM
/// (or the UBM for [`Backgrounds::Ubm`]). Identical to calling
/// [`crate::ivector::ivector_trial_score`] per trial.
pub fn score_ivector_system(
    system_id: &str,
    sys: &IvectorSystem,
    enrolled: &EnrolledIvectors,
    bg: Backgrounds<'_>,
    trials: &[Trial],
    test: &BTreeMap<&str, &FeatureMatrix>,
) -> Result<ScoreSet> {
    let mut claimants: HashMap<&str, IVector> = HashMap::new();
    let mut cache: HashMap<(&str, &str), (Option<String>, IVector)> = HashMap::new();
    let mut out = Vec::with_capacity(trials.len());
    for t in trials {
        if !claimants.contains_key(t.model_id.as_str()) {
            let w = enrolled
                .get(&t.model_id)
                .ok_or_else(|| Error::invalid(format!("no enrolled i-vector '{}'", t.model_id)))?;
            let w = if w.normalized { w.clone() } else { apply_sph(&sys.sph, w)? };
            claimants.insert(&t.model_id, w);
        }
        let (speaker, _) = split_model_id(&t.model_id)?;
        let (set, owner) = bg.set_for(speaker)?;
        let key = (owner, t.utterance_id.as_str());
        if !cache.contains_key(&key) {
            let y = test_utt(test, &t.utterance_id)?;
            let (post, selected) = sys.posterior_model(set, y)?;
            cache.insert(key, (selected, apply_sph(&sys.sph, &sys.extract(post, y)?)?));
        }
        let (selected, w) = &cache[&key];
        out.push(Score {
            model_id: t.model_id.clone(),
            utterance_id: t.utterance_id.clone(),
            score: plda_score(&sys.plda, &claimants[t.model_id.as_str()], w)?,
            selected: selected.clone(),
        });
    }
    ScoreSet::new(system_id, out)
}
