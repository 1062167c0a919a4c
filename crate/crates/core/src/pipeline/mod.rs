//! End-to-end experiments: configuration, synthetic corpora, trial lists,
//! system scoring and the staged run.

mod config;
mod run;
mod score;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

pub use config::{Family, IvectorConfig, PipelineConfig, SystemFlavor};
pub use run::{compare_score_files, run_pipeline, RunOutcome, SystemOutcome};
pub use score::{score_ivector_system, score_system, Backgrounds, EnrolledIvectors};
pub use synth::{feature_path, gen_synthetic_corpus, synthesize, SyntheticSpec};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::eval::{Trial, TrialLabel};
use crate::features::{read_features, FeatureMatrix};

/// Target models implied by the enrollment split: one per (speaker, phrase),
/// in order of first appearance, with its training utterance ids.
pub fn enrollment_groups(corpus: &Corpus) -> Result<Vec<(String, String, Vec<String>)>> {
    let mut out: Vec<(String, String, Vec<String>)> = Vec::new();
    let mut at: HashMap<(String, String), usize> = HashMap::new();
    for e in corpus.split(Split::Enroll) {
        let phrase = e
            .phrase()
            .ok_or_else(|| Error::invalid(format!("enrollment utterance '{}' has no phrase", e.utterance_id)))?;
        let key = (e.speaker_id.clone(), phrase.to_owned());
        match at.get(&key) {
            Some(&i) => out[i].2.push(e.utterance_id.clone()),
            None => {
                at.insert(key, out.len());
                out.push((e.speaker_id.clone(), phrase.to_owned(), vec![e.utterance_id.clone()]));
            }
        }
    }
    Ok(out)
}

/// Every enrolled model against every test utterance, labelled from the
/// manifest. Model-major, both in manifest order.
pub fn make_trials(corpus: &Corpus) -> Result<Vec<Trial>> {
    let models = enrollment_groups(corpus)?;
    let mut out = Vec::new();
    for (spk, phrase, _) in &models {
        for e in corpus.split(Split::Test) {
            let p = e
                .phrase()
                .ok_or_else(|| Error::invalid(format!("test utterance '{}' has no phrase", e.utterance_id)))?;
            out.push(Trial {
                model_id: format!("{spk}:{phrase}"),
                utterance_id: e.utterance_id.clone(),
                label: TrialLabel::classify(spk, phrase, &e.speaker_id, p),
            });
        }
    }
    Ok(out)
}

/// Read `<dir>/<utt>.feat` for every manifest entry in `splits`, labelling
/// each matrix from the manifest.
pub fn load_split_features(corpus: &Corpus, dir: &Path, splits: &[Split]) -> Result<Vec<FeatureMatrix>> {
    corpus
        .entries()
        .iter()
        .filter(|e| splits.contains(&e.split))
        .map(|e| {
            let mut m = read_features(&feature_path(dir, &e.utterance_id))?;
            if m.utterance_id != e.utterance_id {
                return Err(Error::invalid(format!(
                    "feature file for '{}' holds '{}'",
                    e.utterance_id, m.utterance_id
                )));
            }
            m.speaker_id = Some(e.speaker_id.clone());
            m.phrase_id = e.phrase().map(str::to_owned);
            Ok(m)
        })
        .collect()
}

/// Index feature matrices by utterance id.
pub fn by_id(feats: &[FeatureMatrix]) -> BTreeMap<&str, &FeatureMatrix> {
    feats.iter().map(|m| (m.utterance_id.as_str(), m)).collect()
}

/// True phrase of every test utterance, for phrase identification accuracy.
pub fn phrase_truth(corpus: &Corpus) -> BTreeMap<String, String> {
    corpus
        .split(Split::Test)
        .filter_map(|e| Some((e.utterance_id.clone(), e.phrase()?.to_owned())))
        .collect()
}
