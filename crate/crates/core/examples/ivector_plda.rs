//! i-vector back end: total variability training, spherical normalisation,
//! PLDA, then the same trials scored with UBM posteriors and with posteriors
//! from the selected pass-phrase model.
//!
//!     cargo run --release --example ivector_plda

use std::collections::BTreeMap;
use std::error::Error;

use pbmsv::corpus::Split;
use pbmsv::eval::{det_metrics, DcfParams, TrialLabel};
use pbmsv::features::FeatureMatrix;
use pbmsv::gmm::{train_ubm, MapConfig};
use pbmsv::ivector::{
    accumulate_stats, apply_sph, enroll_target_ivector, ivector_trial_score, train_plda, train_sph, train_t_matrix,
    IVector, IvectorSystem,
};
use pbmsv::pbm::{build_si_pbms, Model};
use pbmsv::pipeline::{enrollment_groups, synthesize, SyntheticSpec};

fn main() -> Result<(), Box<dyn Error>> {
    let spec = SyntheticSpec {
        dim: 20,
        num_speakers: 10,
        ..SyntheticSpec::default()
    };
    let (corpus, feats) = synthesize(&spec)?;
    let of = |s: Split| -> Vec<FeatureMatrix> {
        feats.iter().filter(|m| corpus.get(&m.utterance_id).map(|e| e.split) == Some(s)).cloned().collect()
    };
    let (ubm_data, dev, enroll, test) = (of(Split::Ubm), of(Split::Dev), of(Split::Enroll), of(Split::Test));

    let ubm = train_ubm(&ubm_data, 32, 5, 0)?;
    let stats = ubm_data.iter().chain(&dev).map(|m| accumulate_stats(&ubm, &ubm, m)).collect::<Result<Vec<_>, _>>()?;
    let tv = train_t_matrix(&ubm, &stats, 50, 5, 0)?;
    let raw = dev
        .iter()
        .map(|m| pbmsv::ivector::extract_ivector(&tv, &accumulate_stats(&ubm, &ubm, m)?, m.utterance_id.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let sph = train_sph(&raw, 2)?;
    let mut classes: BTreeMap<(String, String), Vec<IVector>> = BTreeMap::new();
    for (v, m) in raw.iter().zip(&dev) {
        let key = (m.speaker_id.clone().unwrap_or_default(), m.phrase_id.clone().unwrap_or_default());
        classes.entry(key).or_default().push(apply_sph(&sph, v)?);
    }
    let plda = train_plda(&classes.into_values().collect::<Vec<_>>(), 50, 50, 10, 0)?;
    let sys = IvectorSystem::new(ubm.clone(), tv, sph, plda)?;
    let pbms = build_si_pbms(&Model::Gmm(ubm), &dev, &MapConfig::default())?;
    println!("T rank {}, {} PLDA training i-vectors", sys.tv.rank(), raw.len());

    let by_id: BTreeMap<&str, &FeatureMatrix> = enroll.iter().map(|m| (m.utterance_id.as_str(), m)).collect();
    for (name, set) in [("UBM posteriors", None), ("PBM posteriors", Some(&pbms))] {
        let mut tgt = Vec::new();
        let mut non: BTreeMap<TrialLabel, Vec<f64>> = BTreeMap::new();
        for (spk, phrase, utts) in enrollment_groups(&corpus)? {
            let train: Vec<FeatureMatrix> = utts.iter().map(|u| by_id[u.as_str()].clone()).collect();
            let w = enroll_target_ivector(&sys, set, &format!("{spk}:{phrase}"), &phrase, &train)?;
            for y in &test {
                let s = ivector_trial_score(&sys, set, &w, y)?.llr;
                let label = TrialLabel::classify(&spk, &phrase, y.speaker_id.as_deref().unwrap_or(""), y.phrase_id.as_deref().unwrap_or(""));
                match label {
                    TrialLabel::Target => tgt.push(s),
                    other => non.entry(other).or_default().push(s),
                }
            }
        }
        println!("\n{name}");
        for (label, scores) in &non {
            let m = det_metrics(&tgt, scores, &DcfParams::default())?;
            println!("  {label:<17} EER {:6.2}%  MinDCF x100 {:.3}", 100.0 * m.eer, 100.0 * m.min_dcf);
        }
    }
    Ok(())
}
