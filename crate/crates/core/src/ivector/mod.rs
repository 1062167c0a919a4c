//! Total-variability i-vectors with spherical normalization and PLDA.
//!
//! `T`, Sph and PLDA are always trained from UBM statistics. The PBM path
//! only changes which model supplies the frame posteriors; first-order
//! statistics are still centred on the UBM means so both paths share one
//! subspace.

mod linalg;
mod plda;
mod sph;
mod stats;
mod store;
mod tv;

pub use plda::{plda_log_likelihood, plda_score, train_plda, train_plda_traced, PldaModel, PLDA_NOISE_FLOOR};
pub use sph::{apply_sph, train_sph, SphNormalizer, SPH_EIGEN_FLOOR};
pub use stats::{accumulate_stats, SuffStats};
pub use store::{
    decode_plda, decode_sph, decode_tv, encode_plda, encode_sph, encode_tv, read_ivector_archive,
    write_ivector_archive,
};
pub use tv::{extract_ivector, train_t_matrix, train_t_matrix_traced, TvSpace};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gmm::GmmModel;
use crate::pbm::{select_pbm, PbmSet, TrialScore};

#[derive(Debug, Clone, PartialEq)]
pub struct IVector {
    /// Utterance id, or a model id for averaged enrollment vectors.
    pub id: String,
    pub values: DVector<f64>,
    pub normalized: bool,
}

impl IVector {
    pub fn new(id: impl Into<String>, values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite i-vector".into()));
        }
        Ok(Self {
            id: id.into(),
            values,
            normalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// UBM, subspace and back end, checked once for mutual consistency.
#[derive(Debug, Clone)]
pub struct IvectorSystem {
    pub ubm: GmmModel,
    pub tv: TvSpace,
    pub sph: SphNormalizer,
    pub plda: PldaModel,
}

impl IvectorSystem {
    pub fn new(ubm: GmmModel, tv: TvSpace, sph: SphNormalizer, plda: PldaModel) -> Result<Self> {
        let h = ubm.hash();
        if tv.ubm_ref() != h {
            return Err(Error::HashMismatch {
                expected: h,
                found: tv.ubm_ref().to_owned(),
            });
        }
        if tv.num_components() != ubm.num_components() || tv.dim() != ubm.dim() {
            return Err(Error::dims(ubm.num_components() * ubm.dim(), tv.sigma().len()));
        }
        if sph.dim() != tv.rank() {
            return Err(Error::dims(tv.rank(), sph.dim()));
        }
        if plda.dim() != tv.rank() {
            return Err(Error::dims(tv.rank(), plda.dim()));
        }
        Ok(Self { ubm, tv, sph, plda })
    }

    /// Raw i-vector of `x` with posteriors from `posterior_model`.
    pub fn extract(&self, posterior_model: &GmmModel, x: &FeatureMatrix) -> Result<IVector> {
        let s = accumulate_stats(posterior_model, &self.ubm, x)?;
        extract_ivector(&self.tv, &s, x.utterance_id.clone())
    }

    /// The model supplying posteriors for `y`: the selected PBM, or the UBM.
    pub fn posterior_model<'a>(&'a self, pbms: Option<&'a PbmSet>, y: &FeatureMatrix) -> Result<(&'a GmmModel, Option<String>)> {
        match pbms {
            None => Ok((&self.ubm, None)),
            Some(set) => {
                let phrase = select_pbm(set, y)?;
                Ok((set.get(phrase)?.as_gmm()?, Some(phrase.to_owned())))
            }
        }
    }
}

/// Average of per-file i-vectors for one target, with posteriors from the
/// PBM of `phrase` when a set is given and from the UBM otherwise.
pub fn enroll_target_ivector(
    sys: &IvectorSystem,
    pbms: Option<&PbmSet>,
    model_id: &str,
    phrase: &str,
    training: &[FeatureMatrix],
) -> Result<IVector> {
    if training.is_empty() {
        return Err(Error::InsufficientData(format!("no enrollment files for {model_id}")));
    }
    let post = match pbms {
        Some(set) => set.get(phrase)?.as_gmm()?,
        None => &sys.ubm,
    };
    let mut sum = DVector::zeros(sys.tv.rank());
    for x in training {
        sum += sys.extract(post, x)?.values;
    }
    IVector::new(model_id, sum / training.len() as f64)
}

/// Select a PBM for `y` (if a set is given), extract its i-vector against
/// that PBM, normalise both sides and score with PLDA.
pub fn ivector_trial_score(
    sys: &IvectorSystem,
    pbms: Option<&PbmSet>,
    claimant: &IVector,
    y: &FeatureMatrix,
) -> Result<TrialScore> {
    let (post, selected) = sys.posterior_model(pbms, y)?;
    let test = apply_sph(&sys.sph, &sys.extract(post, y)?)?;
    let claimant = if claimant.normalized {
        claimant.clone()
    } else {
        apply_sph(&sys.sph, claimant)?
    };
    Ok(TrialScore {
        llr: plda_score(&sys.plda, &claimant, &test)?,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::MapConfig;
    use crate::pbm::{build_si_pbms, Flavor, Model};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::collections::BTreeMap;

    fn ubm() -> GmmModel {
        GmmModel::new(
            array![0.25, 0.25, 0.25, 0.25],
            array![[-2.0, 0.0], [0.0, 2.0], [2.0, 0.0], [0.0, -2.0]],
            Array2::from_elem((4, 2), 1.0),
        )
        .unwrap()
    }

    /// Utterance of `speaker` (a 2-D offset) saying `phrase` (a component subset).
    fn utt(id: &str, spk: usize, phrase: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offset = [[0.8, 0.0], [-0.8, 0.3], [0.0, -0.8], [0.4, 0.8]][spk % 4];
        let comps = [[0, 1], [2, 3]][phrase % 2];
        let u = ubm();
        let frames = Array2::from_shape_fn((60, 2), |(t, d)| {
            let k = comps[(t / 5) % 2];
            u.means()[[k, d]] + offset[d] + 0.6 * rng.sample::<f64, _>(StandardNormal)
        });
        FeatureMatrix::new(id, frames)
            .unwrap()
            .with_labels(Some(&format!("s{spk}")), Some(&format!("p{phrase}")))
    }

    fn system() -> IvectorSystem {
        let u = ubm();
        let corpus: Vec<FeatureMatrix> = (0..80).map(|i| utt(&format!("u{i}"), i % 4, i / 4 % 2, i as u64)).collect();
        let stats: Vec<SuffStats> = corpus.iter().map(|x| accumulate_stats(&u, &u, x).unwrap()).collect();
        let tv = train_t_matrix(&u, &stats, 3, 5, 0).unwrap();
        let raw: Vec<IVector> = stats.iter().map(|s| extract_ivector(&tv, s, "x").unwrap()).collect();
        let sph = train_sph(&raw, 2).unwrap();
        let normed: Vec<IVector> = raw.iter().map(|v| apply_sph(&sph, v).unwrap()).collect();
        let mut classes: BTreeMap<(usize, usize), Vec<IVector>> = BTreeMap::new();
        for (i, v) in normed.into_iter().enumerate() {
            classes.entry((i % 4, i / 4 % 2)).or_default().push(v);
        }
        let classes: Vec<Vec<IVector>> = classes.into_values().collect();
        let plda = train_plda(&classes, 3, 3, 20, 0).unwrap();
        IvectorSystem::new(u, tv, sph, plda).unwrap()
    }

    fn copies_of_ubm() -> PbmSet {
        let u = Model::Gmm(ubm());
        let entries = [("p0".to_string(), u.clone()), ("p1".to_string(), u.clone())].into_iter().collect();
        PbmSet::new(u, entries, Flavor::Si, None).unwrap()
    }

    #[test]
    fn ubm_copies_reduce_to_baseline() {
        let sys = system();
        let set = copies_of_ubm();
        let enroll: Vec<FeatureMatrix> = (0..3).map(|i| utt("e", 1, 0, 500 + i)).collect();
        let base = enroll_target_ivector(&sys, None, "s1:p0", "p0", &enroll).unwrap();
        let pbm = enroll_target_ivector(&sys, Some(&set), "s1:p0", "p0", &enroll).unwrap();
        assert!((&base.values - &pbm.values).amax() <= 1e-12);
        let y = utt("y", 1, 1, 900);
        let a = ivector_trial_score(&sys, None, &base, &y).unwrap();
        let b = ivector_trial_score(&sys, Some(&set), &pbm, &y).unwrap();
        assert!((a.llr - b.llr).abs() <= 1e-12);
        assert_eq!(b.selected.as_deref(), Some("p0"));
    }

    #[test]
    fn enrollment_average_properties() {
        let sys = system();
        let x = utt("e", 2, 1, 77);
        let one = enroll_target_ivector(&sys, None, "m", "p1", std::slice::from_ref(&x)).unwrap();
        assert_eq!(one.values, sys.extract(&sys.ubm, &x).unwrap().values);
        let two = enroll_target_ivector(&sys, None, "m", "p1", &[x.clone(), x]).unwrap();
        assert!((&one.values - &two.values).amax() < 1e-14);
        assert!(enroll_target_ivector(&sys, None, "m", "p1", &[]).is_err());
    }

    #[test]
    fn own_speaker_outscores_other_speakers() {
        let sys = system();
        let set = build_si_pbms(
            &Model::Gmm(ubm()),
            &(0..40).map(|i| utt(&format!("d{i}"), i % 4, i / 4 % 2, 3000 + i as u64)).collect::<Vec<_>>(),
            &MapConfig::default(),
        )
        .unwrap();
        let mut wins = 0;
        for trial in 0..20u64 {
            let enroll: Vec<FeatureMatrix> = (0..3).map(|i| utt("e", 0, 0, 100 * trial + i)).collect();
            let claimant = enroll_target_ivector(&sys, Some(&set), "s0:p0", "p0", &enroll).unwrap();
            let own = ivector_trial_score(&sys, Some(&set), &claimant, &utt("y", 0, 0, 100 * trial + 50)).unwrap();
            let other = ivector_trial_score(&sys, Some(&set), &claimant, &utt("z", 1, 0, 100 * trial + 60)).unwrap();
            wins += (own.llr > other.llr) as usize;
        }
        assert!(wins >= 17, "{wins}/20");
    }

    #[test]
    fn mismatched_ubm_rejected() {
        let sys = system();
        let other = ubm().with_means(ubm().means() * 2.0).unwrap();
        assert!(matches!(
            IvectorSystem::new(other, sys.tv.clone(), sys.sph.clone(), sys.plda.clone()),
            Err(Error::HashMismatch { .. })
        ));
        let empty = FeatureMatrix::new("e", Array2::zeros((0, 2))).unwrap();
        let claimant = IVector::new("c", DVector::from_element(3, 0.5)).unwrap();
        assert!(ivector_trial_score(&sys, None, &claimant, &empty).is_err());
    }
}
