//! Synthetic text-dependent corpora drawn directly in feature space.
//!
//! A phrase is a sequence of acoustic units taken from a shared inventory,
//! each realised with a phrase-specific variant. A frame is the unit mean
//! plus the speaker's offset (global and per unit), a per-session offset and
//! unit-variance noise. Background (`ubm`) speakers read random unit
//! sequences with fresh variants; `dev` speakers read the pass-phrases; the
//! evaluation speakers supply `enroll` and `test` sessions.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Corpus, CorpusEntry, Split, NO_PHRASE};
use crate::error::{Error, Result};
use crate::features::{write_feature_manifest, write_features, FeatureMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_phrases: usize,
    /// Evaluation speakers (enrolled and tested).
    pub num_speakers: usize,
    pub num_dev_speakers: usize,
    pub num_ubm_speakers: usize,
    pub enroll_sessions: usize,
    pub test_sessions: usize,
    /// Sessions per phrase of each development speaker.
    pub dev_sessions: usize,
    pub ubm_utterances: usize,
    /// Mean utterance length; actual lengths vary by up to 20%.
    pub frames_per_utterance: usize,
    pub dim: usize,
    pub num_units: usize,
    pub units_per_phrase: usize,
    /// Scale of all phrase structure: unit means and phrase variants.
    pub phrase_separation: f64,
    /// Size of a phrase variant relative to its unit.
    pub variant_ratio: f64,
    pub speaker_separation: f64,
    pub session_variability: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_phrases: 5,
            num_speakers: 20,
            num_dev_speakers: 20,
            num_ubm_speakers: 30,
            enroll_sessions: 3,
            test_sessions: 4,
            dev_sessions: 2,
            ubm_utterances: 8,
            frames_per_utterance: 70,
            dim: 57,
            num_units: 8,
            units_per_phrase: 6,
            phrase_separation: 6.0,
            variant_ratio: 0.15,
            speaker_separation: 1.0,
            session_variability: 1.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_phrases", self.num_phrases),
            ("num_speakers", self.num_speakers),
            ("num_dev_speakers", self.num_dev_speakers),
            ("num_ubm_speakers", self.num_ubm_speakers),
            ("enroll_sessions", self.enroll_sessions),
            ("test_sessions", self.test_sessions),
            ("dev_sessions", self.dev_sessions),
            ("ubm_utterances", self.ubm_utterances),
            ("dim", self.dim),
            ("num_units", self.num_units),
            ("units_per_phrase", self.units_per_phrase),
        ];
        if let Some((name, _)) = counts.iter().find(|c| c.1 == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if self.units_per_phrase > self.num_units {
            return Err(Error::invalid("units_per_phrase exceeds num_units"));
        }
        if self.frames_per_utterance < 2 * self.units_per_phrase {
            return Err(Error::invalid("frames_per_utterance must be at least twice units_per_phrase"));
        }
        let seps = [
            self.phrase_separation,
            self.variant_ratio,
            self.speaker_separation,
            self.session_variability,
        ];
        if seps.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("separations must be finite and non-negative"));
        }
        Ok(())
    }

    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::invalid(format!("bad value '{value}' for '{key}'"));
        let v = value.trim();
        let u = |v: &str| v.parse::<usize>().map_err(|_| bad());
        let r = |v: &str| v.parse::<f64>().map_err(|_| bad());
        match key.trim() {
            "num_phrases" => self.num_phrases = u(v)?,
            "num_speakers" => self.num_speakers = u(v)?,
            "num_dev_speakers" => self.num_dev_speakers = u(v)?,
            "num_ubm_speakers" => self.num_ubm_speakers = u(v)?,
            "enroll_sessions" => self.enroll_sessions = u(v)?,
            "test_sessions" => self.test_sessions = u(v)?,
            "dev_sessions" => self.dev_sessions = u(v)?,
            "ubm_utterances" => self.ubm_utterances = u(v)?,
            "frames_per_utterance" => self.frames_per_utterance = u(v)?,
            "dim" => self.dim = u(v)?,
            "num_units" => self.num_units = u(v)?,
            "units_per_phrase" => self.units_per_phrase = u(v)?,
            "phrase_separation" => self.phrase_separation = r(v)?,
            "variant_ratio" => self.variant_ratio = r(v)?,
            "speaker_separation" => self.speaker_separation = r(v)?,
            "session_variability" => self.session_variability = r(v)?,
            "seed" => self.seed = v.parse().map_err(|_| bad())?,
            other => return Err(Error::invalid(format!("unknown synthetic corpus key '{other}'"))),
        }
        Ok(())
    }
}

/// Isotropic Gaussian vector with expected squared norm `scale^2`.
fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Array1<f64> {
    let sd = scale / (dim as f64).sqrt();
    Array1::from_shape_fn(dim, |_| sd * rng.sample::<f64, _>(StandardNormal))
}

struct Speaker {
    global: Array1<f64>,
    units: Vec<Array1<f64>>,
}

impl Speaker {
    fn draw(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Self {
        let s = spec.speaker_separation / std::f64::consts::SQRT_2;
        Self {
            global: gaussian(rng, spec.dim, s),
            units: (0..spec.num_units).map(|_| gaussian(rng, spec.dim, s)).collect(),
        }
    }
}

/// Unit durations for one utterance: jittered shares of a jittered total.
fn durations(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, units: usize) -> Vec<usize> {
    let mean = spec.frames_per_utterance as f64;
    let total = (mean * rng.gen_range(0.8..1.2)).round().max(units as f64) as usize;
    let w: Vec<f64> = (0..units).map(|_| rng.gen_range(0.7..1.3)).collect();
    let sum: f64 = w.iter().sum();
    let mut d: Vec<usize> = w.iter().map(|x| ((x / sum) * total as f64).floor().max(1.0) as usize).collect();
    let used: usize = d.iter().sum();
    if used < total {
        d[units - 1] += total - used;
    }
    d
}

/// Frames for a sequence of `(unit, mean)` segments.
fn render(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    spk: &Speaker,
    segments: &[(usize, Array1<f64>)],
) -> Array2<f64> {
    let session = gaussian(rng, spec.dim, spec.session_variability);
    let lens = durations(rng, spec, segments.len());
    let n: usize = lens.iter().sum();
    let mut out = Array2::zeros((n, spec.dim));
    let mut t = 0;
    for ((unit, mean), len) in segments.iter().zip(lens) {
        let centre = mean + &spk.global + &spk.units[*unit] + &session;
        for _ in 0..len {
            for (j, c) in centre.iter().enumerate() {
                // Stored at feature-cache precision.
                out[[t, j]] = (c + rng.sample::<f64, _>(StandardNormal)) as f32 as f64;
            }
            t += 1;
        }
    }
    out
}

/// Speaker ids, utterance ids and frames, without touching the disk.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(Corpus, Vec<FeatureMatrix>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let units: Vec<Array1<f64>> = (0..spec.num_units).map(|_| gaussian(&mut rng, spec.dim, 1.0)).collect();
    let variant_scale = spec.variant_ratio;
    let all_units: Vec<usize> = (0..spec.num_units).collect();
    // Phrase-specific variants of their units.
    let phrases: Vec<Vec<(usize, Array1<f64>)>> = (0..spec.num_phrases)
        .map(|_| {
            let seq: Vec<usize> = all_units.choose_multiple(&mut rng, spec.units_per_phrase).copied().collect();
            seq.into_iter()
                .map(|u| {
                    let m = (&units[u] + &gaussian(&mut rng, spec.dim, variant_scale)) * spec.phrase_separation;
                    (u, m)
                })
                .collect()
        })
        .collect();
    let phrase_id = |p: usize| format!("ph{p}");

    let mut entries = Vec::new();
    let mut feats = Vec::new();
    let mut push = |id: String, spk: &str, phrase: Option<usize>, split: Split, frames: Array2<f64>| -> Result<()> {
        let p = phrase.map(phrase_id);
        feats.push(FeatureMatrix::new(id.clone(), frames)?.with_labels(Some(spk), p.as_deref()));
        entries.push(CorpusEntry {
            utterance_id: id,
            speaker_id: spk.to_owned(),
            phrase_id: p.unwrap_or_else(|| NO_PHRASE.to_owned()),
            split,
        });
        Ok(())
    };

    for s in 0..spec.num_ubm_speakers {
        let spk_id = format!("bg{s:03}");
        let spk = Speaker::draw(&mut rng, spec);
        for i in 0..spec.ubm_utterances {
            let segs: Vec<(usize, Array1<f64>)> = (0..spec.units_per_phrase)
                .map(|_| {
                    let u = rng.gen_range(0..spec.num_units);
                    let m = (&units[u] + &gaussian(&mut rng, spec.dim, variant_scale)) * spec.phrase_separation;
                    (u, m)
                })
                .collect();
            let frames = render(&mut rng, spec, &spk, &segs);
            push(format!("{spk_id}_r{i:02}"), &spk_id, None, Split::Ubm, frames)?;
        }
    }
    for s in 0..spec.num_dev_speakers {
        let spk_id = format!("dv{s:03}");
        let spk = Speaker::draw(&mut rng, spec);
        for (p, segs) in phrases.iter().enumerate() {
            for k in 0..spec.dev_sessions {
                let frames = render(&mut rng, spec, &spk, segs);
                push(format!("{spk_id}_{}_d{k}", phrase_id(p)), &spk_id, Some(p), Split::Dev, frames)?;
            }
        }
    }
    for s in 0..spec.num_speakers {
        let spk_id = format!("sp{s:03}");
        let spk = Speaker::draw(&mut rng, spec);
        for (p, segs) in phrases.iter().enumerate() {
            for k in 0..spec.enroll_sessions {
                let frames = render(&mut rng, spec, &spk, segs);
                push(format!("{spk_id}_{}_e{k}", phrase_id(p)), &spk_id, Some(p), Split::Enroll, frames)?;
            }
            for k in 0..spec.test_sessions {
                let frames = render(&mut rng, spec, &spk, segs);
                push(format!("{spk_id}_{}_t{k}", phrase_id(p)), &spk_id, Some(p), Split::Test, frames)?;
            }
        }
    }
    Ok((Corpus::new(entries)?, feats))
}

/// Path of an utterance's feature file inside a feature directory.
pub fn feature_path(dir: &Path, utterance_id: &str) -> PathBuf {
    dir.join(format!("{utterance_id}.feat"))
}

/// Write `dir/manifest.txt`, `dir/features/<utt>.feat` and the feature
/// index `dir/features/index.txt`.
pub fn gen_synthetic_corpus(spec: &SyntheticSpec, dir: &Path) -> Result<Corpus> {
    let (corpus, feats) = synthesize(spec)?;
    let fdir = dir.join("features");
    let mut index = Vec::with_capacity(feats.len());
    for m in &feats {
        let path = feature_path(&fdir, &m.utterance_id);
        write_features(&path, m)?;
        index.push((m.utterance_id.clone(), PathBuf::from(format!("{}.feat", m.utterance_id))));
    }
    write_feature_manifest(&fdir.join("index.txt"), &index)?;
    corpus.save(&dir.join("manifest.txt"))?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::read_features;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            num_phrases: 2,
            num_speakers: 2,
            num_dev_speakers: 2,
            num_ubm_speakers: 2,
            ubm_utterances: 2,
            dim: 5,
            num_units: 4,
            units_per_phrase: 3,
            frames_per_utterance: 20,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn layout_and_labels() {
        let (c, f) = synthesize(&small()).unwrap();
        assert_eq!(c.split(Split::Ubm).count(), 4);
        assert_eq!(c.split(Split::Dev).count(), 2 * 2 * 2);
        assert_eq!(c.split(Split::Enroll).count(), 2 * 2 * 3);
        assert_eq!(c.split(Split::Test).count(), 2 * 2 * 4);
        for (e, m) in c.entries().iter().zip(&f) {
            assert_eq!(e.utterance_id, m.utterance_id);
            assert_eq!(e.phrase(), m.phrase_id.as_deref());
            assert!(m.len() >= 16 && m.len() <= 24, "{}", m.len());
            assert_eq!(m.dim(), 5);
        }
        let spk = |s: Split| c.split(s).map(|e| e.speaker_id.clone()).collect::<std::collections::BTreeSet<_>>();
        assert!(spk(Split::Dev).is_disjoint(&spk(Split::Enroll)));
        assert_eq!(spk(Split::Enroll), spk(Split::Test));
    }

    #[test]
    fn seeded_and_written_bit_identically() {
        let a = synthesize(&small()).unwrap();
        assert_eq!(a, synthesize(&small()).unwrap());
        let b = synthesize(&SyntheticSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.1[0], b.1[0]);
        let dir = tempfile::tempdir().unwrap();
        let c = gen_synthetic_corpus(&small(), dir.path()).unwrap();
        assert_eq!(c, a.0);
        assert_eq!(Corpus::load(&dir.path().join("manifest.txt")).unwrap(), c);
        let m = read_features(&feature_path(&dir.path().join("features"), &a.1[3].utterance_id)).unwrap();
        assert_eq!(m, a.1[3]);
    }

    #[test]
    fn zero_separations_collapse_structure() {
        let spec = SyntheticSpec {
            phrase_separation: 0.0,
            speaker_separation: 0.0,
            session_variability: 0.0,
            ..small()
        };
        let (_, f) = synthesize(&spec).unwrap();
        let mean = |m: &FeatureMatrix| m.frames.mean_axis(ndarray::Axis(0)).unwrap();
        // Pure noise everywhere: every utterance mean is close to zero.
        for m in &f {
            assert!(mean(m).iter().all(|v| v.abs() < 1.5), "{}", m.utterance_id);
        }
        assert!(synthesize(&SyntheticSpec { num_phrases: 0, ..small() }).is_err());
        assert!(synthesize(&SyntheticSpec { speaker_separation: -1.0, ..small() }).is_err());
    }
}
