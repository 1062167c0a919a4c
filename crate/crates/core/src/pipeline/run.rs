use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{Family, PipelineConfig, SystemFlavor};
use super::score::{score_ivector_system, score_system, Backgrounds, EnrolledIvectors};
use super::{by_id, enrollment_groups, feature_path, load_split_features, make_trials, phrase_truth};
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result, StageExt};
use crate::eval::{
    compare_systems, load_trials, phrase_id_accuracy, reports_to_delimited, reports_to_table, save_trials, Comparison,
    DcfParams, Report, ScoreSet, Trial,
};
use crate::features::{encode_features, extract_features, load_audio, write_features, FeatureMatrix};
use crate::gmm::{train_ubm_traced, GmmModel, UbmTrainConfig};
use crate::hmm::{train_hmm_ubm_traced, HmmTrainConfig};
use crate::io::{self, content_hash};
use crate::ivector::{
    accumulate_stats, apply_sph, decode_plda, decode_sph, decode_tv, encode_plda, encode_sph, encode_tv,
    enroll_target_ivector, train_plda, train_sph, train_t_matrix, write_ivector_archive, IVector, IvectorSystem,
};
use crate::pbm::{
    build_si_pbms, enroll_baseline, enroll_target, save_pbm_set, write_speaker_models, Model, PbmSet, SdPbmCache,
    SpeakerModel,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SystemOutcome {
    pub scores: ScoreSet,
    pub report: Report,
    /// For systems that select a PBM per test utterance.
    pub phrase_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Hash of the manifest and every feature file.
    pub data_hash: String,
    pub ubm_hash: String,
    pub trials: Vec<Trial>,
    pub systems: Vec<SystemOutcome>,
}

impl RunOutcome {
    pub fn system(&self, id: &str) -> Option<&SystemOutcome> {
        self.systems.iter().find(|s| s.scores.system_id() == id)
    }
}

const ARTIFACTS: &str = "artifacts.txt";

/// `name hash key` records of persisted artifacts. A cached artifact is
/// reused only if its key (hash of everything it was built from) and its
/// content hash both match.
struct Artifacts {
    dir: PathBuf,
    previous: BTreeMap<String, (String, String)>,
    current: Vec<(String, String, String)>,
}

impl Artifacts {
    fn open(dir: &Path) -> Self {
        let mut previous = BTreeMap::new();
        if let Ok(text) = fs::read_to_string(dir.join(ARTIFACTS)) {
            for line in text.lines() {
                let f: Vec<&str> = line.split('\t').collect();
                if let [name, hash, key] = f.as_slice() {
                    previous.insert(name.to_string(), (hash.to_string(), key.to_string()));
                }
            }
        }
        Self {
            dir: dir.to_owned(),
            previous,
            current: Vec::new(),
        }
    }

    fn reuse(&mut self, name: &str, key: &str) -> Option<Vec<u8>> {
        let (hash, k) = self.previous.get(name)?;
        if k != key {
            return None;
        }
        let bytes = fs::read(self.dir.join(name)).ok()?;
        if content_hash(&bytes) != *hash {
            log::warn!("{name}: content changed since it was recorded, rebuilding");
            return None;
        }
        self.record(name, &bytes, key);
        Some(bytes)
    }

    fn record(&mut self, name: &str, bytes: &[u8], key: &str) {
        self.current.retain(|r| r.0 != name);
        self.current.push((name.to_owned(), content_hash(bytes), key.to_owned()));
    }

    fn write(&mut self, name: &str, bytes: &[u8], key: &str) -> Result<()> {
        io::write_atomic(&self.dir.join(name), bytes)?;
        self.record(name, bytes, key);
        Ok(())
    }

    fn save(&self) -> Result<()> {
        let mut s = String::new();
        for (n, h, k) in &self.current {
            let _ = writeln!(s, "{n}\t{h}\t{k}");
        }
        io::write_atomic(&self.dir.join(ARTIFACTS), s.as_bytes())
    }
}

fn key(parts: &[&str]) -> String {
    content_hash(parts.join("\n").as_bytes())
}

fn extract_audio(cfg: &PipelineConfig, audio: &Path, corpus: &Corpus, dir: &Path) -> Result<()> {
    for e in corpus.entries() {
        let wave = load_audio(&audio.join(format!("{}.wav", e.utterance_id)))?;
        let m = extract_features(&wave, &cfg.features, &e.utterance_id)?;
        write_features(&feature_path(dir, &e.utterance_id), &m)?;
    }
    Ok(())
}

fn data_hash(corpus: &Corpus, feats: &[FeatureMatrix]) -> String {
    let mut s = corpus.to_text();
    for m in feats {
        s += &content_hash(&encode_features(m));
        s.push('\n');
    }
    content_hash(s.as_bytes())
}

fn train_background(cfg: &PipelineConfig, ubm_data: &[FeatureMatrix]) -> Result<Model> {
    Ok(match cfg.family {
        Family::Gmm => {
            let c = UbmTrainConfig {
                components: cfg.components,
                em_iterations: cfg.em_iterations,
                iterations_per_split: cfg.iterations_per_split,
                seed: cfg.seed,
            };
            let (m, history) = train_ubm_traced(ubm_data, &c)?;
            log::info!("UBM log-likelihood trace {history:?}");
            Model::Gmm(m)
        }
        Family::Hmm => {
            let c = HmmTrainConfig {
                states: cfg.states,
                components_per_state: cfg.components_per_state,
                bw_iterations: cfg.bw_iterations,
                iterations_per_split: cfg.iterations_per_split,
                seed: cfg.seed,
            };
            let (m, history) = train_hmm_ubm_traced(ubm_data, &c)?;
            log::info!("HMM-UBM log-likelihood trace {history:?}");
            Model::Hmm(m)
        }
    })
}

/// T matrix, normaliser and PLDA from UBM-posterior statistics. T is
/// trained on the ubm and dev splits; normaliser and PLDA on dev i-vectors,
/// one PLDA class per (speaker, phrase).
fn train_ivector_system(
    cfg: &PipelineConfig,
    ubm: &GmmModel,
    ubm_data: &[FeatureMatrix],
    dev: &[FeatureMatrix],
    art: &mut Artifacts,
    base_key: &str,
) -> Result<IvectorSystem> {
    let iv = &cfg.ivector;
    let h = ubm.hash();
    let names = ["ivector-tv.bin", "ivector-sph.bin", "ivector-plda.bin"];
    let keys: Vec<String> = names.iter().map(|n| key(&[n, base_key, &h])).collect();
    let cached: Vec<Option<Vec<u8>>> = names.iter().zip(&keys).map(|(n, k)| art.reuse(n, k)).collect();
    if let [Some(t), Some(s), Some(p)] = cached.as_slice() {
        log::info!("reusing i-vector extractor and back end");
        return IvectorSystem::new(ubm.clone(), decode_tv(t, &h)?, decode_sph(s, &h)?, decode_plda(p, &h)?);
    }
    let mut stats = Vec::with_capacity(ubm_data.len() + dev.len());
    for x in ubm_data.iter().chain(dev) {
        stats.push(accumulate_stats(ubm, ubm, x)?);
    }
    let tv = train_t_matrix(ubm, &stats, iv.rank, iv.t_iterations, cfg.seed)?;
    let mut dev_iv = Vec::with_capacity(dev.len());
    for (x, s) in dev.iter().zip(&stats[ubm_data.len()..]) {
        dev_iv.push(crate::ivector::extract_ivector(&tv, s, x.utterance_id.clone())?);
    }
    let sph = train_sph(&dev_iv, iv.sph_iterations)?;
    let mut classes: BTreeMap<(String, String), Vec<IVector>> = BTreeMap::new();
    for (x, w) in dev.iter().zip(&dev_iv) {
        let k = (x.speaker_id.clone().unwrap_or_default(), x.phrase_id.clone().unwrap_or_default());
        classes.entry(k).or_default().push(apply_sph(&sph, w)?);
    }
    let classes: Vec<Vec<IVector>> = classes.into_values().collect();
    let rank = |r: usize| if r == 0 { iv.rank } else { r };
    let plda = train_plda(
        &classes,
        rank(iv.plda_speaker_rank),
        rank(iv.plda_channel_rank),
        iv.plda_iterations,
        cfg.seed,
    )?;
    art.write(names[0], &encode_tv(&tv), &keys[0])?;
    art.write(names[1], &encode_sph(&sph, &h), &keys[1])?;
    art.write(names[2], &encode_plda(&plda, &h), &keys[2])?;
    IvectorSystem::new(ubm.clone(), tv, sph, plda)
}

/// Enrollment utterances of each target model.
struct Targets {
    groups: Vec<(String, String, Vec<FeatureMatrix>)>,
    speakers: BTreeMap<String, Vec<FeatureMatrix>>,
}

fn targets(corpus: &Corpus, enroll: &[FeatureMatrix]) -> Result<Targets> {
    let ids = by_id(enroll);
    let mut groups = Vec::new();
    let mut speakers: BTreeMap<String, Vec<FeatureMatrix>> = BTreeMap::new();
    for (spk, phrase, utts) in enrollment_groups(corpus)? {
        let data: Vec<FeatureMatrix> = utts.iter().map(|u| ids[u.as_str()].clone()).collect();
        speakers.entry(spk.clone()).or_default().extend(data.iter().cloned());
        groups.push((spk, phrase, data));
    }
    Ok(Targets { groups, speakers })
}

fn system_name(back_end: &str, flavor: SystemFlavor) -> String {
    format!("{back_end}-{}", flavor.name())
}

/// Run every stage: features, background model, PBM sets, enrollment, trial
/// list, scoring of every configured system, and evaluation. Artifacts go
/// to `cfg.output`; score files are byte-identical across reruns.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutcome> {
    cfg.validate().stage("config")?;
    let out = cfg.output.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e)).stage("config")?;
    let corpus = Corpus::load(&cfg.manifest).stage("manifest")?;
    let needs_dev = cfg.flavors.iter().any(|f| *f != SystemFlavor::Baseline) || cfg.ivector.enabled;
    let mut required = vec![Split::Ubm, Split::Enroll, Split::Test];
    if needs_dev {
        required.push(Split::Dev);
    }
    for s in required {
        if corpus.split(s).next().is_none() {
            return Err(Error::InsufficientData(format!("manifest has no '{s}' utterances"))).stage("manifest");
        }
    }
    let mut art = Artifacts::open(&out);

    log::info!("stage features");
    let feat_dir = match &cfg.audio_dir {
        Some(audio) => {
            let d = out.join("features");
            extract_audio(cfg, audio, &corpus, &d).stage("features")?;
            d
        }
        None => cfg.features_dir.clone(),
    };
    let load = |s: Split| load_split_features(&corpus, &feat_dir, &[s]).stage("features");
    let (ubm_f, dev_f, enroll_f, test_f) = (load(Split::Ubm)?, load(Split::Dev)?, load(Split::Enroll)?, load(Split::Test)?);
    let all: Vec<FeatureMatrix> = [&ubm_f, &dev_f, &enroll_f, &test_f].into_iter().flatten().cloned().collect();
    let data_hash = data_hash(&corpus, &all);
    drop(all);
    let base_key = key(&[&cfg.fingerprint(), &data_hash]);

    log::info!("stage train-ubm");
    let ubm_key = key(&["ubm", &base_key]);
    let ubm = match art.reuse("ubm.model", &ubm_key) {
        Some(b) => Model::decode(&b).stage("train-ubm")?,
        None => {
            let m = train_background(cfg, &ubm_f).stage("train-ubm")?;
            art.write("ubm.model", &m.encode(), &ubm_key).stage("train-ubm")?;
            m
        }
    };
    let ubm_hash = ubm.hash();

    log::info!("stage build-pbm");
    let tg = targets(&corpus, &enroll_f).stage("enroll")?;
    let si = if cfg.flavors.contains(&SystemFlavor::Si) {
        let set = build_si_pbms(&ubm, &dev_f, &cfg.map).stage("build-pbm")?;
        save_pbm_set(&out.join("pbm-si"), &set).stage("build-pbm")?;
        Some(set)
    } else {
        None
    };
    let sd = if cfg.flavors.contains(&SystemFlavor::Sd) {
        let cache = SdPbmCache::new(&out.join("pbm-sd"), ubm.clone(), &dev_f, cfg.map.clone()).stage("build-pbm")?;
        let mut sets = BTreeMap::new();
        for (spk, data) in &tg.speakers {
            sets.insert(spk.clone(), cache.get(spk, data).stage("build-pbm")?);
        }
        Some(sets)
    } else {
        None
    };

    log::info!("stage make-trials");
    let trials = make_trials(&corpus).stage("make-trials")?;
    save_trials(&out.join("trials.txt"), &trials).stage("make-trials")?;
    let test = by_id(&test_f);

    let mut systems: Vec<ScoreSet> = Vec::new();
    let back_end = cfg.family.name();
    for &flavor in &cfg.flavors {
        let name = system_name(back_end, flavor);
        log::info!("stage enroll ({name})");
        let mut models: Vec<SpeakerModel> = Vec::with_capacity(tg.groups.len());
        for (spk, phrase, data) in &tg.groups {
            let m = match flavor {
                SystemFlavor::Baseline => enroll_baseline(&ubm, spk, phrase, data, &cfg.map),
                SystemFlavor::Si => enroll_target(si.as_ref().expect("built above"), spk, phrase, data, &cfg.map),
                SystemFlavor::Sd => enroll_target(&sd.as_ref().expect("built above")[spk], spk, phrase, data, &cfg.map),
            };
            models.push(m.stage("enroll")?);
        }
        write_speaker_models(&out.join("models").join(format!("{name}.models")), &models).stage("enroll")?;
        log::info!("stage score ({name})");
        let bg = match flavor {
            SystemFlavor::Baseline => Backgrounds::Ubm(&ubm),
            SystemFlavor::Si => Backgrounds::Shared(si.as_ref().expect("built above")),
            SystemFlavor::Sd => Backgrounds::PerSpeaker(sd.as_ref().expect("built above")),
        };
        systems.push(score_system(&name, &models, bg, &trials, &test).stage("score")?);
    }

    if cfg.ivector.enabled {
        log::info!("stage ivector");
        let g = ubm.as_gmm().stage("ivector")?;
        let sys = train_ivector_system(cfg, g, &ubm_f, &dev_f, &mut art, &base_key).stage("ivector")?;
        for &flavor in &cfg.flavors {
            let name = system_name("ivector", flavor);
            let mut enrolled = EnrolledIvectors::new();
            for (spk, phrase, data) in &tg.groups {
                let model_id = format!("{spk}:{phrase}");
                let pbms: Option<&PbmSet> = match flavor {
                    SystemFlavor::Baseline => None,
                    SystemFlavor::Si => si.as_ref(),
                    SystemFlavor::Sd => sd.as_ref().map(|m| &m[spk]),
                };
                let w = enroll_target_ivector(&sys, pbms, &model_id, phrase, data).stage("enroll")?;
                enrolled.insert(model_id, w);
            }
            let archive: Vec<IVector> = enrolled.values().cloned().collect();
            write_ivector_archive(&out.join("models").join(format!("{name}.ivec")), &archive).stage("enroll")?;
            let bg = match flavor {
                SystemFlavor::Baseline => Backgrounds::Ubm(&ubm),
                SystemFlavor::Si => Backgrounds::Shared(si.as_ref().expect("built above")),
                SystemFlavor::Sd => Backgrounds::PerSpeaker(sd.as_ref().expect("built above")),
            };
            systems.push(score_ivector_system(&name, &sys, &enrolled, bg, &trials, &test).stage("score")?);
        }
    }

    log::info!("stage evaluate");
    let truth = phrase_truth(&corpus);
    let mut outcomes = Vec::new();
    for scores in systems {
        scores
            .save(&out.join("scores").join(format!("{}.txt", scores.system_id())))
            .stage("score")?;
        let report = Report::from_scores(&scores, &trials, &cfg.dcf).stage("evaluate")?;
        let phrase_accuracy = if scores.scores().iter().any(|s| s.selected.is_some()) {
            Some(phrase_id_accuracy(&scores, &truth).stage("evaluate")?)
        } else {
            None
        };
        outcomes.push(SystemOutcome {
            scores,
            report,
            phrase_accuracy,
        });
    }
    write_reports(&out, &outcomes).stage("evaluate")?;
    art.save().stage("evaluate")?;
    Ok(RunOutcome {
        data_hash,
        ubm_hash,
        trials,
        systems: outcomes,
    })
}

fn write_reports(out: &Path, systems: &[SystemOutcome]) -> Result<()> {
    let reports: Vec<Report> = systems.iter().map(|s| s.report.clone()).collect();
    io::write_atomic(&out.join("report.tsv"), reports_to_delimited(&reports).as_bytes())?;
    let mut acc = String::from("system\tphrase_id_accuracy_pct\n");
    let mut table = reports_to_table(&reports);
    table.push('\n');
    for s in systems {
        if let Some(a) = s.phrase_accuracy {
            let _ = writeln!(acc, "{}\t{}", s.scores.system_id(), 100.0 * a);
            let _ = writeln!(table, "{}: pass-phrase identification accuracy {:.2}%", s.scores.system_id(), 100.0 * a);
        }
    }
    io::write_atomic(&out.join("phrase_accuracy.tsv"), acc.as_bytes())?;
    io::write_atomic(&out.join("report.txt"), table.as_bytes())
}

/// Compare two score files over the same trial list.
pub fn compare_score_files(
    a: &Path,
    b: &Path,
    trials: &Path,
    manifest: &Path,
    dcf: &DcfParams,
) -> Result<Comparison> {
    let corpus = Corpus::load(manifest)?;
    let trials = load_trials(trials, &corpus)?;
    compare_systems(&ScoreSet::load(a)?, &ScoreSet::load(b)?, &trials, dcf)
}
