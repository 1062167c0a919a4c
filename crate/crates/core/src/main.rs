use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pbmsv::corpus::{Corpus, Split};
use pbmsv::eval::{load_trials, phrase_id_accuracy, reports_to_delimited, reports_to_table, save_trials, DcfParams, Report, ScoreSet};
use pbmsv::features::{extract_features, load_audio, write_features};
use pbmsv::gmm::{train_ubm_traced, UbmTrainConfig};
use pbmsv::hmm::{train_hmm_ubm_traced, HmmTrainConfig};
use pbmsv::io::write_atomic;
use pbmsv::pbm::{
    build_sd_pbms, build_si_pbms, enroll_baseline, enroll_target, load_pbm_set, read_speaker_models, save_pbm_set,
    write_speaker_models, Flavor, Model, PbmSet,
};
use pbmsv::pipeline::{
    by_id, compare_score_files, enrollment_groups, feature_path, gen_synthetic_corpus, load_split_features, make_trials,
    phrase_truth, run_pipeline, score_system, Backgrounds, Family, PipelineConfig, SyntheticSpec,
};
use pbmsv::{Error, Result};

/// Text-dependent speaker verification with pass-phrase dependent background models.
#[derive(Parser)]
#[command(name = "pbmsv", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Settings {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Settings {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        for kv in &self.overrides {
            cfg.apply_override(kv)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct Data {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of `<utterance>.feat` files.
    #[arg(long)]
    features: PathBuf,
}

impl Data {
    fn load(&self, splits: &[Split]) -> Result<(Corpus, Vec<pbmsv::features::FeatureMatrix>)> {
        let corpus = Corpus::load(&self.manifest)?;
        let feats = load_split_features(&corpus, &self.features, splits)?;
        Ok((corpus, feats))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract features from `<audio>/<utterance>.wav` for every manifest entry.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train the background model on the `ubm` split.
    TrainUbm {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Build an SI set from the `dev` split, or an SD set for `--owner`
    /// that also pools the owner's `enroll` utterances.
    BuildPbm {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        ubm: PathBuf,
        #[arg(long, default_value = "si")]
        flavor: Flavor,
        #[arg(long)]
        owner: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Enroll target models from the `enroll` split, from a PBM set or
    /// (without `--pbm`) from the UBM.
    Enroll {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        ubm: Option<PathBuf>,
        #[arg(long)]
        pbm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Every enrolled model against every `test` utterance.
    MakeTrials {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trial list against the UBM or one or more PBM sets
    /// (several SD sets are matched to claimants by owner).
    Score {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        ubm: Option<PathBuf>,
        #[arg(long)]
        pbm: Vec<PathBuf>,
        #[arg(long, default_value = "system")]
        system: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// %EER and MinDCF x 100 per non-target type for one or more score files.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        dcf: DcfArgs,
    },
    /// Write a synthetic corpus: manifest plus feature files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Override one corpus setting, `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Full pipeline.
    Run {
        #[command(flatten)]
        settings: Settings,
    },
    /// Side-by-side metrics of two score files plus strictly-lower fractions.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        dcf: DcfArgs,
    },
}

#[derive(Args)]
struct DcfArgs {
    #[arg(long, default_value_t = 10.0)]
    c_miss: f64,
    #[arg(long, default_value_t = 1.0)]
    c_fa: f64,
    #[arg(long, default_value_t = 0.01)]
    p_target: f64,
}

impl DcfArgs {
    fn params(&self) -> Result<DcfParams> {
        let p = DcfParams {
            c_miss: self.c_miss,
            c_fa: self.c_fa,
            p_target: self.p_target,
        };
        p.validate()?;
        Ok(p)
    }
}

fn load_model(path: &Path) -> Result<Model> {
    Model::decode(&pbmsv::io::read_file(path)?)
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Features {
            manifest,
            audio,
            out,
            settings,
        } => {
            let cfg = settings.load()?;
            let corpus = Corpus::load(&manifest)?;
            for e in corpus.entries() {
                let wave = load_audio(&audio.join(format!("{}.wav", e.utterance_id)))?;
                let m = extract_features(&wave, &cfg.features, &e.utterance_id)?;
                write_features(&feature_path(&out, &e.utterance_id), &m)?;
            }
            println!("{} feature files in {}", corpus.entries().len(), out.display());
        }
        Cmd::TrainUbm { data, out, settings } => {
            let cfg = settings.load()?;
            let (_, feats) = data.load(&[Split::Ubm])?;
            let (model, history) = match cfg.family {
                Family::Gmm => {
                    let c = UbmTrainConfig {
                        components: cfg.components,
                        em_iterations: cfg.em_iterations,
                        iterations_per_split: cfg.iterations_per_split,
                        seed: cfg.seed,
                    };
                    let (m, h) = train_ubm_traced(&feats, &c)?;
                    (Model::Gmm(m), h)
                }
                Family::Hmm => {
                    let c = HmmTrainConfig {
                        states: cfg.states,
                        components_per_state: cfg.components_per_state,
                        bw_iterations: cfg.bw_iterations,
                        iterations_per_split: cfg.iterations_per_split,
                        seed: cfg.seed,
                    };
                    let (m, h) = train_hmm_ubm_traced(&feats, &c)?;
                    (Model::Hmm(m), h)
                }
            };
            write_atomic(&out, &model.encode())?;
            println!("{} {}", model.hash(), history.last().copied().unwrap_or(f64::NAN));
        }
        Cmd::BuildPbm {
            data,
            ubm,
            flavor,
            owner,
            out,
            settings,
        } => {
            let cfg = settings.load()?;
            let ubm = load_model(&ubm)?;
            let (_, dev) = data.load(&[Split::Dev])?;
            let set = match (flavor, owner) {
                (Flavor::Si, None) => build_si_pbms(&ubm, &dev, &cfg.map)?,
                (Flavor::Sd, Some(owner)) => {
                    let (_, enroll) = data.load(&[Split::Enroll])?;
                    let own: Vec<_> = enroll.into_iter().filter(|m| m.speaker_id.as_deref() == Some(owner.as_str())).collect();
                    build_sd_pbms(&ubm, &dev, &own, &owner, &cfg.map)?
                }
                _ => return Err(Error::InvalidInput("--owner is required for sd and not allowed for si".into())),
            };
            save_pbm_set(&out, &set)?;
            println!("{} phrases in {}", set.entries().len(), out.display());
        }
        Cmd::Enroll {
            data,
            ubm,
            pbm,
            out,
            settings,
        } => {
            let cfg = settings.load()?;
            let (corpus, feats) = data.load(&[Split::Enroll])?;
            let ids = by_id(&feats);
            let set = pbm.map(|p| load_pbm_set(&p, None)).transpose()?;
            let root = match (&set, ubm) {
                (Some(_), _) => None,
                (None, Some(u)) => Some(load_model(&u)?),
                (None, None) => return Err(Error::InvalidInput("either --ubm or --pbm is required".into())),
            };
            let mut models = Vec::new();
            for (spk, phrase, utts) in enrollment_groups(&corpus)? {
                let train: Vec<_> = utts.iter().map(|u| ids[u.as_str()].clone()).collect();
                match (&set, &root) {
                    (Some(s), _) if s.owner().map_or(true, |o| o == spk) => {
                        models.push(enroll_target(s, &spk, &phrase, &train, &cfg.map)?)
                    }
                    (Some(_), _) => {}
                    (None, Some(u)) => models.push(enroll_baseline(u, &spk, &phrase, &train, &cfg.map)?),
                    (None, None) => unreachable!(),
                }
            }
            write_speaker_models(&out, &models)?;
            println!("{} models in {}", models.len(), out.display());
        }
        Cmd::MakeTrials { manifest, out } => {
            let trials = make_trials(&Corpus::load(&manifest)?)?;
            save_trials(&out, &trials)?;
            println!("{} trials in {}", trials.len(), out.display());
        }
        Cmd::Score {
            data,
            models,
            trials,
            ubm,
            pbm,
            system,
            out,
        } => {
            let (corpus, test) = data.load(&[Split::Test])?;
            let trials = load_trials(&trials, &corpus)?;
            let models = read_speaker_models(&models)?;
            let sets: Vec<PbmSet> = pbm.iter().map(|p| load_pbm_set(p, None)).collect::<Result<_>>()?;
            let ids = by_id(&test);
            let scores = if sets.is_empty() {
                let u = load_model(&ubm.ok_or_else(|| Error::InvalidInput("either --ubm or --pbm is required".into()))?)?;
                score_system(&system, &models, Backgrounds::Ubm(&u), &trials, &ids)?
            } else if sets.iter().all(|s| s.owner().is_some()) {
                let by_owner: BTreeMap<String, PbmSet> =
                    sets.into_iter().map(|s| (s.owner().unwrap_or_default().to_owned(), s)).collect();
                score_system(&system, &models, Backgrounds::PerSpeaker(&by_owner), &trials, &ids)?
            } else if sets.len() == 1 {
                score_system(&system, &models, Backgrounds::Shared(&sets[0]), &trials, &ids)?
            } else {
                return Err(Error::InvalidInput("several --pbm sets must all be SD sets".into()));
            };
            scores.save(&out)?;
            println!("{} scores in {}", scores.len(), out.display());
        }
        Cmd::Evaluate {
            manifest,
            trials,
            scores,
            out,
            dcf,
        } => {
            let dcf = dcf.params()?;
            let corpus = Corpus::load(&manifest)?;
            let trials = load_trials(&trials, &corpus)?;
            let truth = phrase_truth(&corpus);
            let mut reports = Vec::new();
            let mut notes = String::new();
            for path in &scores {
                let s = ScoreSet::load(path)?;
                reports.push(Report::from_scores(&s, &trials, &dcf)?);
                if s.scores().iter().any(|x| x.selected.is_some()) {
                    let acc = phrase_id_accuracy(&s, &truth)?;
                    notes += &format!("{}: pass-phrase identification accuracy {:.2}%\n", s.system_id(), 100.0 * acc);
                }
            }
            print!("{}{notes}", reports_to_table(&reports));
            if let Some(out) = out {
                write_atomic(&out, reports_to_delimited(&reports).as_bytes())?;
            }
        }
        Cmd::Synth { out, overrides } => {
            let mut spec = SyntheticSpec::default();
            for kv in &overrides {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidInput(format!("override '{kv}' is not key=value")))?;
                spec.set(k, v)?;
            }
            let corpus = gen_synthetic_corpus(&spec, &out)?;
            println!("{} utterances in {}", corpus.entries().len(), out.display());
        }
        Cmd::Run { settings } => {
            let cfg = settings.load()?;
            let run = run_pipeline(&cfg)?;
            println!("ubm {}", run.ubm_hash);
            print!("{}", pbmsv::io::read_text(&cfg.output.join("report.txt"))?);
        }
        Cmd::Compare {
            manifest,
            trials,
            baseline,
            system,
            dcf,
        } => {
            let c = compare_score_files(&baseline, &system, &trials, &manifest, &dcf.params()?)?;
            print!("{}", c.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
