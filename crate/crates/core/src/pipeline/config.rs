use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::DcfParams;
use crate::features::FeatureConfig;
use crate::gmm::MapConfig;
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gmm,
    Hmm,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(Family::Gmm),
            "hmm" => Ok(Family::Hmm),
            _ => Err(Error::invalid(format!("unknown model family '{s}'"))),
        }
    }
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gmm => "gmm",
            Family::Hmm => "hmm",
        }
    }
}

/// Background used by a system: the UBM itself or a PBM set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SystemFlavor {
    Baseline,
    Si,
    Sd,
}

impl FromStr for SystemFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "baseline" => Ok(SystemFlavor::Baseline),
            "si" => Ok(SystemFlavor::Si),
            "sd" => Ok(SystemFlavor::Sd),
            _ => Err(Error::invalid(format!("unknown PBM flavor '{s}'"))),
        }
    }
}

impl SystemFlavor {
    pub fn name(self) -> &'static str {
        match self {
            SystemFlavor::Baseline => "baseline",
            SystemFlavor::Si => "si",
            SystemFlavor::Sd => "sd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvectorConfig {
    pub enabled: bool,
    pub rank: usize,
    pub t_iterations: usize,
    pub sph_iterations: usize,
    /// 0 means the i-vector rank.
    pub plda_speaker_rank: usize,
    /// 0 means the i-vector rank.
    pub plda_channel_rank: usize,
    pub plda_iterations: usize,
}

impl Default for IvectorConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            rank: 400,
            t_iterations: 5,
            sph_iterations: 2,
            plda_speaker_rank: 0,
            plda_channel_rank: 0,
            plda_iterations: 10,
        }
    }
}

/// Everything a run depends on besides the data. Read from `key = value`
/// lines; see [`PipelineConfig::set`] for the keys.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    /// Directory of `<utterance>.feat` files.
    pub features_dir: PathBuf,
    /// Optional directory of `<utterance>.wav` files; when set, features are
    /// extracted into the output directory instead of read from `features_dir`.
    pub audio_dir: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    pub features: FeatureConfig,
    pub family: Family,
    pub components: usize,
    pub em_iterations: usize,
    pub iterations_per_split: usize,
    pub states: usize,
    pub components_per_state: usize,
    pub bw_iterations: usize,
    pub map: MapConfig,
    pub flavors: Vec<SystemFlavor>,
    pub ivector: IvectorConfig,
    pub dcf: DcfParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: "manifest.txt".into(),
            features_dir: "features".into(),
            audio_dir: None,
            output: "out".into(),
            seed: 0,
            features: FeatureConfig::default(),
            family: Family::Gmm,
            components: 512,
            em_iterations: 10,
            iterations_per_split: 5,
            states: 14,
            components_per_state: 8,
            bw_iterations: 10,
            map: MapConfig::default(),
            flavors: vec![SystemFlavor::Baseline, SystemFlavor::Si, SystemFlavor::Sd],
            ivector: IvectorConfig::default(),
            dcf: DcfParams::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::invalid(format!("bad value '{v}' for '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("bad boolean '{v}' for '{key}'"))),
    }
}

impl PipelineConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let f = &mut self.features;
        match key.trim() {
            "manifest" => self.manifest = v.into(),
            "features" | "features.dir" => self.features_dir = v.into(),
            "audio" | "audio.dir" => self.audio_dir = (!v.is_empty()).then(|| v.into()),
            "output" => self.output = v.into(),
            "seed" => self.seed = parse(key, v)?,
            "features.window_ms" => f.window_ms = parse(key, v)?,
            "features.hop_ms" => f.hop_ms = parse(key, v)?,
            "features.num_static" => f.num_static = parse(key, v)?,
            "features.rasta" => f.rasta_enabled = parse_bool(key, v)?,
            "features.vad" => f.vad_enabled = parse_bool(key, v)?,
            "features.cmvn" => f.cmvn_enabled = parse_bool(key, v)?,
            "features.mel_filters" => f.num_mel_filters = parse(key, v)?,
            "features.fft_size" => f.fft_size = parse(key, v)?,
            "features.sample_rate" => f.sample_rate = parse(key, v)?,
            "features.preemphasis" => f.preemphasis = parse(key, v)?,
            "ubm.family" => self.family = v.parse()?,
            "ubm.components" => self.components = parse(key, v)?,
            "ubm.em_iterations" => self.em_iterations = parse(key, v)?,
            "ubm.iterations_per_split" => self.iterations_per_split = parse(key, v)?,
            "hmm.states" => self.states = parse(key, v)?,
            "hmm.components_per_state" => self.components_per_state = parse(key, v)?,
            "hmm.bw_iterations" => self.bw_iterations = parse(key, v)?,
            "map.relevance" => self.map.relevance_factor = parse(key, v)?,
            "map.iterations" => self.map.iterations = parse(key, v)?,
            "pbm.flavors" | "pbm.flavor" => {
                let mut fl: Vec<SystemFlavor> = v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
                fl.sort();
                fl.dedup();
                self.flavors = fl;
            }
            "ivector.enabled" => self.ivector.enabled = parse_bool(key, v)?,
            "ivector.rank" => self.ivector.rank = parse(key, v)?,
            "ivector.t_iterations" => self.ivector.t_iterations = parse(key, v)?,
            "ivector.sph_iterations" => self.ivector.sph_iterations = parse(key, v)?,
            "ivector.plda_speaker_rank" => self.ivector.plda_speaker_rank = parse(key, v)?,
            "ivector.plda_channel_rank" => self.ivector.plda_channel_rank = parse(key, v)?,
            "ivector.plda_iterations" => self.ivector.plda_iterations = parse(key, v)?,
            "dcf.c_miss" => self.dcf.c_miss = parse(key, v)?,
            "dcf.c_fa" => self.dcf.c_fa = parse(key, v)?,
            "dcf.p_target" => self.dcf.p_target = parse(key, v)?,
            other => return Err(Error::invalid(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override '{kv}' is not key=value")))?;
        self.set(k, v)
    }

    /// Defaults overlaid with the settings in `text`. Relative paths are
    /// kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Malformed {
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            cfg.set(k, v).map_err(|e| Error::Malformed {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    /// Load a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&io::read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.manifest);
        fix(&mut cfg.features_dir);
        fix(&mut cfg.output);
        if let Some(a) = cfg.audio_dir.as_mut() {
            fix(a);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.map.validate()?;
        self.dcf.validate()?;
        if self.flavors.is_empty() {
            return Err(Error::invalid("no PBM flavor selected"));
        }
        match self.family {
            Family::Gmm if self.components == 0 || !self.components.is_power_of_two() => {
                return Err(Error::invalid("ubm.components must be a power of two"));
            }
            Family::Hmm if self.states == 0 || self.components_per_state == 0 || !self.components_per_state.is_power_of_two() => {
                return Err(Error::invalid("hmm.states must be positive and hmm.components_per_state a power of two"));
            }
            _ => {}
        }
        if self.ivector.enabled {
            if self.family != Family::Gmm {
                return Err(Error::invalid("the i-vector back end needs ubm.family = gmm"));
            }
            let iv = &self.ivector;
            if iv.rank == 0 || iv.sph_iterations == 0 || iv.plda_iterations == 0 {
                return Err(Error::invalid("i-vector rank and iteration counts must be positive"));
            }
            if iv.plda_speaker_rank > iv.rank || iv.plda_channel_rank > iv.rank {
                return Err(Error::invalid("PLDA ranks cannot exceed the i-vector rank"));
            }
        }
        Ok(())
    }

    /// Canonical text of every setting that influences results (paths are
    /// left out). Part of every artifact key.
    pub fn fingerprint(&self) -> String {
        let f = &self.features;
        let mut s = String::new();
        let _ = write!(
            s,
            "seed={}\nfeatures={},{},{},{},{},{},{},{},{},{}\nfamily={}\nubm={},{},{}\nhmm={},{},{}\nmap={},{}\n",
            self.seed,
            f.window_ms,
            f.hop_ms,
            f.num_static,
            f.rasta_enabled,
            f.vad_enabled,
            f.cmvn_enabled,
            f.num_mel_filters,
            f.fft_size,
            f.sample_rate,
            f.preemphasis,
            self.family.name(),
            self.components,
            self.em_iterations,
            self.iterations_per_split,
            self.states,
            self.components_per_state,
            self.bw_iterations,
            self.map.relevance_factor,
            self.map.iterations,
        );
        let iv = &self.ivector;
        let _ = write!(
            s,
            "ivector={},{},{},{},{},{},{}\n",
            iv.enabled, iv.rank, iv.t_iterations, iv.sph_iterations, iv.plda_speaker_rank, iv.plda_channel_rank, iv.plda_iterations
        );
        s
    }
}
