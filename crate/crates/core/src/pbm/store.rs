use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{check_group, check_target, group_by_phrase, sd_group, Flavor, Model, PbmSet, SpeakerModel};
use crate::error::{Error, Result};
use crate::features::{encode_features, FeatureMatrix};
use crate::gmm::MapConfig;
use crate::io::{self, content_hash};

const MANIFEST: &str = "pbmset.txt";
const CACHE_MAGIC: &[u8; 4] = b"PBMC";
const SPEAKERS_MAGIC: &[u8; 4] = b"PBMM";

fn write_model(dir: &Path, name: &str, m: &Model) -> Result<String> {
    let bytes = m.encode();
    io::write_atomic(&dir.join(name), &bytes)?;
    Ok(content_hash(&bytes))
}

fn read_model(dir: &Path, name: &str, hash: &str) -> Result<Model> {
    let bytes = io::read_file(&dir.join(name))?;
    let found = content_hash(&bytes);
    if found != hash {
        return Err(Error::HashMismatch {
            expected: hash.to_owned(),
            found,
        });
    }
    Model::decode(&bytes)
}

/// Write `set` as `dir/pbmset.txt` plus one model file per phrase. The
/// manifest goes last so a partial directory never looks complete.
pub fn save_pbm_set(dir: &Path, set: &PbmSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut text = format!(
        "format pbmset 1\nfamily {}\nflavor {}\nowner {}\n",
        set.family(),
        set.flavor(),
        set.owner().unwrap_or("-")
    );
    text += &format!("root ubm.model {}\n", write_model(dir, "ubm.model", set.root())?);
    for (i, (phrase, m)) in set.entries().iter().enumerate() {
        let name = format!("pbm_{i:03}.model");
        text += &format!("phrase {phrase} {name} {}\n", write_model(dir, &name, m)?);
    }
    io::write_atomic(&dir.join(MANIFEST), text.as_bytes())
}

/// Load a set written by [`save_pbm_set`], checking every file hash and, if
/// given, that the root UBM is the expected one.
pub fn load_pbm_set(dir: &Path, expected_root: Option<&str>) -> Result<PbmSet> {
    let text = io::read_text(&dir.join(MANIFEST))?;
    let mut family = None;
    let mut flavor = None;
    let mut owner = None;
    let mut root = None;
    let mut entries = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |msg: &str| Error::Malformed {
            line: i + 1,
            msg: msg.to_owned(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => {}
            ["format", "pbmset", "1"] => {}
            ["format", ..] => return Err(bad("unsupported manifest version")),
            ["family", v] => family = Some(v.to_string()),
            ["flavor", v] => flavor = Some(v.parse::<Flavor>()?),
            ["owner", v] => owner = (*v != "-").then(|| v.to_string()),
            ["root", name, hash] => {
                if let Some(want) = expected_root {
                    if *hash != want {
                        return Err(Error::HashMismatch {
                            expected: want.to_owned(),
                            found: hash.to_string(),
                        });
                    }
                }
                root = Some(read_model(dir, name, hash)?);
            }
            ["phrase", id, name, hash] => {
                if entries.insert(id.to_string(), read_model(dir, name, hash)?).is_some() {
                    return Err(bad("duplicate phrase"));
                }
            }
            _ => return Err(bad("unrecognised record")),
        }
    }
    let missing = |what: &str| Error::Format(format!("PBM manifest lacks {what}"));
    let root = root.ok_or_else(|| missing("root"))?;
    if family.as_deref() != Some(root.family()) {
        return Err(missing("a family matching the root model"));
    }
    PbmSet::new(root, entries, flavor.ok_or_else(|| missing("flavor"))?, owner)
}

/// Lazily built SD PBMs, one file per (owner, phrase). Each file records the
/// hash of everything it was built from and is rebuilt when that changes.
pub struct SdPbmCache<'a> {
    dir: PathBuf,
    ubm: Model,
    groups: BTreeMap<String, Vec<&'a FeatureMatrix>>,
    group_keys: BTreeMap<String, String>,
    cfg: MapConfig,
}

impl<'a> SdPbmCache<'a> {
    pub fn new(dir: &Path, ubm: Model, dev: &'a [FeatureMatrix], cfg: MapConfig) -> Result<Self> {
        cfg.validate()?;
        let groups = group_by_phrase(dev)?;
        if groups.is_empty() {
            return Err(Error::InsufficientData("no development utterances".into()));
        }
        let mut group_keys = BTreeMap::new();
        for (phrase, data) in &groups {
            check_group(phrase, data)?;
            group_keys.insert(phrase.clone(), hash_utterances(data.iter().copied()));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_owned(),
            ubm,
            groups,
            group_keys,
            cfg,
        })
    }

    fn path(&self, owner: &str, phrase: &str) -> PathBuf {
        let tag = |s: &str| content_hash(s.as_bytes())[..16].to_owned();
        self.dir.join(format!("{}-{}.sdpbm", tag(owner), tag(phrase)))
    }

    /// The SD set of `owner`, identical to [`super::build_sd_pbms`] on the
    /// same inputs.
    pub fn get(&self, owner: &str, target: &[FeatureMatrix]) -> Result<PbmSet> {
        check_target(owner, target, &self.groups)?;
        let ubm_hash = self.ubm.hash();
        let mut entries = BTreeMap::new();
        for (phrase, dev) in &self.groups {
            let own = target.iter().filter(|m| m.phrase_id.as_deref() == Some(phrase.as_str()));
            let key = content_hash(
                format!(
                    "{ubm_hash}\n{}\n{}\n{owner}\n{phrase}\n{:?}",
                    self.group_keys[phrase],
                    hash_utterances(own),
                    self.cfg
                )
                .as_bytes(),
            );
            let path = self.path(owner, phrase);
            let model = match read_cached(&path, &key)? {
                Some(m) => m,
                None => {
                    let data = sd_group(dev, target, phrase);
                    let m = self.ubm.adapt(&data, &self.cfg, true)?;
                    let mut bytes = Vec::new();
                    io::write_header(&mut bytes, CACHE_MAGIC, 1);
                    io::write_str(&mut bytes, &key);
                    bytes.extend(m.encode());
                    io::write_atomic(&path, &bytes)?;
                    m
                }
            };
            entries.insert(phrase.clone(), model);
        }
        PbmSet::new(self.ubm.clone(), entries, Flavor::Sd, Some(owner.to_owned()))
    }
}

/// One file holding enrolled target models, in the given order.
pub fn write_speaker_models(path: &Path, models: &[SpeakerModel]) -> Result<()> {
    let mut out = Vec::new();
    io::write_header(&mut out, SPEAKERS_MAGIC, 1);
    io::write_u32(&mut out, models.len() as u32);
    for m in models {
        io::write_str(&mut out, &m.speaker_id);
        io::write_str(&mut out, &m.phrase_id);
        io::write_str(&mut out, &m.source);
        let bytes = m.model.encode();
        io::write_u32(&mut out, bytes.len() as u32);
        out.extend(bytes);
    }
    io::write_atomic(path, &out)
}

pub fn read_speaker_models(path: &Path) -> Result<Vec<SpeakerModel>> {
    let bytes = io::read_file(path)?;
    let mut r = bytes.as_slice();
    io::read_header(&mut r, SPEAKERS_MAGIC, 1)?;
    let n = io::read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let speaker_id = io::read_str(&mut r)?;
        let phrase_id = io::read_str(&mut r)?;
        let source = io::read_str(&mut r)?;
        let len = io::read_u32(&mut r)? as usize;
        if len > r.len() {
            return Err(Error::Format("truncated speaker model".into()));
        }
        let (body, rest) = r.split_at(len);
        r = rest;
        out.push(SpeakerModel {
            speaker_id,
            phrase_id,
            model: Model::decode(body)?,
            source,
        });
    }
    io::expect_eof(&mut r)?;
    Ok(out)
}

fn hash_utterances<'b>(data: impl Iterator<Item = &'b FeatureMatrix>) -> String {
    let mut bytes = Vec::new();
    for m in data {
        bytes.extend(content_hash(&encode_features(m)).as_bytes());
    }
    content_hash(&bytes)
}

fn read_cached(path: &Path, key: &str) -> Result<Option<Model>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut r = bytes.as_slice();
    if io::read_header(&mut r, CACHE_MAGIC, 1).is_err() {
        return Ok(None);
    }
    match io::read_str(&mut r) {
        Ok(k) if k == key => Model::decode(r).map(Some),
        _ => Ok(None),
    }
}
