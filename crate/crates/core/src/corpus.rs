//! Corpus manifest: one utterance per line with speaker, phrase and split.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io;

/// Placeholder phrase id for utterances without a pass-phrase (UBM data).
pub const NO_PHRASE: &str = "-";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Ubm,
    Dev,
    Enroll,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Ubm => "ubm",
            Split::Dev => "dev",
            Split::Enroll => "enroll",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ubm" => Ok(Split::Ubm),
            "dev" => Ok(Split::Dev),
            "enroll" => Ok(Split::Enroll),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub phrase_id: String,
    pub split: Split,
}

impl CorpusEntry {
    pub fn phrase(&self) -> Option<&str> {
        (self.phrase_id != NO_PHRASE).then_some(self.phrase_id.as_str())
    }
}

/// Ordered manifest with an id index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    index: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(entries: Vec<CorpusEntry>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            for field in [&e.utterance_id, &e.speaker_id, &e.phrase_id] {
                if field.is_empty() || field.contains(char::is_whitespace) {
                    return Err(Error::invalid(format!("bad identifier '{field}' in manifest")));
                }
            }
            if e.speaker_id.contains(':') || e.phrase_id.contains(':') {
                return Err(Error::invalid(format!("':' not allowed in ids of '{}'", e.utterance_id)));
            }
            if index.insert(e.utterance_id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate utterance '{}'", e.utterance_id)));
            }
        }
        Ok(Self { entries, index })
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn get(&self, utterance_id: &str) -> Option<&CorpusEntry> {
        self.index.get(utterance_id).map(|&i| &self.entries[i])
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let [utt, spk, phrase, split] = f.as_slice() else {
                return Err(Error::Malformed {
                    line: i + 1,
                    msg: format!("expected 4 fields, found {}", f.len()),
                });
            };
            entries.push(CorpusEntry {
                utterance_id: utt.to_string(),
                speaker_id: spk.to_string(),
                phrase_id: phrase.to_string(),
                split: split.parse().map_err(|e: Error| Error::Malformed {
                    line: i + 1,
                    msg: e.to_string(),
                })?,
            });
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# utterance_id speaker_id phrase_id split\n");
        for e in &self.entries {
            s += &format!("{} {} {} {}\n", e.utterance_id, e.speaker_id, e.phrase_id, e.split);
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_text().as_bytes())
    }
}
