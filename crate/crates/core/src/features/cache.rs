//! Feature cache: `PBMF` v1 header, ids, then row-major `f32` frames, plus a
//! text manifest of `utterance_id<TAB>path` lines.

use std::path::{Path, PathBuf};

use byteorder::{ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::io::{self, Le};

const MAGIC: &[u8; 4] = b"PBMF";
const VERSION: u32 = 1;

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + m.frames.len() * 4);
    io::write_header(&mut out, MAGIC, VERSION);
    io::write_u32(&mut out, m.len() as u32);
    io::write_u32(&mut out, m.dim() as u32);
    io::write_str(&mut out, &m.utterance_id);
    io::write_opt_str(&mut out, m.phrase_id.as_deref());
    io::write_opt_str(&mut out, m.speaker_id.as_deref());
    for &v in m.frames.iter() {
        out.write_f32::<Le>(v as f32).unwrap();
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut r = bytes;
    io::read_header(&mut r, MAGIC, VERSION)?;
    let l = io::read_u32(&mut r)? as usize;
    let f = io::read_u32(&mut r)? as usize;
    let utterance_id = io::read_str(&mut r)?;
    let phrase_id = io::read_opt_str(&mut r)?;
    let speaker_id = io::read_opt_str(&mut r)?;
    if r.len() != l * f * 4 {
        return Err(Error::Format(format!(
            "{utterance_id}: payload {} bytes, header says {l}x{f}",
            r.len()
        )));
    }
    let mut buf = vec![0f32; l * f];
    r.read_f32_into::<Le>(&mut buf).map_err(io::fmt_err)?;
    let frames = Array2::from_shape_vec((l, f), buf.into_iter().map(f64::from).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut m = FeatureMatrix::new(utterance_id, frames)?;
    m.phrase_id = phrase_id;
    m.speaker_id = speaker_id;
    Ok(m)
}

pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<()> {
    io::write_atomic(path, &encode_features(m))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    decode_features(&io::read_file(path)?)
}

pub fn write_feature_manifest(path: &Path, entries: &[(String, PathBuf)]) -> Result<()> {
    let mut text = String::new();
    for (id, p) in entries {
        text.push_str(&format!("{id}\t{}\n", p.display()));
    }
    io::write_atomic(path, text.as_bytes())
}

/// Relative paths are resolved against the manifest's directory.
pub fn read_feature_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let text = io::read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(p), None) if !id.is_empty() && !p.is_empty() => {
                let p = PathBuf::from(p);
                out.push((id.to_owned(), if p.is_absolute() { p } else { base.join(p) }));
            }
            _ => {
                return Err(Error::Malformed {
                    line: i + 1,
                    msg: "expected utterance_id<TAB>path".into(),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(values in prop::collection::vec(-1e3f32..1e3, 1..40), dim in 1usize..5) {
            let rows = (values.len() / dim).max(1);
            let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            v.resize(rows * dim, 0.0);
            let m = FeatureMatrix::new("utt-1", Array2::from_shape_vec((rows, dim), v).unwrap())
                .unwrap()
                .with_labels(Some("spk"), None);
            let back = decode_features(&encode_features(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let m = FeatureMatrix::new("u", Array2::zeros((4, 3))).unwrap();
        let bytes = encode_features(&m);
        assert!(decode_features(&bytes[..bytes.len() - 2]).is_err());
        assert!(decode_features(b"XXXX").is_err());
    }

    #[test]
    fn manifest_roundtrip_relative() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("feats.lst");
        write_feature_manifest(&mpath, &[("a".into(), PathBuf::from("a.feat"))]).unwrap();
        let back = read_feature_manifest(&mpath).unwrap();
        assert_eq!(back, vec![("a".to_owned(), dir.path().join("a.feat"))]);
    }
}
