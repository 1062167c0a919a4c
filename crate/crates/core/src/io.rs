//! Binary record helpers, content hashing and atomic file writes shared by the
//! persisted formats.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) type Le = LittleEndian;

/// Hex-encoded SHA-256 of a byte buffer.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(content_hash(&bytes))
}

/// Write to a sibling temporary file, then rename over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], version: u32) {
    out.extend_from_slice(magic);
    out.write_u32::<Le>(version).unwrap();
}

pub(crate) fn read_header<R: Read>(r: &mut R, magic: &[u8; 4], version: u32) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(fmt_err)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = r.read_u32::<Le>().map_err(fmt_err)?;
    if v != version {
        return Err(Error::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

pub(crate) fn fmt_err(e: std::io::Error) -> Error {
    Error::Format(format!("truncated or corrupt record: {e}"))
}

pub(crate) fn write_str(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<Le>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = r.read_u32::<Le>().map_err(fmt_err)? as usize;
    if n > 1 << 20 {
        return Err(Error::Format(format!("string length {n} too large")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(fmt_err)?;
    String::from_utf8(buf).map_err(|_| Error::Format("invalid utf-8 identifier".into()))
}

pub(crate) fn write_opt_str(out: &mut Vec<u8>, s: Option<&str>) {
    match s {
        Some(s) => {
            out.push(1);
            write_str(out, s);
        }
        None => out.push(0),
    }
}

pub(crate) fn read_opt_str<R: Read>(r: &mut R) -> Result<Option<String>> {
    match r.read_u8().map_err(fmt_err)? {
        0 => Ok(None),
        1 => read_str(r).map(Some),
        b => Err(Error::Format(format!("bad option tag {b}"))),
    }
}

pub(crate) fn write_f64s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.write_f64::<Le>(v).unwrap();
    }
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<Le>(&mut v).map_err(fmt_err)?;
    Ok(v)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    r.read_u32::<Le>().map_err(fmt_err)
}

pub(crate) fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.write_u32::<Le>(v).unwrap();
}

/// Fail if bytes remain after a complete record.
pub(crate) fn expect_eof(r: &mut &[u8]) -> Result<()> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(Error::Format(format!("{} trailing bytes", r.len())))
    }
}
