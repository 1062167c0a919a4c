use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{IVector, PldaModel, SphNormalizer, TvSpace};
use crate::error::{Error, Result};
use crate::io;

const TV_MAGIC: &[u8; 4] = b"PBMT";
const SPH_MAGIC: &[u8; 4] = b"PBMS";
const PLDA_MAGIC: &[u8; 4] = b"PBMP";
const ARCHIVE_MAGIC: &[u8; 4] = b"PBMI";
const VERSION: u32 = 1;

fn check_ubm(found: String, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::HashMismatch {
            expected: expected.to_owned(),
            found,
        });
    }
    Ok(())
}

fn write_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    io::write_u32(out, m.nrows() as u32);
    io::write_u32(out, m.ncols() as u32);
    // Row-major on disk.
    io::write_f64s(out, m.transpose().iter().copied());
}

fn read_matrix(r: &mut &[u8]) -> Result<DMatrix<f64>> {
    let rows = io::read_u32(r)? as usize;
    let cols = io::read_u32(r)? as usize;
    if rows.checked_mul(cols).map_or(true, |n| n * 8 > r.len()) {
        return Err(Error::Format(format!("{rows}x{cols} matrix exceeds payload")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &io::read_f64s(r, rows * cols)?))
}

fn write_vector(out: &mut Vec<u8>, v: &DVector<f64>) {
    io::write_u32(out, v.len() as u32);
    io::write_f64s(out, v.iter().copied());
}

fn read_vector(r: &mut &[u8]) -> Result<DVector<f64>> {
    let n = io::read_u32(r)? as usize;
    if n * 8 > r.len() {
        return Err(Error::Format(format!("{n}-vector exceeds payload")));
    }
    Ok(DVector::from_vec(io::read_f64s(r, n)?))
}

pub fn encode_tv(tv: &TvSpace) -> Vec<u8> {
    let mut out = Vec::new();
    io::write_header(&mut out, TV_MAGIC, VERSION);
    io::write_str(&mut out, tv.ubm_ref());
    io::write_u32(&mut out, tv.num_components() as u32);
    write_matrix(&mut out, tv.t());
    write_vector(&mut out, tv.sigma());
    out
}

/// Decode a T matrix, refusing one trained against a different UBM.
pub fn decode_tv(bytes: &[u8], ubm_hash: &str) -> Result<TvSpace> {
    let mut r = bytes;
    io::read_header(&mut r, TV_MAGIC, VERSION)?;
    let ubm_ref = io::read_str(&mut r)?;
    check_ubm(ubm_ref.clone(), ubm_hash)?;
    let c = io::read_u32(&mut r)? as usize;
    let t = read_matrix(&mut r)?;
    let sigma = read_vector(&mut r)?;
    io::expect_eof(&mut r)?;
    TvSpace::new(t, sigma, c, ubm_ref)
}

pub fn encode_sph(sph: &SphNormalizer, ubm_hash: &str) -> Vec<u8> {
    let mut out = Vec::new();
    io::write_header(&mut out, SPH_MAGIC, VERSION);
    io::write_str(&mut out, ubm_hash);
    io::write_u32(&mut out, sph.stages.len() as u32);
    for (mean, w) in &sph.stages {
        write_vector(&mut out, mean);
        write_matrix(&mut out, w);
    }
    out
}

pub fn decode_sph(bytes: &[u8], ubm_hash: &str) -> Result<SphNormalizer> {
    let mut r = bytes;
    io::read_header(&mut r, SPH_MAGIC, VERSION)?;
    check_ubm(io::read_str(&mut r)?, ubm_hash)?;
    let n = io::read_u32(&mut r)? as usize;
    if n == 0 {
        return Err(Error::Format("normalizer without stages".into()));
    }
    let mut stages = Vec::new();
    for _ in 0..n {
        let mean = read_vector(&mut r)?;
        let w = read_matrix(&mut r)?;
        if w.shape() != (mean.len(), mean.len()) {
            return Err(Error::Format("whitening shape does not match mean".into()));
        }
        stages.push((mean, w));
    }
    io::expect_eof(&mut r)?;
    Ok(SphNormalizer { stages })
}

pub fn encode_plda(p: &PldaModel, ubm_hash: &str) -> Vec<u8> {
    let mut out = Vec::new();
    io::write_header(&mut out, PLDA_MAGIC, VERSION);
    io::write_str(&mut out, ubm_hash);
    write_vector(&mut out, p.mu());
    write_matrix(&mut out, p.eigenvoice());
    write_matrix(&mut out, p.eigenchannel());
    write_vector(&mut out, p.noise());
    out
}

pub fn decode_plda(bytes: &[u8], ubm_hash: &str) -> Result<PldaModel> {
    let mut r = bytes;
    io::read_header(&mut r, PLDA_MAGIC, VERSION)?;
    check_ubm(io::read_str(&mut r)?, ubm_hash)?;
    let mu = read_vector(&mut r)?;
    let f = read_matrix(&mut r)?;
    let g = read_matrix(&mut r)?;
    let noise = read_vector(&mut r)?;
    io::expect_eof(&mut r)?;
    PldaModel::new(mu, f, g, noise)
}

/// Binary table of `(id, normalized, R values)` records.
pub fn write_ivector_archive(path: &Path, vectors: &[IVector]) -> Result<()> {
    let mut out = Vec::new();
    io::write_header(&mut out, ARCHIVE_MAGIC, VERSION);
    io::write_u32(&mut out, vectors.len() as u32);
    for v in vectors {
        io::write_str(&mut out, &v.id);
        out.push(v.normalized as u8);
        write_vector(&mut out, &v.values);
    }
    io::write_atomic(path, &out)
}

pub fn read_ivector_archive(path: &Path) -> Result<Vec<IVector>> {
    let bytes = io::read_file(path)?;
    let mut r = bytes.as_slice();
    io::read_header(&mut r, ARCHIVE_MAGIC, VERSION)?;
    let n = io::read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let id = io::read_str(&mut r)?;
        let (flag, rest) = r.split_first().ok_or_else(|| Error::Format("truncated archive".into()))?;
        r = rest;
        let mut v = IVector::new(id, read_vector(&mut r)?)?;
        v.normalized = *flag != 0;
        out.push(v);
    }
    io::expect_eof(&mut r)?;
    Ok(out)
}
