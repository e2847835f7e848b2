//! On-disk cache of unit-coupling block decompositions.
//!
//! Layout (little-endian):
//! `b"HGEIGEN\0"`, `u32` format version, `u64` entry count, then per entry
//! `u32 N`, `u32 E`, `u64 dim`, `dim` eigenvalues as `f64`, and the `dim²`
//! column-major eigenvector entries as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::EigenCache;
use crate::error::{Error, Result};
use crate::fock::block_dim;
use crate::tridiag::TridiagEigen;

const MAGIC: &[u8; 8] = b"HGEIGEN\0";
pub const FORMAT_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Write every cached decomposition to `path`.
pub fn save(cache: &EigenCache, path: &Path) -> Result<()> {
    let entries = cache.snapshot();
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(entries.len() as u64).to_le_bytes())?;
        for ((order, e), eig) in &entries {
            w.write_all(&order.to_le_bytes())?;
            w.write_all(&e.to_le_bytes())?;
            w.write_all(&(eig.dim() as u64).to_le_bytes())?;
            for x in eig.values.iter().chain(&eig.vectors) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Load decompositions from `path` into `cache`; returns the number of entries read.
pub fn load(cache: &EigenCache, path: &Path) -> Result<usize> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CacheFormat("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::CacheFormat(format!("unsupported version {version}")));
    }
    let count = read_u64(&mut r)? as usize;
    for _ in 0..count {
        let order = read_u32(&mut r)?;
        let e = read_u32(&mut r)?;
        let dim = read_u64(&mut r)? as usize;
        if order == 0 || dim != block_dim(e as usize, order) {
            return Err(Error::CacheFormat(format!("entry (N={order}, E={e}) has dim {dim}")));
        }
        let values = read_f64s(&mut r, dim)?;
        let vectors = read_f64s(&mut r, dim * dim)?;
        cache.insert(order, e, TridiagEigen { values, vectors });
    }
    Ok(count)
}
