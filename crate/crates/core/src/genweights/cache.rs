//! On-disk cache of enumerated generations.
//!
//! Layout (little endian): magic, format version, model fingerprint (32 bytes),
//! generation, threshold, kept mass, tail mass, box count, the `-ln p` values,
//! then a SHA-256 of everything before it. Any mismatch is reported and the
//! entry is rebuilt.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{enumerate_generation_with, initial_threshold, next_threshold, EnumerationOptions, GenerationWeights};
use crate::error::Result;
use crate::weights::WeightModel;

const MAGIC: &[u8; 4] = b"NKGW";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 32 + 4 + 8 + 8 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// The file existed but could not be used; the reason is kept for logging.
    Corrupt(String),
}

pub fn cache_path(dir: &Path, model: &WeightModel, j: usize, eps: f64) -> PathBuf {
    let fp = model.fingerprint();
    dir.join(format!("gen{j}_{}_{:016x}.nkgw", &fp[..16], eps.to_bits()))
}

fn encode(gw: &GenerationWeights, fingerprint: &[u8]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * gw.len() + 32);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(fingerprint);
    buf.extend_from_slice(&(gw.generation() as u32).to_le_bytes());
    buf.extend_from_slice(&gw.threshold().to_le_bytes());
    buf.extend_from_slice(&gw.kept_mass().to_le_bytes());
    buf.extend_from_slice(&gw.tail_mass().to_le_bytes());
    buf.extend_from_slice(&(gw.len() as u64).to_le_bytes());
    for lw in gw.log_weights() {
        buf.extend_from_slice(&lw.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn read_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn read_f64(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn decode(bytes: &[u8], fingerprint: &[u8], j: usize, eps: f64) -> std::result::Result<GenerationWeights, String> {
    if bytes.len() < HEADER_LEN + 32 {
        return Err(format!("file too short ({} bytes)", bytes.len()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err("checksum mismatch".into());
    }
    if &body[0..4] != MAGIC {
        return Err("bad magic".into());
    }
    let version = read_u32(body, 4);
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    if &body[8..40] != fingerprint {
        return Err("weight model fingerprint differs".into());
    }
    let generation = read_u32(body, 40) as usize;
    let threshold = read_f64(body, 44);
    if generation != j || threshold.to_bits() != eps.to_bits() {
        return Err(format!("entry is for generation {generation}, threshold {threshold:e}"));
    }
    let kept = read_f64(body, 52);
    let tail = read_f64(body, 60);
    let n = read_u64(body, 68) as usize;
    if body.len() != HEADER_LEN + 8 * n {
        return Err(format!("length mismatch for {n} boxes"));
    }
    let lw: Vec<f64> = (0..n).map(|i| read_f64(body, HEADER_LEN + 8 * i)).collect();
    if lw.windows(2).any(|w| w[0] > w[1]) {
        return Err("log weights not sorted".into());
    }
    Ok(GenerationWeights::from_parts(generation, threshold, lw, kept, tail))
}

/// Reads a cached generation. `Ok(None)` when absent; `Err` carries the reason
/// a present file was rejected.
pub fn load(
    path: &Path,
    model: &WeightModel,
    j: usize,
    eps: f64,
) -> std::result::Result<Option<GenerationWeights>, String> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.to_string()),
    };
    let fp = hex::decode(model.fingerprint()).map_err(|e| e.to_string())?;
    decode(&bytes, &fp, j, eps).map(Some)
}

/// Writes atomically via a sibling temporary file.
pub fn store(path: &Path, model: &WeightModel, gw: &GenerationWeights) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let fp = hex::decode(model.fingerprint()).expect("fingerprint is hex");
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(gw, &fp))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Cached enumeration. A corrupt entry is overwritten with a fresh one.
pub fn load_or_enumerate(
    dir: &Path,
    model: &WeightModel,
    j: usize,
    eps: f64,
    budget: u64,
) -> Result<(GenerationWeights, CacheStatus)> {
    let path = cache_path(dir, model, j, eps);
    let status = match load(&path, model, j, eps) {
        Ok(Some(gw)) => return Ok((gw, CacheStatus::Hit)),
        Ok(None) => CacheStatus::Miss,
        Err(reason) => {
            log::warn!("ignoring cache entry {}: {reason}", path.display());
            CacheStatus::Corrupt(reason)
        }
    };
    let opts = EnumerationOptions {
        budget,
        ancestry: false,
    };
    let gw = enumerate_generation_with(model, j, eps, opts)?;
    if let Err(e) = store(&path, model, &gw) {
        log::warn!("could not write cache entry {}: {e}", path.display());
    }
    Ok((gw, status))
}

/// Certified enumeration (`t_max * tail <= tol`) through the cache. The
/// threshold schedule is deterministic, so a warm cache hits on every step.
pub fn load_or_enumerate_certified(
    dir: &Path,
    model: &WeightModel,
    j: usize,
    t_max: f64,
    tol: f64,
    budget: u64,
) -> Result<(GenerationWeights, CacheStatus)> {
    let mut eps = initial_threshold(model, t_max, tol)?;
    loop {
        let (gw, status) = load_or_enumerate(dir, model, j, eps, budget)?;
        let bound = t_max * gw.tail_mass();
        if bound <= tol {
            return Ok((gw, status));
        }
        eps = next_threshold(eps, bound, tol)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genweights::DEFAULT_BOX_BUDGET;

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let m = WeightModel::weibull(0.5).unwrap();
        let eps = 1e-6;
        let (a, s1) = load_or_enumerate(dir.path(), &m, 2, eps, DEFAULT_BOX_BUDGET).unwrap();
        assert_eq!(s1, CacheStatus::Miss);
        let (b, s2) = load_or_enumerate(dir.path(), &m, 2, eps, DEFAULT_BOX_BUDGET).unwrap();
        assert_eq!(s2, CacheStatus::Hit);
        assert_eq!(a.log_weights(), b.log_weights());
        assert_eq!(a.tail_mass().to_bits(), b.tail_mass().to_bits());

        let path = cache_path(dir.path(), &m, 2, eps);
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        fs::write(&path, &bytes).unwrap();
        let (c, s3) = load_or_enumerate(dir.path(), &m, 2, eps, DEFAULT_BOX_BUDGET).unwrap();
        assert!(matches!(s3, CacheStatus::Corrupt(_)));
        assert_eq!(c.log_weights(), a.log_weights());
        let (_, s4) = load_or_enumerate(dir.path(), &m, 2, eps, DEFAULT_BOX_BUDGET).unwrap();
        assert_eq!(s4, CacheStatus::Hit);

        fs::write(&path, b"garbage").unwrap();
        assert!(load(&path, &m, 2, eps).is_err());
    }

    #[test]
    fn other_model_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = WeightModel::weibull(0.5).unwrap();
        let other = WeightModel::weibull(0.6).unwrap();
        let (gw, _) = load_or_enumerate(dir.path(), &m, 1, 1e-4, DEFAULT_BOX_BUDGET).unwrap();
        let path = cache_path(dir.path(), &m, 1, 1e-4);
        store(&path, &m, &gw).unwrap();
        assert!(load(&path, &other, 1, 1e-4).is_err());
        assert!(load(&path, &m, 2, 1e-4).is_err());
    }
}
