//! Binary weights file.
//!
//! Layout (little endian): magic `MSFWGT\0\0`, format version `u32`,
//! vocabulary fingerprint (`u32` length + UTF-8), fingerprint radius `u32`,
//! fingerprint bits `u64`, vocabulary size `u64`, adduct and isotope counts
//! `u32`, feature length `u64`, then `w`, `b` and `w_iso` as `f64`.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ModelWeights, PredictorError, N_ADDUCTS, N_ISOTOPES};
use crate::molgraph::FeatureConfig;
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 8] = b"MSFWGT\0\0";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn encode_weights(w: &ModelWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * w.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(w.vocab_fingerprint.len() as u32).to_le_bytes());
    out.extend_from_slice(w.vocab_fingerprint.as_bytes());
    out.extend_from_slice(&w.feature.radius.to_le_bytes());
    out.extend_from_slice(&(w.feature.bits as u64).to_le_bytes());
    out.extend_from_slice(&(w.vocab_size as u64).to_le_bytes());
    out.extend_from_slice(&(N_ADDUCTS as u32).to_le_bytes());
    out.extend_from_slice(&(N_ISOTOPES as u32).to_le_bytes());
    out.extend_from_slice(&(w.dim() as u64).to_le_bytes());
    for x in w.w.iter().chain(&w.b).chain(&w.w_iso) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PredictorError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| PredictorError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PredictorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize, PredictorError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| PredictorError::Corrupt(format!("size {v} out of range")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, PredictorError> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| PredictorError::Corrupt("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelWeights, PredictorError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(PredictorError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(PredictorError::Version(version));
    }
    let n = r.u32()? as usize;
    let fingerprint = std::str::from_utf8(r.take(n)?)
        .map_err(|_| PredictorError::Corrupt("fingerprint is not UTF-8".into()))?
        .to_string();
    let radius = r.u32()?;
    let bits = r.u64()?;
    let vocab_size = r.u64()?;
    let (na, ni) = (r.u32()? as usize, r.u32()? as usize);
    if na != N_ADDUCTS || ni != N_ISOTOPES {
        return Err(PredictorError::Corrupt(format!("unexpected head shape {na}x{ni}")));
    }
    let feature = FeatureConfig { radius, bits };
    let d = r.u64()?;
    if d != feature.len() {
        return Err(PredictorError::Corrupt(format!(
            "feature length {d} does not match configuration ({})",
            feature.len()
        )));
    }
    let rows = vocab_size
        .checked_mul(N_ADDUCTS)
        .ok_or_else(|| PredictorError::Corrupt("size overflow".into()))?;
    let w = r.f64s(rows.checked_mul(d).ok_or_else(|| PredictorError::Corrupt("size overflow".into()))?)?;
    let b = r.f64s(rows)?;
    let w_iso = r.f64s(N_ISOTOPES * d)?;
    if r.pos != bytes.len() {
        return Err(PredictorError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(ModelWeights {
        feature,
        vocab_fingerprint: fingerprint,
        vocab_size,
        w,
        b,
        w_iso,
    })
}

/// SHA-256 of the encoded weights, hex encoded.
pub fn weights_fingerprint(w: &ModelWeights) -> String {
    hex::encode(Sha256::digest(encode_weights(w)))
}

pub fn save_weights(path: &Path, w: &ModelWeights) -> Result<(), PredictorError> {
    std::fs::write(path, encode_weights(w)).map_err(|e| PredictorError::Io(format!("{}: {e}", path.display())))
}

/// Load weights and check them against the vocabulary they will be used with.
pub fn load_weights(path: &Path, v: &Vocabulary) -> Result<ModelWeights, PredictorError> {
    let bytes = std::fs::read(path).map_err(|e| PredictorError::Io(format!("{}: {e}", path.display())))?;
    let w = decode_weights(&bytes)?;
    w.check_compatible(v)?;
    Ok(w)
}
