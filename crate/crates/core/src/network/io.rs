//! Versioned binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "SCRIBE-MODEL"          12 bytes
//! version                 u32
//! payload length          u64
//! SHA-256 of payload      32 bytes
//! payload:
//!   alphabet              u32 count, then (u32 length, UTF-8) per symbol
//!   standardizer          u32 dim, dim x f64 mean, dim x f64 std
//!   config                u32 length, JSON
//!   forward, backward,
//!   output weights        per tensor: u32 rows, u32 cols, rows*cols x f64
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{BlstmModel, LstmLayerParams, NetworkConfig};
use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 12] = b"SCRIBE-MODEL";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 12 + 4 + 8 + 32;

pub fn to_bytes(model: &BlstmModel) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    put_u32(&mut payload, model.alphabet.len())?;
    for s in model.alphabet.symbols() {
        put_bytes(&mut payload, s.as_bytes())?;
    }
    put_u32(&mut payload, model.standardizer.dim())?;
    for v in model.standardizer.mean.iter().chain(&model.standardizer.std) {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    put_bytes(&mut payload, serde_json::to_string(&model.config)?.as_bytes())?;
    for m in [&model.forward.weights, &model.backward.weights, &model.output_weights] {
        put_u32(&mut payload, m.rows())?;
        put_u32(&mut payload, m.cols())?;
        for v in m.as_slice() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<BlstmModel> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ModelFormat("missing SCRIBE-MODEL magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checksum);
    }
    let version = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::ModelVersion {
            found: version,
            expected: VERSION,
        });
    }
    let declared = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != declared || Sha256::digest(payload).as_slice() != &bytes[24..56] {
        return Err(Error::Checksum);
    }

    let mut r = Reader { buf: payload, pos: 0 };
    let count = r.u32()?;
    let symbols = (0..count).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let alphabet = Alphabet::new(symbols)?;
    let dim = r.u32()?;
    let mean = r.f64s(dim)?;
    let std = r.f64s(dim)?;
    let config: NetworkConfig = serde_json::from_str(&r.string()?)?;
    let forward = r.matrix()?;
    let backward = r.matrix()?;
    let output_weights = r.matrix()?;
    if r.pos != payload.len() {
        return Err(Error::ModelFormat("trailing bytes after weights".into()));
    }

    let (d, h) = (config.input_dim, config.hidden);
    let model = BlstmModel {
        forward: LstmLayerParams::from_weights(d, h, forward)?,
        backward: LstmLayerParams::from_weights(d, h, backward)?,
        standardizer: Standardizer { mean, std },
        output_weights,
        alphabet,
        config,
    };
    if model.output_weights.shape() != (model.alphabet.output_size(), 2 * h + 1) || dim != d {
        return Err(Error::ModelFormat("tensor shapes disagree with config".into()));
    }
    Ok(model)
}

pub fn save_model(model: &BlstmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BlstmModel> {
    let path = path.as_ref();
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::ModelFormat(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) -> Result<()> {
    put_u32(out, bytes.len())?;
    out.extend_from_slice(bytes);
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::ModelFormat("payload ends early".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::ModelFormat("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::ModelFormat("size overflow".into()))?;
        Ok(Matrix::from_vec(rows, cols, self.f64s(n)?))
    }
}
