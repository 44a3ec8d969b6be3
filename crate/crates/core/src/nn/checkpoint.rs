//! Binary checkpoint: magic, version, named f32 tensors, then a UTF-8
//! `key=value` config blob.
//!
//! ```text
//! "LNNCKPT1" | u32 version | u32 count
//! count × ( u16 name_len | name | u8 rank | rank × u32 dim | f32 data )
//! u32 blob_len | blob
//! ```
//! All integers and floats are little-endian.

use super::model::{ModelConfig, PolicyModel};
use super::{NnError, Tensor};

pub const MAGIC: &[u8; 8] = b"LNNCKPT1";
pub const VERSION: u32 = 1;
const MAX_RANK: usize = 8;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: PolicyModel<f32>,
    /// Extra metadata keys stored alongside the model config.
    pub meta: Vec<(String, String)>,
}

pub fn model_tensors(model: &PolicyModel<f32>) -> Vec<Tensor> {
    model
        .layout
        .specs
        .iter()
        .map(|s| Tensor {
            name: s.name.clone(),
            shape: s.shape.clone(),
            data: model.params[s.range()].to_vec(),
        })
        .collect()
}

pub fn encode_tensors(tensors: &[Tensor], blob: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.shape.len() as u8);
        for d in &t.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
    out.extend_from_slice(blob.as_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Parses the container without interpreting the tensors.
pub fn decode_tensors(bytes: &[u8]) -> Result<(Vec<Tensor>, String), NnError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    // each tensor needs at least 3 header bytes
    if count > r.remaining() / 3 {
        return Err(NnError::Checkpoint(format!("tensor count {count} exceeds file size")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = u16::from_le_bytes(r.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(nlen, "name")?)
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        if rank > MAX_RANK {
            return Err(NnError::Checkpoint(format!("tensor {name:?} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut n: usize = 1;
        for _ in 0..rank {
            let d = r.u32("dim")? as usize;
            n = n
                .checked_mul(d)
                .ok_or_else(|| NnError::Checkpoint(format!("tensor {name:?} too large")))?;
            shape.push(d);
        }
        let nbytes = n
            .checked_mul(4)
            .filter(|b| *b <= r.remaining())
            .ok_or_else(|| NnError::Checkpoint(format!("truncated data for tensor {name:?}")))?;
        let data = r
            .take(nbytes, "data")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    let blen = r.u32("config length")? as usize;
    let blob = std::str::from_utf8(r.take(blen, "config")?)
        .map_err(|_| NnError::Checkpoint("config blob is not UTF-8".into()))?
        .to_string();
    if r.remaining() != 0 {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", r.remaining())));
    }
    Ok((tensors, blob))
}

pub fn save_checkpoint(model: &PolicyModel<f32>, meta: &[(String, String)]) -> Result<Vec<u8>, NnError> {
    let mut blob = model.cfg.to_kv();
    for (k, v) in meta {
        if k.contains('=') || k.contains('\n') || v.contains('\n') || k.is_empty() {
            return Err(NnError::Checkpoint(format!("metadata key/value not representable: {k:?}")));
        }
        blob.push_str(&format!("{k}={v}\n"));
    }
    Ok(encode_tensors(&model_tensors(model), &blob))
}

/// Decodes and rebuilds the model, checking every tensor against the
/// architecture described by the config blob.
pub fn load_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NnError> {
    let (tensors, blob) = decode_tensors(bytes)?;
    let (cfg, meta) = ModelConfig::from_kv(&blob)?;
    let mut model = PolicyModel::<f32>::zeros(&cfg)?;
    if tensors.len() != model.layout.specs.len() {
        return Err(NnError::Checkpoint(format!(
            "expected {} tensors, found {}",
            model.layout.specs.len(),
            tensors.len()
        )));
    }
    for t in &tensors {
        let spec = model
            .layout
            .get(&t.name)
            .ok_or_else(|| NnError::Checkpoint(format!("unexpected tensor {:?}", t.name)))?
            .clone();
        if spec.shape != t.shape {
            return Err(NnError::Shape {
                what: format!("checkpoint tensor {}", t.name),
                expected: spec.shape,
                actual: t.shape.clone(),
            });
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("checkpoint weights"));
        }
        model.params[spec.range()].copy_from_slice(&t.data);
    }
    let mut names: Vec<&str> = tensors.iter().map(|t| t.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(NnError::Checkpoint("duplicate tensor name".into()));
    }
    Ok(Checkpoint { model, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Variant;

    #[test]
    fn round_trip_is_bit_exact() {
        for v in [Variant::Liquid, Variant::LstmDt] {
            let mut cfg = ModelConfig::desk(v);
            cfg.init_seed = 7;
            let m = PolicyModel::<f32>::new(&cfg).unwrap();
            let meta = vec![("epochs".to_string(), "3".to_string())];
            let bytes = save_checkpoint(&m, &meta).unwrap();
            let ck = load_checkpoint(&bytes).unwrap();
            assert_eq!(ck.model.cfg, cfg);
            assert_eq!(ck.meta, meta);
            assert!(ck.model.params.iter().zip(&m.params).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let m = PolicyModel::<f32>::new(&ModelConfig::desk(Variant::Lstm)).unwrap();
        let bytes = save_checkpoint(&m, &[]).unwrap();
        assert!(load_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(load_checkpoint(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(load_checkpoint(&bad).is_err());
        assert!(load_checkpoint(&[]).is_err());
    }
}
