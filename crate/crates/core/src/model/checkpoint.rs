//! Versioned binary checkpoint: config JSON plus named, shape-tagged f32
//! tensors, closed by an FNV-1a checksum.
//!
//! Layout (little endian): magic `TSWCKPT\0`, `u32` version, `u32` config
//! length, config bytes, `u32` tensor count, then per tensor `u16` name
//! length, name, `u8` rank, `u32` dims, f32 data; finally `u64` checksum of
//! everything before it.

use std::fs;
use std::path::Path;

use super::network::Model;
use super::{ModelConfig, Parameters};
use crate::error::{Error, Result};
use crate::seed::stream_id;

const MAGIC: &[u8; 8] = b"TSWCKPT\0";
pub const VERSION: u32 = 1;

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config)?;
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    let named = model.params.named();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, m) in named {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(2);
        out.extend_from_slice(&(m.rows as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols as u32).to_le_bytes());
        for v in &m.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let sum = fnv(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(n)?)?;
    config.validate()?;
    let mut params = Parameters::init(&config, stream_id("checkpoint-shape"))?;
    let count = r.u32()? as usize;
    let expected: Vec<(String, usize, usize)> = params
        .named()
        .iter()
        .map(|(n, m)| (n.clone(), m.rows, m.cols))
        .collect();
    if count != expected.len() {
        return Err(Error::Checkpoint(format!("expected {} tensors, found {count}", expected.len())));
    }
    for (slot, (want, rows, cols)) in params.tensors_mut().into_iter().zip(expected) {
        let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("non-utf8 name".into()))?;
        if name != want {
            return Err(Error::Checkpoint(format!("expected tensor {want}, found {name}")));
        }
        let rank = r.take(1)?[0];
        let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        if dims != [rows, cols] {
            return Err(Error::Checkpoint(format!("{name}: shape {dims:?}, expected [{rows}, {cols}]")));
        }
        let raw = r.take(rows * cols * 4)?;
        for (v, c) in slot.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(c.try_into().unwrap()) as f64;
        }
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Model { config, params })
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Model::new(ModelConfig::toy(16, 2, 2, 2), 5).unwrap();
        let a = encode_checkpoint(&m).unwrap();
        let back = decode_checkpoint(&a).unwrap();
        assert_eq!(back.config, m.config);
        let b = encode_checkpoint(&back).unwrap();
        assert_eq!(a, b);
        for ((_, x), (_, y)) in back.params.named().iter().zip(m.params.named()) {
            for (u, v) in x.data.iter().zip(&y.data) {
                assert_eq!(*u, *v as f32 as f64);
            }
        }
    }

    #[test]
    fn corruption_is_detected() {
        let m = Model::new(ModelConfig::toy(8, 1, 2, 1), 1).unwrap();
        let mut a = encode_checkpoint(&m).unwrap();
        let mid = a.len() / 2;
        a[mid] ^= 1;
        assert!(decode_checkpoint(&a).is_err());
        assert!(decode_checkpoint(&a[..20]).is_err());
    }
}
