//! Dataset files: JSON-Lines and the `TPFN` binary container.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! "TPFN" | version u16 | count u64
//! per record:
//!   id_len u16 | id utf-8 | freq_code u8 | multiple u16 | start i64 (epoch s)
//!   len u32 | values f32 x len | mask bits (LSB first, padded to byte)
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{FreqUnit, Frequency, TimeSeries};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TPFN";
const VERSION: u16 = 1;
const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Bin,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "bin" => Ok(Self::Bin),
            other => Err(Error::InvalidInput(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    id: String,
    freq: String,
    start: String,
    values: Vec<Option<f64>>,
    #[serde(default)]
    provenance: String,
}

pub fn write_dataset(series: &[TimeSeries], path: &Path, format: DatasetFormat) -> Result<()> {
    let bytes = match format {
        DatasetFormat::Jsonl => encode_jsonl(series)?,
        DatasetFormat::Bin => encode_bin(series)?,
    };
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads either format, detected by the leading magic bytes.
pub fn read_dataset(path: &Path) -> Result<Vec<TimeSeries>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        decode_bin(&bytes)
    } else {
        decode_jsonl(BufReader::new(bytes.as_slice()))
    }
}

pub(crate) fn encode_jsonl(series: &[TimeSeries]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for s in series {
        let rec = JsonRecord {
            id: s.id.clone(),
            freq: s.freq.to_string(),
            start: s.start.format(TS_FORMAT).to_string(),
            values: s
                .values
                .iter()
                .zip(&s.mask)
                .map(|(&v, &m)| m.then_some(v))
                .collect(),
            provenance: s.provenance.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn decode_jsonl<R: BufRead>(reader: R) -> Result<Vec<TimeSeries>> {
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let malformed = |reason: String| Error::MalformedRecord { index, reason };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let freq: Frequency = rec.freq.parse().map_err(|e: Error| malformed(e.to_string()))?;
        let start = NaiveDateTime::parse_from_str(&rec.start, TS_FORMAT)
            .or_else(|_| NaiveDateTime::parse_from_str(&rec.start, "%Y-%m-%d %H:%M:%S"))
            .or_else(|_| {
                chrono::NaiveDate::parse_from_str(&rec.start, "%Y-%m-%d")
                    .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
            })
            .map_err(|e| malformed(format!("start {:?}: {e}", rec.start)))?;
        let mask: Vec<bool> = rec.values.iter().map(Option::is_some).collect();
        let values: Vec<f64> = rec.values.iter().map(|v| v.unwrap_or(0.0)).collect();
        let s = TimeSeries::with_mask(values, mask, start, freq)
            .map_err(|e| malformed(e.to_string()))?
            .with_id(rec.id)
            .with_provenance(rec.provenance);
        out.push(s);
    }
    Ok(out)
}

pub(crate) fn encode_bin(series: &[TimeSeries]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(series.len() as u64).to_le_bytes());
    for (index, s) in series.iter().enumerate() {
        let bad = |reason: &str| Error::MalformedRecord {
            index,
            reason: reason.into(),
        };
        let id = s.id.as_bytes();
        let id_len = u16::try_from(id.len()).map_err(|_| bad("id longer than 65535 bytes"))?;
        let mult = u16::try_from(s.freq.multiple).map_err(|_| bad("frequency multiple exceeds u16"))?;
        let len = u32::try_from(s.len()).map_err(|_| bad("series longer than u32"))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);
        out.push(s.freq.unit.code());
        out.extend_from_slice(&mult.to_le_bytes());
        out.extend_from_slice(&s.start.and_utc().timestamp().to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        for &v in &s.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let mut bits = vec![0u8; s.len().div_ceil(8)];
        for (i, &m) in s.mask.iter().enumerate() {
            if m {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    record: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                record: self.record,
                offset: self.pos,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

fn decode_bin(bytes: &[u8]) -> Result<Vec<TimeSeries>> {
    let mut c = Cursor {
        buf: bytes,
        pos: 0,
        record: 0,
    };
    c.take(4)?;
    let version = u16::from_le_bytes(c.array()?);
    if version != VERSION {
        return Err(Error::MalformedRecord {
            index: 0,
            reason: format!("unsupported version {version}"),
        });
    }
    let count = u64::from_le_bytes(c.array()?);
    let mut out = Vec::new();
    for index in 0..count as usize {
        c.record = index;
        let malformed = |reason: String| Error::MalformedRecord { index, reason };
        let id_len = u16::from_le_bytes(c.array()?) as usize;
        let id = std::str::from_utf8(c.take(id_len)?)
            .map_err(|e| malformed(e.to_string()))?
            .to_string();
        let code = c.array::<1>()?[0];
        let unit =
            FreqUnit::from_code(code).ok_or_else(|| malformed(format!("bad freq code {code}")))?;
        let mult = u16::from_le_bytes(c.array()?);
        let freq = Frequency::new(unit, mult as u32).map_err(|e| malformed(e.to_string()))?;
        let secs = i64::from_le_bytes(c.array()?);
        let start = DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| malformed(format!("bad start {secs}")))?
            .naive_utc();
        let len = u32::from_le_bytes(c.array()?) as usize;
        let raw = c.take(len.checked_mul(4).ok_or_else(|| malformed("length overflow".into()))?)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("chunk of 4")) as f64)
            .collect();
        let bits = c.take(len.div_ceil(8))?;
        let mask: Vec<bool> = (0..len).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        let s = TimeSeries::with_mask(values, mask, start, freq)
            .map_err(|e| malformed(e.to_string()))?
            .with_id(id);
        out.push(s);
    }
    Ok(out)
}
