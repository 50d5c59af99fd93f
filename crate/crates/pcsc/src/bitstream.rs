//! Container format for encoded attribute streams.
//!
//! Little-endian throughout. The header carries the transform shape, the
//! fixed-point quantizer step, a prediction flag, per-block lengths, and the
//! per-block, per-channel rate-model parameters. The payload is one coder
//! chunk per non-empty (block, channel), each with a 32-bit byte-length
//! prefix so any chunk can be located without decoding the ones before it.

use crate::error::{Error, Result};
use crate::rd::{LaplaceModel, QuantizedStack, RateModels};
use crate::rlgr;

pub const MAGIC: &[u8; 5] = b"PCSC1";
pub const VERSION: u8 = 1;

/// Stream-level parameters the decoder needs besides the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamMeta {
    pub p: u8,
    pub l0: u8,
    pub depth: u8,
    pub predictive: bool,
    pub leaf_count: u64,
    pub delta_fixed: u64,
    /// Fingerprint of the coded voxel keys; lets the decoder reject geometry
    /// other than what the stream was encoded against.
    pub geom_check: u64,
}

/// Location of one coder chunk inside a serialized stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkEntry {
    pub block: usize,
    pub channel: usize,
    pub offset: usize,
    pub len: usize,
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn serialize(meta: &StreamMeta, qstack: &QuantizedStack, models: &RateModels) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(meta.p);
    out.push(meta.l0);
    out.push(meta.depth);
    out.push(meta.predictive as u8);
    push_u64(&mut out, meta.leaf_count);
    push_u64(&mut out, meta.delta_fixed);
    push_u64(&mut out, meta.geom_check);
    let blocks: Vec<&[Vec<i64>; 3]> =
        std::iter::once(&qstack.lowpass).chain(qstack.details.iter()).collect();
    for b in &blocks {
        push_u32(&mut out, b[0].len() as u32);
    }
    let model_rows: Vec<&[LaplaceModel; 3]> =
        std::iter::once(&models.lowpass).chain(models.details.iter()).collect();
    for row in &model_rows {
        for m in row.iter() {
            push_f64(&mut out, m.location);
            push_f64(&mut out, m.scale);
        }
    }
    for b in &blocks {
        for ch in 0..3 {
            if b[ch].is_empty() {
                continue;
            }
            let chunk = rlgr::rlgr_encode(&b[ch]);
            push_u32(&mut out, chunk.len() as u32);
            out.extend_from_slice(&chunk);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Bitstream {
                field: field.into(),
                reason: format!("truncated at byte {} of {}", self.pos, self.bytes.len()),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

fn read_header(c: &mut Cursor) -> Result<(StreamMeta, Vec<u32>, RateModels)> {
    let magic = c.take(5, "magic")?;
    if magic != MAGIC {
        return Err(Error::Bitstream {
            field: "magic".into(),
            reason: format!("expected {MAGIC:?}, found {magic:?}"),
        });
    }
    let version = c.u8("version")?;
    if version != VERSION {
        return Err(Error::Bitstream {
            field: "version".into(),
            reason: format!("unsupported version {version}"),
        });
    }
    let p = c.u8("p")?;
    if !(1..=2).contains(&p) {
        return Err(Error::Bitstream {
            field: "p".into(),
            reason: format!("spline degree {p} out of range"),
        });
    }
    let l0 = c.u8("l0")?;
    let depth = c.u8("depth")?;
    if l0 >= depth || depth > crate::cloud::MAX_DEPTH {
        return Err(Error::Bitstream {
            field: "depth".into(),
            reason: format!("invalid level range {l0}..{depth}"),
        });
    }
    let flags = c.u8("flags")?;
    if flags > 1 {
        return Err(Error::Bitstream {
            field: "flags".into(),
            reason: format!("unknown flag bits {flags:#x}"),
        });
    }
    let leaf_count = c.u64("leaf_count")?;
    if leaf_count == 0 {
        return Err(Error::Bitstream {
            field: "leaf_count".into(),
            reason: "empty cloud".into(),
        });
    }
    let delta_fixed = c.u64("delta")?;
    if delta_fixed == 0 {
        return Err(Error::Bitstream {
            field: "delta".into(),
            reason: "zero quantizer step".into(),
        });
    }
    let geom_check = c.u64("geom_check")?;
    let num_blocks = 1 + (depth - l0) as usize;
    let mut block_lens = Vec::with_capacity(num_blocks);
    for _ in 0..num_blocks {
        block_lens.push(c.u32("block_length")?);
    }
    if block_lens[0] == 0 {
        return Err(Error::Bitstream {
            field: "block_length".into(),
            reason: "empty coarse block".into(),
        });
    }
    let mut rows = Vec::with_capacity(num_blocks);
    for _ in 0..num_blocks {
        let mut row = [LaplaceModel { location: 0.0, scale: 1.0 }; 3];
        for m in &mut row {
            m.location = c.f64("laplace")?;
            m.scale = c.f64("laplace")?;
            if !m.location.is_finite() || !m.scale.is_finite() || m.scale <= 0.0 {
                return Err(Error::Bitstream {
                    field: "laplace".into(),
                    reason: format!("bad model ({}, {})", m.location, m.scale),
                });
            }
        }
        rows.push(row);
    }
    let meta = StreamMeta {
        p,
        l0,
        depth,
        predictive: flags & 1 != 0,
        leaf_count,
        delta_fixed,
        geom_check,
    };
    let models = RateModels { lowpass: rows[0], details: rows[1..].to_vec() };
    Ok((meta, block_lens, models))
}

pub fn deserialize(bytes: &[u8]) -> Result<(StreamMeta, QuantizedStack, RateModels)> {
    let mut c = Cursor { bytes, pos: 0 };
    let (meta, block_lens, models) = read_header(&mut c)?;
    let mut blocks: Vec<[Vec<i64>; 3]> = Vec::with_capacity(block_lens.len());
    for &len in &block_lens {
        let mut row: [Vec<i64>; 3] = Default::default();
        for slot in &mut row {
            if len == 0 {
                continue;
            }
            let chunk_len = c.u32("chunk_length")? as usize;
            let start = c.pos;
            let chunk = c.take(chunk_len, "chunk")?;
            *slot = rlgr::rlgr_decode(chunk, len as usize).map_err(|e| match e {
                Error::Entropy { offset, reason } => Error::Entropy {
                    offset: start + offset,
                    reason,
                },
                other => other,
            })?;
        }
        blocks.push(row);
    }
    if c.pos != bytes.len() {
        return Err(Error::Bitstream {
            field: "payload".into(),
            reason: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    let mut it = blocks.into_iter();
    let lowpass = it.next().unwrap();
    Ok((meta, QuantizedStack { lowpass, details: it.collect() }, models))
}

/// Chunk directory computed from lengths alone, without entropy decoding.
pub fn chunk_table(bytes: &[u8]) -> Result<Vec<ChunkEntry>> {
    let mut c = Cursor { bytes, pos: 0 };
    let (_, block_lens, _) = read_header(&mut c)?;
    let mut table = Vec::new();
    for (block, &len) in block_lens.iter().enumerate() {
        for channel in 0..3 {
            if len == 0 {
                continue;
            }
            let chunk_len = c.u32("chunk_length")? as usize;
            table.push(ChunkEntry { block, channel, offset: c.pos, len: chunk_len });
            c.take(chunk_len, "chunk")?;
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::Bitstream {
            field: "payload".into(),
            reason: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    Ok(table)
}
