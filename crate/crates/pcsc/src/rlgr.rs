//! Adaptive run-length Golomb-Rice coder for quantized coefficient blocks.
//!
//! Signed symbols are interleaved to unsigned, then coded in one of two
//! modes steered by a fractionally adapted parameter: a run mode that spends
//! one bit on a full run of zeros, and a Golomb-Rice mode for dense data.
//! Both parameters adapt in 1/16 steps so the coder tracks slowly varying
//! statistics without explicit signaling. Every block is coded with fresh
//! state, which keeps chunks independently decodable.

use crate::error::{Error, Result};

/// Adaptation and layout constants, in one place so the stream is
/// reproducible from this record alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RlgrConstants {
    /// log2 of the fractional adaptation scale.
    pub scale_shift: u32,
    /// Initial scaled run parameter (value 3 at scale 16).
    pub kp_init: u32,
    /// Initial scaled Rice parameter (value 2 at scale 16).
    pub kr_init: u32,
    /// Scaled run-parameter step after a complete run.
    pub kp_up: u32,
    /// Scaled run-parameter step after an interrupted run.
    pub kp_down: u32,
    /// Scaled run-parameter step on a zero symbol in Golomb-Rice mode.
    pub kp_up_gr: u32,
    /// Scaled run-parameter step on a nonzero symbol in Golomb-Rice mode.
    pub kp_down_gr: u32,
    /// Scaled Rice-parameter step when the quotient exceeds one.
    pub kr_up: u32,
    /// Scaled Rice-parameter step on a zero quotient.
    pub kr_down: u32,
    /// Golomb quotients at or above this escape to a raw 64-bit value.
    pub escape_quotient: u32,
    /// Upper bound on the scaled run parameter.
    pub kp_max: u32,
    /// Upper bound on the scaled Rice parameter.
    pub kr_max: u32,
}

pub const RLGR_CONSTANTS: RlgrConstants = RlgrConstants {
    scale_shift: 4,
    kp_init: 48,
    kr_init: 32,
    kp_up: 8,
    kp_down: 12,
    kp_up_gr: 6,
    kp_down_gr: 6,
    kr_up: 2,
    kr_down: 1,
    escape_quotient: 24,
    kp_max: 24 << 4,
    kr_max: 60 << 4,
};

/// Map signed to unsigned so small magnitudes stay small.
fn interleave(s: i64) -> u64 {
    ((s as u64) << 1) ^ ((s >> 63) as u64)
}

fn deinterleave(u: u64) -> i64 {
    ((u >> 1) as i64) ^ -((u & 1) as i64)
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    used: u32,
}

impl BitWriter {
    fn new() -> BitWriter {
        BitWriter { bytes: Vec::new(), acc: 0, used: 0 }
    }

    fn bit(&mut self, b: u8) {
        self.acc = (self.acc << 1) | (b & 1);
        self.used += 1;
        if self.used == 8 {
            self.bytes.push(self.acc);
            self.acc = 0;
            self.used = 0;
        }
    }

    /// Write the low `width` bits of `v`, most significant first.
    fn bits(&mut self, v: u64, width: u32) {
        for i in (0..width).rev() {
            self.bit(((v >> i) & 1) as u8);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.acc <<= 8 - self.used;
            self.bytes.push(self.acc);
        }
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> BitReader<'a> {
        BitReader { bytes, pos: 0 }
    }

    fn bit(&mut self) -> Result<u8> {
        let byte = self.pos / 8;
        if byte >= self.bytes.len() {
            return Err(Error::Entropy {
                offset: byte,
                reason: "stream truncated mid-symbol".into(),
            });
        }
        let shift = 7 - (self.pos % 8) as u32;
        self.pos += 1;
        Ok((self.bytes[byte] >> shift) & 1)
    }

    fn bits(&mut self, width: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.bit()? as u64;
        }
        Ok(v)
    }
}

fn write_gr(w: &mut BitWriter, v: u64, kr: u32, c: &RlgrConstants) {
    let q = v >> kr;
    if q < c.escape_quotient as u64 {
        for _ in 0..q {
            w.bit(1);
        }
        w.bit(0);
        w.bits(v, kr);
    } else {
        for _ in 0..c.escape_quotient {
            w.bit(1);
        }
        w.bits(v, 64);
    }
}

fn read_gr(r: &mut BitReader, kr: u32, c: &RlgrConstants) -> Result<u64> {
    let mut q = 0u64;
    loop {
        if q == c.escape_quotient as u64 {
            return r.bits(64);
        }
        if r.bit()? == 0 {
            break;
        }
        q += 1;
    }
    Ok((q << kr) | r.bits(kr)?)
}

fn adapt_kr(kr: &mut u32, v: u64, c: &RlgrConstants) {
    let p = v >> (*kr >> c.scale_shift);
    if p == 0 {
        *kr = kr.saturating_sub(c.kr_down);
    } else if p > 1 {
        *kr = (*kr + c.kr_up).min(c.kr_max);
    }
}

/// Code a block of signed symbols to bytes.
pub fn rlgr_encode(symbols: &[i64]) -> Vec<u8> {
    let c = &RLGR_CONSTANTS;
    let mut kp = c.kp_init;
    let mut kr = c.kr_init;
    let mut w = BitWriter::new();
    let mut i = 0;
    while i < symbols.len() {
        let k = kp >> c.scale_shift;
        if k == 0 {
            let u = interleave(symbols[i]);
            i += 1;
            write_gr(&mut w, u, kr >> c.scale_shift, c);
            adapt_kr(&mut kr, u, c);
            if u == 0 {
                kp = (kp + c.kp_up_gr).min(c.kp_max);
            } else {
                kp = kp.saturating_sub(c.kp_down_gr);
            }
        } else {
            let cap = 1u64 << k;
            let mut run = 0u64;
            while run < cap && i < symbols.len() && symbols[i] == 0 {
                run += 1;
                i += 1;
            }
            if run == cap {
                w.bit(0);
                kp = (kp + c.kp_up).min(c.kp_max);
            } else {
                w.bit(1);
                w.bits(run, k);
                kp = kp.saturating_sub(c.kp_down);
                if i < symbols.len() {
                    let u = interleave(symbols[i]);
                    i += 1;
                    write_gr(&mut w, u - 1, kr >> c.scale_shift, c);
                    adapt_kr(&mut kr, u - 1, c);
                }
                // A run cut short by the end of the block carries no symbol;
                // the decoder stops on its count before expecting one.
            }
        }
    }
    w.finish()
}

/// Decode exactly `count` symbols from bytes produced by the encoder.
pub fn rlgr_decode(bytes: &[u8], count: usize) -> Result<Vec<i64>> {
    let c = &RLGR_CONSTANTS;
    let mut kp = c.kp_init;
    let mut kr = c.kr_init;
    let mut r = BitReader::new(bytes);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let k = kp >> c.scale_shift;
        if k == 0 {
            let u = read_gr(&mut r, kr >> c.scale_shift, c)?;
            out.push(deinterleave(u));
            adapt_kr(&mut kr, u, c);
            if u == 0 {
                kp = (kp + c.kp_up_gr).min(c.kp_max);
            } else {
                kp = kp.saturating_sub(c.kp_down_gr);
            }
        } else if r.bit()? == 0 {
            let cap = 1u64 << k;
            for _ in 0..cap {
                if out.len() == count {
                    break;
                }
                out.push(0);
            }
            kp = (kp + c.kp_up).min(c.kp_max);
        } else {
            let run = r.bits(k)?;
            for _ in 0..run {
                if out.len() == count {
                    break;
                }
                out.push(0);
            }
            kp = kp.saturating_sub(c.kp_down);
            if out.len() < count {
                let u = read_gr(&mut r, kr >> c.scale_shift, c)? + 1;
                out.push(deinterleave(u));
                adapt_kr(&mut kr, u - 1, c);
            }
        }
    }
    Ok(out)
}
