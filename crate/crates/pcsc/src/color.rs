//! RGB <-> YUV color conversion.
//!
//! Full-range BT.601: Y in [0, 255], U and V centered at 128. The inverse
//! matrix is derived from the forward constants so a round trip through f64
//! is exact to machine precision.

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

/// Which color transform the codec applies to parsed RGB triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    /// Full-range BT.601 YUV (the default).
    Bt601,
    /// Keep raw RGB planes.
    Identity,
}

/// RGB bytes to real-valued YUV.
pub fn rgb_to_yuv(rgb: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (rgb[0] as f64, rgb[1] as f64, rgb[2] as f64);
    let y = KR * r + KG * g + KB * b;
    let u = 128.0 + (b - y) / (2.0 * (1.0 - KB));
    let v = 128.0 + (r - y) / (2.0 * (1.0 - KR));
    [y, u, v]
}

/// Real-valued YUV back to RGB bytes, rounded and clamped to [0, 255].
pub fn yuv_to_rgb(yuv: [f64; 3]) -> [u8; 3] {
    let y = yuv[0];
    let u = yuv[1] - 128.0;
    let v = yuv[2] - 128.0;
    let r = y + 2.0 * (1.0 - KR) * v;
    let b = y + 2.0 * (1.0 - KB) * u;
    let g = (y - KR * r - KB * b) / KG;
    [clamp_u8(r), clamp_u8(g), clamp_u8(b)]
}

pub fn convert_in(space: ColorSpace, rgb: [u8; 3]) -> [f64; 3] {
    match space {
        ColorSpace::Bt601 => rgb_to_yuv(rgb),
        ColorSpace::Identity => [rgb[0] as f64, rgb[1] as f64, rgb[2] as f64],
    }
}

pub fn convert_out(space: ColorSpace, att: [f64; 3]) -> [u8; 3] {
    match space {
        ColorSpace::Bt601 => yuv_to_rgb(att),
        ColorSpace::Identity => [clamp_u8(att[0]), clamp_u8(att[1]), clamp_u8(att[2])],
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
