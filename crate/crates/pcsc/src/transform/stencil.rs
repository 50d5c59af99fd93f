//! Two-scale refinement kernels.
//!
//! Degree 1 is the box kernel (mask [1, 1] per axis), degree 2 the tri-linear
//! hat (mask [1/2, 1, 1/2] per axis). The 3-D stencil is the tensor product;
//! either way its weights total 8, matching the volume ratio of a parent cell
//! to a child cell.

use crate::error::{Error, Result};

/// Separable two-scale kernel of degree `p` in {1, 2}.
#[derive(Debug, Clone)]
pub struct TwoScaleKernel {
    p: u8,
    mask: Vec<f64>,
    offsets: Vec<([u8; 3], f64)>,
}

impl TwoScaleKernel {
    pub fn new(p: u8) -> Result<TwoScaleKernel> {
        let mask: Vec<f64> = match p {
            1 => vec![1.0, 1.0],
            2 => vec![0.5, 1.0, 0.5],
            _ => {
                return Err(Error::Config {
                    key: "p".into(),
                    reason: format!("unsupported kernel degree {p}, expected 1 or 2"),
                })
            }
        };
        let mut offsets = Vec::with_capacity(mask.len().pow(3));
        for (kx, &wx) in mask.iter().enumerate() {
            for (ky, &wy) in mask.iter().enumerate() {
                for (kz, &wz) in mask.iter().enumerate() {
                    offsets.push(([kx as u8, ky as u8, kz as u8], wx * wy * wz));
                }
            }
        }
        Ok(TwoScaleKernel { p, mask, offsets })
    }

    pub fn degree(&self) -> u8 {
        self.p
    }

    /// 1-D refinement mask, index = offset along one axis.
    pub fn mask_1d(&self) -> &[f64] {
        &self.mask
    }

    /// Tensor-product stencil: child offset k in {0..p}^3 and its weight.
    pub fn offsets(&self) -> impl Iterator<Item = ([u8; 3], f64)> + '_ {
        self.offsets.iter().copied()
    }

    /// Basis value in local parent coordinates, `t = 2^l x - n`.
    pub fn basis_1d(&self, t: f64) -> f64 {
        basis_1d(self.p, t)
    }

    /// Separable basis value at a local 3-D coordinate.
    pub fn basis_3d(&self, t: [f64; 3]) -> f64 {
        t.iter().map(|&ti| basis_1d(self.p, ti)).product()
    }
}

/// Cardinal basis of degree `p` on local coordinate `t`.
///
/// Degree 1 is the indicator of [0, 1); degree 2 the hat on [0, 2] peaking
/// at 1. Both vanish at the right end of their support, so same-level bases
/// more than one cell apart never share a sample.
pub fn basis_1d(p: u8, t: f64) -> f64 {
    match p {
        1 => {
            if (0.0..1.0).contains(&t) {
                1.0
            } else {
                0.0
            }
        }
        2 => {
            if t <= 0.0 || t >= 2.0 {
                0.0
            } else if t <= 1.0 {
                t
            } else {
                2.0 - t
            }
        }
        _ => unreachable!("kernel degree validated at construction"),
    }
}
