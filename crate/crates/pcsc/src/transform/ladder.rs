//! Full analysis and synthesis ladders over all levels.
//!
//! Encoding walks the dual coefficients from the leaves down, peeling off
//! orthonormalized detail at every pair, and finishes with the
//! orthonormalized coarse block. Decoding mirrors the walk exactly, so with
//! fixed-polynomial solves the decode ladder is the transpose of the encode
//! ladder, and with exact solves the pair is a perfect-reconstruction
//! orthonormal transform of the leaf attributes.

use crate::error::Result;
use crate::transform::ops::{analysis, synthesis, LevelTransform};

/// Transform-domain coefficients for one cloud, all three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientStack {
    /// Coarse block per channel, one value per level-`l0` node.
    pub lowpass: [Vec<f64>; 3],
    /// Detail block per pair (coarsest first), per channel.
    pub details: Vec<[Vec<f64>; 3]>,
}

impl CoefficientStack {
    /// Zero-filled stack with the shape the transform produces.
    pub fn zeros(tr: &LevelTransform) -> CoefficientStack {
        let lowpass = std::array::from_fn(|_| vec![0.0; tr.level_dim(0)]);
        let details = (0..tr.num_pairs())
            .map(|i| std::array::from_fn(|_| vec![0.0; tr.detail_dim(i)]))
            .collect();
        CoefficientStack { lowpass, details }
    }

    /// Total coefficient count over all blocks and channels.
    pub fn len(&self) -> usize {
        let low: usize = self.lowpass.iter().map(Vec::len).sum();
        let det: usize = self
            .details
            .iter()
            .flat_map(|chs| chs.iter().map(Vec::len))
            .sum();
        low + det
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of squares over every stored coefficient.
    pub fn norm_sq(&self) -> f64 {
        let mut acc = 0.0;
        for ch in &self.lowpass {
            acc += ch.iter().map(|v| v * v).sum::<f64>();
        }
        for chs in &self.details {
            for ch in chs {
                acc += ch.iter().map(|v| v * v).sum::<f64>();
            }
        }
        acc
    }
}

/// Run the encode ladder on leaf attributes.
pub fn encode_stack(tr: &LevelTransform, attributes: &[[f64; 3]]) -> Result<CoefficientStack> {
    let npairs = tr.num_pairs();
    let mut details: Vec<[Vec<f64>; 3]> = (0..npairs)
        .map(|i| std::array::from_fn(|_| vec![0.0; tr.detail_dim(i)]))
        .collect();
    let mut lowpass: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::new());
    for ch in 0..3 {
        // Leaf functions are interpolatory, so dual and primal leaf
        // coefficients coincide with the attribute values.
        let mut dual: Vec<f64> = attributes.iter().map(|a| a[ch]).collect();
        for i in (0..npairs).rev() {
            let raw = tr.detail_forward(i, &dual)?;
            details[i][ch] = tr.detail_orthonormalize(i, &raw)?;
            let mut coarse = vec![0.0; tr.level_dim(i)];
            analysis(&tr.hierarchy.pairs[i], &dual, &mut coarse);
            dual = coarse;
        }
        lowpass[ch] = tr.lowpass_orthonormalize(&dual)?;
    }
    Ok(CoefficientStack { lowpass, details })
}

/// Run the decode ladder back to leaf attributes.
pub fn decode_stack(tr: &LevelTransform, stack: &CoefficientStack) -> Result<Vec<[f64; 3]>> {
    let npairs = tr.num_pairs();
    let leaves = tr.level_dim(npairs);
    let mut out = vec![[0.0; 3]; leaves];
    for ch in 0..3 {
        let mut primal = tr.lowpass_orthonormalize(&stack.lowpass[ch])?;
        for i in 0..npairs {
            let mut fine = vec![0.0; tr.level_dim(i + 1)];
            synthesis(&tr.hierarchy.pairs[i], &primal, &mut fine);
            if tr.detail_dim(i) > 0 {
                let unpacked = tr.detail_orthonormalize(i, &stack.details[i][ch])?;
                let lifted = tr.detail_adjoint(i, &unpacked)?;
                for (f, l) in fine.iter_mut().zip(&lifted) {
                    *f += l;
                }
            }
            primal = fine;
        }
        for (o, v) in out.iter_mut().zip(&primal) {
            o[ch] = *v;
        }
    }
    Ok(out)
}
