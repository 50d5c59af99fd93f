//! Per-level transform operators.
//!
//! The ladder walks dual coefficients (inner products of the signal with the
//! level basis) down with the analysis stencil, and primal coefficients back
//! up with its transpose. At each level the detail operator removes the part
//! explained by the coarser level, which takes one inner solve against the
//! coarse Gram, and an orthonormalizer rescales the surviving coordinates so
//! that quantization error in any coefficient moves the reconstruction by
//! the same amount.
//!
//! Solver modes trade exactness for a fixed arithmetic budget. `Exact` uses
//! closed forms (diagonal and small sibling blocks for degree 1, dense
//! factorizations for degree 2). `Classical` runs data-dependent conjugate
//! gradients. `Fixed` runs the constant-coefficient recursion on operators
//! rescaled by their estimated top eigenvalue, which keeps every solve a
//! symmetric polynomial so the decode ladder is the exact transpose of the
//! encode ladder.

use crate::error::{Error, Result};
use crate::hierarchy::{LevelHierarchy, LevelPair};
use crate::solvers::{
    cgd_solve, estimate_max_eigenvalue, estimate_min_eigenvalue, inverse_sqrt_apply,
    solve_scaled_fixed, CgdMode, LinearOperator, ShiftedOperator,
};
use crate::transform::gram::{neighbor_table, CompactGram, NEIGHBOR_NONE};
use crate::transform::stencil::TwoScaleKernel;
use nalgebra::{DMatrix, DVector};

/// How the per-level solves and orthonormalizers are carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Exact,
    Classical,
    Fixed,
}

/// Solver mode plus unroll depths and the seed for spectrum estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSpec {
    pub mode: SolverMode,
    /// Steps per inner Gram solve.
    pub m1: usize,
    /// Series terms per orthonormalizer apply.
    pub m2: usize,
    /// Base seed for power-iteration start vectors.
    pub seed: u64,
}

/// Coarse-level row sums: `out[n] = sum_k w_k fine[stencil child]`.
pub fn analysis(pair: &LevelPair, fine: &[f64], out: &mut [f64]) {
    for (pi, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for e in pair.stencil_start[pi]..pair.stencil_start[pi + 1] {
            acc += pair.stencil_weight[e] * fine[pair.stencil_child[e] as usize];
        }
        *o = acc;
    }
}

/// Transposed stencil scatter: `out[child] = sum w_k coarse[parent]`.
pub fn synthesis(pair: &LevelPair, coarse: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (pi, &c) in coarse.iter().enumerate() {
        for e in pair.stencil_start[pi]..pair.stencil_start[pi + 1] {
            out[pair.stencil_child[e] as usize] += pair.stencil_weight[e] * c;
        }
    }
}

/// Keep the selected (detail) coordinates of a fine-level vector.
pub fn gather_detail(pair: &LevelPair, fine: &[f64], out: &mut [f64]) {
    for (j, &c) in pair.select.iter().enumerate() {
        out[j] = fine[c as usize];
    }
}

/// Embed detail coordinates back into a fine-level vector of zeros.
pub fn scatter_detail(pair: &LevelPair, detail: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, &c) in pair.select.iter().enumerate() {
        out[c as usize] = detail[j];
    }
}

/// One inner solve against a level Gram.
#[derive(Debug)]
enum InnerSolve {
    /// Divide by the diagonal (degree-1 Grams are diagonal).
    Reciprocal(Vec<f64>),
    /// Dense factorization of the full Gram.
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    /// Conjugate gradients with data-dependent scalars.
    Classical { steps: usize },
    /// Constant-coefficient recursion on the rescaled operator.
    ScaledFixed { mu: f64, steps: usize },
}

impl InnerSolve {
    fn solve(&self, gram: &CompactGram, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            InnerSolve::Reciprocal(diag) => {
                Ok(rhs.iter().zip(diag).map(|(r, d)| r / d).collect())
            }
            InnerSolve::Dense(chol) => {
                let x = chol.solve(&DVector::from_column_slice(rhs));
                Ok(x.as_slice().to_vec())
            }
            InnerSolve::Classical { steps } => {
                cgd_solve(gram, rhs, CgdMode::Classical { steps: *steps })
            }
            InnerSolve::ScaledFixed { mu, steps } => {
                solve_scaled_fixed(gram, rhs, *mu, *steps)
            }
        }
    }
}

/// Inverse square root of one orthonormalization target.
#[derive(Debug)]
enum OrthoOp {
    /// Reciprocal square root of a diagonal Gram.
    DiagonalRsqrt(Vec<f64>),
    /// Per-parent sibling blocks, each inverted exactly; `(start, factor)`
    /// where `start` is the block's offset in detail coordinates.
    SiblingBlocks(Vec<(usize, DMatrix<f64>)>),
    /// Truncated binomial series around the rescaled operator. `shift` lifts
    /// the spectrum when unrolled inner solves leave the composite operator
    /// with negative curvature the series cannot absorb.
    Series { mu: f64, shift: f64 },
    /// Dense inverse square root, materialized once.
    Dense(DMatrix<f64>),
}

struct PairOps {
    inner: InnerSolve,
    ortho: OrthoOp,
}

/// The detail Gram as a linear operator on detail coordinates.
struct DetailGramOp<'a> {
    pair: &'a LevelPair,
    parent_gram: &'a CompactGram,
    child_gram: &'a CompactGram,
    inner: &'a InnerSolve,
}

impl LinearOperator for DetailGramOp<'_> {
    fn dim(&self) -> usize {
        self.pair.select.len()
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        let nc = self.child_gram.len();
        let mut fine = vec![0.0; nc];
        scatter_detail(self.pair, input, &mut fine);
        let mut dual = vec![0.0; nc];
        self.child_gram.apply(&fine, &mut dual);
        let detail = z_forward(
            self.pair,
            self.parent_gram,
            self.child_gram,
            self.inner,
            &dual,
        )
        .expect("inner Gram solve failed on a constructed level");
        out.copy_from_slice(&detail);
    }
}

/// Detail coordinates of a dual fine-level vector: select the part of it not
/// explained by the coarse level.
fn z_forward(
    pair: &LevelPair,
    parent_gram: &CompactGram,
    child_gram: &CompactGram,
    inner: &InnerSolve,
    dual: &[f64],
) -> Result<Vec<f64>> {
    let np = parent_gram.len();
    let nc = child_gram.len();
    let mut coarse = vec![0.0; np];
    analysis(pair, dual, &mut coarse);
    let solved = inner.solve(parent_gram, &coarse)?;
    let mut fine = vec![0.0; nc];
    synthesis(pair, &solved, &mut fine);
    let mut explained = vec![0.0; nc];
    child_gram.apply(&fine, &mut explained);
    let mut out = vec![0.0; pair.select.len()];
    for (j, &c) in pair.select.iter().enumerate() {
        out[j] = dual[c as usize] - explained[c as usize];
    }
    Ok(out)
}

/// Transpose of `z_forward`: primal fine-level coefficients of a detail
/// vector, orthogonal to the coarse level.
fn z_adjoint(
    pair: &LevelPair,
    parent_gram: &CompactGram,
    child_gram: &CompactGram,
    inner: &InnerSolve,
    detail: &[f64],
) -> Result<Vec<f64>> {
    let np = parent_gram.len();
    let nc = child_gram.len();
    let mut fine = vec![0.0; nc];
    scatter_detail(pair, detail, &mut fine);
    let mut dual = vec![0.0; nc];
    child_gram.apply(&fine, &mut dual);
    let mut coarse = vec![0.0; np];
    analysis(pair, &dual, &mut coarse);
    let solved = inner.solve(parent_gram, &coarse)?;
    let mut back = vec![0.0; nc];
    synthesis(pair, &solved, &mut back);
    for i in 0..nc {
        fine[i] -= back[i];
    }
    Ok(fine)
}

/// All per-level state needed to run the transform on one cloud.
pub struct LevelTransform {
    pub hierarchy: LevelHierarchy,
    pub kernel: TwoScaleKernel,
    /// Gram per level, `grams[i]` for level `l0 + i`.
    pub grams: Vec<CompactGram>,
    pub spec: SolverSpec,
    pairs_ops: Vec<PairOps>,
    lowpass_ortho: OrthoOp,
}

/// Grams for every level, built from the leaf identity downward in level.
pub fn build_grams(h: &LevelHierarchy, kernel: &TwoScaleKernel) -> Vec<CompactGram> {
    let leaf = h.num_levels() - 1;
    let mut grams = Vec::with_capacity(h.num_levels());
    grams.push(CompactGram::identity(neighbor_table(&h.levels[leaf], h.depth)));
    for i in (0..leaf).rev() {
        let level = h.l0 + i as u8;
        let parent_nb = neighbor_table(&h.levels[i], level);
        let g = CompactGram::coarsen(
            grams.last().unwrap(),
            &h.levels[i + 1],
            &h.levels[i],
            parent_nb,
            &h.pairs[i],
            kernel,
        );
        grams.push(g);
    }
    grams.reverse();
    grams
}

fn to_dense(g: &CompactGram) -> DMatrix<f64> {
    let n = g.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..27 {
            let c = g.neighbors[i][j];
            if c != NEIGHBOR_NONE && g.entries[i][j] != 0.0 {
                m[(i, c as usize)] = g.entries[i][j];
            }
        }
    }
    m
}

/// Dense inverse square root through an eigendecomposition.
fn dense_inverse_sqrt(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(m);
    }
    let eig = m.symmetric_eigen();
    let top = eig.eigenvalues.max();
    if !(top > 0.0) {
        return Err(Error::Numeric(format!("{what} has no positive spectrum")));
    }
    for &l in eig.eigenvalues.iter() {
        if l <= top * 1e-12 {
            return Err(Error::Numeric(format!(
                "{what} is numerically singular (eigenvalue {l:.3e} of {top:.3e})"
            )));
        }
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l: f64| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Exact inverse square roots of the degree-1 detail Gram, which splits into
/// one small block per parent over that parent's non-elided children.
fn sibling_blocks(
    parent_diag: &[f64],
    child_diag: &[f64],
    pair: &LevelPair,
) -> Result<Vec<(usize, DMatrix<f64>)>> {
    let mut blocks = Vec::new();
    for (pi, &s) in parent_diag.iter().enumerate() {
        let row = pair.oct_start[pi]..pair.oct_start[pi + 1];
        let width = row.len() - 1;
        if width == 0 {
            continue;
        }
        let sel: Vec<usize> = (pair.oct_start[pi] + 1..pair.oct_start[pi + 1]).collect();
        let b = DMatrix::from_fn(width, width, |i, j| {
            let gi = child_diag[sel[i]];
            let gj = child_diag[sel[j]];
            let diag = if i == j { gi } else { 0.0 };
            diag - gi * gj / s
        });
        let start = pair.oct_start[pi] - pi;
        blocks.push((start, dense_inverse_sqrt(b, "sibling detail block")?));
    }
    Ok(blocks)
}

fn derived_seed(base: u64, level: usize, purpose: u64) -> u64 {
    base ^ 0x9E37_79B9_7F4A_7C15u64
        .wrapping_mul(((level as u64) << 2) | purpose)
        .rotate_left(17)
}

impl LevelTransform {
    pub fn build(
        hierarchy: LevelHierarchy,
        kernel: TwoScaleKernel,
        spec: SolverSpec,
    ) -> Result<LevelTransform> {
        let grams = build_grams(&hierarchy, &kernel);
        let p = kernel.degree();
        let npairs = hierarchy.pairs.len();

        // Inner solves first; orthonormalizer spectra depend on them.
        let mut inners = Vec::with_capacity(npairs);
        for i in 0..npairs {
            let gram = &grams[i];
            let inner = match spec.mode {
                SolverMode::Exact if p == 1 => InnerSolve::Reciprocal(gram.diagonal()),
                SolverMode::Exact => {
                    let chol = nalgebra::Cholesky::new(to_dense(gram)).ok_or_else(|| {
                        Error::Numeric("level Gram is not positive definite".into())
                    })?;
                    InnerSolve::Dense(chol)
                }
                SolverMode::Classical => InnerSolve::Classical { steps: spec.m1 },
                SolverMode::Fixed => {
                    let lambda =
                        estimate_max_eigenvalue(gram, derived_seed(spec.seed, i, 0))?;
                    InnerSolve::ScaledFixed {
                        mu: 0.9 / lambda,
                        steps: spec.m1,
                    }
                }
            };
            inners.push(inner);
        }

        let mut pairs_ops = Vec::with_capacity(npairs);
        for (i, inner) in inners.into_iter().enumerate() {
            let pair = &hierarchy.pairs[i];
            let ortho = if pair.select.is_empty() {
                OrthoOp::Series { mu: 0.0, shift: 0.0 }
            } else {
                match spec.mode {
                    SolverMode::Exact if p == 1 => OrthoOp::SiblingBlocks(sibling_blocks(
                        &grams[i].diagonal(),
                        &grams[i + 1].diagonal(),
                        pair,
                    )?),
                    SolverMode::Exact => {
                        let op = DetailGramOp {
                            pair,
                            parent_gram: &grams[i],
                            child_gram: &grams[i + 1],
                            inner: &inner,
                        };
                        OrthoOp::Dense(dense_inverse_sqrt(
                            materialize(&op),
                            "detail Gram",
                        )?)
                    }
                    _ => {
                        let op = DetailGramOp {
                            pair,
                            parent_gram: &grams[i],
                            child_gram: &grams[i + 1],
                            inner: &inner,
                        };
                        let lambda =
                            estimate_max_eigenvalue(&op, derived_seed(spec.seed, i, 1))?;
                        // Aggressively truncated inner solves can leave the
                        // composite indefinite, and the series diverges on
                        // negative eigenvalues; lift the floor clear of zero.
                        let floor = estimate_min_eigenvalue(
                            &op,
                            lambda,
                            derived_seed(spec.seed, i, 3),
                        )?;
                        let shift = if floor < 0.02 * lambda {
                            0.05 * lambda - floor
                        } else {
                            0.0
                        };
                        OrthoOp::Series { mu: 0.9 / (lambda + shift), shift }
                    }
                }
            };
            pairs_ops.push(PairOps { inner, ortho });
        }

        let lowpass_ortho = match spec.mode {
            SolverMode::Exact if p == 1 => OrthoOp::DiagonalRsqrt(grams[0].diagonal()),
            SolverMode::Exact => {
                OrthoOp::Dense(dense_inverse_sqrt(to_dense(&grams[0]), "coarse Gram")?)
            }
            _ => {
                // The coarse Gram itself is positive definite, so the series
                // needs no floor guard here.
                let lambda =
                    estimate_max_eigenvalue(&grams[0], derived_seed(spec.seed, npairs, 2))?;
                OrthoOp::Series { mu: 0.9 / lambda, shift: 0.0 }
            }
        };

        Ok(LevelTransform {
            hierarchy,
            kernel,
            grams,
            spec,
            pairs_ops,
            lowpass_ortho,
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs_ops.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.hierarchy.leaves().len()
    }

    /// Node count of level `l0 + i`.
    pub fn level_dim(&self, i: usize) -> usize {
        self.hierarchy.levels[i].len()
    }

    /// Detail coordinate count of pair `i`.
    pub fn detail_dim(&self, i: usize) -> usize {
        self.hierarchy.pairs[i].select.len()
    }

    /// Detail coordinates of a dual fine-level vector at pair `i`.
    pub fn detail_forward(&self, i: usize, dual: &[f64]) -> Result<Vec<f64>> {
        z_forward(
            &self.hierarchy.pairs[i],
            &self.grams[i],
            &self.grams[i + 1],
            &self.pairs_ops[i].inner,
            dual,
        )
    }

    /// Primal fine-level coefficients of a detail vector at pair `i`.
    pub fn detail_adjoint(&self, i: usize, detail: &[f64]) -> Result<Vec<f64>> {
        z_adjoint(
            &self.hierarchy.pairs[i],
            &self.grams[i],
            &self.grams[i + 1],
            &self.pairs_ops[i].inner,
            detail,
        )
    }

    /// Solve the parent-level Gram of pair `i` in the configured mode.
    pub fn solve_parent_gram(&self, i: usize, rhs: &[f64]) -> Result<Vec<f64>> {
        self.pairs_ops[i].inner.solve(&self.grams[i], rhs)
    }

    /// Apply the detail orthonormalizer of pair `i` (its own transpose).
    pub fn detail_orthonormalize(&self, i: usize, detail: &[f64]) -> Result<Vec<f64>> {
        match &self.pairs_ops[i].ortho {
            OrthoOp::DiagonalRsqrt(_) => unreachable!("diagonal ortho is lowpass-only"),
            OrthoOp::SiblingBlocks(blocks) => {
                let mut out = vec![0.0; detail.len()];
                for (start, factor) in blocks {
                    let w = factor.nrows();
                    let x = DVector::from_column_slice(&detail[*start..start + w]);
                    let y = factor * x;
                    out[*start..start + w].copy_from_slice(y.as_slice());
                }
                Ok(out)
            }
            OrthoOp::Series { mu, shift } => {
                let op = DetailGramOp {
                    pair: &self.hierarchy.pairs[i],
                    parent_gram: &self.grams[i],
                    child_gram: &self.grams[i + 1],
                    inner: &self.pairs_ops[i].inner,
                };
                let lifted = ShiftedOperator { op: &op, shift: *shift };
                Ok(inverse_sqrt_apply(&lifted, detail, *mu, self.spec.m2))
            }
            OrthoOp::Dense(factor) => {
                let y = factor * DVector::from_column_slice(detail);
                Ok(y.as_slice().to_vec())
            }
        }
    }

    /// Apply the coarse-level orthonormalizer (its own transpose).
    pub fn lowpass_orthonormalize(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        match &self.lowpass_ortho {
            OrthoOp::DiagonalRsqrt(diag) => Ok(coarse
                .iter()
                .zip(diag)
                .map(|(c, d)| c / d.sqrt())
                .collect()),
            OrthoOp::Series { mu, shift: _ } => {
                Ok(inverse_sqrt_apply(&self.grams[0], coarse, *mu, self.spec.m2))
            }
            OrthoOp::Dense(factor) => {
                let y = factor * DVector::from_column_slice(coarse);
                Ok(y.as_slice().to_vec())
            }
            OrthoOp::SiblingBlocks(_) => unreachable!("sibling ortho is detail-only"),
        }
    }
}

/// Apply an operator to unit vectors to get its dense matrix.
fn materialize<O: LinearOperator>(op: &O) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}
