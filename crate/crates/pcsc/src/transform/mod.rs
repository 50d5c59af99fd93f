//! Multiresolution transform: two-scale kernels, level Gram matrices, the
//! per-level analysis, synthesis, and detail operators, and the full
//! coefficient ladder.

pub mod gram;
pub mod ladder;
pub mod ops;
pub mod stencil;
