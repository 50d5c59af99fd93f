//! Shared test support: seeded cloud generators, dense reference operators
//! built directly from voxel coordinates, and helpers for materializing the
//! library's streaming operators as plain matrices.
//!
//! Everything here recomputes the level algebra from first principles with
//! dense factorizations (Cholesky solves, eigendecompositions), deliberately
//! bypassing the compact Gram tables, CSR stencils, and iterative solvers of
//! the library, so the two sides of every comparison share no code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use pcsc::cloud::{geometry_fingerprint, morton_key, VoxelizedCloud};
use pcsc::config::CodecConfig;
use pcsc::hierarchy::LevelHierarchy;
use pcsc::prediction::{self, PredictiveStack, PredictorSet};
use pcsc::rd;
use pcsc::transform::ladder::{self, CoefficientStack};
use pcsc::transform::ops::{LevelTransform, SolverMode, SolverSpec};
use pcsc::transform::stencil::TwoScaleKernel;
use pcsc::{bitstream, metrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Cloud generators.

/// Uniformly scattered voxels with uniform attributes in [0, 256).
pub fn random_cloud(seed: u64, n_target: usize, depth: u8) -> VoxelizedCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = 1u32 << depth;
    let coords = (0..n_target)
        .map(|_| {
            [
                rng.random_range(0..grid) as u16,
                rng.random_range(0..grid) as u16,
                rng.random_range(0..grid) as u16,
            ]
        })
        .collect();
    with_random_attrs(seed ^ 0x5eed, depth, coords)
}

/// Voxels clustered around a few centers, giving deeper shared ancestry than
/// uniform scatter; attributes uniform in [0, 256).
pub fn blob_cloud(seed: u64, n_target: usize, depth: u8, blobs: usize) -> VoxelizedCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = (1u32 << depth) as f64;
    let centers: Vec<[f64; 3]> = (0..blobs.max(1))
        .map(|_| [(); 3].map(|_| rng.random::<f64>() * grid))
        .collect();
    let sigma = grid / 8.0;
    let coords = (0..n_target)
        .map(|_| {
            let c = centers[rng.random_range(0..centers.len())];
            [0, 1, 2].map(|a| {
                let v = c[a] + gaussian(&mut rng) * sigma;
                v.clamp(0.0, grid - 1.0) as u16
            })
        })
        .collect();
    with_random_attrs(seed ^ 0xb10b, depth, coords)
}

/// Solid axis-aligned box of voxels with attributes from `attr`.
pub fn solid_box_cloud(
    depth: u8,
    lo: [u16; 3],
    size: [u16; 3],
    attr: impl Fn([u16; 3]) -> [f64; 3],
) -> VoxelizedCloud {
    let mut cells = Vec::new();
    for x in lo[0]..lo[0] + size[0] {
        for y in lo[1]..lo[1] + size[1] {
            for z in lo[2]..lo[2] + size[2] {
                cells.push([x, y, z]);
            }
        }
    }
    cells.sort_by_key(|&c| morton_key(c));
    let attrs = cells.iter().map(|&c| attr(c)).collect();
    VoxelizedCloud::new(depth, cells, attrs).unwrap()
}

fn with_random_attrs(seed: u64, depth: u8, mut coords: Vec<[u16; 3]>) -> VoxelizedCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    coords.sort_by_key(|&c| morton_key(c));
    coords.dedup();
    let attrs = coords
        .iter()
        .map(|_| [(); 3].map(|_| rng.random::<f64>() * 256.0))
        .collect();
    VoxelizedCloud::new(depth, coords, attrs).unwrap()
}

/// Standard normal via Box-Muller.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-12);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Kernel plus hierarchy for a cloud.
pub fn build_hierarchy(cloud: &VoxelizedCloud, p: u8, l0: u8) -> (TwoScaleKernel, LevelHierarchy) {
    let kernel = TwoScaleKernel::new(p).unwrap();
    let h = LevelHierarchy::build(&cloud.morton_keys(), l0, cloud.depth, &kernel).unwrap();
    (kernel, h)
}

/// Transform over a cloud with exact (dense or closed-form) solves.
pub fn exact_transform(cloud: &VoxelizedCloud, p: u8, l0: u8) -> LevelTransform {
    let (kernel, h) = build_hierarchy(cloud, p, l0);
    let spec = SolverSpec {
        mode: SolverMode::Exact,
        m1: 0,
        m2: 0,
        seed: 0,
    };
    LevelTransform::build(h, kernel, spec).unwrap()
}

// Dense reference operators.

fn binomial(n: u8, k: u8) -> f64 {
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// 1-D refinement mask of the cardinal basis of degree `p`: binomial row
/// `C(p, k)` scaled by `2^(1 - p)`.
pub fn refinement_mask(p: u8) -> Vec<f64> {
    (0..=p)
        .map(|k| binomial(p, k) * (2.0f64).powi(1 - i32::from(p)))
        .collect()
}

/// Dense coarsening matrix of pair `i`: one row per parent node, one column
/// per child node, entry = tensor-product mask weight for the offset between
/// child and doubled parent coordinates.
pub fn dense_analysis(h: &LevelHierarchy, p: u8, i: usize) -> DMatrix<f64> {
    let mask = refinement_mask(p);
    let parents = &h.levels[i];
    let children = &h.levels[i + 1];
    DMatrix::from_fn(parents.len(), children.len(), |r, c| {
        let pc = parents.coords[r];
        let cc = children.coords[c];
        let mut w = 1.0;
        for a in 0..3 {
            let d = cc[a] as i32 - 2 * pc[a] as i32;
            if !(0..=p as i32).contains(&d) {
                return 0.0;
            }
            w *= mask[d as usize];
        }
        w
    })
}

/// Dense detail selection of pair `i`, derived from keys alone: children are
/// grouped by `key >> 3` and the first of each group is dropped.
pub fn dense_select(h: &LevelHierarchy, i: usize) -> DMatrix<f64> {
    let keys = &h.levels[i + 1].keys;
    let kept: Vec<usize> = (0..keys.len())
        .filter(|&c| c > 0 && keys[c] >> 3 == keys[c - 1] >> 3)
        .collect();
    let mut m = DMatrix::zeros(kept.len(), keys.len());
    for (row, &c) in kept.iter().enumerate() {
        m[(row, c)] = 1.0;
    }
    m
}

/// Dense Gram matrices per level: identity at the leaves, `A G A^T` above.
pub fn dense_grams(h: &LevelHierarchy, p: u8) -> Vec<DMatrix<f64>> {
    let n = h.num_levels();
    let mut grams = vec![DMatrix::identity(h.leaves().len(), h.leaves().len())];
    for i in (0..n - 1).rev() {
        let a = dense_analysis(h, p, i);
        let g = &a * grams.last().unwrap() * a.transpose();
        grams.push(g);
    }
    grams.reverse();
    grams
}

/// Per-level basis values sampled at the occupied leaves: row = node, column
/// = leaf. The leaf level is the identity; every coarser level is obtained by
/// the refinement relation, so row `n` of level `i` holds the values of that
/// node's basis function restricted to the occupied-node chain.
pub fn chain_values(h: &LevelHierarchy, p: u8) -> Vec<DMatrix<f64>> {
    let n = h.num_levels();
    let leaves = h.leaves().len();
    let mut vals = vec![DMatrix::identity(leaves, leaves)];
    for i in (0..n - 1).rev() {
        let a = dense_analysis(h, p, i);
        let v = &a * vals.last().unwrap();
        vals.push(v);
    }
    vals.reverse();
    vals
}

/// Symmetric inverse square root via eigendecomposition.
pub fn sym_inverse_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| {
        assert!(v > 0.0, "matrix must be positive definite, eigenvalue {v}");
        1.0 / v.sqrt()
    });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Exact SPD inverse via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone()
        .cholesky()
        .expect("matrix must be positive definite")
        .inverse()
}

/// Dense inverse-distance upsampling predictor of pair `i`: for each child,
/// the two nearest parent slots per axis, weighted by reciprocal distance
/// between cell centers and normalized over the occupied ones.
pub fn dense_predictor(h: &LevelHierarchy, i: usize) -> DMatrix<f64> {
    let parents = &h.levels[i];
    let children = &h.levels[i + 1];
    let mut m = DMatrix::zeros(children.len(), parents.len());
    for (row, &cc) in children.coords.iter().enumerate() {
        let cand = cc.map(|v| {
            let v = v as i32;
            [(v - 1).div_euclid(2), (v + 1).div_euclid(2)]
        });
        let mut hits: Vec<(usize, f64)> = Vec::new();
        for &nx in &cand[0] {
            for &ny in &cand[1] {
                for &nz in &cand[2] {
                    if nx < 0 || ny < 0 || nz < 0 {
                        continue;
                    }
                    let key = morton_key([nx as u16, ny as u16, nz as u16]);
                    let Some(pi) = parents.index_of(key) else {
                        continue;
                    };
                    let dist = (0..3)
                        .map(|a| {
                            let child_center = cc[a] as f64 + 0.5;
                            let parent_center = 2.0 * [nx, ny, nz][a] as f64 + 1.0;
                            (child_center - parent_center).powi(2)
                        })
                        .sum::<f64>()
                        .sqrt();
                    hits.push((pi, 1.0 / dist));
                }
            }
        }
        let total: f64 = hits.iter().map(|&(_, w)| w).sum();
        assert!(total > 0.0, "child without any occupied nearby parent");
        for (pi, w) in hits {
            m[(row, pi)] += w / total;
        }
    }
    m
}

/// Every dense reference operator of a hierarchy, built with exact solves.
pub struct DenseLevelOps {
    /// Coarsening per pair (parents x children).
    pub analysis: Vec<DMatrix<f64>>,
    /// Detail selection per pair (details x children).
    pub select: Vec<DMatrix<f64>>,
    /// Gram matrix per level.
    pub grams: Vec<DMatrix<f64>>,
    /// Detail extraction from child duals per pair (details x children).
    pub z: Vec<DMatrix<f64>>,
    /// Gram of the raw detail functions per pair.
    pub detail_gram: Vec<DMatrix<f64>>,
    /// Detail orthonormalizer per pair (inverse square root of the Gram).
    pub detail_rsqrt: Vec<DMatrix<f64>>,
    /// Inverse-distance predictor per pair (children x parents).
    pub predictor: Vec<DMatrix<f64>>,
    /// Predicted orthonormal details from coarse primal per pair.
    pub highpass: Vec<DMatrix<f64>>,
    /// Coarsest-level orthonormalizer.
    pub lowpass_rsqrt: DMatrix<f64>,
}

pub fn dense_level_ops(h: &LevelHierarchy, p: u8) -> DenseLevelOps {
    let pairs = h.num_levels() - 1;
    let grams = dense_grams(h, p);
    let mut analysis = Vec::with_capacity(pairs);
    let mut select = Vec::with_capacity(pairs);
    let mut z = Vec::with_capacity(pairs);
    let mut detail_gram = Vec::with_capacity(pairs);
    let mut detail_rsqrt = Vec::with_capacity(pairs);
    let mut predictor = Vec::with_capacity(pairs);
    let mut highpass = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let a = dense_analysis(h, p, i);
        let sel = dense_select(h, i);
        let g_parent_inv = spd_inverse(&grams[i]);
        let g_child = &grams[i + 1];
        let nc = g_child.nrows();
        // Details read child duals: select the unexplained part after the
        // exact coarse fit.
        let zi = &sel * (DMatrix::identity(nc, nc) - g_child * a.transpose() * g_parent_inv * &a);
        let di = &zi * g_child * sel.transpose();
        let ri = sym_inverse_sqrt(&di);
        let pi = dense_predictor(h, i);
        // Predicted details from coarse primal coefficients: the gap between
        // prediction and plain refinement, pushed through the detail side.
        let bi = &ri * &zi * g_child * (&pi - a.transpose());
        analysis.push(a);
        select.push(sel);
        z.push(zi);
        detail_gram.push(di);
        detail_rsqrt.push(ri);
        predictor.push(pi);
        highpass.push(bi);
    }
    let lowpass_rsqrt = sym_inverse_sqrt(&grams[0]);
    DenseLevelOps {
        analysis,
        select,
        grams,
        z,
        detail_gram,
        detail_rsqrt,
        predictor,
        highpass,
        lowpass_rsqrt,
    }
}

// Stacked-coefficient layout helpers (single channel).

/// Block layout of a coefficient stack: coarse block then detail blocks.
pub struct StackLayout {
    pub lowpass: usize,
    pub details: Vec<usize>,
}

impl StackLayout {
    pub fn of_transform(tr: &LevelTransform) -> StackLayout {
        StackLayout {
            lowpass: tr.level_dim(0),
            details: (0..tr.num_pairs()).map(|i| tr.detail_dim(i)).collect(),
        }
    }

    pub fn of_dense(ops: &DenseLevelOps) -> StackLayout {
        StackLayout {
            lowpass: ops.grams[0].nrows(),
            details: ops.select.iter().map(|s| s.nrows()).collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.lowpass + self.details.iter().sum::<usize>()
    }

    /// Split a stacked vector into (lowpass, detail blocks).
    pub fn split(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let lp = x.as_slice()[..self.lowpass].to_vec();
        let mut at = self.lowpass;
        let details = self
            .details
            .iter()
            .map(|&d| {
                let b = x.as_slice()[at..at + d].to_vec();
                at += d;
                b
            })
            .collect();
        (lp, details)
    }

    pub fn assemble(&self, lp: &[f64], details: &[Vec<f64>]) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.total());
        out.extend_from_slice(lp);
        for d in details {
            out.extend_from_slice(d);
        }
        DVector::from_vec(out)
    }

    /// Stack with the given channel-0 coefficients, channels 1 and 2 zero.
    pub fn to_stack(&self, x: &DVector<f64>) -> CoefficientStack {
        let (lp, details) = self.split(x);
        CoefficientStack {
            lowpass: [lp, vec![0.0; self.lowpass], vec![0.0; self.lowpass]],
            details: details
                .into_iter()
                .enumerate()
                .map(|(i, d)| [d, vec![0.0; self.details[i]], vec![0.0; self.details[i]]])
                .collect(),
        }
    }

    pub fn channel0(&self, stack: &CoefficientStack) -> DVector<f64> {
        self.assemble(
            &stack.lowpass[0],
            &stack
                .details
                .iter()
                .map(|d| d[0].clone())
                .collect::<Vec<_>>(),
        )
    }
}

/// Dense reference for the residual rewrite over a whole stack: walk coarse
/// to fine, subtracting predicted details, advancing the primal with the true
/// details of the input.
pub fn oracle_to_residuals(
    ops: &DenseLevelOps,
    layout: &StackLayout,
    x: &DVector<f64>,
) -> DVector<f64> {
    let (lp, details) = layout.split(x);
    let mut f = &ops.lowpass_rsqrt * DVector::from_vec(lp.clone());
    let mut residuals = Vec::with_capacity(details.len());
    for i in 0..details.len() {
        let d = DVector::from_vec(details[i].clone());
        if layout.details[i] > 0 {
            let pred = &ops.highpass[i] * &f;
            residuals.push((&d - pred).as_slice().to_vec());
        } else {
            residuals.push(Vec::new());
        }
        f = advance_dense(ops, i, &f, &d);
    }
    layout.assemble(&lp, &residuals)
}

/// Dense inverse of [`oracle_to_residuals`]: add predictions back, advancing
/// with the rebuilt details.
pub fn oracle_from_residuals(
    ops: &DenseLevelOps,
    layout: &StackLayout,
    x: &DVector<f64>,
) -> DVector<f64> {
    let (lp, residuals) = layout.split(x);
    let mut f = &ops.lowpass_rsqrt * DVector::from_vec(lp.clone());
    let mut details = Vec::with_capacity(residuals.len());
    for i in 0..residuals.len() {
        let mut d = DVector::from_vec(residuals[i].clone());
        if layout.details[i] > 0 {
            d += &ops.highpass[i] * &f;
        }
        details.push(d.as_slice().to_vec());
        f = advance_dense(ops, i, &f, &d);
    }
    layout.assemble(&lp, &details)
}

/// One decode-ladder step with exact operators: refine the primal and lift
/// the orthonormalized details.
fn advance_dense(ops: &DenseLevelOps, i: usize, f: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let mut fine = ops.analysis[i].transpose() * f;
    if !d.is_empty() {
        fine += ops.z[i].transpose() * &ops.detail_rsqrt[i] * d;
    }
    fine
}

// Implementation-side materialization.

/// Columns of a linear map applied to unit vectors.
pub fn materialize(cols: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut out: Option<DMatrix<f64>> = None;
    for j in 0..cols {
        let mut e = vec![0.0; cols];
        e[j] = 1.0;
        let col = f(&e);
        let m = out.get_or_insert_with(|| DMatrix::zeros(col.len(), cols));
        m.set_column(j, &DVector::from_vec(col));
    }
    out.unwrap_or_else(|| DMatrix::zeros(0, 0))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    if a.is_empty() {
        return 0.0;
    }
    (a - b).amax()
}

// Synthetic SPD instances for the solver checks.

/// Random orthogonal matrix from the QR factorization of Gaussian noise.
pub fn random_orthogonal(seed: u64, n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| gaussian(&mut rng));
    m.qr().q()
}

/// SPD matrix with eigenvalues log-spaced over [1, kappa].
pub fn spd_with_condition(seed: u64, n: usize, kappa: f64) -> DMatrix<f64> {
    let q = random_orthogonal(seed, n);
    let vals = DVector::from_fn(n, |i, _| {
        kappa.powf(i as f64 / (n - 1).max(1) as f64)
    });
    let m = &q * DMatrix::from_diagonal(&vals) * q.transpose();
    // Force exact symmetry so eigensolvers see a clean instance.
    (&m + m.transpose()) * 0.5
}

// Rate-distortion sweep sharing one transform across quantizer steps.

/// Coded size and quality per quantizer step, rebuilding nothing between
/// steps: (bits per voxel, combined PSNR) for each delta.
pub fn rate_points(cloud: &VoxelizedCloud, cfg: &CodecConfig, deltas: &[f64]) -> Vec<(f64, f64)> {
    let kernel = TwoScaleKernel::new(cfg.p as u8).unwrap();
    let keys = cloud.morton_keys();
    let h = LevelHierarchy::build(&keys, cfg.l0 as u8, cloud.depth, &kernel).unwrap();
    let tr = LevelTransform::build(h, kernel, cfg.solver_spec()).unwrap();
    let predictors = cfg
        .predict
        .then(|| PredictorSet::for_hierarchy(&tr.hierarchy));
    let mut out = Vec::new();
    for &delta in deltas {
        let (delta_fixed, delta) = rd::canonical_delta(delta).unwrap();
        let params = cfg.rd_params(delta);
        let (qstack, models, predictive) = match &predictors {
            Some(pred) => {
                let pstack =
                    prediction::pgd_encode_predictive(&tr, pred, &cloud.attributes, &params)
                        .unwrap();
                let models = rd::fit_models(&pstack.clone().into_shape());
                let q = rd::quantize_stack(&pstack.into_shape(), delta);
                (q, models, true)
            }
            None => {
                let stack = rd::pgd_encode(&tr, &cloud.attributes, &params).unwrap();
                let models = rd::fit_models(&stack);
                (rd::quantize_stack(&stack, delta), models, false)
            }
        };
        let meta = bitstream::StreamMeta {
            p: cfg.p as u8,
            l0: cfg.l0 as u8,
            depth: cloud.depth,
            predictive,
            leaf_count: cloud.len() as u64,
            delta_fixed,
            geom_check: geometry_fingerprint(&keys),
        };
        let bytes = bitstream::serialize(&meta, &qstack, &models);
        let deq = rd::dequantize_stack(&qstack, delta);
        let rec = if predictive {
            let pstack = PredictiveStack::from_shape(deq);
            let stack =
                prediction::from_residuals(&tr, predictors.as_ref().unwrap(), &pstack).unwrap();
            ladder::decode_stack(&tr, &stack).unwrap()
        } else {
            ladder::decode_stack(&tr, &deq).unwrap()
        };
        let decoded = VoxelizedCloud::new(cloud.depth, cloud.coords.clone(), rec).unwrap();
        let report = metrics::quality(cloud, &decoded).unwrap();
        let bpp = bytes.len() as f64 * 8.0 / cloud.len() as f64;
        out.push((bpp, report.psnr_combined));
    }
    out
}

/// Piecewise-linear interpolation of one curve coordinate at a query on the
/// other; points need not be sorted. Panics if the query is outside the hull.
pub fn interp(points: &[(f64, f64)], at: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(
        at >= pts.first().unwrap().0 && at <= pts.last().unwrap().0,
        "query {at} outside curve span [{}, {}]",
        pts.first().unwrap().0,
        pts.last().unwrap().0
    );
    let hi = pts.iter().position(|&(x, _)| x >= at).unwrap();
    if pts[hi].0 == at || hi == 0 {
        return pts[hi].1;
    }
    let (x0, y0) = pts[hi - 1];
    let (x1, y1) = pts[hi];
    y0 + (y1 - y0) * (at - x0) / (x1 - x0)
}
