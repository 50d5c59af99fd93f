//! End-to-end pipelines: encode a voxelized cloud into a self-contained
//! stream, decode a stream against out-of-band geometry, and evaluate
//! rate-distortion points.
//!
//! The stream carries coefficients, rate models, and the quantization step,
//! but no geometry; the decoder is handed the voxel set separately and must
//! agree with the encoder on it exactly. Solver settings are not signaled
//! either: reconstruction uses whatever the local configuration specifies,
//! and encoder-side reports are computed through the same decode path so
//! the two always agree.

use crate::bitstream::{self, StreamMeta};
use crate::cloud::{geometry_fingerprint, morton_key, VoxelizedCloud};
use crate::config::CodecConfig;
use crate::error::{Error, Result};
use crate::hierarchy::LevelHierarchy;
use crate::metrics;
use crate::prediction::{self, PredictiveStack, PredictorSet};
use crate::rd;
use crate::transform::ladder;
use crate::transform::ops::LevelTransform;

/// An encoded stream plus the encoder-side accounting that goes with it.
#[derive(Debug, Clone)]
pub struct EncodeOutput {
    /// Complete stream, ready to write.
    pub bytes: Vec<u8>,
    /// Laplace-model estimate of the coded size, in bits.
    pub model_bits: f64,
    /// Quantization step actually used, after grid snapping.
    pub delta: f64,
}

impl EncodeOutput {
    pub fn bits_total(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }
}

/// One rate-distortion measurement, shaped like a CSV row.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    pub delta: f64,
    pub lambda: f64,
    pub bits_total: u64,
    pub bpp: f64,
    /// Per-channel PSNR in dB.
    pub psnr: [f64; 3],
    /// PSNR of the mean per-channel MSE, in dB.
    pub psnr_combined: f64,
    pub m1: u32,
    pub m2: u32,
    pub m3: u32,
}

pub const CSV_HEADER: &str = "delta,lambda,bits_total,bpp,psnr_y,psnr_u,psnr_v,psnr_yuv,m1,m2,m3";

impl EvalPoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.delta,
            self.lambda,
            self.bits_total,
            self.bpp,
            self.psnr[0],
            self.psnr[1],
            self.psnr[2],
            self.psnr_combined,
            self.m1,
            self.m2,
            self.m3,
        )
    }
}

fn build_transform(keys: &[u64], p: u8, l0: u8, depth: u8, cfg: &CodecConfig) -> Result<LevelTransform> {
    let kernel = crate::transform::stencil::TwoScaleKernel::new(p)?;
    let hierarchy = LevelHierarchy::build(keys, l0, depth, &kernel)?;
    LevelTransform::build(hierarchy, kernel, cfg.solver_spec())
}

/// Encode one cloud at one step size.
pub fn encode(cloud: &VoxelizedCloud, cfg: &CodecConfig, delta: f64) -> Result<EncodeOutput> {
    cfg.validate()?;
    if cloud.depth as u32 != cfg.depth {
        return Err(Error::Geometry(format!(
            "cloud is voxelized at depth {} but the configuration says {}",
            cloud.depth, cfg.depth
        )));
    }
    let (delta_fixed, snapped) = rd::canonical_delta(delta)?;
    let keys = cloud.morton_keys();
    let tr = build_transform(&keys, cfg.p as u8, cfg.l0 as u8, cloud.depth, cfg)?;
    let params = cfg.rd_params(snapped);

    let (qstack, models) = if cfg.predict {
        let predictors = PredictorSet::for_hierarchy(&tr.hierarchy);
        let pstack = prediction::pgd_encode_predictive(&tr, &predictors, &cloud.attributes, &params)?;
        let qstack = if cfg.closed_loop {
            prediction::closed_loop_quantize(&tr, &predictors, &pstack, snapped)?
        } else {
            rd::quantize_stack(&pstack.clone().into_shape(), snapped)
        };
        (qstack, rd::fit_models(&pstack.into_shape()))
    } else {
        let stack = rd::pgd_encode(&tr, &cloud.attributes, &params)?;
        (rd::quantize_stack(&stack, snapped), rd::fit_models(&stack))
    };

    let meta = StreamMeta {
        p: cfg.p as u8,
        l0: cfg.l0 as u8,
        depth: cloud.depth,
        predictive: cfg.predict,
        leaf_count: cloud.len() as u64,
        delta_fixed,
        geom_check: geometry_fingerprint(&keys),
    };
    let model_bits = rd::model_rate_bits(&models, &qstack, snapped);
    let bytes = bitstream::serialize(&meta, &qstack, &models);
    Ok(EncodeOutput { bytes, model_bits, delta: snapped })
}

/// Decode a stream against the voxel set it was encoded over.
///
/// `coords` must list exactly the encoder's occupied voxels in Morton
/// order; the stream carries no geometry of its own, only a fingerprint of
/// the coded keys, so a mismatch is detected but not localized.
pub fn decode(bytes: &[u8], coords: &[[u16; 3]], cfg: &CodecConfig) -> Result<VoxelizedCloud> {
    let (meta, qstack, _models) = bitstream::deserialize(bytes)?;
    if coords.len() as u64 != meta.leaf_count {
        return Err(Error::Geometry(format!(
            "stream encodes {} voxels but the geometry has {}",
            meta.leaf_count,
            coords.len()
        )));
    }
    let bound = 1u32 << meta.depth;
    let mut keys = Vec::with_capacity(coords.len());
    for &c in coords {
        if c.iter().any(|&v| (v as u32) >= bound) {
            return Err(Error::Geometry(format!(
                "voxel {c:?} outside the stream's grid of side {bound}"
            )));
        }
        let key = morton_key(c);
        if keys.last().is_some_and(|&p| key <= p) {
            return Err(Error::Geometry(format!(
                "geometry voxels not in strictly increasing Morton order near key {key:#x}"
            )));
        }
        keys.push(key);
    }
    if geometry_fingerprint(&keys) != meta.geom_check {
        return Err(Error::Geometry(format!(
            "geometry does not match the coded cloud (fingerprint mismatch over {} voxels)",
            keys.len()
        )));
    }
    let delta = rd::delta_from_fixed(meta.delta_fixed)?;
    let tr = build_transform(&keys, meta.p, meta.l0, meta.depth, cfg)?;
    let mut stack = rd::dequantize_stack(&qstack, delta);
    if meta.predictive {
        let predictors = PredictorSet::for_hierarchy(&tr.hierarchy);
        stack = prediction::from_residuals(&tr, &predictors, &PredictiveStack::from_shape(stack))?;
    }
    let attributes = ladder::decode_stack(&tr, &stack)?;
    VoxelizedCloud::new(meta.depth, coords.to_vec(), attributes)
}

/// Encode, decode, and measure one rate point.
pub fn evaluate(cloud: &VoxelizedCloud, cfg: &CodecConfig, delta: f64) -> Result<(EvalPoint, EncodeOutput)> {
    let out = encode(cloud, cfg, delta)?;
    let decoded = decode(&out.bytes, &cloud.coords, cfg)?;
    let quality = metrics::quality(cloud, &decoded)?;
    let point = EvalPoint {
        delta: out.delta,
        lambda: cfg.rd_params(out.delta).lambda(),
        bits_total: out.bits_total(),
        bpp: out.bits_total() as f64 / cloud.len() as f64,
        psnr: quality.psnr,
        psnr_combined: quality.psnr_combined,
        m1: cfg.m1,
        m2: cfg.m2,
        m3: cfg.m3,
    };
    Ok((point, out))
}

/// Evaluate every configured step size, in order.
pub fn rd_sweep(cloud: &VoxelizedCloud, cfg: &CodecConfig) -> Result<Vec<EvalPoint>> {
    cfg.deltas
        .iter()
        .map(|&d| evaluate(cloud, cfg, d).map(|(point, _)| point))
        .collect()
}
