//! Coarse-to-fine prediction of detail coefficients.
//!
//! Each child node is predicted from nearby occupied coarse nodes with
//! inverse-distance weights, the prediction is mapped into the orthonormal
//! detail space of its level, and the stack then stores residuals against
//! that prediction instead of raw details. The residual map and its inverse
//! are level ladders sharing every operator with the plain codec, so they
//! invert each other to floating-point accuracy no matter how the inner
//! solvers are configured.

use crate::error::Result;
use crate::hierarchy::LevelHierarchy;
use crate::rd::{self, QuantizedStack, RdParams};
use crate::solvers::LinearOperator;
use crate::transform::ladder::{decode_stack, encode_stack, CoefficientStack};
use crate::transform::ops::{self, LevelTransform};

/// Inverse-distance rows for one level pair, child-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights {
    pub row_start: Vec<usize>,
    pub coarse_index: Vec<u32>,
    pub weight: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PredictorKind {
    /// Normalized inverse-distance neighborhood averaging.
    InverseDistance,
    /// Plain two-scale refinement; turns residual coding into a no-op.
    Synthesis,
}

/// Upsampling predictors for every level pair of a hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSet {
    kind: PredictorKind,
    levels: Vec<PredictorWeights>,
}

/// Residual-coded counterpart of a coefficient stack: the coarse block is
/// kept as is, detail blocks hold prediction residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveStack {
    pub lowpass: [Vec<f64>; 3],
    pub residuals: Vec<[Vec<f64>; 3]>,
}

impl PredictiveStack {
    pub fn from_shape(stack: CoefficientStack) -> PredictiveStack {
        PredictiveStack { lowpass: stack.lowpass, residuals: stack.details }
    }

    pub fn into_shape(self) -> CoefficientStack {
        CoefficientStack { lowpass: self.lowpass, details: self.residuals }
    }
}

impl PredictorSet {
    /// Inverse-distance predictors over the occupied nodes of `h`.
    pub fn for_hierarchy(h: &LevelHierarchy) -> PredictorSet {
        let mut levels = Vec::with_capacity(h.pairs.len());
        for i in 0..h.pairs.len() {
            levels.push(build_weights(h, i));
        }
        PredictorSet { kind: PredictorKind::InverseDistance, levels }
    }

    /// Degenerate predictor equal to the two-scale refinement.
    pub fn degenerate(h: &LevelHierarchy) -> PredictorSet {
        PredictorSet { kind: PredictorKind::Synthesis, levels: Vec::with_capacity(h.pairs.len()) }
    }

    /// Predict child coefficients of pair `i` from coarse coefficients.
    pub fn upsample_predict(&self, tr: &LevelTransform, i: usize, coarse: &[f64]) -> Vec<f64> {
        let pair = &tr.hierarchy.pairs[i];
        let n_child = tr.level_dim(i + 1);
        let mut out = vec![0.0; n_child];
        match self.kind {
            PredictorKind::Synthesis => ops::synthesis(pair, coarse, &mut out),
            PredictorKind::InverseDistance => {
                let w = &self.levels[i];
                for (m, slot) in out.iter_mut().enumerate() {
                    let row = w.row_start[m]..w.row_start[m + 1];
                    let mut acc = 0.0;
                    for r in row.clone() {
                        acc += w.weight[r] * coarse[w.coarse_index[r] as usize];
                    }
                    *slot = acc;
                }
            }
        }
        out
    }

    /// Predicted orthonormal detail coefficients of pair `i` given the coarse
    /// coefficients: the difference between prediction and plain refinement,
    /// pushed through the detail extractor of the level.
    pub fn predict_highpass(
        &self,
        tr: &LevelTransform,
        i: usize,
        coarse: &[f64],
    ) -> Result<Vec<f64>> {
        if tr.detail_dim(i) == 0 {
            return Ok(Vec::new());
        }
        let pair = &tr.hierarchy.pairs[i];
        let mut t = self.upsample_predict(tr, i, coarse);
        let mut refined = vec![0.0; t.len()];
        ops::synthesis(pair, coarse, &mut refined);
        for (a, b) in t.iter_mut().zip(&refined) {
            *a -= b;
        }
        let mut dual = vec![0.0; t.len()];
        tr.grams[i + 1].apply(&t, &mut dual);
        let raw = tr.detail_forward(i, &dual)?;
        tr.detail_orthonormalize(i, &raw)
    }
}

fn build_weights(h: &LevelHierarchy, i: usize) -> PredictorWeights {
    let parents = &h.levels[i];
    let children = &h.levels[i + 1];
    let mut row_start = Vec::with_capacity(children.len() + 1);
    let mut coarse_index = Vec::new();
    let mut weight = Vec::new();
    row_start.push(0);
    for m in &children.coords {
        let row_begin = weight.len();
        let mut mass = 0.0;
        // Two candidate coarse offsets per axis share the child's parity.
        let axis_offsets: [[i32; 2]; 3] =
            std::array::from_fn(|a| if m[a] % 2 == 0 { [0, 2] } else { [-1, 1] });
        for &sx in &axis_offsets[0] {
            for &sy in &axis_offsets[1] {
                for &sz in &axis_offsets[2] {
                    let n = [
                        (m[0] as i32 - sx) / 2,
                        (m[1] as i32 - sy) / 2,
                        (m[2] as i32 - sz) / 2,
                    ];
                    if n.iter().any(|&c| c < 0) {
                        continue;
                    }
                    let key =
                        crate::cloud::morton_key([n[0] as u16, n[1] as u16, n[2] as u16]);
                    let Some(ni) = parents.index_of(key) else { continue };
                    let d = (0..3)
                        .map(|a| {
                            let c = 2.0 * n[a] as f64 + 1.0 - (m[a] as f64 + 0.5);
                            c * c
                        })
                        .sum::<f64>()
                        .sqrt();
                    coarse_index.push(ni as u32);
                    weight.push(1.0 / d);
                    mass += 1.0 / d;
                }
            }
        }
        assert!(
            weight.len() > row_begin,
            "child node without any coarse neighbor"
        );
        for w in &mut weight[row_begin..] {
            *w /= mass;
        }
        row_start.push(weight.len());
    }
    PredictorWeights { row_start, coarse_index, weight }
}

/// Rewrite a stack as prediction residuals, walking coarse to fine with the
/// detail blocks of the input as the reconstruction truth.
pub fn to_residuals(
    tr: &LevelTransform,
    predictors: &PredictorSet,
    stack: &CoefficientStack,
) -> Result<PredictiveStack> {
    let mut out = PredictiveStack {
        lowpass: stack.lowpass.clone(),
        residuals: stack.details.clone(),
    };
    for ch in 0..3 {
        let mut f = tr.lowpass_orthonormalize(&stack.lowpass[ch])?;
        for i in 0..tr.num_pairs() {
            let truth = &stack.details[i][ch];
            if !truth.is_empty() {
                let predicted = predictors.predict_highpass(tr, i, &f)?;
                for ((r, t), p) in out.residuals[i][ch].iter_mut().zip(truth).zip(&predicted) {
                    *r = t - p;
                }
            }
            f = advance_level(tr, i, &f, truth)?;
        }
    }
    Ok(out)
}

/// Inverse of `to_residuals`: rebuild detail blocks by adding back the same
/// predictions, level by level.
pub fn from_residuals(
    tr: &LevelTransform,
    predictors: &PredictorSet,
    pstack: &PredictiveStack,
) -> Result<CoefficientStack> {
    let mut out = CoefficientStack {
        lowpass: pstack.lowpass.clone(),
        details: pstack.residuals.clone(),
    };
    for ch in 0..3 {
        let mut f = tr.lowpass_orthonormalize(&pstack.lowpass[ch])?;
        for i in 0..tr.num_pairs() {
            if !pstack.residuals[i][ch].is_empty() {
                let predicted = predictors.predict_highpass(tr, i, &f)?;
                for (g, p) in out.details[i][ch].iter_mut().zip(&predicted) {
                    *g += p;
                }
            }
            let truth = out.details[i][ch].clone();
            f = advance_level(tr, i, &f, &truth)?;
        }
    }
    Ok(out)
}

/// Quantize a residual stack so each level's residual is taken against the
/// prediction the decoder actually forms from already-quantized coarser
/// levels, which stops quantization error from compounding across levels.
pub fn closed_loop_quantize(
    tr: &LevelTransform,
    predictors: &PredictorSet,
    pstack: &PredictiveStack,
    delta: f64,
) -> Result<QuantizedStack> {
    let mut q = QuantizedStack {
        lowpass: Default::default(),
        details: vec![Default::default(); tr.num_pairs()],
    };
    for ch in 0..3 {
        // Recover the detail targets the residuals were taken against.
        let mut targets = Vec::with_capacity(tr.num_pairs());
        let mut f = tr.lowpass_orthonormalize(&pstack.lowpass[ch])?;
        for i in 0..tr.num_pairs() {
            let mut target = pstack.residuals[i][ch].clone();
            if !target.is_empty() {
                let predicted = predictors.predict_highpass(tr, i, &f)?;
                for (t, p) in target.iter_mut().zip(&predicted) {
                    *t += p;
                }
            }
            f = advance_level(tr, i, &f, &target)?;
            targets.push(target);
        }
        // Requantize level by level along the decoder's own reconstruction.
        q.lowpass[ch] = pstack.lowpass[ch].iter().map(|&v| rd::quantize(v, delta)).collect();
        let dec_low: Vec<f64> = q.lowpass[ch].iter().map(|&v| rd::dequantize(v, delta)).collect();
        let mut f = tr.lowpass_orthonormalize(&dec_low)?;
        for i in 0..tr.num_pairs() {
            let mut detail = Vec::new();
            if !targets[i].is_empty() {
                let predicted = predictors.predict_highpass(tr, i, &f)?;
                let qres: Vec<i64> = targets[i]
                    .iter()
                    .zip(&predicted)
                    .map(|(t, p)| rd::quantize(t - p, delta))
                    .collect();
                detail = qres
                    .iter()
                    .zip(&predicted)
                    .map(|(&r, p)| rd::dequantize(r, delta) + p)
                    .collect();
                q.details[i][ch] = qres;
            }
            f = advance_level(tr, i, &f, &detail)?;
        }
    }
    Ok(q)
}

/// One decode-ladder step: refine the coarse coefficients and add the
/// contribution of the level's orthonormal details.
fn advance_level(
    tr: &LevelTransform,
    i: usize,
    coarse: &[f64],
    details: &[f64],
) -> Result<Vec<f64>> {
    let pair = &tr.hierarchy.pairs[i];
    let mut fine = vec![0.0; tr.level_dim(i + 1)];
    ops::synthesis(pair, coarse, &mut fine);
    if !details.is_empty() {
        let ortho = tr.detail_orthonormalize(i, details)?;
        let lifted = tr.detail_adjoint(i, &ortho)?;
        for (a, b) in fine.iter_mut().zip(&lifted) {
            *a += b;
        }
    }
    Ok(fine)
}

/// Proximal-gradient encoder in the residual parameterization: the gradient
/// of the data term is pulled through the residual map so shrinkage acts on
/// residual blocks, which are the ones entropy coded.
pub fn pgd_encode_predictive(
    tr: &LevelTransform,
    predictors: &PredictorSet,
    attributes: &[[f64; 3]],
    params: &RdParams,
) -> Result<PredictiveStack> {
    Ok(pgd_encode_predictive_traced(tr, predictors, attributes, params)?.0)
}

/// Same, reporting the objective after each step (index 0 is the start).
pub fn pgd_encode_predictive_traced(
    tr: &LevelTransform,
    predictors: &PredictorSet,
    attributes: &[[f64; 3]],
    params: &RdParams,
) -> Result<(PredictiveStack, Vec<f64>)> {
    let lambda = params.lambda();
    let objective = |v: &CoefficientStack| -> Result<f64> {
        let plain = from_residuals(tr, predictors, &PredictiveStack::from_shape(v.clone()))?;
        Ok(0.5 * rd::distortion(tr, attributes, &plain)? + lambda * rd::weighted_l1(v, params))
    };
    let mut v = to_residuals(tr, predictors, &encode_stack(tr, attributes)?)?.into_shape();
    let mut prox_prev = v.clone();
    let mut trace = Vec::with_capacity(params.m3 + 1);
    trace.push(objective(&v)?);
    for _ in 0..params.m3 {
        let plain = from_residuals(tr, predictors, &PredictiveStack::from_shape(v.clone()))?;
        let rec = decode_stack(tr, &plain)?;
        let residual: Vec<[f64; 3]> = attributes
            .iter()
            .zip(&rec)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
            .collect();
        let grad = to_residuals(tr, predictors, &encode_stack(tr, &residual)?)?.into_shape();
        let mut prox = rd::stack_binary(&v, &grad, |x, g| x + params.alpha * g);
        rd::shrink_stack(&mut prox, params);
        v = rd::stack_binary(&prox, &prox_prev, |p, q| p + params.beta * (p - q));
        prox_prev = prox;
        trace.push(objective(&v)?);
    }
    Ok((PredictiveStack::from_shape(v), trace))
}
