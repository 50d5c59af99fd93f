//! Rate-distortion machinery: quantizer, rate model, and the unrolled
//! proximal-gradient encoder.
//!
//! The encoder does not just transform and quantize. Starting from the plain
//! transform coefficients it runs a fixed number of proximal gradient steps
//! on `J(V) = 0.5 ||F - decode(V)||^2 + lambda * sum_b gamma_b ||V_b||_1`,
//! using the encode ladder as the gradient (it is the decode transpose), a
//! soft threshold as the proximal map, and a momentum term on the proximal
//! iterates. The result is a coefficient stack shaped toward cheaper
//! entropy coding at the configured operating point.

use crate::error::{Error, Result};
use crate::transform::ladder::{decode_stack, encode_stack, CoefficientStack};
use crate::transform::ops::LevelTransform;

/// Soft threshold by `t >= 0`.
pub fn prox_shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Quantize with round-half-away-from-zero ties.
pub fn quantize(v: f64, delta: f64) -> i64 {
    (v / delta).round() as i64
}

pub fn dequantize(q: i64, delta: f64) -> f64 {
    q as f64 * delta
}

/// Snap a step size to the 32.32 fixed-point grid used by the bitstream, so
/// encoder and decoder share the exact same value.
pub fn canonical_delta(delta: f64) -> Result<(u64, f64)> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::Config {
            key: "delta".into(),
            reason: format!("step size must be positive and finite, got {delta}"),
        });
    }
    let fixed = (delta * (1u64 << 32) as f64).round();
    if fixed < 1.0 || fixed >= u64::MAX as f64 {
        return Err(Error::Config {
            key: "delta".into(),
            reason: format!("step size {delta} leaves the representable range"),
        });
    }
    let fixed = fixed as u64;
    Ok((fixed, fixed as f64 / (1u64 << 32) as f64))
}

/// Reverse of the fixed-point canonicalization.
pub fn delta_from_fixed(fixed: u64) -> Result<f64> {
    if fixed == 0 {
        return Err(Error::Bitstream {
            field: "delta".into(),
            reason: "zero step size".into(),
        });
    }
    Ok(fixed as f64 / (1u64 << 32) as f64)
}

/// Integer coefficients mirroring the stack layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedStack {
    pub lowpass: [Vec<i64>; 3],
    pub details: Vec<[Vec<i64>; 3]>,
}

pub fn quantize_stack(stack: &CoefficientStack, delta: f64) -> QuantizedStack {
    let q = |v: &Vec<f64>| v.iter().map(|&x| quantize(x, delta)).collect::<Vec<i64>>();
    QuantizedStack {
        lowpass: std::array::from_fn(|ch| q(&stack.lowpass[ch])),
        details: stack
            .details
            .iter()
            .map(|chs| std::array::from_fn(|ch| q(&chs[ch])))
            .collect(),
    }
}

pub fn dequantize_stack(qstack: &QuantizedStack, delta: f64) -> CoefficientStack {
    let d = |v: &Vec<i64>| v.iter().map(|&q| dequantize(q, delta)).collect::<Vec<f64>>();
    CoefficientStack {
        lowpass: std::array::from_fn(|ch| d(&qstack.lowpass[ch])),
        details: qstack
            .details
            .iter()
            .map(|chs| std::array::from_fn(|ch| d(&chs[ch])))
            .collect(),
    }
}

/// Two-parameter Laplace distribution used as the rate model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceModel {
    pub location: f64,
    pub scale: f64,
}

impl LaplaceModel {
    /// Median location, mean absolute deviation scale (floored away from 0).
    pub fn fit(samples: &[f64]) -> LaplaceModel {
        if samples.is_empty() {
            return LaplaceModel { location: 0.0, scale: 1e-6 };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mid = sorted.len() / 2;
        let location = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        let mad =
            samples.iter().map(|x| (x - location).abs()).sum::<f64>() / samples.len() as f64;
        LaplaceModel { location, scale: mad.max(1e-6) }
    }

    /// Probability mass of the quantizer bin centered at `t`, width `delta`.
    pub fn bin_mass(&self, t: f64, delta: f64) -> f64 {
        let b = self.scale;
        let lo = t - 0.5 * delta - self.location;
        let hi = t + 0.5 * delta - self.location;
        // Evaluate tail-to-tail differences in the well-scaled form.
        let mass = if lo >= 0.0 {
            0.5 * (-lo / b).exp() * (1.0 - (-(hi - lo) / b).exp())
        } else if hi <= 0.0 {
            0.5 * (hi / b).exp() * (1.0 - ((lo - hi) / b).exp())
        } else {
            1.0 - 0.5 * (-hi / b).exp() - 0.5 * (lo / b).exp()
        };
        mass.max(1e-300)
    }

    /// Code length of the bin at `t` in bits.
    pub fn rate_bits(&self, t: f64, delta: f64) -> f64 {
        -self.bin_mass(t, delta).log2()
    }
}

/// Fitted models per block and channel, mirroring the stack layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModels {
    pub lowpass: [LaplaceModel; 3],
    pub details: Vec<[LaplaceModel; 3]>,
}

pub fn fit_models(stack: &CoefficientStack) -> RateModels {
    RateModels {
        lowpass: std::array::from_fn(|ch| LaplaceModel::fit(&stack.lowpass[ch])),
        details: stack
            .details
            .iter()
            .map(|chs| std::array::from_fn(|ch| LaplaceModel::fit(&chs[ch])))
            .collect(),
    }
}

/// Model-predicted bits to code a quantized stack.
pub fn model_rate_bits(models: &RateModels, qstack: &QuantizedStack, delta: f64) -> f64 {
    let mut total = 0.0;
    for ch in 0..3 {
        for &q in &qstack.lowpass[ch] {
            total += models.lowpass[ch].rate_bits(dequantize(q, delta), delta);
        }
        for (blocks, ms) in qstack.details.iter().zip(&models.details) {
            for &q in &blocks[ch] {
                total += ms[ch].rate_bits(dequantize(q, delta), delta);
            }
        }
    }
    total
}

/// Operating point of the proximal-gradient encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdParams {
    /// Quantizer step; also sets `lambda` through `lambda_scale`.
    pub delta: f64,
    /// Rate weight scale: `lambda = lambda_scale * delta^2`.
    pub lambda_scale: f64,
    /// Gradient step size.
    pub alpha: f64,
    /// Momentum on the proximal iterates.
    pub beta: f64,
    /// Number of proximal gradient steps.
    pub m3: usize,
    /// L1 weight on the coarse block (usually 0: never starve the mean).
    pub gamma_lowpass: f64,
    /// L1 weight on every detail block.
    pub gamma_detail: f64,
}

impl RdParams {
    pub fn lambda(&self) -> f64 {
        self.lambda_scale * self.delta * self.delta
    }
}

pub(crate) fn shrink_stack(stack: &mut CoefficientStack, params: &RdParams) {
    let lambda = params.lambda();
    let t_low = params.alpha * lambda * params.gamma_lowpass;
    let t_det = params.alpha * lambda * params.gamma_detail;
    for ch in 0..3 {
        for v in &mut stack.lowpass[ch] {
            *v = prox_shrink(*v, t_low);
        }
        for blocks in &mut stack.details {
            for v in &mut blocks[ch] {
                *v = prox_shrink(*v, t_det);
            }
        }
    }
}

pub(crate) fn stack_binary<F: Fn(f64, f64) -> f64>(a: &CoefficientStack, b: &CoefficientStack, f: F) -> CoefficientStack {
    CoefficientStack {
        lowpass: std::array::from_fn(|ch| {
            a.lowpass[ch]
                .iter()
                .zip(&b.lowpass[ch])
                .map(|(&x, &y)| f(x, y))
                .collect()
        }),
        details: a
            .details
            .iter()
            .zip(&b.details)
            .map(|(ac, bc)| {
                std::array::from_fn(|ch| {
                    ac[ch].iter().zip(&bc[ch]).map(|(&x, &y)| f(x, y)).collect()
                })
            })
            .collect(),
    }
}

pub(crate) fn weighted_l1(stack: &CoefficientStack, params: &RdParams) -> f64 {
    let mut acc = 0.0;
    for ch in 0..3 {
        acc += params.gamma_lowpass
            * stack.lowpass[ch].iter().map(|v| v.abs()).sum::<f64>();
        for blocks in &stack.details {
            acc += params.gamma_detail * blocks[ch].iter().map(|v| v.abs()).sum::<f64>();
        }
    }
    acc
}

pub(crate) fn distortion(tr: &LevelTransform, attributes: &[[f64; 3]], v: &CoefficientStack) -> Result<f64> {
    let rec = decode_stack(tr, v)?;
    Ok(attributes
        .iter()
        .zip(&rec)
        .map(|(a, b)| {
            (0..3)
                .map(|c| (a[c] - b[c]) * (a[c] - b[c]))
                .sum::<f64>()
        })
        .sum())
}

/// Run the unrolled proximal-gradient encoder; returns the final iterate.
pub fn pgd_encode(
    tr: &LevelTransform,
    attributes: &[[f64; 3]],
    params: &RdParams,
) -> Result<CoefficientStack> {
    Ok(pgd_encode_traced(tr, attributes, params)?.0)
}

/// Same, also reporting the objective `J` after each step (index 0 is the
/// starting value at the plain transform coefficients).
pub fn pgd_encode_traced(
    tr: &LevelTransform,
    attributes: &[[f64; 3]],
    params: &RdParams,
) -> Result<(CoefficientStack, Vec<f64>)> {
    let lambda = params.lambda();
    let mut v = encode_stack(tr, attributes)?;
    let mut prox_prev = v.clone();
    let mut trace = Vec::with_capacity(params.m3 + 1);
    trace.push(0.5 * distortion(tr, attributes, &v)? + lambda * weighted_l1(&v, params));
    for _ in 0..params.m3 {
        let rec = decode_stack(tr, &v)?;
        let residual: Vec<[f64; 3]> = attributes
            .iter()
            .zip(&rec)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
            .collect();
        let grad = encode_stack(tr, &residual)?;
        let mut prox = stack_binary(&v, &grad, |x, g| x + params.alpha * g);
        shrink_stack(&mut prox, params);
        v = stack_binary(&prox, &prox_prev, |p, q| p + params.beta * (p - q));
        prox_prev = prox;
        trace.push(0.5 * distortion(tr, attributes, &v)? + lambda * weighted_l1(&v, params));
    }
    Ok((v, trace))
}

/// Indices of the points on the lower-right frontier: strictly increasing
/// quality as spent bits increase, dominated points dropped.
pub fn pareto_front<T>(
    points: &[T],
    bits: impl Fn(&T) -> f64,
    quality: impl Fn(&T) -> f64,
) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        bits(&points[a])
            .total_cmp(&bits(&points[b]))
            .then(quality(&points[b]).total_cmp(&quality(&points[a])))
    });
    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for idx in order {
        let q = quality(&points[idx]);
        if q > best {
            front.push(idx);
            best = q;
        }
    }
    front
}
