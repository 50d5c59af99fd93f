//! Codec configuration: a flat `key = value` text format with embedded
//! defaults per spline order.
//!
//! A config file must spell out every key; unknown, duplicate, or missing
//! keys are errors that name the offending key. Command-line flags override
//! parsed values after the fact, so the file stays the single source of
//! truth for everything it mentions.

use crate::error::{Error, Result};
use crate::rd::RdParams;
use crate::transform::ops::{SolverMode, SolverSpec};
use crate::transform::stencil::TwoScaleKernel;

/// Every tunable the pipeline consumes, resolution range through quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    /// Spline order, 1 or 2.
    pub p: u32,
    /// Coarsest resolution level.
    pub l0: u32,
    /// Finest resolution level (tree depth).
    pub depth: u32,
    /// Inner-solve strategy for parent Gram systems.
    pub mode: SolverMode,
    /// Unrolled solver steps inside the transform operators.
    pub m1: u32,
    /// Orthonormalization series terms.
    pub m2: u32,
    /// Proximal gradient steps in the encoder.
    pub m3: u32,
    /// Proximal gradient step size.
    pub alpha: f64,
    /// Proximal gradient momentum weight.
    pub beta: f64,
    /// Rate weight rule constant; the multiplier is this times the squared
    /// step size.
    pub lambda_c: f64,
    /// Shrinkage scale on the lowpass block.
    pub gamma_lowpass: f64,
    /// Shrinkage scale on detail blocks.
    pub gamma_detail: f64,
    /// Code detail levels as prediction residuals.
    pub predict: bool,
    /// Quantize residuals against already-quantized predictions.
    pub closed_loop: bool,
    /// Seed for the randomized step-bound probes.
    pub seed: u64,
    /// Quantization step sizes; encode uses the first, sweeps use all.
    pub deltas: Vec<f64>,
}

const KEYS: [&str; 16] = [
    "p",
    "l0",
    "depth",
    "mode",
    "m1",
    "m2",
    "m3",
    "alpha",
    "beta",
    "lambda_c",
    "gamma_lowpass",
    "gamma_detail",
    "predict",
    "closed_loop",
    "seed",
    "delta",
];

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.into(), reason: reason.into() }
}

impl CodecConfig {
    /// Stock settings for the given spline order.
    pub fn defaults(p: u32) -> CodecConfig {
        let p2 = p == 2;
        CodecConfig {
            p,
            l0: 4,
            depth: 6,
            mode: SolverMode::Fixed,
            m1: if p2 { 15 } else { 5 },
            m2: 20,
            m3: if p2 { 10 } else { 5 },
            alpha: 0.8,
            beta: 0.1,
            lambda_c: 0.1,
            gamma_lowpass: 0.0,
            gamma_detail: if p2 { 2e-3 } else { 2e-5 },
            predict: false,
            closed_loop: false,
            seed: 0,
            deltas: vec![32.0],
        }
    }

    /// Parse the flat text format. `#` starts a comment; every key is
    /// required exactly once.
    pub fn parse(text: &str) -> Result<CodecConfig> {
        let mut cfg = CodecConfig::defaults(1);
        let mut seen = [false; KEYS.len()];
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(line, "expected `key = value`"))?;
            let slot = KEYS
                .iter()
                .position(|&k| k == key)
                .ok_or_else(|| bad(key, "unknown key"))?;
            if seen[slot] {
                return Err(bad(key, "duplicate key"));
            }
            seen[slot] = true;
            cfg.set(key, value)?;
        }
        for (slot, &key) in KEYS.iter().enumerate() {
            if !seen[slot] {
                return Err(bad(key, "missing key"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| bad(key, format!("cannot parse `{value}`")))
        }
        match key {
            "p" => self.p = num(key, value)?,
            "l0" => self.l0 = num(key, value)?,
            "depth" => self.depth = num(key, value)?,
            "mode" => {
                self.mode = match value {
                    "exact" => SolverMode::Exact,
                    "classical" => SolverMode::Classical,
                    "fixed" => SolverMode::Fixed,
                    _ => return Err(bad(key, "expected exact, classical, or fixed")),
                }
            }
            "m1" => self.m1 = num(key, value)?,
            "m2" => self.m2 = num(key, value)?,
            "m3" => self.m3 = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "lambda_c" => self.lambda_c = num(key, value)?,
            "gamma_lowpass" => self.gamma_lowpass = num(key, value)?,
            "gamma_detail" => self.gamma_detail = num(key, value)?,
            "predict" => self.predict = num(key, value)?,
            "closed_loop" => self.closed_loop = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "delta" => {
                self.deltas = value
                    .split(',')
                    .map(|d| num(key, d.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }
            _ => unreachable!("key list is checked by the caller"),
        }
        Ok(())
    }

    /// Check value ranges; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.p != 1 && self.p != 2 {
            return Err(bad("p", "spline order must be 1 or 2"));
        }
        if self.depth == 0 || self.depth > crate::cloud::MAX_DEPTH as u32 {
            return Err(bad("depth", format!("must be in 1..={}", crate::cloud::MAX_DEPTH)));
        }
        if self.l0 > self.depth {
            return Err(bad("l0", "coarsest level exceeds depth"));
        }
        for (key, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda_c", self.lambda_c),
            ("gamma_lowpass", self.gamma_lowpass),
            ("gamma_detail", self.gamma_detail),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(bad(key, "must be finite and non-negative"));
            }
        }
        if self.alpha == 0.0 {
            return Err(bad("alpha", "step size must be positive"));
        }
        if self.deltas.is_empty() {
            return Err(bad("delta", "at least one step size required"));
        }
        for &d in &self.deltas {
            if !d.is_finite() || d <= 0.0 {
                return Err(bad("delta", "step sizes must be positive"));
            }
        }
        Ok(())
    }

    /// Serialize to the same text format `parse` reads.
    pub fn to_text(&self) -> String {
        let mode = match self.mode {
            SolverMode::Exact => "exact",
            SolverMode::Classical => "classical",
            SolverMode::Fixed => "fixed",
        };
        let deltas: Vec<String> = self.deltas.iter().map(|d| d.to_string()).collect();
        format!(
            "p = {}\nl0 = {}\ndepth = {}\nmode = {}\nm1 = {}\nm2 = {}\nm3 = {}\n\
             alpha = {}\nbeta = {}\nlambda_c = {}\ngamma_lowpass = {}\n\
             gamma_detail = {}\npredict = {}\nclosed_loop = {}\nseed = {}\ndelta = {}\n",
            self.p,
            self.l0,
            self.depth,
            mode,
            self.m1,
            self.m2,
            self.m3,
            self.alpha,
            self.beta,
            self.lambda_c,
            self.gamma_lowpass,
            self.gamma_detail,
            self.predict,
            self.closed_loop,
            self.seed,
            deltas.join(","),
        )
    }

    pub fn kernel(&self) -> Result<TwoScaleKernel> {
        TwoScaleKernel::new(self.p as u8)
    }

    pub fn solver_spec(&self) -> SolverSpec {
        SolverSpec { mode: self.mode, m1: self.m1 as usize, m2: self.m2 as usize, seed: self.seed }
    }

    pub fn rd_params(&self, delta: f64) -> RdParams {
        RdParams {
            delta,
            lambda_scale: self.lambda_c,
            alpha: self.alpha,
            beta: self.beta,
            m3: self.m3 as usize,
            gamma_lowpass: self.gamma_lowpass,
            gamma_detail: self.gamma_detail,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_differ_by_order() {
        let c1 = CodecConfig::defaults(1);
        let c2 = CodecConfig::defaults(2);
        assert_eq!((c1.m1, c1.m3), (5, 5));
        assert_eq!((c2.m1, c2.m3), (15, 10));
        assert!(c1.gamma_detail < c2.gamma_detail);
        c1.validate().unwrap();
        c2.validate().unwrap();
    }

    #[test]
    fn defaults_round_trip_through_text() {
        for p in [1, 2] {
            let cfg = CodecConfig::defaults(p);
            assert_eq!(CodecConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }

    #[test]
    fn comments_and_spacing_are_tolerated() {
        let text = CodecConfig::defaults(2)
            .to_text()
            .replace("m1 = 15", "  m1   =  15  # unrolled steps")
            + "\n# trailing comment\n\n";
        assert_eq!(CodecConfig::parse(&text).unwrap(), CodecConfig::defaults(2));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = CodecConfig::defaults(1).to_text() + "m4 = 7\n";
        match CodecConfig::parse(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "m4"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_key_is_named() {
        let text = CodecConfig::defaults(1).to_text().replace("seed = 0\n", "");
        match CodecConfig::parse(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "seed"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_is_named() {
        let text = CodecConfig::defaults(1).to_text() + "seed = 9\n";
        match CodecConfig::parse(&text) {
            Err(Error::Config { key, reason }) => {
                assert_eq!(key, "seed");
                assert!(reason.contains("duplicate"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn bad_value_is_named() {
        let text = CodecConfig::defaults(1).to_text().replace("alpha = 0.8", "alpha = fast");
        match CodecConfig::parse(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "alpha"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn delta_lists_parse() {
        let text = CodecConfig::defaults(1).to_text().replace("delta = 32", "delta = 8, 16,64");
        assert_eq!(CodecConfig::parse(&text).unwrap().deltas, vec![8.0, 16.0, 64.0]);
    }

    #[test]
    fn range_checks_name_keys() {
        let cases = [
            ("p = 1", "p = 3", "p"),
            ("l0 = 4", "l0 = 9", "l0"),
            ("depth = 6", "depth = 19", "depth"),
            ("delta = 32", "delta = -1", "delta"),
            ("alpha = 0.8", "alpha = 0", "alpha"),
        ];
        for (from, to, want) in cases {
            let text = CodecConfig::defaults(1).to_text().replace(from, to);
            match CodecConfig::parse(&text) {
                Err(Error::Config { key, .. }) => assert_eq!(key, want, "case {to}"),
                other => panic!("expected config error for {to}, got {other:?}"),
            }
        }
    }
}
