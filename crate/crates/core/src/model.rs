//! Polarization-curve models and synthetic data generation.
//!
//! Four static voltage models of a fuel-cell stack, from full to coarse:
//!
//! * full:        v = θ₄ + θ₁·ln(i) + θ₂·i + θ₅·e^{θ₃·i}
//! * exponential: v = E_oc − a·e^{b·i}
//! * power-law:   v = E_oc − a·i^b
//! * logarithmic: v = θ₆ + θ₁·ln(i) + θ₂·i   (the full model with the
//!   exponential term frozen at its i→0 value, θ₆ = θ₄ + θ₅)
//!
//! [`synthesize`] evaluates a model along a current trace and adds seeded
//! Gaussian voltage noise — the stand-in for a simulated or physical stack.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Trace;

/// Which polarization-curve model a run works with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelId::M1 => "m1",
            ModelId::M2 => "m2",
            ModelId::M3 => "m3",
            ModelId::M4 => "m4",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelId::M1),
            "m2" => Ok(ModelId::M2),
            "m3" => Ok(ModelId::M3),
            "m4" => Ok(ModelId::M4),
            other => Err(Error::Config(format!("unknown model id {other:?}"))),
        }
    }
}

/// Parameters of the full model: v = θ₄ + θ₁ln(i) + θ₂i + θ₅e^{θ₃i}.
///
/// No sign constraints: the reference parameter set has θ₁, θ₂, θ₅ negative
/// (the losses are folded into signed coefficients). θ₃ ≠ 0 is required only
/// by operations that divide by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaFull {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub theta5: f64,
}

impl ThetaFull {
    pub fn new(theta1: f64, theta2: f64, theta3: f64, theta4: f64, theta5: f64) -> Result<Self> {
        let t = ThetaFull { theta1, theta2, theta3, theta4, theta5 };
        if !t.as_array().iter().all(|x| x.is_finite()) {
            return Err(Error::Config("full-model parameters must be finite".into()));
        }
        Ok(t)
    }

    /// The benchmark parameter set used throughout the test suite: a 39 V
    /// stack whose curve decreases from ≈38 V at 1 A to ≈24 V at 30 A.
    pub fn benchmark() -> Self {
        ThetaFull {
            theta1: -2.582,
            theta2: -0.1808,
            theta3: 0.0046,
            theta4: 39.3543,
            theta5: -1.2610,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.theta1, self.theta2, self.theta3, self.theta4, self.theta5]
    }

    /// First four components, the inputs of the coefficient map.
    pub fn head4(&self) -> [f64; 4] {
        [self.theta1, self.theta2, self.theta3, self.theta4]
    }
}

/// Parameters of the reduced two-parameter models: v = E_oc − a·e^{b·i}
/// (exponential) or v = E_oc − a·i^b (power-law), with E_oc a known constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedParams {
    pub e_oc: f64,
    pub a: f64,
    pub b: f64,
}

impl ReducedParams {
    /// Validate for the exponential model over a current range: a, b ≥ 0 and
    /// E_oc strictly dominates the loss a·e^{b·i} on [i_lo, i_hi].
    pub fn checked_exp(e_oc: f64, a: f64, b: f64, i_range: (f64, f64)) -> Result<Self> {
        let p = ReducedParams { e_oc, a, b };
        p.validate_basic()?;
        // a·e^{b·i} is nondecreasing in i for a, b ≥ 0: the top of the range
        // is the worst case.
        let loss = a * (b * i_range.1.max(i_range.0)).exp();
        if !(e_oc > loss) {
            return Err(Error::EocDominance { e_oc, loss });
        }
        Ok(p)
    }

    /// Validate for the power-law model over a positive current range.
    pub fn checked_power(e_oc: f64, a: f64, b: f64, i_range: (f64, f64)) -> Result<Self> {
        let p = ReducedParams { e_oc, a, b };
        p.validate_basic()?;
        if !(i_range.0 > 0.0) {
            return Err(Error::Config(format!(
                "power-law current range must be positive, got [{}, {}]",
                i_range.0, i_range.1
            )));
        }
        let loss = a * i_range.1.max(i_range.0).powf(b);
        if !(e_oc > loss) {
            return Err(Error::EocDominance { e_oc, loss });
        }
        Ok(p)
    }

    fn validate_basic(&self) -> Result<()> {
        if ![self.e_oc, self.a, self.b].iter().all(|x| x.is_finite()) {
            return Err(Error::Config("reduced-model parameters must be finite".into()));
        }
        if self.a < 0.0 || self.b < 0.0 {
            return Err(Error::Config(format!(
                "loss coefficients must be nonnegative, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

/// Parameters of the logarithmic model: v = θ₆ + θ₁ln(i) + θ₂i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaM4 {
    pub theta1: f64,
    pub theta2: f64,
    pub theta6: f64,
}

impl ThetaM4 {
    pub fn new(theta1: f64, theta2: f64, theta6: f64) -> Result<Self> {
        if ![theta1, theta2, theta6].iter().all(|x| x.is_finite()) {
            return Err(Error::Config("logarithmic-model parameters must be finite".into()));
        }
        Ok(ThetaM4 { theta1, theta2, theta6 })
    }

    /// The exact reduction of the full model when its exponential rate is
    /// zero: e^{θ₃·i} ≡ 1 collapses θ₅ into the constant, so θ₆ = θ₄ + θ₅.
    pub fn from_full(theta: &ThetaFull) -> Self {
        ThetaM4 {
            theta1: theta.theta1,
            theta2: theta.theta2,
            theta6: theta.theta4 + theta.theta5,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta6, self.theta1, self.theta2]
    }
}

fn check_current(i: f64) -> Result<()> {
    if !(i > 0.0) || !i.is_finite() {
        return Err(Error::LogDomain { t: f64::NAN, value: i });
    }
    Ok(())
}

/// Full model: θ₄ + θ₁ln(i) + θ₂i + θ₅e^{θ₃i}. Requires i > 0.
pub fn eval_m1(theta: &ThetaFull, i: f64) -> Result<f64> {
    check_current(i)?;
    Ok(theta.theta4
        + theta.theta1 * i.ln()
        + theta.theta2 * i
        + theta.theta5 * (theta.theta3 * i).exp())
}

/// Exponential model: E_oc − a·e^{b·i}. Defined for all i (including 0).
pub fn eval_m2(p: &ReducedParams, i: f64) -> f64 {
    p.e_oc - p.a * (p.b * i).exp()
}

/// Power-law model: E_oc − a·i^b. Requires i > 0 (fractional powers).
pub fn eval_m3(p: &ReducedParams, i: f64) -> Result<f64> {
    if !(i > 0.0) || !i.is_finite() {
        return Err(Error::LogDomain { t: f64::NAN, value: i });
    }
    Ok(p.e_oc - p.a * i.powf(p.b))
}

/// Logarithmic model: θ₆ + θ₁ln(i) + θ₂i. Requires i > 0.
pub fn eval_m4(p: &ThetaM4, i: f64) -> Result<f64> {
    check_current(i)?;
    Ok(p.theta6 + p.theta1 * i.ln() + p.theta2 * i)
}

/// A model choice bundled with its true parameters — the ground-truth
/// generator for synthesis runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    M1(ThetaFull),
    M2(ReducedParams),
    M3(ReducedParams),
    M4(ThetaM4),
}

impl ModelSpec {
    pub fn id(&self) -> ModelId {
        match self {
            ModelSpec::M1(_) => ModelId::M1,
            ModelSpec::M2(_) => ModelId::M2,
            ModelSpec::M3(_) => ModelId::M3,
            ModelSpec::M4(_) => ModelId::M4,
        }
    }

    pub fn eval(&self, i: f64) -> Result<f64> {
        match self {
            ModelSpec::M1(t) => eval_m1(t, i),
            ModelSpec::M2(p) => Ok(eval_m2(p, i)),
            ModelSpec::M3(p) => eval_m3(p, i),
            ModelSpec::M4(t) => eval_m4(t, i),
        }
    }
}

/// Evaluate `model` along the current trace `u` and add i.i.d. zero-mean
/// Gaussian voltage noise of standard deviation `noise_std`, seeded
/// deterministically. `noise_std = 0` reproduces the noiseless curve and
/// draws nothing from the generator.
pub fn synthesize(model: &ModelSpec, u: &Trace, noise_std: f64, seed: u64) -> Result<Trace> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::Config(format!("noise std must be nonnegative, got {noise_std}")));
    }
    let mut samples = Vec::with_capacity(u.len());
    for (k, &i) in u.samples.iter().enumerate() {
        let v = model.eval(i).map_err(|e| match e {
            Error::LogDomain { value, .. } => Error::LogDomain { t: u.time(k), value },
            other => other,
        })?;
        samples.push(v);
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }
    Trace::new(u.dt, u.t0, samples)
}
