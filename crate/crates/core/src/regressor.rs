//! Measurable regression pairs (Y, φ) for each model.
//!
//! The estimators never see the raw voltage equation; they see a linear (or
//! separable) regression built from filtered measurements. Each pipeline here
//! turns a stream of (current, voltage) samples into [`RegressorSample`]s:
//!
//! * full model — differentiate the voltage equation, substitute the
//!   exponential term back via the equation itself, and low-pass everything.
//!   With hp := λp/(p+λ) and lp := λ/(p+λ),
//!
//!   ```text
//!   Y   = hp(y)
//!   φ   = ( hp(ln u), lp(u̇·y), −lp(u̇·ln u), −½·hp(u²), hp(u) )
//!   c   = ( θ₁, θ₃, θ₁θ₃, θ₂θ₃, θ₂−θ₃θ₄ )        with Y = φᵀc.
//!   ```
//!
//!   Needs u̇ — either supplied analytically or reconstructed by a dirty
//!   derivative.
//!
//! * exponential model — algebraic: ln(E_oc − y) = ln a + b·u.
//! * power-law model — one filtered channel per side:
//!   −hp(ln(E_oc−y)) = b·(−hp(ln u)), started at equilibrium so the identity
//!   holds from the first sample.
//! * logarithmic model — algebraic: y = (1, ln u, u)·(θ₆, θ₁, θ₂).
//! * sinusoid construction — a derivative-free variant of the full-model
//!   regression for carrier inputs u = c₀ + A·sin(ωt): products with filtered
//!   copies of y replace every u̇ term, at the price of a sixth coefficient
//!   θ₆ = θ₃ω². See [`SinusoidPipeline`] for the wiring.
//!
//! Filters default to starting with zero *output* (states chosen so every
//! channel reads 0 at the first sample), which cancels the initial-condition
//! mismatch between the two sides of each identity: residuals are pure
//! integration error from t = 0. Starting from zero *state* instead is
//! available to study the exponentially decaying transient that otherwise
//! pollutes the first few time constants.

use crate::error::{Error, Result};
use crate::filter::Filter;

/// One regression data point: Y(t) and φ(t) with Y = φᵀ·(coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSample {
    pub t: f64,
    pub y: f64,
    pub phi: Vec<f64>,
}

impl RegressorSample {
    fn checked(t: f64, y: f64, phi: Vec<f64>) -> Result<Self> {
        if !y.is_finite() || phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteSample { t, what: "regressor output".into() });
        }
        Ok(RegressorSample { t, y, phi })
    }
}

/// One measurement node: time, current, voltage, and (optionally) the
/// current's derivative for pipelines that use it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub t: f64,
    pub u: f64,
    pub y: f64,
    pub u_dot: Option<f64>,
}

impl Node {
    pub fn new(t: f64, u: f64, y: f64) -> Self {
        Node { t, u, y, u_dot: None }
    }

    pub fn with_derivative(t: f64, u: f64, y: f64, u_dot: f64) -> Self {
        Node { t, u, y, u_dot: Some(u_dot) }
    }

    fn check(&self) -> Result<()> {
        let ok = self.t.is_finite()
            && self.u.is_finite()
            && self.y.is_finite()
            && self.u_dot.map_or(true, |d| d.is_finite());
        if !ok {
            return Err(Error::NonFiniteSample {
                t: self.t,
                what: format!("input node (u = {}, y = {})", self.u, self.y),
            });
        }
        Ok(())
    }

    fn ln_u(&self) -> Result<f64> {
        if !(self.u > 0.0) {
            return Err(Error::LogDomain { t: self.t, value: self.u });
        }
        Ok(self.u.ln())
    }
}

/// How filter states are set at the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// States chosen so every filter output is zero at t₀ — the regression
    /// identities then hold from the start.
    ZeroOutput,
    /// All states zero — the filters' own transient shows up as an
    /// exponentially decaying residual.
    ZeroState,
}

impl Default for InitPolicy {
    fn default() -> Self {
        InitPolicy::ZeroOutput
    }
}

fn init_filter(f: &mut Filter, policy: InitPolicy, v0: f64) {
    match policy {
        InitPolicy::ZeroOutput => f.init_zero_output(v0),
        InitPolicy::ZeroState => {
            f.reset_zero();
            f.set_last_input(v0);
        }
    }
}

/// Source of u̇ for the full-model pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeSource {
    /// Each [`Node`] carries the analytic derivative.
    Exact,
    /// Reconstruct u̇ with a dirty derivative p/(τp+1).
    Dirty { tau: f64 },
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

/// Filtered regression for the full model (φ ∈ ℝ⁵).
#[derive(Debug, Clone)]
pub struct M1Pipeline {
    lambda: f64,
    source: DerivativeSource,
    policy: InitPolicy,
    hp_ln_u: Filter,
    lp_udy: Filter,
    lp_udlnu: Filter,
    hp_u2: Filter,
    hp_u: Filter,
    hp_y: Filter,
    /// Dirty-derivative filter, advanced on the half grid so midpoint values
    /// of u̇ are available to the product channels.
    dirty: Option<Filter>,
}

impl M1Pipeline {
    pub fn new(lambda: f64, source: DerivativeSource, policy: InitPolicy) -> Self {
        assert!(lambda > 0.0, "filter bandwidth must be positive");
        let dirty = match source {
            DerivativeSource::Exact => None,
            DerivativeSource::Dirty { tau } => {
                assert!(tau > 0.0, "dirty-derivative time constant must be positive");
                Some(Filter::dirty_derivative(tau))
            }
        };
        M1Pipeline {
            lambda,
            source,
            policy,
            hp_ln_u: Filter::highpass_gain(lambda),
            lp_udy: Filter::lowpass(lambda),
            lp_udlnu: Filter::lowpass(lambda),
            hp_u2: Filter::highpass_gain(lambda),
            hp_u: Filter::highpass_gain(lambda),
            hp_y: Filter::highpass_gain(lambda),
            dirty,
        }
    }

    pub fn dim(&self) -> usize {
        5
    }

    fn udot_at(&mut self, node: &Node, half_dt: Option<f64>) -> Result<f64> {
        match (&mut self.dirty, node.u_dot) {
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::Config(
                "full-model pipeline in exact-derivative mode needs u_dot on every node".into(),
            )),
            (Some(f), _) => Ok(match half_dt {
                // First sample: output with the initialized state.
                None => f.output(node.u),
                Some(h) => f.step_uniform(h, node.u),
            }),
        }
    }

    pub fn init(&mut self, first: &Node) -> Result<RegressorSample> {
        first.check()?;
        let ln_u = first.ln_u()?;
        if let Some(f) = &mut self.dirty {
            // The derivative filter always starts silent: u̇ is unknown at
            // the first sample and guessing loud values would kick the
            // product channels.
            f.init_zero_output(first.u);
        }
        let ud = self.udot_at(first, None)?;
        init_filter(&mut self.hp_ln_u, self.policy, ln_u);
        init_filter(&mut self.lp_udy, self.policy, ud * first.y);
        init_filter(&mut self.lp_udlnu, self.policy, ud * ln_u);
        init_filter(&mut self.hp_u2, self.policy, first.u * first.u);
        init_filter(&mut self.hp_u, self.policy, first.u);
        init_filter(&mut self.hp_y, self.policy, first.y);
        self.emit(first, ln_u, ud)
    }

    pub fn step(&mut self, dt: f64, mid: &Node, next: &Node) -> Result<RegressorSample> {
        mid.check()?;
        next.check()?;
        let ln_m = mid.ln_u()?;
        let ln_n = next.ln_u()?;
        let ud_m = self.udot_at(mid, Some(dt / 2.0))?;
        let ud_n = self.udot_at(next, Some(dt / 2.0))?;

        // The six filters are mutually independent, so each takes a full
        // fourth-order step with its own (start, midpoint, end) inputs.
        let (u_m, u_n) = (mid.u, next.u);
        let prev = PrevInputs::take(self);
        self.hp_ln_u.step(dt, prev.ln_u, ln_m, ln_n);
        self.lp_udy.step(dt, prev.udy, ud_m * mid.y, ud_n * next.y);
        self.lp_udlnu.step(dt, prev.udlnu, ud_m * ln_m, ud_n * ln_n);
        self.hp_u2.step(dt, prev.u2, u_m * u_m, u_n * u_n);
        self.hp_u.step(dt, prev.u, u_m, u_n);
        self.hp_y.step(dt, prev.y, mid.y, next.y);
        self.emit(next, ln_n, ud_n)
    }

    fn emit(&mut self, node: &Node, ln_u: f64, ud: f64) -> Result<RegressorSample> {
        let phi = vec![
            self.hp_ln_u.output(ln_u),
            self.lp_udy.output(ud * node.y),
            -self.lp_udlnu.output(ud * ln_u),
            -0.5 * self.hp_u2.output(node.u * node.u),
            self.hp_u.output(node.u),
        ];
        let y = self.hp_y.output(node.y);
        RegressorSample::checked(node.t, y, phi)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn source(&self) -> DerivativeSource {
        self.source
    }
}

/// Filter inputs at the previous node, reconstructed from `last_input`
/// tracking so `step` callers only pass midpoint and endpoint.
struct PrevInputs {
    ln_u: f64,
    udy: f64,
    udlnu: f64,
    u2: f64,
    u: f64,
    y: f64,
}

impl PrevInputs {
    fn take(p: &M1Pipeline) -> Self {
        PrevInputs {
            ln_u: p.hp_ln_u.last_input().expect("step before init"),
            udy: p.lp_udy.last_input().expect("step before init"),
            udlnu: p.lp_udlnu.last_input().expect("step before init"),
            u2: p.hp_u2.last_input().expect("step before init"),
            u: p.hp_u.last_input().expect("step before init"),
            y: p.hp_y.last_input().expect("step before init"),
        }
    }
}

// ---------------------------------------------------------------------------
// Exponential model
// ---------------------------------------------------------------------------

/// Algebraic regression for the exponential model: Y = ln(E_oc − y),
/// φ = (1, u), coefficients (ln a, b). Memoryless.
#[derive(Debug, Clone)]
pub struct M2Pipeline {
    e_oc: f64,
}

impl M2Pipeline {
    pub fn new(e_oc: f64) -> Self {
        M2Pipeline { e_oc }
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn sample(&self, node: &Node) -> Result<RegressorSample> {
        node.check()?;
        let margin = self.e_oc - node.y;
        if !(margin > 0.0) {
            return Err(Error::EocDominance { e_oc: self.e_oc, loss: margin });
        }
        RegressorSample::checked(node.t, margin.ln(), vec![1.0, node.u])
    }
}

// ---------------------------------------------------------------------------
// Power-law model
// ---------------------------------------------------------------------------

/// Filtered scalar regression for the power-law model:
/// Y = −hp(ln(E_oc − y)), φ = −hp(ln u), Y = b·φ.
///
/// Both channels start at their equilibrium for the first sample, so the
/// constant ln(a) never shows up and the identity is exact from t₀. The same
/// zero-state escape hatch as the other pipelines exists for studying
/// transients.
#[derive(Debug, Clone)]
pub struct M3Pipeline {
    e_oc: f64,
    policy: InitPolicy,
    hp_ln_margin: Filter,
    hp_ln_u: Filter,
}

impl M3Pipeline {
    pub fn new(lambda: f64, e_oc: f64, policy: InitPolicy) -> Self {
        assert!(lambda > 0.0, "filter bandwidth must be positive");
        M3Pipeline {
            e_oc,
            policy,
            hp_ln_margin: Filter::highpass_gain(lambda),
            hp_ln_u: Filter::highpass_gain(lambda),
        }
    }

    pub fn dim(&self) -> usize {
        1
    }

    fn channels(&self, node: &Node) -> Result<(f64, f64)> {
        node.check()?;
        let margin = self.e_oc - node.y;
        if !(margin > 0.0) {
            return Err(Error::EocDominance { e_oc: self.e_oc, loss: margin });
        }
        Ok((margin.ln(), node.ln_u()?))
    }

    pub fn init(&mut self, first: &Node) -> Result<RegressorSample> {
        let (ln_margin, ln_u) = self.channels(first)?;
        init_filter(&mut self.hp_ln_margin, self.policy, ln_margin);
        init_filter(&mut self.hp_ln_u, self.policy, ln_u);
        self.emit(first, ln_margin, ln_u)
    }

    pub fn step(&mut self, dt: f64, mid: &Node, next: &Node) -> Result<RegressorSample> {
        let (ln_margin_m, ln_u_m) = self.channels(mid)?;
        let (ln_margin_n, ln_u_n) = self.channels(next)?;
        let prev_margin = self.hp_ln_margin.last_input().expect("step before init");
        let prev_u = self.hp_ln_u.last_input().expect("step before init");
        self.hp_ln_margin.step(dt, prev_margin, ln_margin_m, ln_margin_n);
        self.hp_ln_u.step(dt, prev_u, ln_u_m, ln_u_n);
        self.emit(next, ln_margin_n, ln_u_n)
    }

    fn emit(&mut self, node: &Node, ln_margin: f64, ln_u: f64) -> Result<RegressorSample> {
        let y = -self.hp_ln_margin.output(ln_margin);
        let phi = -self.hp_ln_u.output(ln_u);
        RegressorSample::checked(node.t, y, vec![phi])
    }
}

// ---------------------------------------------------------------------------
// Logarithmic model
// ---------------------------------------------------------------------------

/// Algebraic regression for the logarithmic model: Y = y, φ = (1, ln u, u),
/// coefficients (θ₆, θ₁, θ₂). Memoryless.
#[derive(Debug, Clone, Default)]
pub struct M4Pipeline;

impl M4Pipeline {
    pub fn new() -> Self {
        M4Pipeline
    }

    pub fn dim(&self) -> usize {
        3
    }

    pub fn sample(&self, node: &Node) -> Result<RegressorSample> {
        node.check()?;
        let ln_u = node.ln_u()?;
        RegressorSample::checked(node.t, node.y, vec![1.0, ln_u, node.u])
    }
}

// ---------------------------------------------------------------------------
// Sinusoid construction
// ---------------------------------------------------------------------------

/// Derivative-free regression for the full model under a sinusoidal carrier
/// u = c₀ + A·sin(ωt), with six coefficients (θ₁, θ₂, θ₃θ₄, θ₁θ₃, θ₂θ₃, θ₃ω²).
///
/// The trick: for this input (u − c₀)̈ = −ω²(u − c₀), so every u̇ product in
/// the full-model construction can be traded for integrations by parts
/// against filtered copies of y. Concretely, with lp := λ/(p+λ),
/// ig := 1/(p+λ), hp := λp/(p+λ):
///
/// ```text
/// ξ = ( hp(ln u), hp(u), −hp(u), hp(u) − hp(u·ln u), −½·hp(u²),
///       lp((u−c₀)·ig(y)) )
/// Y  = hp(y),      f₁ = lp(y),   f₂ = lp(f₁),   F₃ = ig(f₁)
/// Z  = Y·f₂ − lp(Y)·f₁
/// χᵢ = f₂·ξᵢ − f₁·lp(ξᵢ),   i = 1..6
/// χ₆ — f₁·lp((u−c₀)·F₃)     (extra cross term on the last entry)
/// ```
///
/// and Z = χᵀ·(θ₁, θ₂, θ₃θ₄, θ₁θ₃, θ₂θ₃, θ₃ω²) up to integration error.
/// The eighteen filter states are coupled (filter outputs multiply raw
/// signals before entering other filters), so the whole bank advances as one
/// fourth-order step.
#[derive(Debug, Clone)]
pub struct SinusoidPipeline {
    lambda: f64,
    carrier_offset: f64,
    policy: InitPolicy,
    /// 0..5: highpass states for (ln u, u, u·ln u, u², y);
    /// 5..9: lp(y), lp(lp y), ig(lp y), ig(y);
    /// 9,10: lp((u−c₀)·ig(y)), lp((u−c₀)·ig(lp y));
    /// 11..17: lp(ξ₁..ξ₆); 17: lp(Y).
    x: [f64; 18],
    started: bool,
    last: Option<(f64, f64)>,
}

impl SinusoidPipeline {
    pub fn new(lambda: f64, carrier_offset: f64, policy: InitPolicy) -> Self {
        assert!(lambda > 0.0, "filter bandwidth must be positive");
        SinusoidPipeline {
            lambda,
            carrier_offset,
            policy,
            x: [0.0; 18],
            started: false,
            last: None,
        }
    }

    pub fn dim(&self) -> usize {
        6
    }

    /// ξ entries given raw inputs and current states.
    fn xi(&self, x: &[f64; 18], u: f64, ln_u: f64) -> [f64; 6] {
        let l = self.lambda;
        let hp_ln_u = x[0] + l * ln_u;
        let hp_u = x[1] + l * u;
        let hp_ulnu = x[2] + l * u * ln_u;
        let hp_u2 = x[3] + l * u * u;
        [hp_ln_u, hp_u, -hp_u, hp_u - hp_ulnu, -0.5 * hp_u2, x[9]]
    }

    fn rhs(&self, x: &[f64; 18], u: f64, ln_u: f64, y: f64) -> [f64; 18] {
        let l = self.lambda;
        let du = u - self.carrier_offset;
        let mut dx = [0.0; 18];
        // Highpass states: ẋ = −λx − λ²w.
        dx[0] = -l * x[0] - l * l * ln_u;
        dx[1] = -l * x[1] - l * l * u;
        dx[2] = -l * x[2] - l * l * (u * ln_u);
        dx[3] = -l * x[3] - l * l * (u * u);
        dx[4] = -l * x[4] - l * l * y;
        // y-filter chain.
        dx[5] = -l * x[5] + l * y; // lp(y)
        dx[6] = -l * x[6] + l * x[5]; // lp(lp y)
        dx[7] = -l * x[7] + x[5]; // ig(lp y)
        dx[8] = -l * x[8] + y; // ig(y)
        // Product channels.
        dx[9] = -l * x[9] + l * (du * x[8]); // ξ₆
        dx[10] = -l * x[10] + l * (du * x[7]); // cross term for χ₆
        // lp(ξᵢ).
        let xi = self.xi(x, u, ln_u);
        for i in 0..6 {
            dx[11 + i] = -l * x[11 + i] + l * xi[i];
        }
        // lp(Y).
        let y_hp = x[4] + l * y;
        dx[17] = -l * x[17] + l * y_hp;
        dx
    }

    pub fn init(&mut self, first: &Node) -> Result<RegressorSample> {
        first.check()?;
        let ln_u = first.ln_u()?;
        self.x = [0.0; 18];
        if self.policy == InitPolicy::ZeroOutput {
            // Highpass channels carry feedthrough; cancel it. Everything
            // else (lowpass/integrator chains) already outputs zero at zero
            // state.
            let l = self.lambda;
            self.x[0] = -l * ln_u;
            self.x[1] = -l * first.u;
            self.x[2] = -l * first.u * ln_u;
            self.x[3] = -l * first.u * first.u;
            self.x[4] = -l * first.y;
        }
        self.started = true;
        self.last = Some((first.u, first.y));
        self.emit(first, ln_u)
    }

    pub fn step(&mut self, dt: f64, mid: &Node, next: &Node) -> Result<RegressorSample> {
        assert!(self.started, "step before init");
        mid.check()?;
        next.check()?;
        let (u0, y0) = self.last.expect("step before init");
        let ln_0 = if u0 > 0.0 {
            u0.ln()
        } else {
            return Err(Error::LogDomain { t: mid.t, value: u0 });
        };
        let ln_m = mid.ln_u()?;
        let ln_n = next.ln_u()?;

        let k1 = self.rhs(&self.x, u0, ln_0, y0);
        let x2 = add_scaled_state(&self.x, &k1, dt / 2.0);
        let k2 = self.rhs(&x2, mid.u, ln_m, mid.y);
        let x3 = add_scaled_state(&self.x, &k2, dt / 2.0);
        let k3 = self.rhs(&x3, mid.u, ln_m, mid.y);
        let x4 = add_scaled_state(&self.x, &k3, dt);
        let k4 = self.rhs(&x4, next.u, ln_n, next.y);
        for i in 0..18 {
            self.x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.last = Some((next.u, next.y));
        self.emit(next, ln_n)
    }

    fn emit(&mut self, node: &Node, ln_u: f64) -> Result<RegressorSample> {
        let l = self.lambda;
        let x = &self.x;
        let y_hp = x[4] + l * node.y;
        let f1 = x[5];
        let f2 = x[6];
        let z = y_hp * f2 - x[17] * f1;
        let xi = self.xi(x, node.u, ln_u);
        let mut chi = [0.0; 6];
        for i in 0..6 {
            chi[i] = f2 * xi[i] - f1 * x[11 + i];
        }
        chi[5] -= x[10] * f1;
        RegressorSample::checked(node.t, z, chi.to_vec())
    }
}

fn add_scaled_state(x: &[f64; 18], k: &[f64; 18], h: f64) -> [f64; 18] {
    let mut out = *x;
    for i in 0..18 {
        out[i] += h * k[i];
    }
    out
}

// ---------------------------------------------------------------------------
// Unified front
// ---------------------------------------------------------------------------

/// Any of the five pipelines behind one stepping interface.
#[derive(Debug, Clone)]
pub enum Pipeline {
    M1(M1Pipeline),
    M2(M2Pipeline),
    M3(M3Pipeline),
    M4(M4Pipeline),
    Sinusoid(SinusoidPipeline),
}

impl Pipeline {
    /// Regressor dimension p.
    pub fn dim(&self) -> usize {
        match self {
            Pipeline::M1(p) => p.dim(),
            Pipeline::M2(p) => p.dim(),
            Pipeline::M3(p) => p.dim(),
            Pipeline::M4(p) => p.dim(),
            Pipeline::Sinusoid(p) => p.dim(),
        }
    }

    /// Prime the pipeline on the first node and return the t₀ sample.
    pub fn init(&mut self, first: &Node) -> Result<RegressorSample> {
        match self {
            Pipeline::M1(p) => p.init(first),
            Pipeline::M2(p) => p.sample(first),
            Pipeline::M3(p) => p.init(first),
            Pipeline::M4(p) => p.sample(first),
            Pipeline::Sinusoid(p) => p.init(first),
        }
    }

    /// Advance one step of size `dt` using the midpoint and endpoint nodes.
    pub fn step(&mut self, dt: f64, mid: &Node, next: &Node) -> Result<RegressorSample> {
        match self {
            Pipeline::M1(p) => p.step(dt, mid, next),
            Pipeline::M2(p) => p.sample(next),
            Pipeline::M3(p) => p.step(dt, mid, next),
            Pipeline::M4(p) => p.sample(next),
            Pipeline::Sinusoid(p) => p.step(dt, mid, next),
        }
    }
}

/// Drive a pipeline over signals sampled on the half-step lattice:
/// `nodes[2k]` sits at t₀ + k·dt and odd entries are midpoints. Returns one
/// sample per coarse node.
pub fn run_half_grid(pipe: &mut Pipeline, dt: f64, nodes: &[Node]) -> Result<Vec<RegressorSample>> {
    if nodes.is_empty() {
        return Err(Error::Config("empty node stream".into()));
    }
    if nodes.len() % 2 == 0 {
        return Err(Error::Config(format!(
            "half-grid stream must have odd length (2N+1 nodes), got {}",
            nodes.len()
        )));
    }
    let n = nodes.len() / 2;
    let mut out = Vec::with_capacity(n + 1);
    out.push(pipe.init(&nodes[0])?);
    for k in 0..n {
        out.push(pipe.step(dt, &nodes[2 * k + 1], &nodes[2 * k + 2])?);
    }
    Ok(out)
}

/// Drive a pipeline over uniformly spaced coarse nodes, interpolating the
/// midpoints linearly (replayed data has no half-grid samples). Second-order
/// accurate in dt.
pub fn run_uniform(pipe: &mut Pipeline, nodes: &[Node]) -> Result<Vec<RegressorSample>> {
    if nodes.len() < 2 {
        return Err(Error::Config("uniform stream needs at least two nodes".into()));
    }
    let dt = nodes[1].t - nodes[0].t;
    if !(dt > 0.0) {
        return Err(Error::NonMonotoneTime { row: 1, t_prev: nodes[0].t, t: nodes[1].t });
    }
    let mut out = Vec::with_capacity(nodes.len());
    out.push(pipe.init(&nodes[0])?);
    for k in 1..nodes.len() {
        let (a, b) = (&nodes[k - 1], &nodes[k]);
        let step = b.t - a.t;
        if (step - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::Config(format!(
                "uniform stream has irregular spacing at row {k}: {step} vs {dt}"
            )));
        }
        let mid = Node {
            t: 0.5 * (a.t + b.t),
            u: 0.5 * (a.u + b.u),
            y: 0.5 * (a.y + b.y),
            u_dot: match (a.u_dot, b.u_dot) {
                (Some(x), Some(y)) => Some(0.5 * (x + y)),
                _ => None,
            },
        };
        out.push(pipe.step(dt, &mid, b)?);
    }
    Ok(out)
}
