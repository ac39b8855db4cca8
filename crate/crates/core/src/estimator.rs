//! Online and batch parameter estimators.
//!
//! Two online estimators consume [`RegressorSample`] streams:
//!
//! * [`Lsd`] — least squares over the regression coefficients followed by a
//!   determinant-mixed gradient flow in estimation coordinates. Convergence
//!   needs only interval excitation: once the information matrix has grown
//!   past its initial value in every direction, the mixing determinant Δ
//!   lifts off zero and the coordinate flow contracts globally.
//! * [`Gradient`] — the classical gradient flow for linear regressions,
//!   which needs persistent excitation.
//!
//! Plus two algebraic one-shot estimators for parameters that the regressions
//! cannot see ([`estimate_theta5`], [`estimate_a_power_law`]), and
//! [`batch_ls`], the offline least-squares oracle the online results are
//! checked against.
//!
//! Numerical layout of the LSD estimator: the covariance flow
//! Ḟ = −γ₀FφφᵀF is integrated in information form — S := F⁻¹ grows linearly
//! as Ṡ = γ₀φφᵀ and is accumulated by trapezoid quadrature, which keeps F
//! symmetric positive definite by construction at any step size (the direct
//! Riccati form explodes at these gains). For linear regressions this has a
//! pleasant exactness property: the same quadrature weights appear in S and
//! in the data accumulator B, so Ŵ = S⁻¹B reproduces noiseless coefficients
//! exactly, independent of step size. The coordinate flow
//! η̂̇ = ΓΔT(𝒴 − Δ·c(η̂)) is stiff when Γ is large, so each sample interval
//! is cut into as many fourth-order substeps as the local contraction rate
//! demands, with Δ and 𝒴 interpolated linearly across the interval.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::maps::ParamMap;
use crate::regressor::RegressorSample;

/// Hard ceiling on any estimator state norm before aborting.
const DIVERGENCE_LIMIT: f64 = 1e12;
/// How many trailing (t, norm) pairs a divergence report carries.
const GUARD_HISTORY: usize = 100;
/// Target |rate|·h per substep of the stiff coordinate flow; RK4 is stable
/// to ≈ 2.8, so this leaves a wide margin for rate-estimate error.
const SUBSTEP_BUDGET: f64 = 0.5;

#[derive(Debug, Clone)]
struct Guard {
    recent: std::collections::VecDeque<(f64, f64)>,
}

impl Guard {
    fn new() -> Self {
        Guard { recent: std::collections::VecDeque::with_capacity(GUARD_HISTORY) }
    }

    fn check(&mut self, t: f64, norm: f64) -> Result<()> {
        if self.recent.len() == GUARD_HISTORY {
            self.recent.pop_front();
        }
        self.recent.push_back((t, norm));
        if !norm.is_finite() || norm > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                t,
                norm,
                limit: DIVERGENCE_LIMIT,
                recent: self.recent.iter().copied().collect(),
            });
        }
        Ok(())
    }
}

/// Gains of the LSD estimator: forgetting-free least-squares rate γ₀, mixing
/// threshold f₀, and the diagonal of the coordinate-flow gain Γ.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsdGains {
    pub gamma0: f64,
    pub f0: f64,
    pub gamma: Vec<f64>,
}

impl LsdGains {
    pub fn validate(&self, q: usize) -> Result<()> {
        if !(self.gamma0 > 0.0) || !(self.f0 > 0.0) {
            return Err(Error::Config(format!(
                "LSD gains must be positive: gamma0 = {}, f0 = {}",
                self.gamma0, self.f0
            )));
        }
        if self.gamma.len() != q || self.gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config(format!(
                "LSD gain diagonal must have {q} positive entries, got {:?}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Least-squares + determinant-mixing estimator.
#[derive(Debug, Clone)]
pub struct Lsd {
    map: ParamMap,
    gains: LsdGains,
    /// Information matrix S = F⁻¹; starts at f₀·I.
    s: Mat,
    /// Accumulator with Ŵ = S⁻¹·b; starts at f₀·Ŵ(0).
    b: Vec<f64>,
    w0: Vec<f64>,
    eta: Vec<f64>,
    /// (φ, Y) at the last consumed sample.
    last: Option<(Vec<f64>, f64)>,
    /// (Δ, 𝒴) at the last consumed sample.
    last_mix: (f64, Vec<f64>),
    t: f64,
    guard: Guard,
}

impl Lsd {
    /// `w0` is the least-squares starting point Ŵ(0) (zeros in every run
    /// here, but it enters the mixing signal so it is explicit), `eta0` the
    /// starting coordinates.
    pub fn new(map: ParamMap, gains: LsdGains, w0: Vec<f64>, eta0: Vec<f64>) -> Result<Self> {
        let (p, q) = (map.p(), map.q());
        gains.validate(q)?;
        if w0.len() != p || eta0.len() != q {
            return Err(Error::Dimension(format!(
                "LSD expects W ∈ R^{p}, eta ∈ R^{q}; got {} and {}",
                w0.len(),
                eta0.len()
            )));
        }
        let s = Mat::identity(p).scale(gains.f0);
        let b = w0.iter().map(|w| gains.f0 * w).collect();
        Ok(Lsd {
            map,
            gains,
            s,
            b,
            w0: w0.clone(),
            eta: eta0,
            last: None,
            last_mix: (0.0, vec![0.0; p]),
            t: 0.0,
            guard: Guard::new(),
        })
    }

    pub fn dim_p(&self) -> usize {
        self.map.p()
    }

    pub fn dim_q(&self) -> usize {
        self.map.q()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Current least-squares coefficient estimate Ŵ = S⁻¹·b.
    pub fn w_hat(&self) -> Result<Vec<f64>> {
        linalg::solve(&self.s, &self.b)
    }

    /// Covariance F = S⁻¹.
    pub fn f(&self) -> Result<Mat> {
        linalg::inverse(&self.s)
    }

    /// Mixing determinant Δ = det(I − f₀F) ∈ [0, 1).
    pub fn delta(&self) -> f64 {
        self.last_mix.0
    }

    fn check_sample(&self, s: &RegressorSample) -> Result<()> {
        if s.phi.len() != self.map.p() {
            return Err(Error::Dimension(format!(
                "regressor dimension {} does not match estimator p = {}",
                s.phi.len(),
                self.map.p()
            )));
        }
        Ok(())
    }

    /// Δ and 𝒴 = adj(I − f₀F)·(Ŵ − f₀F·Ŵ(0)) at the current S, b.
    fn mix(&self) -> Result<(f64, Vec<f64>)> {
        let p = self.map.p();
        let f = linalg::inverse(&self.s)?;
        let w_hat = linalg::solve(&self.s, &self.b)?;
        let i_minus = Mat::identity(p).add_scaled(&f, -self.gains.f0);
        let delta = linalg::det(&i_minus).max(0.0);
        let fw0 = f.matvec(&self.w0);
        let arg: Vec<f64> =
            w_hat.iter().zip(&fw0).map(|(w, fw)| w - self.gains.f0 * fw).collect();
        let y_mix = linalg::adjugate(&i_minus).matvec(&arg);
        Ok((delta, y_mix))
    }

    /// Prime on the first sample (no state change beyond bookkeeping).
    pub fn init(&mut self, sample: &RegressorSample) -> Result<()> {
        self.check_sample(sample)?;
        self.t = sample.t;
        self.last = Some((sample.phi.clone(), sample.y));
        self.last_mix = self.mix()?;
        Ok(())
    }

    /// Consume the next sample: trapezoid-accumulate S and b, refresh the
    /// mixing pair, and advance the coordinate flow across the interval.
    pub fn step(&mut self, sample: &RegressorSample) -> Result<()> {
        self.check_sample(sample)?;
        let (phi_prev, y_prev) = self
            .last
            .clone()
            .ok_or_else(|| Error::Config("LSD step before init".into()))?;
        let dt = sample.t - self.t;
        if !(dt > 0.0) {
            return Err(Error::NonMonotoneTime { row: 0, t_prev: self.t, t: sample.t });
        }
        let g = self.gains.gamma0;
        let half = 0.5 * dt * g;
        self.s.add_outer(&phi_prev, half);
        self.s.add_outer(&sample.phi, half);
        for i in 0..self.b.len() {
            self.b[i] += half * (phi_prev[i] * y_prev + sample.phi[i] * sample.y);
        }

        let (delta0, ymix0) = self.last_mix.clone();
        let (delta1, ymix1) = self.mix()?;

        // Coordinate flow η̂̇ = ΓΔ·T(𝒴 − Δ·c(η̂)) over [t, t+dt], with
        // Δ(s), 𝒴(s) linear in s. Substep count follows the local
        // contraction rate Γ·Δ²·‖T∇c‖.
        let t_mix = self.map.t_mix();
        let gamma = &self.gains.gamma;
        let delta_max = delta0.max(delta1);
        if delta_max > 0.0 {
            let gamma_max = gamma.iter().cloned().fold(0.0f64, f64::max);
            let jac_scale = self
                .map
                .jacobian(&self.eta)
                .map(|j| t_mix.matmul(&j).max_abs() * self.map.q() as f64)
                .unwrap_or(1.0)
                .max(1.0);
            let rate = gamma_max * delta_max * delta_max * jac_scale;
            let n_sub = ((dt * rate / SUBSTEP_BUDGET).ceil() as usize).clamp(1, 1_000_000);
            let h = dt / n_sub as f64;
            let mix_at = |s: f64| -> (f64, Vec<f64>) {
                let d = delta0 + (delta1 - delta0) * s;
                let y: Vec<f64> =
                    ymix0.iter().zip(&ymix1).map(|(a, b)| a + (b - a) * s).collect();
                (d, y)
            };
            for k in 0..n_sub {
                let s0 = k as f64 / n_sub as f64;
                let sm = (k as f64 + 0.5) / n_sub as f64;
                let s1 = (k + 1) as f64 / n_sub as f64;
                let (d0, y0) = mix_at(s0);
                let (dm, ym) = mix_at(sm);
                let (d1, y1) = mix_at(s1);
                let rhs = |eta: &[f64], d: f64, ymix: &[f64]| -> Result<Vec<f64>> {
                    let c = self.map.eval(eta)?;
                    let resid: Vec<f64> =
                        ymix.iter().zip(&c).map(|(y, ci)| y - d * ci).collect();
                    let mixed = t_mix.matvec(&resid);
                    Ok(mixed.iter().zip(gamma).map(|(m, g)| g * d * m).collect())
                };
                let k1 = rhs(&self.eta, d0, &y0)?;
                let e2: Vec<f64> =
                    self.eta.iter().zip(&k1).map(|(e, k)| e + 0.5 * h * k).collect();
                let k2 = rhs(&e2, dm, &ym)?;
                let e3: Vec<f64> =
                    self.eta.iter().zip(&k2).map(|(e, k)| e + 0.5 * h * k).collect();
                let k3 = rhs(&e3, dm, &ym)?;
                let e4: Vec<f64> = self.eta.iter().zip(&k3).map(|(e, k)| e + h * k).collect();
                let k4 = rhs(&e4, d1, &y1)?;
                for i in 0..self.eta.len() {
                    self.eta[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }

        self.t = sample.t;
        self.last = Some((sample.phi.clone(), sample.y));
        self.last_mix = (delta1, ymix1);
        let norm = linalg::norm2(&self.eta);
        self.guard.check(self.t, norm)?;
        Ok(())
    }
}

/// Gradient estimator for linear regressions: η̂̇ = −Γψ(ψᵀη̂ − Y).
#[derive(Debug, Clone)]
pub struct Gradient {
    /// Diagonal of Γ.
    gamma: Vec<f64>,
    eta: Vec<f64>,
    last: Option<(Vec<f64>, f64)>,
    t: f64,
    guard: Guard,
}

impl Gradient {
    pub fn new(gamma: Vec<f64>, eta0: Vec<f64>) -> Result<Self> {
        if gamma.len() != eta0.len() {
            return Err(Error::Dimension(format!(
                "gain diagonal length {} vs state length {}",
                gamma.len(),
                eta0.len()
            )));
        }
        if gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config(format!("gradient gains must be positive: {gamma:?}")));
        }
        Ok(Gradient { gamma, eta: eta0, last: None, t: 0.0, guard: Guard::new() })
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn init(&mut self, sample: &RegressorSample) -> Result<()> {
        self.check_sample(sample)?;
        self.t = sample.t;
        self.last = Some((sample.phi.clone(), sample.y));
        Ok(())
    }

    fn check_sample(&self, s: &RegressorSample) -> Result<()> {
        if s.phi.len() != self.eta.len() {
            return Err(Error::Dimension(format!(
                "regressor dimension {} does not match gradient state {}",
                s.phi.len(),
                self.eta.len()
            )));
        }
        Ok(())
    }

    pub fn step(&mut self, sample: &RegressorSample) -> Result<()> {
        self.check_sample(sample)?;
        let (psi_prev, y_prev) = self
            .last
            .clone()
            .ok_or_else(|| Error::Config("gradient step before init".into()))?;
        let dt = sample.t - self.t;
        if !(dt > 0.0) {
            return Err(Error::NonMonotoneTime { row: 0, t_prev: self.t, t: sample.t });
        }
        // Stability rate of the rank-one flow is ψᵀΓψ; take the worse end.
        let quad = |psi: &[f64]| -> f64 {
            psi.iter().zip(&self.gamma).map(|(p, g)| g * p * p).sum()
        };
        let rate = quad(&psi_prev).max(quad(&sample.phi));
        let n_sub = ((dt * rate / SUBSTEP_BUDGET).ceil() as usize).clamp(1, 1_000_000);
        let h = dt / n_sub as f64;
        let at = |s: f64| -> (Vec<f64>, f64) {
            let psi: Vec<f64> = psi_prev
                .iter()
                .zip(&sample.phi)
                .map(|(a, b)| a + (b - a) * s)
                .collect();
            (psi, y_prev + (sample.y - y_prev) * s)
        };
        for k in 0..n_sub {
            let s0 = k as f64 / n_sub as f64;
            let sm = (k as f64 + 0.5) / n_sub as f64;
            let s1 = (k + 1) as f64 / n_sub as f64;
            let (p0, y0) = at(s0);
            let (pm, ym) = at(sm);
            let (p1, y1) = at(s1);
            let rhs = |eta: &[f64], psi: &[f64], y: f64| -> Vec<f64> {
                let err = linalg::dot(psi, eta) - y;
                psi.iter().zip(&self.gamma).map(|(p, g)| -g * p * err).collect()
            };
            let k1 = rhs(&self.eta, &p0, y0);
            let e2: Vec<f64> = self.eta.iter().zip(&k1).map(|(e, k)| e + 0.5 * h * k).collect();
            let k2 = rhs(&e2, &pm, ym);
            let e3: Vec<f64> = self.eta.iter().zip(&k2).map(|(e, k)| e + 0.5 * h * k).collect();
            let k3 = rhs(&e3, &pm, ym);
            let e4: Vec<f64> = self.eta.iter().zip(&k3).map(|(e, k)| e + h * k).collect();
            let k4 = rhs(&e4, &p1, y1);
            for i in 0..self.eta.len() {
                self.eta[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        self.t = sample.t;
        self.last = Some((sample.phi.clone(), sample.y));
        let norm = linalg::norm2(&self.eta);
        self.guard.check(self.t, norm)?;
        Ok(())
    }
}

/// Algebraic estimate of the exponential amplitude of the full model, given
/// estimates of the other four parameters:
/// θ̂₅ = e^{−θ̂₃u}·(y − θ̂₄ − θ̂₁ln u − θ̂₂u).
///
/// Exact when θ̂₁..₄ are exact and the data is noiseless; inherits an
/// exponentially decaying error from exponentially converging θ̂₁..₄.
pub fn estimate_theta5(theta_hat_14: &[f64; 4], u: f64, y: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::LogDomain { t: f64::NAN, value: u });
    }
    let [t1, t2, t3, t4] = *theta_hat_14;
    Ok((-t3 * u).exp() * (y - t4 - t1 * u.ln() - t2 * u))
}

/// Certainty-equivalent amplitude for the power-law model:
/// â = (E_oc − y)·u^{−b̂}. Exact when b̂ = b on noiseless data.
pub fn estimate_a_power_law(e_oc: f64, u: f64, y: f64, b_hat: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::LogDomain { t: f64::NAN, value: u });
    }
    let margin = e_oc - y;
    if !(margin > 0.0) {
        return Err(Error::EocDominance { e_oc, loss: margin });
    }
    Ok(margin * u.powf(-b_hat))
}

/// Batch least-squares fit of Y ≈ φᵀw over a sample list.
#[derive(Debug, Clone)]
pub struct BatchFit {
    pub w: Vec<f64>,
    /// Extremal eigenvalues of the Gram matrix Σφφᵀ — the conditioning
    /// evidence behind the fit.
    pub gram_min_eig: f64,
    pub gram_max_eig: f64,
}

/// Offline least squares: minimizes Σ(Y − φᵀw)² by the normal equations.
/// Fails when the Gram matrix is numerically singular — the same
/// excitation defect the diagnostics module measures.
pub fn batch_ls(samples: &[RegressorSample]) -> Result<BatchFit> {
    let p = samples
        .first()
        .ok_or_else(|| Error::Config("batch least squares on an empty stream".into()))?
        .phi
        .len();
    let mut gram = Mat::zeros(p, p);
    let mut rhs = vec![0.0; p];
    for s in samples {
        if s.phi.len() != p {
            return Err(Error::Dimension(format!(
                "regressor dimension changed mid-stream: {} vs {p}",
                s.phi.len()
            )));
        }
        gram.add_outer(&s.phi, 1.0);
        for i in 0..p {
            rhs[i] += s.phi[i] * s.y;
        }
    }
    let eigs = linalg::sym_eigenvalues(&gram);
    let (min_eig, max_eig) = (eigs[0], eigs[eigs.len() - 1]);
    let w = linalg::solve(&gram, &rhs).map_err(|_| Error::NotExciting {
        rcond: if max_eig > 0.0 { min_eig / max_eig } else { 0.0 },
    })?;
    Ok(BatchFit { w, gram_min_eig: min_eig, gram_max_eig: max_eig })
}
