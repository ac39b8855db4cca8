//! Parameter maps between physical and estimation coordinates.
//!
//! The filtered regressions do not see the physical parameters directly:
//! they see polynomial images of them. For the full model the regression
//! coefficient vector is
//!
//! ```text
//! c(θ₁..θ₄) = (θ₁, θ₃, θ₁θ₃, θ₂θ₃, θ₂ − θ₃θ₄) ∈ ℝ⁵,
//! ```
//!
//! which becomes tractable for estimation after the change of coordinates
//! η = (θ₁, θ₃, θ₂θ₃, θ₂ − θ₃θ₄): in η the same coefficients read
//! (η₁, η₂, η₁η₂, η₃, η₄) and a constant row selection T turns the map's
//! Jacobian into the identity — the "monotonizability" property the nonlinear
//! estimator needs, verified here as a sampled matrix inequality
//! T∇c(η) + [∇c(η)]ᵀTᵀ ⪰ ρI.
//!
//! The derivative-free sinusoid construction has its own six-component
//! coefficient vector and an analogous coordinate change; both live here too.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Coefficients of the full-model regression: (θ₁, θ₃, θ₁θ₃, θ₂θ₃, θ₂−θ₃θ₄).
pub fn coeffs_from_theta(theta14: &[f64; 4]) -> [f64; 5] {
    let [t1, t2, t3, t4] = *theta14;
    [t1, t3, t1 * t3, t2 * t3, t2 - t3 * t4]
}

/// Estimation coordinates for the full model: η = (θ₁, θ₃, θ₂θ₃, θ₂−θ₃θ₄).
pub fn eta_from_theta(theta14: &[f64; 4]) -> [f64; 4] {
    let [t1, t2, t3, t4] = *theta14;
    [t1, t3, t2 * t3, t2 - t3 * t4]
}

/// Invert the coordinate change: θ = (η₁, η₃/η₂, η₂, (η₃/η₂ − η₄)/η₂).
/// Undefined at η₂ = 0 (the exponential-rate coordinate).
pub fn theta_from_eta(eta: &[f64; 4]) -> Result<[f64; 4]> {
    let [e1, e2, e3, e4] = *eta;
    if e2 == 0.0 {
        return Err(Error::SingularReparameterization(
            "eta_2 = 0: exponential rate coordinate vanished".into(),
        ));
    }
    let t2 = e3 / e2;
    Ok([e1, t2, e2, (t2 - e4) / e2])
}

/// The full-model coefficients expressed in estimation coordinates:
/// (η₁, η₂, η₁η₂, η₃, η₄). Polynomial, defined everywhere, and equal to
/// [`coeffs_from_theta`] ∘ [`theta_from_eta`] wherever the latter exists.
pub fn coeffs_from_eta(eta: &[f64; 4]) -> [f64; 5] {
    let [e1, e2, e3, e4] = *eta;
    [e1, e2, e1 * e2, e3, e4]
}

/// Coefficients of the sinusoid-input regression:
/// (θ₁, θ₂, θ₃θ₄, θ₁θ₃, θ₂θ₃, θ₆) with θ₆ = θ₃ω² for carrier frequency ω.
pub fn sin_coeffs_from_theta(theta14: &[f64; 4], theta6: f64) -> [f64; 6] {
    let [t1, t2, t3, t4] = *theta14;
    [t1, t2, t3 * t4, t1 * t3, t2 * t3, theta6]
}

/// Estimation coordinates for the sinusoid construction:
/// η = (θ₁, θ₂, θ₃θ₄, θ₁θ₃, θ₆). Note θ₃ never appears alone in the
/// coefficient vector, so the coordinates carry it only in products.
pub fn sin_eta_from_theta(theta14: &[f64; 4], theta6: f64) -> [f64; 5] {
    let [t1, t2, t3, t4] = *theta14;
    [t1, t2, t3 * t4, t1 * t3, theta6]
}

/// The sinusoid coefficients in estimation coordinates:
/// (η₁, η₂, η₃, η₄, η₂η₄/η₁, η₅). The fifth entry reconstructs θ₂θ₃ as
/// θ₂·(θ₁θ₃)/θ₁, so η₁ = θ₁ must be nonzero.
pub fn sin_coeffs_from_eta(eta: &[f64; 5]) -> Result<[f64; 6]> {
    let [e1, e2, e3, e4, e5] = *eta;
    if e1 == 0.0 {
        return Err(Error::SingularReparameterization(
            "eta_1 = 0: logarithmic coefficient vanished".into(),
        ));
    }
    Ok([e1, e2, e3, e4, e2 * e4 / e1, e5])
}

/// Recover (θ₁..θ₄, θ₆) from sinusoid estimation coordinates. Needs η₁ ≠ 0
/// (for θ₃ = η₄/η₁) and the recovered θ₃ ≠ 0 (for θ₄ = η₃/θ₃).
pub fn sin_theta_from_eta(eta: &[f64; 5]) -> Result<([f64; 4], f64)> {
    let [e1, e2, e3, e4, e5] = *eta;
    if e1 == 0.0 {
        return Err(Error::SingularReparameterization(
            "eta_1 = 0: logarithmic coefficient vanished".into(),
        ));
    }
    let t3 = e4 / e1;
    if t3 == 0.0 {
        return Err(Error::SingularReparameterization(
            "eta_4/eta_1 = 0: exponential rate coordinate vanished".into(),
        ));
    }
    Ok(([e1, e2, t3, e3 / t3], e5))
}

/// Which coefficient map an estimator runs through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// Linear regression: the map is the identity on ℝ^p.
    Identity(usize),
    /// Full-model coefficients in η coordinates (ℝ⁴ → ℝ⁵).
    FullModel,
    /// Sinusoid-construction coefficients in η coordinates (ℝ⁵ → ℝ⁶).
    Sinusoid,
}

/// A coefficient map with its mixing matrix and positivity margin — the
/// package the nonlinear estimator and the monotonizability check both
/// consume.
#[derive(Debug, Clone)]
pub struct ParamMap {
    pub kind: MapKind,
    /// Required margin in T∇c + (∇c)ᵀTᵀ ⪰ ρI; both built-in maps achieve
    /// exactly 2, so 1 leaves headroom for sampling on odd domains.
    pub rho: f64,
}

impl ParamMap {
    pub fn identity(p: usize) -> Self {
        ParamMap { kind: MapKind::Identity(p), rho: 1.0 }
    }

    pub fn full_model() -> Self {
        ParamMap { kind: MapKind::FullModel, rho: 1.0 }
    }

    pub fn sinusoid() -> Self {
        ParamMap { kind: MapKind::Sinusoid, rho: 1.0 }
    }

    /// Input dimension q (estimation coordinates).
    pub fn q(&self) -> usize {
        match self.kind {
            MapKind::Identity(p) => p,
            MapKind::FullModel => 4,
            MapKind::Sinusoid => 5,
        }
    }

    /// Output dimension p (regression coefficients).
    pub fn p(&self) -> usize {
        match self.kind {
            MapKind::Identity(p) => p,
            MapKind::FullModel => 5,
            MapKind::Sinusoid => 6,
        }
    }

    /// True where the map (and its Jacobian) is defined.
    pub fn domain_ok(&self, eta: &[f64]) -> bool {
        match self.kind {
            MapKind::Identity(_) | MapKind::FullModel => true,
            MapKind::Sinusoid => eta[0] != 0.0,
        }
    }

    pub fn eval(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(eta)?;
        Ok(match self.kind {
            MapKind::Identity(_) => eta.to_vec(),
            MapKind::FullModel => coeffs_from_eta(eta.try_into().unwrap()).to_vec(),
            MapKind::Sinusoid => sin_coeffs_from_eta(eta.try_into().unwrap())?.to_vec(),
        })
    }

    /// Analytic Jacobian ∂c/∂η, p × q.
    pub fn jacobian(&self, eta: &[f64]) -> Result<Mat> {
        self.check_dim(eta)?;
        match self.kind {
            MapKind::Identity(p) => Ok(Mat::identity(p)),
            MapKind::FullModel => {
                let [e1, e2, _, _] = <[f64; 4]>::try_from(eta).unwrap();
                Ok(Mat::from_rows(&[
                    vec![1.0, 0.0, 0.0, 0.0],
                    vec![0.0, 1.0, 0.0, 0.0],
                    vec![e2, e1, 0.0, 0.0],
                    vec![0.0, 0.0, 1.0, 0.0],
                    vec![0.0, 0.0, 0.0, 1.0],
                ]))
            }
            MapKind::Sinusoid => {
                let [e1, e2, _, e4, _] = <[f64; 5]>::try_from(eta).unwrap();
                if e1 == 0.0 {
                    return Err(Error::SingularReparameterization(
                        "eta_1 = 0: Jacobian of the sinusoid map undefined".into(),
                    ));
                }
                Ok(Mat::from_rows(&[
                    vec![1.0, 0.0, 0.0, 0.0, 0.0],
                    vec![0.0, 1.0, 0.0, 0.0, 0.0],
                    vec![0.0, 0.0, 1.0, 0.0, 0.0],
                    vec![0.0, 0.0, 0.0, 1.0, 0.0],
                    vec![-e2 * e4 / (e1 * e1), e4 / e1, 0.0, e2 / e1, 0.0],
                    vec![0.0, 0.0, 0.0, 0.0, 1.0],
                ]))
            }
        }
    }

    /// The mixing matrix T ∈ ℝ^{q×p}: a row selection that makes T·c(η) = η,
    /// hence T∇c ≡ I on the map's domain.
    pub fn t_mix(&self) -> Mat {
        let rows: &[usize] = match self.kind {
            MapKind::Identity(p) => return Mat::identity(p),
            // Picks (η₁, η₂, ·, η₃, η₄) out of (η₁, η₂, η₁η₂, η₃, η₄).
            MapKind::FullModel => &[0, 1, 3, 4],
            // Picks the five pure-coordinate rows out of the six outputs.
            MapKind::Sinusoid => &[0, 1, 2, 3, 5],
        };
        let mut t = Mat::zeros(self.q(), self.p());
        for (i, &r) in rows.iter().enumerate() {
            t[(i, r)] = 1.0;
        }
        t
    }

    /// Sampled monotonizability check over a list of coordinate points.
    pub fn check_monotonizability(&self, samples: &[Vec<f64>]) -> Result<MonotonizabilityReport> {
        let t = self.t_mix();
        let jac = |eta: &[f64]| self.jacobian(eta);
        check_monotonizability_with(&t, jac, self.rho, samples)
    }

    fn check_dim(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.q() {
            return Err(Error::Dimension(format!(
                "map expects {} coordinates, got {}",
                self.q(),
                eta.len()
            )));
        }
        Ok(())
    }
}

/// Result of a sampled matrix-inequality check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonizabilityReport {
    /// Minimum over samples of the smallest eigenvalue of T∇c + (∇c)ᵀTᵀ.
    pub min_eigenvalue: f64,
    /// Required margin ρ.
    pub rho: f64,
    pub pass: bool,
    pub samples_checked: usize,
    pub samples_skipped_out_of_domain: usize,
}

/// Lower-level form of the check for arbitrary Jacobian callbacks: returns
/// the worst-case smallest eigenvalue of the symmetrized mixed Jacobian over
/// the sample set. Samples where the Jacobian is undefined are skipped and
/// counted.
pub fn check_monotonizability_with<J>(
    t: &Mat,
    jac: J,
    rho: f64,
    samples: &[Vec<f64>],
) -> Result<MonotonizabilityReport>
where
    J: Fn(&[f64]) -> Result<Mat>,
{
    if samples.is_empty() {
        return Err(Error::Config("monotonizability check needs at least one sample".into()));
    }
    let q = t.rows();
    let mut min_eig = f64::INFINITY;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for eta in samples {
        let j = match jac(eta) {
            Ok(j) => j,
            Err(Error::SingularReparameterization(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if j.rows() != t.cols() || j.cols() != q {
            return Err(Error::Dimension(format!(
                "mixing matrix {}x{} incompatible with Jacobian {}x{}",
                q,
                t.cols(),
                j.rows(),
                j.cols()
            )));
        }
        let m = t.matmul(&j);
        let s = m.transpose().add_scaled(&m, 1.0);
        let eigs = crate::linalg::sym_eigenvalues(&s);
        min_eig = min_eig.min(eigs[0]);
        checked += 1;
    }
    if checked == 0 {
        return Err(Error::Config(
            "monotonizability check: every sample fell outside the map's domain".into(),
        ));
    }
    Ok(MonotonizabilityReport {
        min_eigenvalue: min_eig,
        rho,
        pass: min_eig >= rho,
        samples_checked: checked,
        samples_skipped_out_of_domain: skipped,
    })
}
