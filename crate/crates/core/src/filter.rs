//! First-order LTI filter blocks with fixed-step RK4 integration.
//!
//! Every block used by the regressor constructions is a chain of first-order
//! stages, each realized in state space as
//!
//! ```text
//!   x' = a x + b v,     z = c x + d v
//! ```
//!
//! The four primitives and their transfer functions:
//!
//! * low-pass        λ/(p+λ)    — a=-λ, b=λ,    c=1, d=0
//! * high-pass gain  λp/(p+λ)   — a=-λ, b=-λ²,  c=1, d=λ
//! * dirty derivative p/(τp+1)  — the high-pass gain with λ = 1/τ
//! * leaky integrator 1/(p+λ)   — a=-λ, b=1,    c=1, d=0
//!
//! The high-pass realization never differentiates its input: the derivative
//! lives entirely in the feedthrough term, which is what makes chains of
//! these blocks usable on measured signals.
//!
//! A cascade keeps its stages separate and integrates them as one joint ODE,
//! so the composition retains full fourth-order accuracy. `step` takes the
//! input at the step endpoints *and midpoint* — the classical RK4 stage
//! inputs — which callers obtain by sampling sources on a half-step lattice.

/// Which transfer function a [`Filter`] realizes; informational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    LowPass,
    HighPassGain,
    DirtyDerivative,
    LeakyIntegrator,
    Cascade,
}

#[derive(Debug, Clone)]
struct Stage {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    x: f64,
    /// True for high-pass style stages whose zero-output state is -b/a·... a
    /// function of the first input rather than zero.
    feedthrough: bool,
}

impl Stage {
    fn output(&self, v: f64) -> f64 {
        self.c * self.x + self.d * v
    }
}

/// A chain of first-order stages stepped as one ODE system.
#[derive(Debug, Clone)]
pub struct Filter {
    kind: FilterKind,
    stages: Vec<Stage>,
    /// Previous input seen by [`Filter::step_uniform`], for midpoint interpolation.
    last_input: Option<f64>,
}

impl Filter {
    /// λ/(p+λ): unity DC gain, pole at λ.
    pub fn lowpass(lambda: f64) -> Self {
        assert!(lambda > 0.0, "lowpass: lambda must be positive");
        Filter {
            kind: FilterKind::LowPass,
            stages: vec![Stage { a: -lambda, b: lambda, c: 1.0, d: 0.0, x: 0.0, feedthrough: false }],
            last_input: None,
        }
    }

    /// λp/(p+λ): derivative followed by the unity-gain low-pass, realized
    /// without differentiating the input.
    pub fn highpass_gain(lambda: f64) -> Self {
        assert!(lambda > 0.0, "highpass_gain: lambda must be positive");
        Filter {
            kind: FilterKind::HighPassGain,
            stages: vec![Stage {
                a: -lambda,
                b: -lambda * lambda,
                c: 1.0,
                d: lambda,
                x: 0.0,
                feedthrough: true,
            }],
            last_input: None,
        }
    }

    /// p/(τp+1): approximate differentiator with time constant τ. Since
    /// p/(τp+1) = λp/(p+λ) with λ = 1/τ, this is the high-pass gain block
    /// coefficient for coefficient.
    pub fn dirty_derivative(tau: f64) -> Self {
        assert!(tau > 0.0, "dirty_derivative: tau must be positive");
        let lambda = 1.0 / tau;
        let mut f = Filter::highpass_gain(lambda);
        f.kind = FilterKind::DirtyDerivative;
        f
    }

    /// 1/(p+λ): integrator with leakage λ; DC gain 1/λ.
    pub fn leaky_integrator(lambda: f64) -> Self {
        assert!(lambda > 0.0, "leaky_integrator: lambda must be positive");
        Filter {
            kind: FilterKind::LeakyIntegrator,
            stages: vec![Stage { a: -lambda, b: 1.0, c: 1.0, d: 0.0, x: 0.0, feedthrough: false }],
            last_input: None,
        }
    }

    /// Series composition: `self` feeds `next`. λ²/(p+λ)² is
    /// `lowpass(λ).cascade(lowpass(λ))`; λ/(p+λ)² swaps one factor for a
    /// leaky integrator.
    pub fn cascade(mut self, mut next: Filter) -> Self {
        self.stages.append(&mut next.stages);
        Filter { kind: FilterKind::Cascade, stages: self.stages, last_input: None }
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    /// Number of state variables in the chain.
    pub fn order(&self) -> usize {
        self.stages.len()
    }

    /// Zero every stage state. High-pass blocks then emit λ·v until the
    /// startup transient decays.
    pub fn reset_zero(&mut self) {
        for s in &mut self.stages {
            s.x = 0.0;
        }
        self.last_input = None;
    }

    /// Overwrite the internal state vector (length must equal [`Filter::order`]).
    pub fn set_state(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.stages.len(), "set_state: wrong length");
        for (s, xi) in self.stages.iter_mut().zip(x) {
            s.x = *xi;
        }
    }

    /// Choose initial states so the chain's output starts at exactly zero for
    /// first input `v0`: pure-state stages start at zero, feedthrough stages
    /// cancel their feedthrough. This removes the startup transient from the
    /// regression identities built on these blocks.
    pub fn init_zero_output(&mut self, v0: f64) {
        let mut w = v0;
        for s in &mut self.stages {
            s.x = if s.feedthrough { -s.d / s.c * w } else { 0.0 };
            w = s.output(w);
        }
        self.last_input = Some(v0);
    }

    /// The input value recorded at the current time, if any — set by
    /// [`Filter::init_zero_output`] and by every step.
    pub fn last_input(&self) -> Option<f64> {
        self.last_input
    }

    /// Record the input at the current time without touching the state.
    /// Callers that initialize states by hand use this so interpolating
    /// steppers know the step-start input.
    pub fn set_last_input(&mut self, v: f64) {
        self.last_input = Some(v);
    }

    /// Output at the current state for input value `v`.
    pub fn output(&self, v: f64) -> f64 {
        let mut w = v;
        for s in &self.stages {
            w = s.output(w);
        }
        w
    }

    /// Chain right-hand side: writes dx and returns nothing; outputs are
    /// evaluated separately. `xs` is the trial state vector.
    fn rhs(&self, xs: &[f64], v: f64, dx: &mut [f64]) {
        let mut w = v;
        for (i, s) in self.stages.iter().enumerate() {
            dx[i] = s.a * xs[i] + s.b * w;
            w = s.c * xs[i] + s.d * w;
        }
    }

    /// Advance one RK4 step of size `h`. `v0`, `vm`, `v1` are the input at
    /// the step start, midpoint and end. Returns the output at the step end.
    pub fn step(&mut self, h: f64, v0: f64, vm: f64, v1: f64) -> f64 {
        let n = self.stages.len();
        let mut x0 = vec![0.0; n];
        for (i, s) in self.stages.iter().enumerate() {
            x0[i] = s.x;
        }
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut xt = vec![0.0; n];

        self.rhs(&x0, v0, &mut k1);
        for i in 0..n {
            xt[i] = x0[i] + 0.5 * h * k1[i];
        }
        self.rhs(&xt, vm, &mut k2);
        for i in 0..n {
            xt[i] = x0[i] + 0.5 * h * k2[i];
        }
        self.rhs(&xt, vm, &mut k3);
        for i in 0..n {
            xt[i] = x0[i] + h * k3[i];
        }
        self.rhs(&xt, v1, &mut k4);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.x = x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.last_input = Some(v1);
        self.output(v1)
    }

    /// Advance one step given only the new endpoint sample: the midpoint is
    /// interpolated from the previous input, which costs two orders of
    /// accuracy (the step is then second-order). Use [`Filter::step`] with
    /// true midpoint samples where fourth-order accuracy matters.
    pub fn step_uniform(&mut self, dt: f64, v: f64) -> f64 {
        let v0 = self.last_input.unwrap_or(v);
        self.step(dt, v0, 0.5 * (v0 + v), v)
    }

    /// Run a whole uniformly sampled input through the filter. `half_grid`
    /// holds samples at spacing `dt/2` (so `2N+1` values for `N` steps);
    /// returns the `N+1` outputs on the coarse grid.
    pub fn run_half_grid(&mut self, dt: f64, half_grid: &[f64]) -> Vec<f64> {
        assert!(half_grid.len() % 2 == 1, "need 2N+1 half-grid samples");
        let n = (half_grid.len() - 1) / 2;
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.output(half_grid[0]));
        for k in 0..n {
            out.push(self.step(dt, half_grid[2 * k], half_grid[2 * k + 1], half_grid[2 * k + 2]));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_half_grid(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..=2 * n).map(|i| f(i as f64 * dt / 2.0)).collect()
    }

    #[test]
    fn lowpass_step_response_matches_closed_form() {
        let lambda = 80.0;
        let dt = 1e-3;
        let n = 200;
        let mut f = Filter::lowpass(lambda);
        let out = f.run_half_grid(dt, &vec![1.0; 2 * n + 1]);
        for (k, z) in out.iter().enumerate() {
            let t = k as f64 * dt;
            let want = 1.0 - (-lambda * t).exp();
            assert!((z - want).abs() < 1e-3 * 1.0, "t={t}: {z} vs {want}");
        }
        // DC gain: settled output is 1.
        assert!((out[n] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn highpass_annihilates_constants_with_zero_output_init() {
        let mut f = Filter::highpass_gain(80.0);
        f.init_zero_output(3.5);
        let out = f.run_half_grid(1e-3, &vec![3.5; 401]);
        for z in out {
            assert!(z.abs() < 1e-12, "constant leaked through: {z}");
        }
    }

    #[test]
    fn highpass_step_response_from_zero_state() {
        // λp/(p+λ) on a unit step from zero state: z(t) = λ e^{-λt}.
        let lambda = 1.0;
        let dt = 1e-3;
        let n = 1500;
        let mut f = Filter::highpass_gain(lambda);
        let out = f.run_half_grid(dt, &vec![1.0; 2 * n + 1]);
        let t = 1.0;
        let z = out[(t / dt) as usize];
        let want = lambda * (-lambda * t).exp();
        assert!((z - want).abs() / want < 1e-3, "{z} vs {want}");
    }

    #[test]
    fn dirty_derivative_is_highpass_gain_bit_for_bit() {
        let tau = 0.01;
        let mut a = Filter::dirty_derivative(tau);
        let mut b = Filter::highpass_gain(1.0 / tau);
        let dt = 1e-3;
        let input = sample_half_grid(dt, 300, |t| (2.0 * t).sin() + 0.3 * t);
        let za = a.run_half_grid(dt, &input);
        let zb = b.run_half_grid(dt, &input);
        assert_eq!(za, zb);
    }

    #[test]
    fn dirty_derivative_tracks_ramp_slope() {
        let tau = 0.01;
        let dt = 1e-3;
        let n = 2000;
        let mut f = Filter::dirty_derivative(tau);
        f.init_zero_output(0.0);
        let input = sample_half_grid(dt, n, |t| 2.5 * t);
        let out = f.run_half_grid(dt, &input);
        // After several time constants the estimate settles on the slope.
        assert!((out[n] - 2.5).abs() < 1e-6, "{}", out[n]);
    }

    #[test]
    fn dirty_derivative_of_sine_has_first_order_lag_error() {
        // p/(τp+1) on sin(ωt) settles to the true derivative within O(ωτ).
        let tau = 0.01;
        let omega = 2.0;
        let dt = 1e-3;
        let n = 5000;
        let mut f = Filter::dirty_derivative(tau);
        f.init_zero_output(0.0);
        let input = sample_half_grid(dt, n, |t| (omega * t).sin());
        let out = f.run_half_grid(dt, &input);
        let mut worst: f64 = 0.0;
        for k in n / 2..=n {
            let t = k as f64 * dt;
            worst = worst.max((out[k] - omega * (omega * t).cos()).abs());
        }
        let bound = 2.0 * omega * omega * tau; // first-order lag error scale
        assert!(worst < bound, "worst {worst} vs bound {bound}");
        assert!(worst > 0.2 * omega * omega * tau, "suspiciously exact: {worst}");
    }

    #[test]
    fn lowpass_sine_steady_state_gain_and_phase() {
        // At ω = λ the gain is 1/√2 and the phase lag 45°.
        let lambda = 10.0;
        let dt = 1e-3;
        let n = 10_000;
        let mut f = Filter::lowpass(lambda);
        let input = sample_half_grid(dt, n, |t| (lambda * t).sin());
        let out = f.run_half_grid(dt, &input);
        let gain = 1.0 / 2.0_f64.sqrt();
        let phase = std::f64::consts::FRAC_PI_4;
        for k in (n - 1000)..=n {
            let t = k as f64 * dt;
            let want = gain * (lambda * t - phase).sin();
            assert!((out[k] - want).abs() < 1e-3, "t={t}");
        }
    }

    #[test]
    fn leaky_integrator_step_response() {
        let lambda = 5.0;
        let dt = 1e-3;
        let n = 3000;
        let mut f = Filter::leaky_integrator(lambda);
        let out = f.run_half_grid(dt, &vec![1.0; 2 * n + 1]);
        for k in [100, 500, 1500, 3000] {
            let t = k as f64 * dt;
            let want = (1.0 - (-lambda * t).exp()) / lambda;
            assert!((out[k] - want).abs() < 1e-3 / lambda, "t={t}");
        }
    }

    #[test]
    fn double_lowpass_cascade_matches_closed_form() {
        // λ²/(p+λ)² step response: 1 - e^{-λt}(1 + λt).
        let lambda = 40.0;
        let dt = 1e-3;
        let n = 500;
        let mut f = Filter::lowpass(lambda).cascade(Filter::lowpass(lambda));
        assert_eq!(f.kind(), FilterKind::Cascade);
        assert_eq!(f.order(), 2);
        let out = f.run_half_grid(dt, &vec![1.0; 2 * n + 1]);
        for k in [50, 100, 250, 500] {
            let t = k as f64 * dt;
            let want = 1.0 - (-lambda * t).exp() * (1.0 + lambda * t);
            assert!((out[k] - want).abs() < 1e-3, "t={t}: {} vs {want}", out[k]);
        }
    }

    #[test]
    fn lowpass_integrator_cascade_matches_closed_form() {
        // λ/(p+λ)² step response: (1 - e^{-λt}(1 + λt))/λ.
        let lambda = 40.0;
        let dt = 1e-3;
        let n = 500;
        let mut f = Filter::lowpass(lambda).cascade(Filter::leaky_integrator(lambda));
        let out = f.run_half_grid(dt, &vec![1.0; 2 * n + 1]);
        for k in [50, 250, 500] {
            let t = k as f64 * dt;
            let want = (1.0 - (-lambda * t).exp() * (1.0 + lambda * t)) / lambda;
            assert!((out[k] - want).abs() < 1e-3 / lambda, "t={t}");
        }
    }

    #[test]
    fn rk4_error_drops_at_fourth_order_under_step_halving() {
        // Global error against the exact low-pass response of a sine input
        // must shrink by at least 8x (nominally 16x) when dt is halved.
        let lambda = 30.0;
        let omega = 5.0;
        let t_end: f64 = 1.0;
        // Reference: the same trajectory at a step fine enough that its own
        // error is negligible next to the coarse runs under test.
        let reference = {
            let dt = 1e-5;
            let n = (t_end / dt).round() as usize;
            let mut f = Filter::lowpass(lambda);
            let input = sample_half_grid(dt, n, |t| (omega * t).sin());
            *f.run_half_grid(dt, &input).last().unwrap()
        };
        let err_at = |dt: f64| {
            let n = (t_end / dt).round() as usize;
            let mut f = Filter::lowpass(lambda);
            let input = sample_half_grid(dt, n, |t| (omega * t).sin());
            (*f.run_half_grid(dt, &input).last().unwrap() - reference).abs()
        };
        let e1 = err_at(2e-3);
        let e2 = err_at(1e-3);
        assert!(e1 / e2 >= 8.0, "order loss: e(2dt)={e1:.3e}, e(dt)={e2:.3e}, ratio {}", e1 / e2);
    }

    #[test]
    fn highpass_equals_lowpassed_exact_derivative() {
        // λp/(p+λ)(v) and λ/(p+λ)(v̇) satisfy the same ODE from matching
        // initial conditions; the two realizations agree to integration
        // accuracy on a smooth input.
        let lambda = 20.0;
        let dt = 1e-3;
        let n = 2000;
        let v = |t: f64| (3.0 * t).sin() + 0.5 * (0.7 * t).cos();
        let vdot = |t: f64| 3.0 * (3.0 * t).cos() - 0.35 * (0.7 * t).sin();
        let mut hp = Filter::highpass_gain(lambda);
        hp.init_zero_output(v(0.0));
        let a = hp.run_half_grid(dt, &sample_half_grid(dt, n, v));
        let mut lp = Filter::lowpass(lambda);
        // v̇(0) low-passed from zero state starts at 0 too.
        let b = lp.run_half_grid(dt, &sample_half_grid(dt, n, vdot));
        for k in 0..=n {
            assert!((a[k] - b[k]).abs() < 1e-8, "k={k}: {} vs {}", a[k], b[k]);
        }
    }

    #[test]
    fn lowpass_converges_to_dc_at_rate_lambda() {
        // From an arbitrary state, constant input: |z - c| decays like
        // e^{-λt}. Fit the rate over a decade and demand 5% agreement.
        let lambda = 12.0;
        let dt = 1e-3;
        let mut f = Filter::lowpass(lambda);
        f.set_state(&[4.0]);
        let c = 1.5;
        let mut log_errs = Vec::new();
        let mut times = Vec::new();
        let mut t = 0.0;
        for _ in 0..300 {
            let z = f.step(dt, c, c, c);
            t += dt;
            let e = (z - c).abs();
            if e > 1e-9 {
                times.push(t);
                log_errs.push(e.ln());
            }
        }
        // Least-squares slope of ln|e| vs t.
        let n = times.len() as f64;
        let sx: f64 = times.iter().sum();
        let sy: f64 = log_errs.iter().sum();
        let sxx: f64 = times.iter().map(|x| x * x).sum();
        let sxy: f64 = times.iter().zip(&log_errs).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope + lambda).abs() < 0.05 * lambda,
            "decay rate {slope} vs -{lambda}"
        );
    }

    #[test]
    fn step_uniform_is_second_order() {
        // Interpolated-midpoint stepping: error ratio under halving ≈ 4.
        let lambda = 30.0;
        let omega = 5.0;
        let t_end: f64 = 1.0;
        let run = |dt: f64| {
            let n = (t_end / dt) as usize;
            let mut f = Filter::lowpass(lambda);
            let mut z = f.output(0.0);
            for k in 1..=n {
                z = f.step_uniform(dt, (omega * k as f64 * dt).sin());
            }
            z
        };
        let reference = run(1e-5);
        let e1 = (run(4e-3) - reference).abs();
        let e2 = (run(2e-3) - reference).abs();
        let ratio = e1 / e2;
        assert!((2.5..8.0).contains(&ratio), "expected ~4, got {ratio} ({e1:.3e}/{e2:.3e})");
    }

    #[test]
    fn cascade_zero_output_init_handles_leading_highpass() {
        let mut f = Filter::highpass_gain(15.0).cascade(Filter::lowpass(15.0));
        f.init_zero_output(7.0);
        assert!(f.output(7.0).abs() < 1e-12);
        // And a constant input keeps it at zero.
        let out = f.run_half_grid(1e-3, &vec![7.0; 201]);
        for z in out {
            assert!(z.abs() < 1e-12);
        }
    }
}
