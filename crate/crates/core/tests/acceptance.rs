//! Acceptance suite: one test per headline property of the estimation
//! stack, each at its stated tolerance, each ending in a single summary
//! line (visible with `--nocapture`; the test name itself is the pass/fail
//! line otherwise).

use std::time::Instant;

use polcurve::diagnostics;
use polcurve::estimator::{batch_ls, estimate_a_power_law, estimate_theta5};
use polcurve::harness::{
    self, compare_curves, fit_all_sweep, preset, sweep_model, EstimatorConfig, EstimatorKind,
    RunConfig, DEFAULT_INTERVALS,
};
use polcurve::io;
use polcurve::maps::{self, ParamMap};
use polcurve::model::{eval_m1, eval_m2, eval_m3, eval_m4, ModelSpec, ReducedParams, ThetaFull, ThetaM4};
use polcurve::regressor::{
    run_half_grid, DerivativeSource, InitPolicy, M1Pipeline, M2Pipeline, M3Pipeline, M4Pipeline,
    Node, Pipeline, RegressorSample, SinusoidPipeline,
};
use polcurve::signal::{FourierTerm, SignalSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

fn synth_nodes<F>(spec: &SignalSpec, dt: f64, t_end: f64, mut voltage: F) -> Vec<Node>
where
    F: FnMut(f64) -> f64,
{
    let n = (t_end / dt).round() as usize;
    (0..=2 * n)
        .map(|j| {
            let t = j as f64 * dt / 2.0;
            let u = spec.value(t);
            Node { t, u, y: voltage(u), u_dot: Some(spec.derivative(t)) }
        })
        .collect()
}

/// Sup over t ≥ t_min of |Y − φᵀc|, relative to max |Y|.
fn identity_residual(samples: &[RegressorSample], coeffs: &[f64], t_min: f64) -> f64 {
    let scale = samples.iter().fold(0.0f64, |m, s| m.max(s.y.abs()));
    assert!(scale > 0.0, "degenerate stream: Y identically zero");
    let mut worst = 0.0f64;
    for s in samples.iter().filter(|s| s.t >= t_min) {
        let predicted: f64 = s.phi.iter().zip(coeffs).map(|(p, c)| p * c).sum();
        worst = worst.max((s.y - predicted).abs());
    }
    worst / scale
}

fn pulse_10_20_2hz() -> SignalSpec {
    SignalSpec::PulseTrain { low: 10.0, high: 20.0, frequency_hz: 2.0, start_low: false }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den
}

// ---------------------------------------------------------------------------
// 1. regression identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_regression_identities() {
    let dt = 1e-3;
    let horizon = 60.0;
    let lambda = 80.0;
    let settle = 5.0 / lambda;
    let mut lines = Vec::new();

    // Full model, filtered construction with exact input derivative.
    let t0 = Instant::now();
    let theta = ThetaFull::benchmark();
    let rich = SignalSpec::FourierSum {
        offset: 25.0,
        terms: vec![
            FourierTerm { amplitude: 20.0 / std::f64::consts::PI, omega: 0.2 * std::f64::consts::PI },
            FourierTerm { amplitude: 20.0 / (3.0 * std::f64::consts::PI), omega: 0.6 * std::f64::consts::PI },
            FourierTerm { amplitude: 4.0 / std::f64::consts::PI, omega: std::f64::consts::PI },
        ],
    };
    let nodes = synth_nodes(&rich, dt, horizon, |u| eval_m1(&theta, u).unwrap());
    let mut pipe = Pipeline::M1(M1Pipeline::new(lambda, DerivativeSource::Exact, InitPolicy::ZeroOutput));
    let samples = run_half_grid(&mut pipe, dt, &nodes).unwrap();
    let r = identity_residual(&samples, &maps::coeffs_from_theta(&theta.head4()), settle);
    let dt_m1 = t0.elapsed().as_secs_f64();
    assert!(r < 1e-3, "full-model identity residual {r}");
    assert!(dt_m1 < 10.0, "full-model identity took {dt_m1:.1} s");
    lines.push(format!("m1 {r:.2e}"));

    // Exponential model, algebraic.
    let t0 = Instant::now();
    let m2 = ReducedParams { e_oc: 42.0, a: 10.3136, b: 0.0151 };
    let nodes = synth_nodes(&pulse_10_20_2hz(), dt, horizon, |u| eval_m2(&m2, u));
    let mut pipe = Pipeline::M2(M2Pipeline::new(m2.e_oc));
    let samples = run_half_grid(&mut pipe, dt, &nodes).unwrap();
    let r = identity_residual(&samples, &[m2.a.ln(), m2.b], 0.0);
    let dt_m2 = t0.elapsed().as_secs_f64();
    assert!(r < 1e-10, "exponential-model identity residual {r}");
    assert!(dt_m2 < 10.0);
    lines.push(format!("m2 {r:.2e}"));

    // Power law, filtered.
    let t0 = Instant::now();
    let m3 = ReducedParams { e_oc: 42.0, a: 7.2641, b: 0.2178 };
    let nodes = synth_nodes(&pulse_10_20_2hz(), dt, horizon, |u| eval_m3(&m3, u).unwrap());
    let mut pipe = Pipeline::M3(M3Pipeline::new(lambda, m3.e_oc, InitPolicy::ZeroOutput));
    let samples = run_half_grid(&mut pipe, dt, &nodes).unwrap();
    let r = identity_residual(&samples, &[m3.b], settle);
    let dt_m3 = t0.elapsed().as_secs_f64();
    assert!(r < 1e-3, "power-law identity residual {r}");
    assert!(dt_m3 < 10.0);
    lines.push(format!("m3 {r:.2e}"));

    // Logarithmic model, algebraic.
    let t0 = Instant::now();
    let m4 = ThetaM4 { theta1: -1.9271, theta2: -0.0619, theta6: 35.0619 };
    let nodes = synth_nodes(&pulse_10_20_2hz(), dt, horizon, |u| eval_m4(&m4, u).unwrap());
    let mut pipe = Pipeline::M4(M4Pipeline::new());
    let samples = run_half_grid(&mut pipe, dt, &nodes).unwrap();
    let r = identity_residual(&samples, &m4.as_array(), 0.0);
    let dt_m4 = t0.elapsed().as_secs_f64();
    assert!(r < 1e-10, "logarithmic-model identity residual {r}");
    assert!(dt_m4 < 10.0);
    lines.push(format!("m4 {r:.2e}"));

    // Derivative-free sinusoid construction.
    let t0 = Instant::now();
    let omega = 0.2 * std::f64::consts::PI;
    let sine = SignalSpec::Sine { offset: 25.0, amplitude: 5.0, frequency_hz: 0.1, phase_rad: 0.0 };
    let nodes = synth_nodes(&sine, dt, horizon, |u| eval_m1(&theta, u).unwrap());
    let mut pipe = Pipeline::Sinusoid(SinusoidPipeline::new(lambda, 25.0, InitPolicy::ZeroOutput));
    let samples = run_half_grid(&mut pipe, dt, &nodes).unwrap();
    let c = maps::sin_coeffs_from_theta(&theta.head4(), theta.theta3 * omega * omega);
    let r = identity_residual(&samples, &c, settle);
    let dt_sin = t0.elapsed().as_secs_f64();
    assert!(r < 1e-3, "sinusoid-construction identity residual {r}");
    assert!(dt_sin < 10.0);
    lines.push(format!("sinusoid {r:.2e}"));

    println!("criterion 1 PASS — identity residuals: {}", lines.join(", "));
}

// ---------------------------------------------------------------------------
// 2. closure convergence with exponential envelopes
// ---------------------------------------------------------------------------

fn assert_convergent(name: &str, config: &RunConfig, lines: &mut Vec<String>) {
    let t0 = Instant::now();
    let out = harness::run(config).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let rel = out.report.final_relative_error.unwrap();
    let env = out
        .report
        .envelope
        .as_ref()
        .unwrap_or_else(|| panic!("{name}: no envelope fit (errors trace too flat)"));
    assert!(rel < 1e-3, "{name}: final relative error {rel}");
    assert!(env.rate > 0.0, "{name}: envelope rate {}", env.rate);
    assert!(env.r_squared > 0.95, "{name}: envelope R² {}", env.r_squared);
    assert!(wall < 30.0, "{name}: run took {wall:.1} s");
    lines.push(format!(
        "{name} rel {rel:.1e} rate {:.2e}/s R² {:.3} wall {wall:.1}s",
        env.rate, env.r_squared
    ));
}

#[test]
fn criterion_02_closure_convergence() {
    let mut lines = Vec::new();

    // Least squares on the exponential model, gains moderated so the
    // exponential decay phase is the visible segment.
    let mut m2 = preset("m2-sim").unwrap();
    m2.estimator.as_mut().unwrap().gamma = vec![3.0, 3.0];
    assert_convergent("lsd-m2", &m2, &mut lines);

    // Least squares on the power law.
    let mut m3 = preset("m3-sim").unwrap();
    m3.estimator.as_mut().unwrap().gamma = vec![6.0];
    assert_convergent("lsd-m3", &m3, &mut lines);

    // Least squares on the logarithmic model (smoothed pulse edges carry
    // the third regressor direction).
    let mut m4 = preset("m4-sim").unwrap();
    m4.estimator.as_mut().unwrap().gamma = vec![3.0, 3.0, 3.0];
    assert_convergent("lsd-m4", &m4, &mut lines);

    // Gradient on the logarithmic model: power-matched diagonal gains, long
    // horizon, streaming run.
    let mut grad = preset("m4-sim").unwrap();
    grad.dt = 5e-3;
    grad.duration = 60_000.0;
    grad.diagnostics = Default::default();
    grad.diagnostics.excitation = harness::ExcitationMode::Off;
    grad.estimator = Some(EstimatorConfig {
        kind: EstimatorKind::Gradient,
        gamma0: None,
        f0: None,
        gamma: vec![8.0, 1.11, 0.034],
        eta0: None,
        w0: None,
        debug_trace: false,
    });
    assert_convergent("gradient-m4", &grad, &mut lines);

    println!("criterion 2 PASS — {}", lines.join("; "));
}

// ---------------------------------------------------------------------------
// 3. full-model unidentifiability on both dependence test signals
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_full_model_negative_result() {
    let t0 = Instant::now();
    let mut lines = Vec::new();

    // Control: a five-function family that is genuinely independent
    // (constant + two harmonic pairs) keeps its normalized derivative-stack
    // determinant at a fixed O(1e-2) level on the same grid. The regressor's
    // settled level is compared against that floor: the literal
    // settled-vs-own-peak ratio is uninformative here because the regressor
    // never produces an appreciable determinant even during the transient.
    let dt = 5e-3;
    let control = diagnostics::harmonic_basis_stream(
        &[0.2 * std::f64::consts::PI, 0.6 * std::f64::consts::PI],
        dt,
        8001,
    );
    let control_series = diagnostics::wronskian_determinant(&control, dt).unwrap();
    let control_floor = control_series
        .det_normalized
        .iter()
        .fold(f64::INFINITY, |m, d| m.min(d.abs()));
    assert!(control_floor > 1e-3, "independent control family floor {control_floor}");

    for name in ["m1-lindep-test1", "m1-lindep-test2"] {
        let out = harness::run(&preset(name).unwrap()).unwrap();
        let report = &out.report;

        // (a) The normalized determinant of the regressor collapses: its
        // settled level sits many decades below the independent control.
        let wr = report.wronskian.as_ref().unwrap();
        let settled = wr.settled_max_normalized.unwrap();
        let vs_control = settled / control_floor;
        assert!(
            vs_control < 1e-6,
            "{name}: settled normalized determinant {settled:.2e} is {vs_control:.2e} of the \
             independent-family floor {control_floor:.2e}"
        );

        // (b) The interval-excitation eigenvalue ratio stays below 1e-6.
        let exc = report.excitation.as_ref().unwrap();
        assert!(!exc.pass, "{name}: excitation check must fail");
        assert!(
            exc.worst_ratio < 1e-6,
            "{name}: min/max eigenvalue ratio {}",
            exc.worst_ratio
        );

        // Informational: the literal settled-vs-own-peak ratio.
        let literal = wr.collapse_ratio.unwrap();
        lines.push(format!(
            "{name} settled {settled:.1e} vs-control {vs_control:.1e} \
             (own-peak ratio {literal:.1e}) eig-ratio {:.1e}",
            exc.worst_ratio
        ));

        // The estimate goes nowhere on such data.
        assert!(report.final_relative_error.unwrap() > 0.5);
    }

    let wall = t0.elapsed().as_secs_f64();
    assert!(wall < 60.0, "negative-result reproduction took {wall:.1} s");
    println!("criterion 3 PASS — {}", lines.join("; "));
}

// ---------------------------------------------------------------------------
// 4. monotonizability certificates
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_monotonizability() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let mut samples = Vec::with_capacity(1000);
    while samples.len() < 1000 {
        let eta: Vec<f64> = (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect();
        if eta[1].abs() > 1e-6 {
            samples.push(eta);
        }
    }
    let report = ParamMap::full_model().check_monotonizability(&samples).unwrap();
    assert!(report.pass, "mixed-Jacobian certificate failed: {report:?}");
    assert_eq!(report.samples_checked, 1000);
    assert!(
        (report.min_eigenvalue - 2.0).abs() <= 1e-9,
        "full-model min eigenvalue {} should be 2.0 exactly",
        report.min_eigenvalue
    );

    let mut samples5 = Vec::with_capacity(1000);
    while samples5.len() < 1000 {
        let eta: Vec<f64> = (0..5).map(|_| rng.gen_range(-10.0..10.0)).collect();
        if eta[0].abs() > 1e-6 {
            samples5.push(eta);
        }
    }
    let report5 = ParamMap::sinusoid().check_monotonizability(&samples5).unwrap();
    assert!(report5.pass, "sinusoid-map certificate failed: {report5:?}");
    assert!(
        report5.min_eigenvalue >= 1.0,
        "sinusoid-map min eigenvalue {}",
        report5.min_eigenvalue
    );

    let wall = t0.elapsed().as_secs_f64();
    assert!(wall < 1.0, "monotonizability checks took {wall:.2} s");
    println!(
        "criterion 4 PASS — full-model min eig {} (=2 ± 1e-9), extended-map min eig {:.3} (≥1), {wall:.2}s",
        report.min_eigenvalue, report5.min_eigenvalue
    );
}

// ---------------------------------------------------------------------------
// 5. algebraic leftovers: exponential coefficient and power-law amplitude
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_algebraic_estimators() {
    let theta = ThetaFull::benchmark();
    let head = theta.head4();

    // Exact inputs give the exponential coefficient to machine precision.
    let mut worst5 = 0.0f64;
    for &u in &[5.0, 12.5, 25.0, 30.0] {
        let y = eval_m1(&theta, u).unwrap();
        let theta5 = estimate_theta5(&head, u, y).unwrap();
        worst5 = worst5.max((theta5 - theta.theta5).abs());
    }
    assert!(worst5 < 1e-12, "exponential-coefficient recovery error {worst5:.2e}");

    // Same for the power-law amplitude given the exact exponent.
    let m3 = ReducedParams { e_oc: 42.0, a: 7.2641, b: 0.2178 };
    let mut worst_a = 0.0f64;
    for &u in &[5.0, 12.5, 25.0, 30.0] {
        let y = eval_m3(&m3, u).unwrap();
        let a = estimate_a_power_law(m3.e_oc, u, y, m3.b).unwrap();
        worst_a = worst_a.max((a - m3.a).abs());
    }
    assert!(worst_a < 1e-12, "power-law amplitude recovery error {worst_a:.2e}");

    // Exponentially converging inputs give an exponentially converging
    // output: with first-four estimates off by e^{-t}, the back-substituted
    // coefficient is within 1e-4 by t = 15 s.
    let spec = SignalSpec::Sine { offset: 25.0, amplitude: 5.0, frequency_hz: 0.1, phase_rad: 0.0 };
    let err_at = |t: f64| -> f64 {
        let d = (-t).exp();
        let perturbed = [head[0] + d, head[1] + d, head[2] + d, head[3] + d];
        let u = spec.value(t);
        let y = eval_m1(&theta, u).unwrap();
        let theta5 = estimate_theta5(&perturbed, u, y).unwrap();
        (theta5 - theta.theta5).abs()
    };
    let (e0, e5, e15) = (err_at(0.0), err_at(5.0), err_at(15.0));
    assert!(e15 < 1e-4, "coefficient error {e15:.2e} at t=15");
    assert!(e15 < e5 && e5 < e0, "error must shrink along the trajectory: {e0:.1e} {e5:.1e} {e15:.1e}");

    println!(
        "criterion 5 PASS — exact coefficient {worst5:.1e}, exact amplitude {worst_a:.1e}, \
         decaying-input error {e15:.1e} at t=15"
    );
}

// ---------------------------------------------------------------------------
// 6. noise robustness across seeds
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_noise_robustness() {
    let t0 = Instant::now();
    let seeds: Vec<u64> = (1..=20).collect();
    let mut lines = Vec::new();

    let cases: Vec<(&str, RunConfig)> = vec![
        ("m2", {
            let mut c = preset("m2-sim").unwrap();
            c.synthesis.as_mut().unwrap().noise_std = 0.05;
            c
        }),
        ("m3", {
            let mut c = preset("m3-sim").unwrap();
            c.synthesis.as_mut().unwrap().noise_std = 0.05;
            c
        }),
        ("m4", {
            let mut c = preset("m4-sim").unwrap();
            c.synthesis.as_mut().unwrap().noise_std = 0.05;
            c
        }),
    ];

    for (name, config) in &cases {
        let outs = harness::monte_carlo(config, &seeds, 0).unwrap();
        let mut worst = 0.0f64;
        for out in &outs {
            let rel = out.report.final_relative_error.unwrap();
            assert!(
                rel < 0.05,
                "{name} seed {}: estimate off by {rel:.3} under 0.05 V noise",
                out.report.seed
            );
            worst = worst.max(rel);
        }
        lines.push(format!("{name} worst {worst:.4}"));
    }

    let wall = t0.elapsed().as_secs_f64();
    assert!(wall < 300.0, "noise sweep took {wall:.0} s");
    println!("criterion 6 PASS — {} over 20 seeds each, {wall:.0}s total", lines.join(", "));
}

// ---------------------------------------------------------------------------
// 7. filter closed forms and integrator order
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_filter_closed_forms() {
    use polcurve::filter::Filter;

    let lambda = 10.0;
    let dt = 1e-3;
    let horizon = 2.0;
    let n = (horizon / dt) as usize;

    // Low-pass step response from rest: 1 − e^{−λt}.
    let mut f = Filter::lowpass(lambda);
    f.reset_zero();
    let mut worst_lp = 0.0f64;
    for k in 1..=n {
        let t = k as f64 * dt;
        let out = f.step(dt, 1.0, 1.0, 1.0);
        worst_lp = worst_lp.max((out - (1.0 - (-lambda * t).exp())).abs());
    }
    assert!(worst_lp < 1e-3, "low-pass step error {worst_lp:.2e}");

    // High-pass-gain step response from rest: λ·e^{−λt}.
    let mut f = Filter::highpass_gain(lambda);
    f.reset_zero();
    let mut worst_hp = 0.0f64;
    for k in 1..=n {
        let t = k as f64 * dt;
        let out = f.step(dt, 1.0, 1.0, 1.0);
        worst_hp = worst_hp.max((out - lambda * (-lambda * t).exp()).abs() / lambda);
    }
    assert!(worst_hp < 1e-3, "high-pass step error {worst_hp:.2e}");

    // Dirty derivative of a sine: steady-state amplitude ω/√(1+τ²ω²),
    // phase lead π/2 − atan(τω).
    let tau = 0.05;
    let omega = 4.0;
    let mut f = Filter::dirty_derivative(tau);
    f.init_zero_output(0.0);
    let gain = omega / (1.0 + tau * tau * omega * omega).sqrt();
    let phase = std::f64::consts::FRAC_PI_2 - (tau * omega).atan();
    let mut worst_dd = 0.0f64;
    for k in 1..=n {
        let t = k as f64 * dt;
        let s = |t: f64| (omega * t).sin();
        let out = f.step(dt, s(t - dt), s(t - 0.5 * dt), s(t));
        if t > 1.0 {
            let expected = gain * (omega * t + phase).sin();
            worst_dd = worst_dd.max((out - expected).abs() / gain);
        }
    }
    assert!(worst_dd < 1e-3, "dirty-derivative steady-state error {worst_dd:.2e}");

    // Cascade of two low-passes: step response from rest 1 − (1 + λt)e^{−λt}.
    let mut f = Filter::lowpass(lambda).cascade(Filter::lowpass(lambda));
    f.reset_zero();
    let mut worst_c = 0.0f64;
    for k in 1..=n {
        let t = k as f64 * dt;
        let out = f.step(dt, 1.0, 1.0, 1.0);
        let expected = 1.0 - (1.0 + lambda * t) * (-lambda * t).exp();
        worst_c = worst_c.max((out - expected).abs());
    }
    assert!(worst_c < 1e-3, "cascade step error {worst_c:.2e}");

    // Integrator order: halving dt must shrink the smooth-response error by
    // at least 8× (fourth-order scheme, ratio 16 in exact arithmetic).
    let err_at = |dt: f64| -> f64 {
        let mut f = Filter::lowpass(lambda);
        f.reset_zero();
        let n = (1.0 / dt) as usize;
        let s = |t: f64| (3.0 * t).sin();
        // closed form for λ/(p+λ) driven by sin(ωt) from rest
        let omega = 3.0;
        let a = lambda * lambda + omega * omega;
        let exact = |t: f64| {
            (lambda / a)
                * (lambda * (omega * t).sin() - omega * (omega * t).cos()
                    + omega * (-lambda * t).exp())
        };
        let mut worst = 0.0f64;
        for k in 1..=n {
            let t = k as f64 * dt;
            let out = f.step(dt, s(t - dt), s(t - 0.5 * dt), s(t));
            worst = worst.max((out - exact(t)).abs());
        }
        worst
    };
    let (e1, e2) = (err_at(1e-2), err_at(5e-3));
    let ratio = e1 / e2;
    assert!(ratio >= 8.0, "order check: errors {e1:.2e} vs {e2:.2e}, ratio {ratio:.1}");

    println!(
        "criterion 7 PASS — step/sine/cascade/derivative errors {worst_lp:.1e}/{worst_dd:.1e}/\
         {worst_c:.1e}/{worst_hp:.1e}, halving ratio {ratio:.1}"
    );
}

// ---------------------------------------------------------------------------
// 8. batch least squares agrees with the asymptotic online estimate
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_batch_vs_online() {
    let mut lines = Vec::new();
    let dir = tempfile::tempdir().unwrap();

    let cases: Vec<(&str, RunConfig, usize)> = vec![
        ("m2", preset("m2-sim").unwrap(), 2),
        ("m3", preset("m3-sim").unwrap(), 1),
        (
            "m4",
            {
                let mut c = preset("m4-sim").unwrap();
                c.duration = 30.0;
                c
            },
            3,
        ),
    ];

    for (name, mut config, p) in cases {
        let out_dir = dir.path().join(name);
        config.trace_stride = 1;
        config.output_dir = Some(out_dir.clone());
        let out = harness::run(&config).unwrap();
        let online = out.report.eta_hat.unwrap();

        let samples = io::read_regressor_stream(&out_dir.join("regressor.csv"), p).unwrap();
        let batch = batch_ls(&samples).unwrap();
        let gap = rel_err(&online, &batch.w);
        assert!(
            gap < 1e-3,
            "{name}: online {online:?} vs batch {:?} differ by {gap:.2e}",
            batch.w
        );
        lines.push(format!("{name} gap {gap:.1e}"));
    }

    println!("criterion 8 PASS — {}", lines.join(", "));
}

// ---------------------------------------------------------------------------
// 9. replay round trips
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_replay_round_trip() {
    use polcurve::harness::ReplayConfig;
    use polcurve::model::{synthesize, ModelId};
    use polcurve::signal::generate_signal;

    let dir = tempfile::tempdir().unwrap();

    // Exponential model: the construction is memoryless, so replaying the
    // exported grid with the pre-filter disabled reproduces the estimates to
    // machine precision.
    let mut synth = preset("m2-sim").unwrap();
    synth.duration = 6.0;
    let out_a = harness::run(&synth).unwrap();
    let s = synth.synthesis.as_ref().unwrap();
    let u = generate_signal(&s.signal, synth.dt, synth.duration).unwrap();
    let y = synthesize(&s.model, &u, 0.0, synth.seed).unwrap();
    let rows: Vec<(f64, f64, f64)> =
        (0..u.len()).map(|k| (u.time(k), u.samples[k], y.samples[k])).collect();
    let record = dir.path().join("m2.csv");
    io::write_replay(&record, &rows).unwrap();
    let mut replayed = synth.clone();
    replayed.synthesis = None;
    replayed.replay = Some(ReplayConfig {
        path: record,
        model: ModelId::M2,
        e_oc: Some(42.0),
        prefilter_hz: 0.5 / synth.dt,
    });
    let out_b = harness::run(&replayed).unwrap();
    let gap_m2 = rel_err(
        out_b.report.eta_hat.as_ref().unwrap(),
        out_a.report.eta_hat.as_ref().unwrap(),
    );
    assert!(gap_m2 < 1e-3, "exponential-model replay gap {gap_m2:.2e}");

    // Logarithmic model: export the run's own (smoothed) traces and replay
    // them; the resampling is the only error source.
    let mut synth = preset("m4-sim").unwrap();
    synth.duration = 20.0;
    synth.trace_stride = 1;
    let m4_dir = dir.path().join("m4");
    synth.output_dir = Some(m4_dir.clone());
    let out_a = harness::run(&synth).unwrap();
    let u = io::read_trace(&m4_dir.join("u.csv")).unwrap();
    let y = io::read_trace(&m4_dir.join("y.csv")).unwrap();
    let rows: Vec<(f64, f64, f64)> = u
        .iter()
        .zip(&y)
        .map(|((t, u), (_, y))| (*t, *u, *y))
        .collect();
    let record = dir.path().join("m4.csv");
    io::write_replay(&record, &rows).unwrap();
    let mut replayed = synth.clone();
    replayed.synthesis = None;
    replayed.trace_stride = 0;
    replayed.output_dir = None;
    replayed.replay = Some(ReplayConfig {
        path: record,
        model: ModelId::M4,
        e_oc: None,
        prefilter_hz: 0.5 / synth.dt,
    });
    let out_b = harness::run(&replayed).unwrap();
    let gap_m4 = rel_err(
        out_b.report.eta_hat.as_ref().unwrap(),
        out_a.report.eta_hat.as_ref().unwrap(),
    );
    assert!(gap_m4 < 1e-3, "logarithmic-model replay gap {gap_m4:.2e}");

    println!("criterion 9 PASS — replay gaps m2 {gap_m2:.1e}, m4 {gap_m4:.1e}");
}

// ---------------------------------------------------------------------------
// 10. reduced models ranked against the full-model curve
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_curve_ranking() {
    let truth = ModelSpec::M1(ThetaFull::benchmark());
    let reference = sweep_model(&truth, 1.0, 30.0, 291).unwrap();
    let fits = fit_all_sweep(&reference, 42.0).unwrap();

    let candidates = vec![
        ("m2".to_string(), sweep_model(&ModelSpec::M2(fits.m2), 1.0, 30.0, 291).unwrap()),
        ("m3".to_string(), sweep_model(&ModelSpec::M3(fits.m3), 1.0, 30.0, 291).unwrap()),
        ("m4".to_string(), sweep_model(&ModelSpec::M4(fits.m4), 1.0, 30.0, 291).unwrap()),
    ];
    let table = compare_curves(&reference, &candidates, &DEFAULT_INTERVALS).unwrap();
    println!("{}", table.render());

    let m2 = &table.rows[0].max_abs_error;
    let m3 = &table.rows[1].max_abs_error;
    let m4 = &table.rows[2].max_abs_error;

    // The logarithmic model tracks the full model across the whole range.
    for k in 0..3 {
        assert!(
            m4[k] <= m2[k] && m4[k] <= m3[k],
            "interval {k}: m4 {:.3} should beat m2 {:.3} and m3 {:.3}",
            m4[k],
            m2[k],
            m3[k]
        );
    }

    // The exponential model is acceptable only in the middle band: its
    // mid-interval error is a small fraction of its edge errors.
    assert!(
        m2[1] < 0.5 * m2[0] && m2[1] < 0.5 * m2[2],
        "m2 errors {m2:?} should dip in the middle band"
    );

    println!(
        "criterion 10 PASS — m4 {:?} ≤ m2 {:?} everywhere; m2 mid-band dip confirmed",
        m4, m2
    );
}
