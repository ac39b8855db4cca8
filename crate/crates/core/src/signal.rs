//! Excitation signals and uniformly sampled traces.
//!
//! A [`SignalSpec`] describes a current profile analytically — constant,
//! pulse train, sine, or a short Fourier sum — and can be evaluated (with its
//! derivative) at any instant. [`generate_signal`] samples it onto a
//! [`Trace`]. The run harness samples specs on a half-step lattice instead so
//! the filter bank sees exact midpoint values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Sample spacing in seconds; strictly positive.
    pub dt: f64,
    /// Time of the first sample.
    pub t0: f64,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn new(dt: f64, t0: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("trace dt must be positive, got {dt}")));
        }
        if let Some(bad) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample {
                t: t0 + bad as f64 * dt,
                what: format!("trace sample #{bad}"),
            });
        }
        Ok(Trace { dt, t0, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

/// One sinusoidal term of a Fourier-sum signal: `amplitude · sin(omega t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub amplitude: f64,
    /// Angular frequency in rad/s.
    pub omega: f64,
}

/// Analytic description of an excitation signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Constant { value: f64 },
    /// Square wave alternating between `low` and `high` with 50% duty cycle.
    /// Starts at the high value unless `start_low` is set; edges are
    /// instantaneous — consuming filters are what smooth them.
    PulseTrain {
        low: f64,
        high: f64,
        frequency_hz: f64,
        #[serde(default)]
        start_low: bool,
    },
    /// `offset + amplitude·sin(2π·frequency_hz·t + phase_rad)`.
    Sine {
        offset: f64,
        amplitude: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    /// `offset + Σ amplitude_i·sin(omega_i·t)`.
    FourierSum { offset: f64, terms: Vec<FourierTerm> },
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            SignalSpec::Constant { value } => {
                if !value.is_finite() {
                    return bad("constant signal value must be finite".into());
                }
            }
            SignalSpec::PulseTrain { low, high, frequency_hz, .. } => {
                if !low.is_finite() || !high.is_finite() {
                    return bad("pulse levels must be finite".into());
                }
                if !(*frequency_hz > 0.0) {
                    return bad(format!("pulse frequency must be positive, got {frequency_hz}"));
                }
            }
            SignalSpec::Sine { offset, amplitude, frequency_hz, phase_rad } => {
                if ![*offset, *amplitude, *phase_rad].iter().all(|x| x.is_finite()) {
                    return bad("sine parameters must be finite".into());
                }
                if !(*frequency_hz > 0.0) {
                    return bad(format!("sine frequency must be positive, got {frequency_hz}"));
                }
            }
            SignalSpec::FourierSum { offset, terms } => {
                if !offset.is_finite() {
                    return bad("fourier offset must be finite".into());
                }
                for t in terms {
                    if !t.amplitude.is_finite() || !(t.omega > 0.0) {
                        return bad(format!(
                            "fourier term must have finite amplitude and positive omega, got ({}, {})",
                            t.amplitude, t.omega
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Value at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            SignalSpec::Constant { value } => *value,
            SignalSpec::PulseTrain { low, high, frequency_hz, start_low } => {
                let phase = (t * frequency_hz).rem_euclid(1.0);
                let first_half = phase < 0.5;
                let on_high = first_half != *start_low;
                if on_high {
                    *high
                } else {
                    *low
                }
            }
            SignalSpec::Sine { offset, amplitude, frequency_hz, phase_rad } => {
                offset + amplitude * (2.0 * std::f64::consts::PI * frequency_hz * t + phase_rad).sin()
            }
            SignalSpec::FourierSum { offset, terms } => {
                offset + terms.iter().map(|f| f.amplitude * (f.omega * t).sin()).sum::<f64>()
            }
        }
    }

    /// Analytic time derivative at `t`. Pulse trains return 0 (the derivative
    /// almost everywhere; the jumps have no sample representation).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            SignalSpec::Constant { .. } | SignalSpec::PulseTrain { .. } => 0.0,
            SignalSpec::Sine { amplitude, frequency_hz, phase_rad, .. } => {
                let omega = 2.0 * std::f64::consts::PI * frequency_hz;
                amplitude * omega * (omega * t + phase_rad).cos()
            }
            SignalSpec::FourierSum { terms, .. } => {
                terms.iter().map(|f| f.amplitude * f.omega * (f.omega * t).cos()).sum()
            }
        }
    }

    /// Highest frequency present, in Hz; `None` for constants. Used for the
    /// Nyquist-margin check on the run step size.
    pub fn max_frequency_hz(&self) -> Option<f64> {
        match self {
            SignalSpec::Constant { .. } => None,
            SignalSpec::PulseTrain { frequency_hz, .. } => Some(*frequency_hz),
            SignalSpec::Sine { frequency_hz, .. } => Some(*frequency_hz),
            SignalSpec::FourierSum { terms, .. } => terms
                .iter()
                .map(|f| f.omega / (2.0 * std::f64::consts::PI))
                .fold(None, |m: Option<f64>, f| Some(m.map_or(f, |m| m.max(f)))),
        }
    }

    /// Minimum value over a duration — analytic where possible, sampled
    /// densely for the Fourier sum. Regressors taking ln(u) require this to
    /// stay strictly positive.
    pub fn min_value(&self, duration: f64) -> f64 {
        match self {
            SignalSpec::Constant { value } => *value,
            SignalSpec::PulseTrain { low, high, .. } => low.min(*high),
            SignalSpec::Sine { offset, amplitude, .. } => offset - amplitude.abs(),
            SignalSpec::FourierSum { .. } => {
                let n = 20_000;
                (0..=n)
                    .map(|k| self.value(duration * k as f64 / n as f64))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Sample a spec at `t = k·dt` for `k = 0 .. round(duration/dt)`; a 1-second
/// signal at 1 ms yields exactly 1000 samples.
pub fn generate_signal(spec: &SignalSpec, dt: f64, duration: f64) -> Result<Trace> {
    spec.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if duration < dt {
        return Err(Error::Config(format!(
            "duration {duration} must be at least one step {dt}"
        )));
    }
    let n = (duration / dt).round() as usize;
    let samples = (0..n).map(|k| spec.value(k as f64 * dt)).collect();
    Trace::new(dt, 0.0, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_generates_expected_count_and_value() {
        let spec = SignalSpec::Constant { value: 25.0 };
        let tr = generate_signal(&spec, 1e-3, 1.0).unwrap();
        assert_eq!(tr.len(), 1000);
        assert!(tr.samples.iter().all(|&s| s == 25.0));
    }

    #[test]
    fn pulse_starts_high_and_toggles_at_half_period() {
        let spec = SignalSpec::PulseTrain { low: 10.0, high: 20.0, frequency_hz: 2.0, start_low: false };
        // Period 0.5 s: high on [0, 0.25), low on [0.25, 0.5).
        assert_eq!(spec.value(0.0), 20.0);
        assert_eq!(spec.value(0.24), 20.0);
        assert_eq!(spec.value(0.25), 10.0);
        assert_eq!(spec.value(0.49), 10.0);
        assert_eq!(spec.value(0.5), 20.0);
        let flipped = SignalSpec::PulseTrain { low: 10.0, high: 20.0, frequency_hz: 2.0, start_low: true };
        assert_eq!(flipped.value(0.0), 10.0);
        assert_eq!(flipped.value(0.3), 20.0);
    }

    #[test]
    fn sine_with_quarter_phase_matches_cosine_profile() {
        // 25 + 5·cos(0.2πt): offset 25, amplitude 5, f = 0.1 Hz, phase π/2.
        let spec = SignalSpec::Sine {
            offset: 25.0,
            amplitude: 5.0,
            frequency_hz: 0.1,
            phase_rad: std::f64::consts::FRAC_PI_2,
        };
        for &t in &[0.0, 1.3, 2.5, 7.9] {
            let want = 25.0 + 5.0 * (0.2 * std::f64::consts::PI * t).cos();
            assert!((spec.value(t) - want).abs() < 1e-12);
            let want_d = -std::f64::consts::PI * (0.2 * std::f64::consts::PI * t).sin();
            assert!((spec.derivative(t) - want_d).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_sum_matches_three_term_profile() {
        // 25 + (20/π)[sin(0.2πt) + sin(0.6πt)/3 + sin(πt)/5].
        let pi = std::f64::consts::PI;
        let c = 20.0 / pi;
        let spec = SignalSpec::FourierSum {
            offset: 25.0,
            terms: vec![
                FourierTerm { amplitude: c, omega: 0.2 * pi },
                FourierTerm { amplitude: c / 3.0, omega: 0.6 * pi },
                FourierTerm { amplitude: c / 5.0, omega: pi },
            ],
        };
        for &t in &[0.0, 0.7, 3.1, 11.4] {
            let want = 25.0
                + c * ((0.2 * pi * t).sin() + (0.6 * pi * t).sin() / 3.0 + (pi * t).sin() / 5.0);
            assert!((spec.value(t) - want).abs() < 1e-12, "t={t}");
        }
        // Highest term is π rad/s = 0.5 Hz.
        assert!((spec.max_frequency_hz().unwrap() - 0.5).abs() < 1e-12);
        // Stays positive: offset 25, worst-case sum of amplitudes ≈ 9.76.
        assert!(spec.min_value(20.0) > 15.0);
    }

    #[test]
    fn generation_rejects_bad_parameters() {
        let bad = SignalSpec::Sine { offset: 0.0, amplitude: 1.0, frequency_hz: -2.0, phase_rad: 0.0 };
        assert!(generate_signal(&bad, 1e-3, 1.0).is_err());
        let ok = SignalSpec::Constant { value: 1.0 };
        assert!(generate_signal(&ok, -1e-3, 1.0).is_err());
        assert!(generate_signal(&ok, 1e-3, 1e-4).is_err());
    }

    #[test]
    fn trace_rejects_non_finite_samples() {
        assert!(Trace::new(0.1, 0.0, vec![1.0, f64::NAN]).is_err());
        assert!(Trace::new(0.0, 0.0, vec![1.0]).is_err());
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = SignalSpec::PulseTrain { low: 10.0, high: 20.0, frequency_hz: 2.0, start_low: false };
        let text = toml::to_string(&spec).unwrap();
        let back: SignalSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
