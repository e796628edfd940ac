//! Multiple Lyapunov functions with sign-indefinite, time-varying rates.
//!
//! Each mode carries a function `V_i(t, x)`, a rate `λ_i(t)` and a jump
//! factor `μ_i ≥ 1`. The conditions checked here are
//!
//! * sandwich: `α₁(|x|) ≤ V_i(t, x) ≤ α₂(|x|)` with `α(s) = c·s^p`,
//! * derivative: `V̇_i = ∂V_i/∂t + ∇V_i·f_i ≤ λ_i(t)·V_i`,
//! * jump: `V_i ≤ μ_i·V_j` for every ordered pair `i ≠ j`,
//! * pathwise: along a simulated run,
//!   `V_{r(t)}(t, x(t)) ≤ V_{r₀}(t₀, φ)·Π_i μ_i^{N_i(t, t₀)}·exp(∫_{t₀}^t λ_{r(h)}(h) dh)`.
//!
//! The first three are falsification checks over a finite sample set; a
//! clean report means no counterexample was found in the sampled region.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::dynamics::{norm, ModeDynamics, Trajectory};
use crate::expr::{parse_expr, EvalError, Expr, ParseError};
use crate::quad::{self, QuadError};

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;
pub const SANDWICH_TOL: f64 = 1e-12;
pub const JUMP_TOL: f64 = 1e-12;
pub const PATHWISE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("{what}: expected {expected} entries, got {found}")]
    Count { what: &'static str, expected: usize, found: usize },
    #[error("mode {mode}: jump factor {value} must be at least 1")]
    JumpFactor { mode: usize, value: f64 },
    #[error("envelope constants must be positive (c1={c1}, p1={p1}, c2={c2}, p2={p2})")]
    Envelope { c1: f64, p1: f64, c2: f64, p2: f64 },
    #[error("mode {mode}: rate function may depend on t only")]
    RateDependsOnState { mode: usize },
    #[error("mode {mode}, {what}: {source}")]
    Parse { mode: usize, what: &'static str, source: ParseError },
    #[error("evaluation failed at t = {t}: {source}")]
    Eval { t: f64, source: EvalError },
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("trajectory uses mode {mode} but only {modes} Lyapunov functions are defined")]
    UnknownMode { mode: usize, modes: usize },
}

/// Monomial envelopes `α₁(s) = c1·s^p1` and `α₂(s) = c2·s^p2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub c1: f64,
    pub p1: f64,
    pub c2: f64,
    pub p2: f64,
}

impl Envelope {
    pub fn alpha1(&self, s: f64) -> f64 {
        self.c1 * libm::pow(s, self.p1)
    }

    pub fn alpha2(&self, s: f64) -> f64 {
        self.c2 * libm::pow(s, self.p2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    functions: Vec<Expr>,
    rates: Vec<Expr>,
    jump: Vec<f64>,
    envelope: Envelope,
}

impl LyapunovSpec {
    pub fn new(functions: Vec<Expr>, rates: Vec<Expr>, jump: Vec<f64>, envelope: Envelope) -> Result<Self, LyapunovError> {
        let n = functions.len();
        if rates.len() != n {
            return Err(LyapunovError::Count { what: "rate functions", expected: n, found: rates.len() });
        }
        if jump.len() != n {
            return Err(LyapunovError::Count { what: "jump factors", expected: n, found: jump.len() });
        }
        for (mode, &value) in jump.iter().enumerate() {
            if !(value >= 1.0 && value.is_finite()) {
                return Err(LyapunovError::JumpFactor { mode, value });
            }
        }
        for (mode, r) in rates.iter().enumerate() {
            if r.depends_on_state() {
                return Err(LyapunovError::RateDependsOnState { mode });
            }
        }
        let Envelope { c1, p1, c2, p2 } = envelope;
        if !([c1, p1, c2, p2].iter().all(|v| *v > 0.0 && v.is_finite())) {
            return Err(LyapunovError::Envelope { c1, p1, c2, p2 });
        }
        Ok(LyapunovSpec { functions, rates, jump, envelope })
    }

    pub fn parse<S: AsRef<str>>(
        dim: usize,
        functions: &[S],
        rates: &[S],
        jump: Vec<f64>,
        envelope: Envelope,
    ) -> Result<Self, LyapunovError> {
        let parse_all = |srcs: &[S], what| {
            srcs.iter()
                .enumerate()
                .map(|(mode, s)| parse_expr(s.as_ref(), dim).map_err(|source| LyapunovError::Parse { mode, what, source }))
                .collect::<Result<Vec<_>, _>>()
        };
        Self::new(parse_all(functions, "V")?, parse_all(rates, "lambda")?, jump, envelope)
    }

    pub fn mode_count(&self) -> usize {
        self.functions.len()
    }

    pub fn function(&self, mode: usize) -> &Expr {
        &self.functions[mode]
    }

    pub fn rate(&self, mode: usize) -> &Expr {
        &self.rates[mode]
    }

    pub fn jump_factors(&self) -> &[f64] {
        &self.jump
    }

    pub fn envelope(&self) -> Envelope {
        self.envelope
    }

    pub fn with_rate(mut self, mode: usize, rate: Expr) -> Result<Self, LyapunovError> {
        if rate.depends_on_state() {
            return Err(LyapunovError::RateDependsOnState { mode });
        }
        self.rates[mode] = rate;
        Ok(self)
    }

    pub fn with_jump_factor(mut self, mode: usize, value: f64) -> Result<Self, LyapunovError> {
        if !(value >= 1.0) {
            return Err(LyapunovError::JumpFactor { mode, value });
        }
        self.jump[mode] = value;
        Ok(self)
    }

    fn v(&self, mode: usize, t: f64, x: &[f64]) -> Result<f64, LyapunovError> {
        self.functions[mode].eval(t, x).map_err(|source| LyapunovError::Eval { t, source })
    }
}

/// One `(t, x)` point of the sampled region.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionId {
    Sandwich,
    Derivative { mode: usize },
    Jump,
    PathwiseBound,
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionId::Sandwich => f.write_str("sandwich"),
            ConditionId::Derivative { mode } => write!(f, "derivative (mode {})", mode + 1),
            ConditionId::Jump => f.write_str("jump"),
            ConditionId::PathwiseBound => f.write_str("pathwise bound (log scale)"),
        }
    }
}

/// A sample where `lhs ≤ rhs` failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub mode: usize,
    /// The second mode of a jump-condition pair.
    pub other: Option<usize>,
    pub t: f64,
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one condition over a sample set.
///
/// `worst_margin` is the largest `lhs - rhs - tol` seen, so the report is
/// clean exactly when `worst_margin ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub samples: usize,
    pub violations: Vec<Violation>,
    pub worst_margin: f64,
    pub region: String,
}

impl ConditionReport {
    fn new(condition: ConditionId, region: String) -> Self {
        ConditionReport { condition, samples: 0, violations: Vec::new(), worst_margin: f64::NEG_INFINITY, region }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, mode: usize, other: Option<usize>, t: f64, x: &[f64], lhs: f64, rhs: f64, tol: f64) {
        let margin = lhs - rhs - tol;
        if margin > self.worst_margin || self.worst_margin.is_nan() {
            self.worst_margin = margin;
        }
        if margin > 0.0 || margin.is_nan() {
            self.violations.push(Violation { mode, other, t, x: x.to_vec(), lhs, rhs });
        }
    }
}

fn describe_region(samples: &[Sample]) -> String {
    let (mut t_lo, mut t_hi, mut r) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for s in samples {
        t_lo = t_lo.min(s.t);
        t_hi = t_hi.max(s.t);
        r = r.max(norm(&s.x));
    }
    format!("{} samples, t in [{t_lo}, {t_hi}], |x| <= {r}", samples.len())
}

/// Checks `α₁(|x|) ≤ V_i(t,x) ≤ α₂(|x|)` for every mode at every sample.
pub fn check_sandwich(spec: &LyapunovSpec, samples: &[Sample]) -> Result<ConditionReport, LyapunovError> {
    let mut report = ConditionReport::new(ConditionId::Sandwich, describe_region(samples));
    let env = spec.envelope();
    for s in samples {
        let r = norm(&s.x);
        let (lo, hi) = (env.alpha1(r), env.alpha2(r));
        for mode in 0..spec.mode_count() {
            let v = spec.v(mode, s.t, &s.x)?;
            report.record(mode, None, s.t, &s.x, lo, v, SANDWICH_TOL * lo.abs().max(v.abs()));
            report.record(mode, None, s.t, &s.x, v, hi, SANDWICH_TOL * v.abs().max(hi.abs()));
        }
        report.samples += 1;
    }
    Ok(report)
}

/// `V̇ = ∂V/∂t + ∇ₓV·f` by central differences with relative step [`FD_STEP`].
pub fn lie_derivative_fd(v: &Expr, field: &ModeDynamics, t: f64, x: &[f64]) -> Result<f64, EvalError> {
    let ht = FD_STEP * t.abs().max(1.0);
    let mut total = (v.eval(t + ht, x)? - v.eval(t - ht, x)?) / (2.0 * ht);
    let f = field.eval(t, x)?;
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        if f[k] == 0.0 {
            continue;
        }
        let h = FD_STEP * x[k].abs().max(1.0);
        probe[k] = x[k] + h;
        let up = v.eval(t, &probe)?;
        probe[k] = x[k] - h;
        let down = v.eval(t, &probe)?;
        probe[k] = x[k];
        total += (up - down) / (2.0 * h) * f[k];
    }
    Ok(total)
}

/// Checks `V̇_i ≤ λ_i(t)·V_i + 1e-6·(1 + |V_i|)` at every sample.
pub fn check_derivative_condition(
    spec: &LyapunovSpec,
    field: &ModeDynamics,
    mode: usize,
    samples: &[Sample],
) -> Result<ConditionReport, LyapunovError> {
    let mut report = ConditionReport::new(ConditionId::Derivative { mode }, describe_region(samples));
    let v = spec.function(mode);
    let rate = spec.rate(mode);
    for s in samples {
        let eval_err = |source| LyapunovError::Eval { t: s.t, source };
        let vdot = lie_derivative_fd(v, field, s.t, &s.x).map_err(eval_err)?;
        let value = v.eval(s.t, &s.x).map_err(eval_err)?;
        let bound = rate.eval_t(s.t).map_err(eval_err)? * value;
        report.record(mode, None, s.t, &s.x, vdot, bound, 1e-6 * (1.0 + value.abs()));
        report.samples += 1;
    }
    Ok(report)
}

/// Checks `V_i ≤ μ_i·V_j` for every ordered pair `i ≠ j` at every sample.
pub fn check_jump_condition(spec: &LyapunovSpec, samples: &[Sample]) -> Result<ConditionReport, LyapunovError> {
    let mut report = ConditionReport::new(ConditionId::Jump, describe_region(samples));
    let n = spec.mode_count();
    let mut values = vec![0.0; n];
    for s in samples {
        for (mode, slot) in values.iter_mut().enumerate() {
            *slot = spec.v(mode, s.t, &s.x)?;
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let rhs = spec.jump[i] * values[j];
                report.record(i, Some(j), s.t, &s.x, values[i], rhs, JUMP_TOL * values[i].abs().max(rhs.abs()));
            }
        }
        report.samples += 1;
    }
    Ok(report)
}

/// Checks the multiplicative pathwise estimate at every trajectory grid point.
///
/// The comparison is made on logarithms so that bounds far below the
/// smallest positive double remain meaningful; violations report
/// `ln V` as `lhs` and the log bound as `rhs`. `tol` is relative.
pub fn pathwise_bound_check(traj: &Trajectory, spec: &LyapunovSpec, tol: f64) -> Result<ConditionReport, LyapunovError> {
    let mut report = ConditionReport::new(
        ConditionId::PathwiseBound,
        format!("trajectory on [{}, {}]", traj.times[0], traj.times[traj.len() - 1]),
    );
    let modes = spec.mode_count();
    if let Some(&mode) = traj.modes.iter().find(|&&m| m >= modes) {
        return Err(LyapunovError::UnknownMode { mode, modes });
    }
    let log_tol = libm::log1p(tol);
    let ln_mu: Vec<f64> = spec.jump.iter().map(|&m| libm::log(m)).collect();
    let switch_times = traj.path.times();
    let path_modes = traj.path.modes();
    let mut next_switch = 0;

    let t0 = traj.times[0];
    let v0 = spec.v(traj.modes[0], t0, traj.state(0))?;
    let log_v0 = if v0 > 0.0 { libm::log(v0) } else { f64::NEG_INFINITY };
    let mut log_jumps = 0.0;
    let mut integral = 0.0;

    for k in 0..traj.len() {
        let t = traj.times[k];
        if k > 0 {
            let prev = traj.times[k - 1];
            integral += quad::integrate(
                |h| Ok(spec.rates[traj.modes[k - 1]].eval_t(h)?),
                prev,
                t,
                1e-12,
            )?;
            while next_switch < switch_times.len() && switch_times[next_switch] <= t {
                log_jumps += ln_mu[path_modes[next_switch + 1]];
                next_switch += 1;
            }
        }
        let x = traj.state(k);
        let v = spec.v(traj.modes[k], t, x)?;
        let lhs = if v > 0.0 { libm::log(v) } else { f64::NEG_INFINITY };
        let rhs = log_v0 + log_jumps + integral;
        if lhs == f64::NEG_INFINITY {
            report.samples += 1;
            continue;
        }
        report.record(traj.modes[k], None, t, x, lhs, rhs, log_tol);
        report.samples += 1;
    }
    Ok(report)
}

/// Origin plus Halton points inside the ball of `radius`, crossed with an
/// even grid of `t_points` times on `[t_lo, t_hi]`.
pub fn sample_mesh(t_lo: f64, t_hi: f64, t_points: usize, dim: usize, radius: f64, x_points: usize) -> Vec<Sample> {
    let ts: Vec<f64> = match t_points {
        0 => Vec::new(),
        1 => vec![t_lo],
        n => (0..n).map(|i| t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64).collect(),
    };
    let xs = ball_points(dim, radius, x_points);
    let mut out = Vec::with_capacity(ts.len() * xs.len());
    for &t in &ts {
        for x in &xs {
            out.push(Sample { t, x: x.clone() });
        }
    }
    out
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `count` points in the closed ball: the origin, then Halton points
/// (bases 2, 3, 5, …) scaled to the cube and filtered to the ball.
pub fn ball_points(dim: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "quasi-random sampling supports up to {} dimensions", PRIMES.len());
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(vec![0.0; dim]);
    let mut index = 1u64;
    while out.len() < count {
        let p: Vec<f64> = (0..dim).map(|d| radius * (2.0 * radical_inverse(index, PRIMES[d]) - 1.0)).collect();
        index += 1;
        if norm(&p) <= radius {
            out.push(p);
        }
    }
    out
}
