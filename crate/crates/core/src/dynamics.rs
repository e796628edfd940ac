//! Integration of `ẋ = f_{r(t)}(t, x)` along a realised switching path.
//!
//! Classical fourth-order Runge–Kutta on a global lattice `t0 + k·step`.
//! Every switch time is inserted into the grid and steps are shortened so
//! no step crosses a switch. The state is continuous across switches.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::expr::{parse_expr, EvalError, Expr, ParseError};
use crate::switching::SwitchingPath;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("mode {mode}: expected {expected} field components, got {found}")]
    ComponentCount { mode: usize, expected: usize, found: usize },
    #[error("mode {mode}, component {component}: {source}")]
    Parse { mode: usize, component: usize, source: ParseError },
    #[error("initial state has {found} components, system dimension is {expected}")]
    InitialState { expected: usize, found: usize },
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("end time {t_end} outside path support [{t0}, {end}]")]
    EndTime { t_end: f64, t0: f64, end: f64 },
    #[error("path uses mode {mode} but the system has {modes} modes")]
    UnknownMode { mode: usize, modes: usize },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("evaluation failed at t = {t}: {source}")]
    Eval { t: f64, source: EvalError },
}

/// Vector field of one mode: one expression per state component.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDynamics {
    components: Vec<Expr>,
}

impl ModeDynamics {
    pub fn new(components: Vec<Expr>) -> Self {
        ModeDynamics { components }
    }

    pub fn parse<S: AsRef<str>>(sources: &[S], dim: usize) -> Result<Self, DynamicsError> {
        if sources.len() != dim {
            return Err(DynamicsError::ComponentCount { mode: 0, expected: dim, found: sources.len() });
        }
        let components = sources
            .iter()
            .enumerate()
            .map(|(component, s)| {
                parse_expr(s.as_ref(), dim).map_err(|source| DynamicsError::Parse { mode: 0, component, source })
            })
            .collect::<Result<_, _>>()?;
        Ok(ModeDynamics { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// Writes `f(t, x)` into `out`.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(t, x)?;
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, x, &mut out)?;
        Ok(out)
    }
}

/// The family of mode vector fields sharing one state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    dim: usize,
    modes: Vec<ModeDynamics>,
}

impl SwitchedSystem {
    pub fn new(dim: usize, modes: Vec<ModeDynamics>) -> Result<Self, DynamicsError> {
        for (mode, m) in modes.iter().enumerate() {
            if m.dim() != dim {
                return Err(DynamicsError::ComponentCount { mode, expected: dim, found: m.dim() });
            }
        }
        Ok(SwitchedSystem { dim, modes })
    }

    /// Parses one list of component strings per mode.
    pub fn parse<S: AsRef<str>>(dim: usize, fields: &[Vec<S>]) -> Result<Self, DynamicsError> {
        let modes = fields
            .iter()
            .enumerate()
            .map(|(mode, f)| {
                ModeDynamics::parse(f, dim).map_err(|e| match e {
                    DynamicsError::ComponentCount { expected, found, .. } => {
                        DynamicsError::ComponentCount { mode, expected, found }
                    }
                    DynamicsError::Parse { component, source, .. } => {
                        DynamicsError::Parse { mode, component, source }
                    }
                    other => other,
                })
            })
            .collect::<Result<_, _>>()?;
        Self::new(dim, modes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, i: usize) -> &ModeDynamics {
        &self.modes[i]
    }

    /// Modes and times among `ts` where `f_i(t, 0) ≠ 0`.
    pub fn equilibrium_violations(&self, ts: &[f64]) -> Vec<(usize, f64)> {
        let zero = vec![0.0; self.dim];
        let mut out = Vec::new();
        for (i, m) in self.modes.iter().enumerate() {
            for &t in ts {
                match m.eval(t, &zero) {
                    Ok(v) if v.iter().all(|c| *c == 0.0) => {}
                    _ => out.push((i, t)),
                }
            }
        }
        out
    }
}

/// Time-stamped states of one run together with the path that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Row-major `times.len() × dim` states.
    pub states: Vec<f64>,
    /// Active mode at each grid point (the new mode at a switch time).
    pub modes: Vec<usize>,
    pub dim: usize,
    pub path: SwitchingPath,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Euclidean norm at every grid point.
    pub fn norms(&self) -> Vec<f64> {
        (0..self.len()).map(|k| norm(self.state(k))).collect()
    }

    /// Linear interpolation of the state at `t` within the grid.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return self.state(0).to_vec();
        }
        if k >= self.len() {
            return self.final_state().to_vec();
        }
        let (t1, t2) = (self.times[k - 1], self.times[k]);
        if t2 == t {
            return self.state(k).to_vec();
        }
        let w = (t - t1) / (t2 - t1);
        self.state(k - 1).iter().zip(self.state(k)).map(|(a, b)| a + w * (b - a)).collect()
    }

    /// Truncates the grid to its first `len` points.
    pub fn truncated(&self, len: usize) -> Trajectory {
        Trajectory {
            times: self.times[..len].to_vec(),
            states: self.states[..len * self.dim].to_vec(),
            modes: self.modes[..len].to_vec(),
            dim: self.dim,
            path: self.path.clone(),
        }
    }
}

pub fn norm(x: &[f64]) -> f64 {
    // scaled to survive squaring of very large or very small components
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * libm::sqrt(x.iter().map(|v| (v / scale) * (v / scale)).sum::<f64>())
}

/// Euclidean norm series of a trajectory.
pub fn trajectory_norms(traj: &Trajectory) -> Vec<f64> {
    traj.norms()
}

/// Grid points of `[start, end]` on the lattice `t0 + k·step`, plus both ends.
fn segment_grid(t0: f64, step: f64, start: f64, end: f64, out: &mut Vec<f64>) {
    let eps = 1e-9 * step;
    let mut k = libm::floor((start - t0) / step) as i64 + 1;
    loop {
        let t = t0 + k as f64 * step;
        if t >= end - eps {
            break;
        }
        if t > start + eps {
            out.push(t);
        }
        k += 1;
    }
    out.push(end);
}

struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(dim: usize) -> Self {
        Rk4Workspace {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step(&mut self, f: &ModeDynamics, t: f64, h: f64, x: &mut [f64]) -> Result<(), EvalError> {
        let n = x.len();
        f.eval_into(t, x, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        f.eval_into(t + 0.5 * h, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        f.eval_into(t + 0.5 * h, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f.eval_into(t + h, &self.tmp, &mut self.k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// Integrates the switched system from `phi` at the path's `t0` to `t_end`.
pub fn integrate(
    system: &SwitchedSystem,
    path: &SwitchingPath,
    phi: &[f64],
    step: f64,
    t_end: f64,
) -> Result<Trajectory, DynamicsError> {
    let dim = system.dim();
    if phi.len() != dim {
        return Err(DynamicsError::InitialState { expected: dim, found: phi.len() });
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(DynamicsError::InvalidStep(step));
    }
    let t0 = path.t0();
    if !(t_end >= t0 && t_end <= path.end()) {
        return Err(DynamicsError::EndTime { t_end, t0, end: path.end() });
    }
    if let Some(&mode) = path.modes().iter().find(|&&m| m >= system.mode_count()) {
        return Err(DynamicsError::UnknownMode { mode, modes: system.mode_count() });
    }

    let mut times = vec![t0];
    let mut states = phi.to_vec();
    let mut modes = vec![path.initial_mode()];
    let mut x = phi.to_vec();
    let mut ws = Rk4Workspace::new(dim);
    let mut grid = Vec::new();

    for (start, end, mode) in path.segments(t_end) {
        let f = system.mode(mode);
        grid.clear();
        if end > start {
            segment_grid(t0, step, start, end, &mut grid);
        }
        let mut t = start;
        for &next in &grid {
            ws.step(f, t, next - t, &mut x).map_err(|source| DynamicsError::Eval { t, source })?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DynamicsError::NonFinite { t: next });
            }
            t = next;
            times.push(t);
            states.extend_from_slice(&x);
            modes.push(path.mode_at(t));
        }
    }

    Ok(Trajectory { times, states, modes, dim, path: path.clone() })
}
