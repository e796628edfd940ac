//! Replicated simulation and the empirical statistics behind almost-sure
//! stability: terminal and supremum norms, pathwise Lyapunov exponents,
//! mean-square series and occupancy convergence.
//!
//! Replication `r` samples its switching path from stream `r` of the
//! master seed, so any subset of replications can be run in any order (or
//! in parallel) and [`aggregate`] reproduces the sequential result bit for
//! bit.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dynamics::{integrate, norm, DynamicsError, SwitchedSystem, Trajectory};
use crate::rng::{StreamId, StreamRng, StreamTag};
use crate::switching::{SwitchingError, SwitchingLaw, SwitchingPath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("zero state at t = {t} inside the regression window")]
    ZeroState { t: f64 },
    #[error("trajectory has no extent past its start time")]
    EmptyWindow,
    #[error(transparent)]
    Switching(#[from] SwitchingError),
}

/// Everything needed to simulate one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub system: SwitchedSystem,
    pub law: SwitchingLaw,
    pub t0: f64,
    pub horizon: f64,
    pub step: f64,
    pub x0: Vec<f64>,
    /// Common output grid keeps every `output_stride`-th lattice step.
    pub output_stride: usize,
    /// `T` in `sup_{t ≥ T} |x(t)|`.
    pub sup_from: f64,
}

impl EnsembleConfig {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.horizon
    }

    /// Times `t0 + j·stride·step` up to the horizon, plus the end point.
    pub fn common_grid(&self) -> Vec<f64> {
        let dt = self.step * self.output_stride.max(1) as f64;
        let end = self.t_end();
        let mut grid = Vec::new();
        let mut j = 0u64;
        loop {
            let t = self.t0 + j as f64 * dt;
            if t >= end - 1e-9 * self.step {
                break;
            }
            grid.push(t);
            j += 1;
        }
        grid.push(end);
        grid
    }
}

/// Pathwise exponent estimates from one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovExponent {
    /// Least-squares slope of `ln|x(t)|` over the final half.
    pub slope: f64,
    /// `ln|x(t_end)| / (t_end - t0)`.
    pub endpoint: f64,
}

/// Estimates the exponential growth rate of `|x(t)|`.
pub fn lyapunov_exponent(traj: &Trajectory) -> Result<LyapunovExponent, EnsembleError> {
    let t0 = traj.times[0];
    let t_end = traj.times[traj.len() - 1];
    if !(t_end > t0) {
        return Err(EnsembleError::EmptyWindow);
    }
    let half = t0 + 0.5 * (t_end - t0);
    let start = traj.times.partition_point(|&t| t < half);
    let (mut n, mut st, mut sy) = (0.0, 0.0, 0.0);
    let mut pts = Vec::with_capacity(traj.len() - start);
    for k in start..traj.len() {
        let r = norm(traj.state(k));
        if r == 0.0 {
            return Err(EnsembleError::ZeroState { t: traj.times[k] });
        }
        let y = libm::log(r);
        pts.push((traj.times[k], y));
        n += 1.0;
        st += traj.times[k];
        sy += y;
    }
    let (mt, my) = (st / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in &pts {
        sxy += (t - mt) * (y - my);
        sxx += (t - mt) * (t - mt);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let endpoint = libm::log(norm(traj.final_state())) / (t_end - t0);
    Ok(LyapunovExponent { slope, endpoint })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub rep: usize,
    pub terminal_norm: f64,
    pub sup_norm: f64,
    pub lyap_slope: Option<f64>,
    pub lyap_endpoint: Option<f64>,
    /// Time of the first non-finite state or evaluation failure.
    pub aborted_at: Option<f64>,
    /// The state reached exactly zero (below the smallest subnormal).
    /// Exponents then cover `[t0, last non-zero time]`.
    pub underflow: bool,
}

/// Per-replication result kept for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub summary: ReplicationSummary,
    /// `|x|²` on the common grid; `None` when aborted.
    pub norm_sq: Option<Vec<f64>>,
    /// Running occupancy fractions on the common grid.
    pub occupancy: Vec<Vec<f64>>,
}

/// Samples the switching path of replication `rep`.
pub fn replication_path(cfg: &EnsembleConfig, rep: usize, seed: u64) -> Result<SwitchingPath, SwitchingError> {
    let mut rng = StreamRng::new(seed, StreamId::new(StreamTag::Replication, rep as u64));
    cfg.law.sample_path(cfg.t0, cfg.horizon, &mut rng)
}

/// Path and trajectory of replication `rep`.
pub fn simulate_replication(
    cfg: &EnsembleConfig,
    rep: usize,
    seed: u64,
) -> Result<(SwitchingPath, Result<Trajectory, DynamicsError>), SwitchingError> {
    let path = replication_path(cfg, rep, seed)?;
    let traj = integrate(&cfg.system, &path, &cfg.x0, cfg.step, cfg.t_end());
    Ok((path, traj))
}

/// Reduces one replication to its summary and common-grid series.
pub fn summarize_replication(
    cfg: &EnsembleConfig,
    rep: usize,
    path: &SwitchingPath,
    traj: &Result<Trajectory, DynamicsError>,
) -> Result<ReplicationOutcome, SwitchingError> {
    let grid = cfg.common_grid();
    let occupancy = path.occupancy_series(&grid, cfg.law.mode_count())?;
    let traj = match traj {
        Ok(t) => t,
        Err(err) => {
            let at = match err {
                DynamicsError::NonFinite { t } | DynamicsError::Eval { t, .. } => *t,
                _ => cfg.t0,
            };
            let summary = ReplicationSummary {
                rep,
                terminal_norm: f64::NAN,
                sup_norm: f64::NAN,
                lyap_slope: None,
                lyap_endpoint: None,
                aborted_at: Some(at),
                underflow: false,
            };
            return Ok(ReplicationOutcome { summary, norm_sq: None, occupancy });
        }
    };

    let norms = traj.norms();
    let terminal_norm = *norms.last().unwrap_or(&0.0);
    let sup_norm = traj
        .times
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t >= cfg.sup_from)
        .map(|(_, r)| *r)
        .fold(0.0, f64::max);

    let last_positive = norms.iter().rposition(|r| *r > 0.0);
    let underflow = terminal_norm == 0.0 && last_positive.is_some();
    let exponent = match last_positive {
        Some(k) if k + 1 == traj.len() => lyapunov_exponent(traj).ok(),
        Some(k) if k > 0 => lyapunov_exponent(&traj.truncated(k + 1)).ok(),
        _ => None,
    };

    let norm_sq = grid
        .iter()
        .map(|&t| {
            let r = norm(&traj.state_at(t));
            r * r
        })
        .collect();

    let summary = ReplicationSummary {
        rep,
        terminal_norm,
        sup_norm,
        lyap_slope: exponent.map(|e| e.slope),
        lyap_endpoint: exponent.map(|e| e.endpoint),
        aborted_at: None,
        underflow,
    };
    Ok(ReplicationOutcome { summary, norm_sq: Some(norm_sq), occupancy })
}

/// Simulates and summarises replication `rep`.
pub fn run_replication(cfg: &EnsembleConfig, rep: usize, seed: u64) -> Result<ReplicationOutcome, SwitchingError> {
    let (path, traj) = simulate_replication(cfg, rep, seed)?;
    summarize_replication(cfg, rep, &path, &traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub replications: Vec<ReplicationSummary>,
    pub grid: Vec<f64>,
    /// `E|x(t)|²` over completed replications.
    pub mean_square: Vec<f64>,
    /// Ensemble-mean running occupancy per mode.
    pub occupancy: Vec<Vec<f64>>,
    /// `max_i |occupancy_i(t) - π_i|`, when the law has a stationary distribution.
    pub occupancy_error: Option<Vec<f64>>,
    pub completed: usize,
    pub aborted: usize,
    pub underflowed: usize,
}

/// Ordered reduction of replication outcomes (sorted by replication index).
pub fn aggregate(cfg: &EnsembleConfig, mut outcomes: Vec<ReplicationOutcome>) -> EnsembleStats {
    outcomes.sort_by_key(|o| o.summary.rep);
    let grid = cfg.common_grid();
    let modes = cfg.law.mode_count();
    let mut sum_sq = vec![0.0; grid.len()];
    let mut occ = vec![vec![0.0; modes]; grid.len()];
    let mut completed = 0;
    for o in &outcomes {
        if let Some(series) = &o.norm_sq {
            completed += 1;
            for (acc, v) in sum_sq.iter_mut().zip(series) {
                *acc += v;
            }
        }
        for (row, r) in occ.iter_mut().zip(&o.occupancy) {
            for (a, v) in row.iter_mut().zip(r) {
                *a += v;
            }
        }
    }
    let mean_square = if completed > 0 {
        sum_sq.into_iter().map(|s| s / completed as f64).collect()
    } else {
        Vec::new()
    };
    let n = outcomes.len().max(1) as f64;
    for row in &mut occ {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    let occupancy_error = cfg.law.statistics().ok().map(|s| {
        occ.iter()
            .map(|row| row.iter().zip(&s.occupancy).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect()
    });
    let aborted = outcomes.iter().filter(|o| o.summary.aborted_at.is_some()).count();
    let underflowed = outcomes.iter().filter(|o| o.summary.underflow).count();
    EnsembleStats {
        replications: outcomes.into_iter().map(|o| o.summary).collect(),
        grid,
        mean_square,
        occupancy: occ,
        occupancy_error,
        completed,
        aborted,
        underflowed,
    }
}

/// Runs `n` replications sequentially.
pub fn run_ensemble(cfg: &EnsembleConfig, n: usize, seed: u64) -> Result<EnsembleStats, SwitchingError> {
    let outcomes = (0..n).map(|rep| run_replication(cfg, rep, seed)).collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(cfg, outcomes))
}

/// Mean-square series of an ensemble.
pub fn mean_square(stats: &EnsembleStats) -> &[f64] {
    &stats.mean_square
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::switching::DwellModel;

    fn scalar_decay() -> EnsembleConfig {
        EnsembleConfig {
            system: SwitchedSystem::parse(1, &[vec!["-x1"]]).unwrap(),
            law: SwitchingLaw::renewal(vec![1.0], DwellModel::Deterministic { duration: 0.3 }, 0).unwrap(),
            t0: 0.0,
            horizon: 2.0,
            step: 1e-3,
            x0: vec![1.5],
            output_stride: 10,
            sup_from: 0.0,
        }
    }

    #[test]
    fn exact_exponential_slope() {
        let cfg = EnsembleConfig {
            system: SwitchedSystem::parse(1, &[vec!["-2*x1"]]).unwrap(),
            ..scalar_decay()
        };
        let path = SwitchingPath::constant(0.0, 2.0, 0);
        let traj = integrate(&cfg.system, &path, &[1.0], 1e-3, 2.0).unwrap();
        let e = lyapunov_exponent(&traj).unwrap();
        assert!((e.slope + 2.0).abs() < 1e-6, "{}", e.slope);

        let grow = SwitchedSystem::parse(1, &[vec!["x1"]]).unwrap();
        let traj = integrate(&grow, &path, &[1.0], 1e-3, 2.0).unwrap();
        assert!((lyapunov_exponent(&traj).unwrap().slope - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_state_is_an_error() {
        let cfg = scalar_decay();
        let path = SwitchingPath::constant(0.0, 2.0, 0);
        let traj = integrate(&cfg.system, &path, &[0.0], 1e-3, 2.0).unwrap();
        assert!(matches!(lyapunov_exponent(&traj), Err(EnsembleError::ZeroState { .. })));
    }

    #[test]
    fn single_stable_replication() {
        let cfg = scalar_decay();
        let stats = run_ensemble(&cfg, 1, 5).unwrap();
        let r = &stats.replications[0];
        assert_eq!(r.sup_norm, 1.5);
        assert!((r.terminal_norm - 1.5 * libm::exp(-2.0)).abs() < 1e-9);
        assert_eq!(stats.mean_square.len(), stats.grid.len());
        assert_eq!(stats.mean_square[0], 2.25);
        let last = *stats.mean_square.last().unwrap();
        assert!((last - r.terminal_norm * r.terminal_norm).abs() < 1e-15);
    }

    #[test]
    fn zero_initial_state() {
        let cfg = EnsembleConfig { x0: vec![0.0], ..scalar_decay() };
        let stats = run_ensemble(&cfg, 3, 1).unwrap();
        assert!(stats.mean_square.iter().all(|v| *v == 0.0));
        assert!(stats.replications.iter().all(|r| r.terminal_norm == 0.0 && r.sup_norm == 0.0 && !r.underflow));
        assert!(stats.replications.iter().all(|r| r.lyap_slope.is_none()));
    }

    #[test]
    fn aborted_runs_are_counted() {
        let cfg = EnsembleConfig {
            system: SwitchedSystem::parse(1, &[vec!["x1^2"]]).unwrap(),
            x0: vec![1.0],
            ..scalar_decay()
        };
        let stats = run_ensemble(&cfg, 2, 1).unwrap();
        assert_eq!((stats.aborted, stats.completed), (2, 0));
        assert!(stats.mean_square.is_empty());
    }
}
