//! Module pipelines shared by the subcommands. Parallel work is split by
//! replication or grid point and merged in index order, so results do not
//! depend on the thread count.

use rayon::prelude::*;

use randswitch_core::criteria::{
    ges_exponent_bound, markov_criterion, renewal_criterion, semi_markov_criterion, time_invariant_criterion,
    BoundKind, CriteriaError, CriterionReport, ModeBounds, TimeInvariantVariant,
};
use randswitch_core::dynamics::DynamicsError;
use randswitch_core::ensemble::{aggregate, simulate_replication, summarize_replication, EnsembleStats};
use randswitch_core::expr::Var;
use randswitch_core::lyapunov::{
    check_derivative_condition, check_jump_condition, check_sandwich, pathwise_bound_check, ConditionReport,
    LyapunovError, PATHWISE_TOL,
};
use randswitch_core::musf::{assemble_estimate, classify_estimate, mean_integral_point, StableFunctionClass};
use randswitch_core::quad::QuadError;
use randswitch_core::switching::{LawKind, SwitchingError};
use randswitch_core::{DwellModel, LyapunovSpec, SwitchingPath, Trajectory};
use thiserror::Error;

use crate::output::PathwiseSummary;
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Switching(#[from] SwitchingError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// One simulated run: replication 0 of the scenario seed.
pub struct Simulation {
    pub path: SwitchingPath,
    pub trajectory: Trajectory,
    pub pathwise: ConditionReport,
}

pub fn simulate(scn: &Scenario) -> Result<Simulation, PipelineError> {
    let cfg = scn.ensemble_config();
    let (path, traj) = simulate_replication(&cfg, 0, scn.seed)?;
    let trajectory = traj?;
    let pathwise = pathwise_bound_check(&trajectory, &scn.lyapunov, PATHWISE_TOL)?;
    Ok(Simulation { path, trajectory, pathwise })
}

pub struct EnsembleRun {
    pub stats: EnsembleStats,
    /// Empty unless requested.
    pub pathwise: Vec<PathwiseSummary>,
}

/// Runs `reps` replications in parallel, optionally checking the pathwise
/// estimate along each completed trajectory.
pub fn ensemble(scn: &Scenario, reps: usize, with_pathwise: bool) -> Result<EnsembleRun, PipelineError> {
    let cfg = scn.ensemble_config();
    let results: Vec<_> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<_, PipelineError> {
            let (path, traj) = simulate_replication(&cfg, rep, scn.seed)?;
            let pathwise = with_pathwise.then(|| match &traj {
                Ok(t) => match pathwise_bound_check(t, &scn.lyapunov, PATHWISE_TOL) {
                    Ok(r) => PathwiseSummary {
                        rep,
                        samples: r.samples,
                        violations: r.violations.len(),
                        worst_margin: r.worst_margin,
                        error: None,
                    },
                    Err(e) => PathwiseSummary {
                        rep,
                        samples: 0,
                        violations: 0,
                        worst_margin: f64::NAN,
                        error: Some(e.to_string()),
                    },
                },
                Err(e) => PathwiseSummary {
                    rep,
                    samples: 0,
                    violations: 0,
                    worst_margin: f64::NAN,
                    error: Some(format!("replication aborted: {e}")),
                },
            });
            let outcome = summarize_replication(&cfg, rep, &path, &traj)?;
            Ok((outcome, pathwise))
        })
        .collect::<Result<_, _>>()?;
    let mut outcomes = Vec::with_capacity(reps);
    let mut pathwise = Vec::new();
    for (o, p) in results {
        outcomes.push(o);
        pathwise.extend(p);
    }
    Ok(EnsembleRun { stats: aggregate(&cfg, outcomes), pathwise })
}

/// Sandwich, derivative (every mode) and jump checks over the scenario's sampled region.
pub fn lyapunov_checks(scn: &Scenario, spec: &LyapunovSpec) -> Result<Vec<ConditionReport>, PipelineError> {
    let samples = scn.samples();
    let mut reports = vec![check_sandwich(spec, &samples)?];
    let derivative: Vec<_> = (0..scn.mode_count())
        .into_par_iter()
        .map(|i| check_derivative_condition(spec, scn.system.mode(i), i, &samples))
        .collect::<Result<_, _>>()?;
    reports.extend(derivative);
    reports.push(check_jump_condition(spec, &samples)?);
    Ok(reports)
}

/// Stable-function estimate for one mode under its dwell law.
pub struct ModeEstimate {
    pub mode: usize,
    pub dwell: DwellModel,
    pub class: StableFunctionClass,
}

pub fn estimate_mode(scn: &Scenario, mode: usize, dwell: DwellModel) -> Result<ModeEstimate, PipelineError> {
    let lambda = scn.lyapunov.rate(mode);
    let grid = &scn.analysis.t_grid;
    let mut mc = scn.monte_carlo();
    mc.stream = mode as u64;
    let points: Vec<(f64, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &t)| mean_integral_point(lambda, &dwell, t, k, &mc))
        .collect::<Result<_, _>>()?;
    let (mean, se) = points.into_iter().unzip();
    let est = assemble_estimate(grid, mean, se, &dwell, &mc);
    Ok(ModeEstimate { mode, dwell, class: classify_estimate(&est) })
}

/// Estimates for every mode, each under its own dwell law.
pub fn estimate_musf(scn: &Scenario) -> Result<Vec<ModeEstimate>, PipelineError> {
    (0..scn.mode_count()).map(|i| estimate_mode(scn, i, scn.law.dwell_model(i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsSource {
    /// The reference bounds stored in the scenario.
    Paper,
    /// Grid maxima of the Monte Carlo estimates.
    Estimated,
}

pub struct CriteriaOutcome {
    pub source: BoundsSource,
    pub bounds: ModeBounds,
    pub main: CriterionReport,
    /// Constant-rate criterion, when every rate is constant in `t`.
    pub time_invariant: Option<CriterionReport>,
    /// `value / p1` when the main criterion certifies.
    pub ges_bound: Option<f64>,
    /// Reasons the bounds may not meet the criterion's premise.
    pub caveats: Vec<String>,
}

/// Evaluates the criterion matching the scenario's switching law.
pub fn criteria(
    scn: &Scenario,
    source: BoundsSource,
    estimates: Option<&[ModeEstimate]>,
) -> Result<CriteriaOutcome, PipelineError> {
    let mu = scn.lyapunov.jump_factors();
    let mut caveats = Vec::new();
    let bounds = match source {
        BoundsSource::Paper => scn
            .analysis
            .reference_bounds
            .clone()
            .ok_or_else(|| PipelineError::Other("scenario has no analysis.reference_bounds".into()))?,
        BoundsSource::Estimated => {
            let owned;
            let est = match estimates {
                Some(e) => e,
                None => {
                    owned = estimate_musf(scn)?;
                    &owned
                }
            };
            for e in est {
                if e.class.musf_bound().is_none() {
                    caveats.push(format!(
                        "mode {}: {}; its grid maximum is not a uniform bound",
                        e.mode + 1,
                        e.class.label()
                    ));
                }
            }
            let values: Vec<f64> = est.iter().map(|e| e.class.m_hat).collect();
            ModeBounds::uniform(BoundKind::M, &values, mu)
        }
    };
    let stats = scn.law.statistics()?;
    let (main, variant) = match scn.law.kind() {
        LawKind::SemiMarkov { .. } => {
            let m = stats.mean_dwell.as_deref().unwrap_or_default();
            (semi_markov_criterion(&bounds, &stats.occupancy, m)?, TimeInvariantVariant::E1)
        }
        LawKind::Markov { .. } => {
            let q = stats.exit_rates.as_deref().unwrap_or_default();
            (markov_criterion(&bounds, &stats.occupancy, q)?, TimeInvariantVariant::E2)
        }
        LawKind::Renewal { .. } => {
            let p = stats.mode_probabilities.as_deref().unwrap_or_default();
            let theta = stats.mean_interarrival.unwrap_or(f64::NAN);
            let common = mu.iter().copied().fold(1.0, f64::max);
            (renewal_criterion(&bounds, p, theta, common)?, TimeInvariantVariant::E3)
        }
    };
    let constant_rates: Option<Vec<f64>> = (0..scn.mode_count())
        .map(|i| {
            let r = scn.lyapunov.rate(i);
            if r.free_vars().contains(&Var::Time) {
                None
            } else {
                r.eval_t(0.0).ok()
            }
        })
        .collect();
    let time_invariant = match constant_rates {
        Some(rates) => Some(time_invariant_criterion(&rates, mu, &stats, variant)?),
        None => None,
    };
    let ges_bound = if main.certified() && caveats.is_empty() {
        Some(ges_exponent_bound(&main, scn.lyapunov.envelope().p1)?)
    } else {
        None
    };
    Ok(CriteriaOutcome { source, bounds, main, time_invariant, ges_bound, caveats })
}
