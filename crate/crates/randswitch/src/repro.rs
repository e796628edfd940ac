//! End-to-end run of the bundled three-mode example: load, Lyapunov
//! checks, stable-function estimates, criteria, ensemble. Each threshold
//! becomes one PASS/FAIL line of the manifest.

use std::fmt::Write as _;

use randswitch_core::criteria::{markov_criterion, semi_markov_criterion, BoundKind, ModeBound, ModeBounds};
use randswitch_core::lyapunov::check_derivative_condition;
use randswitch_core::musf::mean_integral;
use randswitch_core::rng::{StreamId, StreamRng, StreamTag};
use randswitch_core::switching::{ctmc_stationary, embedded_stationary, sample_path, semi_markov_stationary, LawKind};
use randswitch_core::{parse_expr, DwellModel, GENERATOR_ID};

use crate::output::{self, OutputDir, Provenance, VERSION};
use crate::pipeline::{self, BoundsSource, PipelineError};
use crate::scenario::{load_scenario, Scenario};

pub const DEFAULT_REPS: usize = 100;
const ERGODIC_HORIZON: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub header: Vec<String>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Manifest {
    fn check(&mut self, id: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { id, passed, detail });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            writeln!(s, "{h}").unwrap();
        }
        for c in &self.checks {
            writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.detail).unwrap();
        }
        for n in &self.notes {
            writeln!(s, "NOTE {n}").unwrap();
        }
        s
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.12}")).collect();
    format!("[{}]", parts.join(", "))
}

fn matrix(scn: &Scenario) -> Vec<Vec<f64>> {
    match scn.law.kind() {
        LawKind::SemiMarkov { transition, .. } => transition.clone(),
        LawKind::Markov { generator } => generator.clone(),
        LawKind::Renewal { .. } => Vec::new(),
    }
}

/// Runs the full pipeline, writing every artefact into `out`.
pub fn reproduce_example1(out: &OutputDir, seed: Option<u64>, reps: usize) -> Result<Manifest, PipelineError> {
    let load = |name| load_scenario(name).map_err(|e| PipelineError::Other(e.to_string()));
    let sm = load("example1_semimarkov")?.with_seed(seed);
    let mk = load("example1_markov")?.with_seed(seed);
    let prov = Provenance::of(&sm);
    let prov_mk = Provenance::of(&mk);
    let mut m = Manifest::default();
    m.header.push(format!("randswitch {VERSION}; rng={GENERATOR_ID}; seed={}; replications={reps}", sm.seed));
    m.header.push(format!("scenario {} sha256={}", sm.name, sm.sha256));
    m.header.push(format!("scenario {} sha256={}", mk.name, mk.sha256));

    // Stationary distributions.
    let pi_bar = embedded_stationary(&matrix(&sm))?;
    let m_dwell: Vec<f64> = (0..3).map(|i| sm.law.dwell_model(i).mean()).collect();
    let pi_sm = semi_markov_stationary(&pi_bar, &m_dwell)?;
    let pi_mk = ctmc_stationary(&matrix(&mk))?;
    let ok = close(&pi_bar, &[0.4, 0.4, 0.2], 1e-10)
        && close(&pi_sm, &[0.2, 0.6, 0.2], 1e-10)
        && close(&pi_mk, &[0.6, 0.2, 0.2], 1e-10);
    m.check(
        "stationary distributions",
        ok,
        format!("embedded {}, semi-Markov {}, Markov {}", fmt_vec(&pi_bar), fmt_vec(&pi_sm), fmt_vec(&pi_mk)),
    );

    // Criteria with the reference bounds.
    let crit_sm = pipeline::criteria(&sm, BoundsSource::Paper, None)?;
    let crit_mk = pipeline::criteria(&mk, BoundsSource::Paper, None)?;
    out.write("criteria_semimarkov.csv", &output::criteria_csv(&prov, std::slice::from_ref(&crit_sm.main)))?;
    out.write("criteria_markov.csv", &output::criteria_csv(&prov_mk, std::slice::from_ref(&crit_mk.main)))?;
    let mut table = output::criteria_table(&crit_sm.main);
    table.push_str(&output::criteria_table(&crit_mk.main));
    out.write("criteria.txt", &table)?;
    let (s, q) = (crit_sm.main.value, crit_mk.main.value);
    m.check(
        "criterion values",
        (s + 1.090).abs() <= 1e-3 && (q + 4.018).abs() <= 1e-3 && crit_sm.main.certified() && crit_mk.main.certified(),
        format!(
            "{} = {s:.4}, {} = {q:.4}; exponent bounds {:?} / {:?}",
            crit_sm.main.id, crit_mk.main.id, crit_sm.ges_bound, crit_mk.ges_bound
        ),
    );

    // Lyapunov conditions on the sampled region.
    let reports = pipeline::lyapunov_checks(&sm, &sm.lyapunov)?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&output::condition_text(r));
        m.check("lyapunov condition", r.passed(), format!("{} ({} violations)", r.condition, r.violations.len()));
    }
    let samples = sm.samples();
    let lam1 = sm.lyapunov.clone().with_rate(0, parse_expr("-3", 2).unwrap())?;
    let lam1 = check_derivative_condition(&lam1, sm.system.mode(0), 0, &samples)?;
    let mu2 = sm.lyapunov.clone().with_jump_factor(1, 1.5)?;
    let mu2 = randswitch_core::lyapunov::check_jump_condition(&mu2, &samples)?;
    m.check(
        "lyapunov perturbations detected",
        !lam1.passed() && !mu2.passed(),
        format!("lambda1 = -3: {} violations; mu2 = 1.5: {} violations", lam1.violations.len(), mu2.violations.len()),
    );
    let abs_rate = sm.lyapunov.clone().with_rate(1, parse_expr("-3*t^2 + abs(cos(t))", 2).unwrap())?;
    let abs_rate = check_derivative_condition(&abs_rate, sm.system.mode(1), 1, &samples)?;
    m.notes.push(format!(
        "mode 2 derivative with rate -3*t^2 + abs(cos(t)): {} violations over {} samples",
        abs_rate.violations.len(),
        abs_rate.samples
    ));
    text.push_str("\nperturbations\n");
    text.push_str(&output::condition_text(&lam1));
    text.push_str(&output::condition_text(&mu2));
    text.push_str("\nmode 2 with rate -3*t^2 + abs(cos(t))\n");
    text.push_str(&output::condition_text(&abs_rate));
    out.write("lyapunov.txt", &text)?;
    out.write("violations.csv", &output::violations_csv(&prov, sm.dimension, &reports))?;

    // Stable-function estimates.
    let lambda2 = sm.lyapunov.rate(1);
    let det = mean_integral(lambda2, &DwellModel::Deterministic { duration: 3.0 }, &[0.0], &sm.monte_carlo())?;
    m.check(
        "deterministic window integral",
        (det.mean[0] + 26.858880).abs() <= 1e-7 && det.std_error[0] == 0.0,
        format!("E[int_0^3 lambda2] = {:.9} (se {})", det.mean[0], det.std_error[0]),
    );
    let estimates = pipeline::estimate_musf(&sm)?;
    for e in &estimates {
        out.write(&format!("musf_mode{}.csv", e.mode + 1), &output::musf_csv(&prov, &e.class.evidence))?;
    }
    let e2 = &estimates[1];
    let k = e2.class.evidence.t_grid.iter().position(|&t| t == e2.class.argmax_t).unwrap_or(0);
    let mc_tol = 3.0 * e2.class.evidence.std_error[k];
    let reference = sm.analysis.reference_bounds.as_ref().map(|b| b.0[1].value).unwrap_or(f64::NAN);
    m.check(
        "mode 2 mean-integral bound",
        e2.class.m_hat <= -25.0 + 2.0 * mc_tol,
        format!(
            "estimated {:.4} vs reference {reference} (Jensen level -25, MC tolerance {mc_tol:.4}, dwell mean {})",
            e2.class.m_hat,
            e2.dwell.mean()
        ),
    );
    let est_crit = pipeline::criteria(&sm, BoundsSource::Estimated, Some(&estimates))?;
    m.notes.push(format!(
        "estimated bounds {:?} give {} = {:.4} ({}){}",
        est_crit.bounds.0.iter().map(|b| b.value).collect::<Vec<_>>(),
        est_crit.main.id,
        est_crit.main.value,
        est_crit.main.verdict,
        if est_crit.caveats.is_empty() { String::new() } else { format!("; {}", est_crit.caveats.join("; ")) }
    ));

    // Ensemble.
    let run = pipeline::ensemble(&sm, reps, true)?;
    let stats = &run.stats;
    out.write("replications.csv", &output::replications_csv(&prov, stats))?;
    out.write("mean_square.csv", &output::mean_square_csv(&prov, stats))?;
    out.write(
        "occupancy.csv",
        &output::occupancy_csv(&prov, &stats.grid, &stats.occupancy, stats.occupancy_error.as_deref()),
    )?;
    out.write("pathwise.csv", &output::pathwise_csv(&prov, &run.pathwise))?;
    let sim = pipeline::simulate(&sm)?;
    out.write("path_rep0.csv", &output::path_csv(&prov, &sim.path))?;
    out.write("trajectory_rep0.csv", &output::trajectory_csv(&prov, &sim.trajectory))?;

    let violations: usize = run.pathwise.iter().map(|p| p.violations).sum();
    let errors = run.pathwise.iter().filter(|p| p.error.is_some()).count();
    let worst = run.pathwise.iter().map(|p| p.worst_margin).fold(f64::NEG_INFINITY, f64::max);
    m.check(
        "pathwise estimate",
        violations == 0 && errors == 0 && run.pathwise.len() == reps,
        format!("{violations} violations over {reps} replications ({errors} unchecked); worst log margin {worst:e}"),
    );
    let converged = stats
        .replications
        .iter()
        .filter(|r| r.terminal_norm < 1e-2 && r.lyap_slope.is_some_and(|s| s < 0.0))
        .count();
    let ms_end = stats.mean_square.last().copied().unwrap_or(f64::NAN);
    let need = reps - reps / 100;
    m.check(
        "empirical attraction",
        converged >= need && ms_end < 1e-4,
        format!(
            "{converged}/{reps} with |x(T)| < 1e-2 and negative slope (need {need}); E|x(T)|^2 = {ms_end:e}; \
             {} aborted, {} underflowed",
            stats.aborted, stats.underflowed
        ),
    );
    let slopes: Vec<f64> = stats.replications.iter().filter_map(|r| r.lyap_slope).collect();
    if !slopes.is_empty() {
        let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
        let max = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m.notes.push(format!(
            "Lyapunov slopes: mean {mean:.4}, max {max:.4}; predicted exponent bound {:?}",
            crit_sm.ges_bound
        ));
    }
    if stats.underflowed > 0 {
        m.notes.push(format!(
            "{} replications reached |x| = 0 by floating-point underflow; their slopes use the support before it",
            stats.underflowed
        ));
    }

    // Ergodic occupancy.
    let mut details = Vec::new();
    let mut ok = true;
    for (scn, prov, pi, file) in [
        (&sm, &prov, &pi_sm, "occupancy_ergodic_semimarkov.csv"),
        (&mk, &prov_mk, &pi_mk, "occupancy_ergodic_markov.csv"),
    ] {
        let path = sample_path(&scn.law, 0.0, ERGODIC_HORIZON, scn.seed, StreamId::new(StreamTag::Occupancy, 0))?;
        let grid: Vec<f64> = (1..=100).map(|k| ERGODIC_HORIZON * k as f64 / 100.0).collect();
        let occ = path.occupancy_series(&grid, 3)?;
        let err: Vec<f64> =
            occ.iter().map(|row| row.iter().zip(pi.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).collect();
        out.write(file, &output::occupancy_csv(prov, &grid, &occ, Some(&err)))?;
        let last = *err.last().unwrap();
        ok &= last < 0.02;
        details.push(format!("{} max error {last:.4}", scn.name));
    }
    m.check("ergodic occupancy", ok, details.join(", "));

    // Markov / semi-Markov consistency on randomised inputs.
    let mut rng = StreamRng::new(sm.seed, StreamId::new(StreamTag::Adhoc, 1));
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + (rng.uniform() * 6.0) as usize;
        let kinds = [BoundKind::Phi, BoundKind::M, BoundKind::LambdaBar];
        let bounds = ModeBounds(
            (0..n)
                .map(|_| ModeBound {
                    kind: kinds[rng.categorical(&[1.0, 1.0, 1.0])],
                    value: -20.0 + 40.0 * rng.uniform(),
                    mu: 1.0 + 4.0 * rng.uniform(),
                })
                .collect(),
        );
        let w: Vec<f64> = (0..n).map(|_| 0.05 + rng.uniform()).collect();
        let total: f64 = w.iter().sum();
        let pi: Vec<f64> = w.iter().map(|v| v / total).collect();
        let q: Vec<f64> = (0..n).map(|_| 0.1 + 9.9 * rng.uniform()).collect();
        let minv: Vec<f64> = q.iter().map(|v| 1.0 / v).collect();
        let a = markov_criterion(&bounds, &pi, &q)?.value;
        let b = semi_markov_criterion(&bounds, &pi, &minv)?.value;
        worst = worst.max((a - b).abs());
    }
    m.check("Markov / semi-Markov consistency", worst <= 1e-12, format!("max difference {worst:e} over 1000 inputs"));

    out.write("acceptance.txt", &m.render())?;
    Ok(m)
}
