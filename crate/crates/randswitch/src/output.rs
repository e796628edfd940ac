//! CSV and text renderers. Every CSV starts with a `#` provenance line
//! (scenario hash, seed, generator), then a header row; LF line endings.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use randswitch_core::criteria::CriterionReport;
use randswitch_core::ensemble::EnsembleStats;
use randswitch_core::lyapunov::ConditionReport;
use randswitch_core::musf::MeanIntegralEstimate;
use randswitch_core::{SwitchingPath, Trajectory, GENERATOR_ID};

use crate::scenario::Scenario;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the inputs that produced an output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub scenario: String,
    pub sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(scn: &Scenario) -> Self {
        Provenance { scenario: scn.name.clone(), sha256: scn.sha256.clone(), seed: scn.seed }
    }

    pub fn comment(&self) -> String {
        format!(
            "# randswitch {VERSION}; scenario {} sha256={}; seed={}; rng={GENERATOR_ID}\n",
            self.scenario, self.sha256, self.seed
        )
    }
}

fn csv<I>(prov: &Provenance, columns: &[String], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = prov.comment();
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `k, t_k, mode`; row 0 is the start time and initial mode. Modes are 1-based.
pub fn path_csv(prov: &Provenance, path: &SwitchingPath) -> String {
    let times = std::iter::once(path.t0()).chain(path.times().iter().copied());
    let rows = times
        .zip(path.modes())
        .enumerate()
        .map(|(k, (t, m))| vec![k.to_string(), t.to_string(), (m + 1).to_string()]);
    csv(prov, &cols(&["k", "t_k", "mode"]), rows)
}

/// `t, mode, x1..xn, norm` at every integration grid point.
pub fn trajectory_csv(prov: &Provenance, traj: &Trajectory) -> String {
    let mut header = cols(&["t", "mode"]);
    header.extend((1..=traj.dim).map(|k| format!("x{k}")));
    header.push("norm".into());
    let norms = traj.norms();
    let rows = (0..traj.len()).map(|k| {
        let mut row = vec![traj.times[k].to_string(), (traj.modes[k] + 1).to_string()];
        row.extend(traj.state(k).iter().map(|v| v.to_string()));
        row.push(norms[k].to_string());
        row
    });
    csv(prov, &header, rows)
}

/// `t, mean, std_error, samples`.
pub fn musf_csv(prov: &Provenance, est: &MeanIntegralEstimate) -> String {
    let rows = est.t_grid.iter().zip(&est.mean).zip(&est.std_error).map(|((t, m), s)| {
        vec![t.to_string(), m.to_string(), s.to_string(), est.mc_samples.to_string()]
    });
    csv(prov, &cols(&["t", "mean", "std_error", "samples"]), rows)
}

/// One row per criterion term; `value` and `verdict` repeat the totals.
pub fn criteria_csv(prov: &Provenance, reports: &[CriterionReport]) -> String {
    let rows = reports.iter().flat_map(|r| {
        r.terms.iter().map(move |t| {
            vec![
                r.id.to_string(),
                (t.mode + 1).to_string(),
                t.kind.to_string(),
                t.bound.to_string(),
                t.mu.to_string(),
                t.weight.to_string(),
                t.term.to_string(),
                r.value.to_string(),
                r.verdict.to_string(),
            ]
        })
    });
    csv(
        prov,
        &cols(&["criterion", "mode", "kind", "bound", "mu", "weight", "term", "value", "verdict"]),
        rows,
    )
}

/// Text table `mode, kind, bound, weight, term` plus a verdict line.
pub fn criteria_table(report: &CriterionReport) -> String {
    let mut s = String::new();
    writeln!(s, "criterion {}", report.id).unwrap();
    writeln!(s, "{:>5}  {:<10}  {:>12}  {:>8}  {:>12}  {:>12}", "mode", "kind", "bound", "mu", "weight", "term").unwrap();
    for t in &report.terms {
        writeln!(
            s,
            "{:>5}  {:<10}  {:>12.6}  {:>8.4}  {:>12.6}  {:>12.6}",
            t.mode + 1,
            t.kind.to_string(),
            t.bound,
            t.mu,
            t.weight,
            t.term
        )
        .unwrap();
    }
    writeln!(s, "value {:.4} ({}): {}", report.value, report.value, report.verdict).unwrap();
    s
}

/// `condition, mode, other, t, x1..xn, lhs, rhs`, modes 1-based.
pub fn violations_csv(prov: &Provenance, dim: usize, reports: &[ConditionReport]) -> String {
    let mut header = cols(&["condition", "mode", "other", "t"]);
    header.extend((1..=dim).map(|k| format!("x{k}")));
    header.extend(cols(&["lhs", "rhs"]));
    let rows = reports.iter().flat_map(|r| {
        r.violations.iter().map(move |v| {
            let mut row = vec![
                csv_field(&r.condition.to_string()),
                (v.mode + 1).to_string(),
                v.other.map(|o| (o + 1).to_string()).unwrap_or_default(),
                v.t.to_string(),
            ];
            row.extend(v.x.iter().map(|c| c.to_string()));
            row.push(v.lhs.to_string());
            row.push(v.rhs.to_string());
            row
        })
    });
    csv(prov, &header, rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Human-readable block for one condition report.
pub fn condition_text(report: &ConditionReport) -> String {
    let status = if report.passed() { "PASS" } else { "FAIL" };
    let mut s = format!(
        "{status} {}: {} violations over {} samples; worst margin {:e}; region: {}\n",
        report.condition,
        report.violations.len(),
        report.samples,
        report.worst_margin,
        report.region
    );
    if let Some(v) = report.violations.iter().max_by(|a, b| (a.lhs - a.rhs).total_cmp(&(b.lhs - b.rhs))) {
        writeln!(s, "    worst at t = {}, x = {:?}: lhs {} > rhs {}", v.t, v.x, v.lhs, v.rhs).unwrap();
    }
    s
}

/// `rep, terminal_norm, sup_norm, lyap_slope, lyap_endpoint, aborted, underflow`.
pub fn replications_csv(prov: &Provenance, stats: &EnsembleStats) -> String {
    let rows = stats.replications.iter().map(|r| {
        vec![
            r.rep.to_string(),
            r.terminal_norm.to_string(),
            r.sup_norm.to_string(),
            opt(r.lyap_slope),
            opt(r.lyap_endpoint),
            opt(r.aborted_at),
            r.underflow.to_string(),
        ]
    });
    csv(
        prov,
        &cols(&["rep", "terminal_norm", "sup_norm", "lyap_slope", "lyap_endpoint", "aborted", "underflow"]),
        rows,
    )
}

/// `t, ms`.
pub fn mean_square_csv(prov: &Provenance, stats: &EnsembleStats) -> String {
    let rows = stats.grid.iter().zip(&stats.mean_square).map(|(t, v)| vec![t.to_string(), v.to_string()]);
    csv(prov, &cols(&["t", "ms"]), rows)
}

/// `t, occ_1..occ_M`, plus `max_error` when the law has a stationary distribution.
pub fn occupancy_csv(prov: &Provenance, grid: &[f64], occupancy: &[Vec<f64>], error: Option<&[f64]>) -> String {
    let modes = occupancy.first().map_or(0, Vec::len);
    let mut header = cols(&["t"]);
    header.extend((1..=modes).map(|i| format!("occ_{i}")));
    if error.is_some() {
        header.push("max_error".into());
    }
    let rows = grid.iter().enumerate().map(|(k, t)| {
        let mut row = vec![t.to_string()];
        row.extend(occupancy[k].iter().map(|v| v.to_string()));
        if let Some(e) = error {
            row.push(e[k].to_string());
        }
        row
    });
    csv(prov, &header, rows)
}

/// Per-replication outcome of the pathwise estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseSummary {
    pub rep: usize,
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub error: Option<String>,
}

/// `rep, samples, violations, worst_margin, error`.
pub fn pathwise_csv(prov: &Provenance, rows: &[PathwiseSummary]) -> String {
    let rows = rows.iter().map(|p| {
        vec![
            p.rep.to_string(),
            p.samples.to_string(),
            p.violations.to_string(),
            p.worst_margin.to_string(),
            p.error.as_deref().map(csv_field).unwrap_or_default(),
        ]
    });
    csv(prov, &cols(&["rep", "samples", "violations", "worst_margin", "error"]), rows)
}

/// An output directory owned by one invocation.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(OutputDir { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, contents: &str) -> io::Result<PathBuf> {
        let p = self.root.join(name);
        fs::write(&p, contents)?;
        Ok(p)
    }
}
