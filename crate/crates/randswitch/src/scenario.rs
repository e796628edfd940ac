//! Scenario files: a TOML document describing modes, Lyapunov data, the
//! switching law, simulation and analysis settings.
//!
//! ```toml
//! name = "demo"
//! dimension = 1
//! seed = 7
//!
//! [[modes]]
//! name = "decay"
//! field = ["-x1"]
//! V = "x1^2"
//! lambda = "-2"
//! mu = 1.0
//!
//! [envelopes]
//! c1 = 1.0
//! p1 = 2.0
//! c2 = 1.0
//! p2 = 2.0
//!
//! [switching]
//! law = "renewal"          # or "semi_markov" (P, dwell list) / "markov" (Q)
//! p = [1.0]
//! dwell = { dist = "deterministic", duration = 1.0 }
//! initial_mode = 1         # 1-based
//!
//! [sim]
//! horizon = 5.0
//! step = 1e-3
//! x0 = [1.0]
//! ```
//!
//! Everything is validated when loading; errors name the offending field.

use std::fmt::Write as _;
use std::path::Path;

use randswitch_core::criteria::{BoundKind, ModeBounds};
use randswitch_core::dynamics::{DynamicsError, ModeDynamics};
use randswitch_core::ensemble::EnsembleConfig;
use randswitch_core::lyapunov::{sample_mesh, Sample};
use randswitch_core::musf::{default_t_grid, log_grid, MonteCarlo};
use randswitch_core::switching::SwitchingError;
use randswitch_core::{parse_expr, DwellModel, Envelope, Expr, LyapunovSpec, SwitchedSystem, SwitchingLaw};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const EXAMPLE1_SEMIMARKOV: &str = include_str!("../scenarios/example1_semimarkov.toml");
pub const EXAMPLE1_MARKOV: &str = include_str!("../scenarios/example1_markov.toml");

/// Scenarios shipped with the binary, addressable by name on the command line.
pub const BUILTIN: [(&str, &str); 2] =
    [("example1_semimarkov", EXAMPLE1_SEMIMARKOV), ("example1_markov", EXAMPLE1_MARKOV)];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("no scenario file or built-in scenario named `{0}`")]
    Unknown(String),
}

fn invalid(field: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.to_string() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub dimension: usize,
    #[serde(default)]
    pub seed: u64,
    pub modes: Vec<ModeEntry>,
    pub envelopes: EnvelopeEntry,
    pub switching: SwitchingEntry,
    pub sim: SimEntry,
    #[serde(default)]
    pub analysis: AnalysisEntry,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    #[serde(default)]
    pub name: Option<String>,
    pub field: Vec<String>,
    #[serde(rename = "V")]
    pub v: String,
    pub lambda: String,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeEntry {
    pub c1: f64,
    pub p1: f64,
    pub c2: f64,
    pub p2: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum DwellEntry {
    Exponential { rate: f64 },
    Deterministic { duration: f64 },
    Uniform { low: f64, high: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl From<DwellEntry> for DwellModel {
    fn from(d: DwellEntry) -> Self {
        match d {
            DwellEntry::Exponential { rate } => DwellModel::Exponential { rate },
            DwellEntry::Deterministic { duration } => DwellModel::Deterministic { duration },
            DwellEntry::Uniform { low, high } => DwellModel::Uniform { low, high },
            DwellEntry::Gamma { shape, scale } => DwellModel::Gamma { shape, scale },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitchingEntry {
    SemiMarkov {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        dwell: Vec<DwellEntry>,
        initial_mode: usize,
    },
    Markov {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        initial_mode: usize,
    },
    Renewal {
        p: Vec<f64>,
        dwell: DwellEntry,
        initial_mode: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimEntry {
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    pub x0: Vec<f64>,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_step() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridEntry {
    Log { end: f64, points: usize },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceBoundsEntry {
    pub kind: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisEntry {
    pub t_grid: Option<GridEntry>,
    pub mc_samples: usize,
    pub sample_radius: f64,
    pub sample_t: [f64; 2],
    pub sample_t_points: usize,
    pub sample_x_points: usize,
    pub ua_time: f64,
    pub reference_bounds: Option<ReferenceBoundsEntry>,
}

impl Default for AnalysisEntry {
    fn default() -> Self {
        AnalysisEntry {
            t_grid: None,
            mc_samples: MonteCarlo::DEFAULT_SAMPLES,
            sample_radius: 10.0,
            sample_t: [0.0, 20.0],
            sample_t_points: 33,
            sample_x_points: 512,
            ua_time: 0.0,
            reference_bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub t0: f64,
    pub horizon: f64,
    pub step: f64,
    pub x0: Vec<f64>,
    pub output_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub t_grid: Vec<f64>,
    pub mc_samples: usize,
    pub sample_radius: f64,
    pub sample_t: [f64; 2],
    pub sample_t_points: usize,
    pub sample_x_points: usize,
    /// `T` of the uniform-attraction statistic `sup_{t ≥ T} |x(t)|`.
    pub ua_time: f64,
    pub reference_bounds: Option<ModeBounds>,
}

/// A loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// SHA-256 of the scenario source text, lowercase hex.
    pub sha256: String,
    pub seed: u64,
    pub dimension: usize,
    pub mode_names: Vec<String>,
    pub system: SwitchedSystem,
    pub lyapunov: LyapunovSpec,
    pub law: SwitchingLaw,
    pub sim: SimSettings,
    pub analysis: AnalysisSettings,
    /// Modes `i` with `f_i(t, 0) ≠ 0` at some checked time.
    pub equilibrium_warnings: Vec<(usize, f64)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Loads a scenario from a file path, or a built-in scenario by name.
pub fn load_scenario(spec: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: spec.into(), source })?;
        return parse_scenario(&text);
    }
    let stem = spec.strip_suffix(".toml").unwrap_or(spec);
    match BUILTIN.iter().find(|(name, _)| *name == stem) {
        Some((_, text)) => parse_scenario(text),
        None => Err(ScenarioError::Unknown(spec.into())),
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    build(file, sha256_hex(text.as_bytes()))
}

fn expr(field: String, src: &str, dim: usize) -> Result<Expr, ScenarioError> {
    parse_expr(src, dim).map_err(|e| invalid(field, format!("`{src}`: {e}")))
}

fn build(file: ScenarioFile, sha256: String) -> Result<Scenario, ScenarioError> {
    let n = file.dimension;
    if n == 0 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    if file.modes.is_empty() {
        return Err(invalid("modes", "at least one mode is required"));
    }
    let m = file.modes.len();

    let mut fields = Vec::with_capacity(m);
    let mut vs = Vec::with_capacity(m);
    let mut rates = Vec::with_capacity(m);
    let mut mu = Vec::with_capacity(m);
    for (i, mode) in file.modes.iter().enumerate() {
        if mode.field.len() != n {
            return Err(invalid(
                format!("modes[{i}].field"),
                format!("has {} components, dimension is {n}", mode.field.len()),
            ));
        }
        let comps = mode
            .field
            .iter()
            .enumerate()
            .map(|(k, src)| expr(format!("modes[{i}].field[{k}]"), src, n))
            .collect::<Result<Vec<_>, _>>()?;
        fields.push(ModeDynamics::new(comps));
        vs.push(expr(format!("modes[{i}].V"), &mode.v, n)?);
        let rate = expr(format!("modes[{i}].lambda"), &mode.lambda, n)?;
        if rate.depends_on_state() {
            return Err(invalid(format!("modes[{i}].lambda"), "rate functions may depend on t only"));
        }
        rates.push(rate);
        if !(mode.mu >= 1.0 && mode.mu.is_finite()) {
            return Err(invalid(format!("modes[{i}].mu"), format!("jump factor {} must be at least 1", mode.mu)));
        }
        mu.push(mode.mu);
    }
    let system = SwitchedSystem::new(n, fields).map_err(|e| match e {
        DynamicsError::Parse { mode, component, source } => {
            invalid(format!("modes[{mode}].field[{component}]"), source)
        }
        other => invalid("modes", other),
    })?;

    let e = file.envelopes;
    let envelope = Envelope { c1: e.c1, p1: e.p1, c2: e.c2, p2: e.p2 };
    let lyapunov = LyapunovSpec::new(vs, rates, mu, envelope).map_err(|e| invalid("envelopes", e))?;

    let law = build_law(&file.switching, m)?;
    law.statistics().map_err(|e| invalid("switching", e))?;

    let sim = &file.sim;
    if !(sim.horizon > 0.0 && sim.horizon.is_finite()) {
        return Err(invalid("sim.horizon", format!("must be positive, got {}", sim.horizon)));
    }
    if !(sim.step > 0.0 && sim.step <= sim.horizon) {
        return Err(invalid("sim.step", format!("must lie in (0, horizon], got {}", sim.step)));
    }
    if !sim.t0.is_finite() {
        return Err(invalid("sim.t0", "must be finite"));
    }
    if sim.x0.len() != n {
        return Err(invalid("sim.x0", format!("has {} entries, dimension is {n}", sim.x0.len())));
    }
    if sim.x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sim.x0", "entries must be finite"));
    }
    if sim.output_stride == 0 {
        return Err(invalid("sim.output_stride", "must be at least 1"));
    }

    let a = &file.analysis;
    let t_grid = match &a.t_grid {
        None => default_t_grid(),
        Some(GridEntry::Log { end, points }) => {
            if !(*end > 0.0) || *points == 0 {
                return Err(invalid("analysis.t_grid", "log grid needs end > 0 and points >= 1"));
            }
            log_grid(*end, *points)
        }
        Some(GridEntry::Explicit(v)) => {
            if v.is_empty() || v.windows(2).any(|w| !(w[0] < w[1])) || v.iter().any(|t| !t.is_finite()) {
                return Err(invalid("analysis.t_grid", "must be a non-empty, strictly increasing list"));
            }
            v.clone()
        }
    };
    if a.mc_samples == 0 {
        return Err(invalid("analysis.mc_samples", "must be at least 1"));
    }
    if !(a.sample_radius > 0.0) {
        return Err(invalid("analysis.sample_radius", "must be positive"));
    }
    if !(a.sample_t[0] <= a.sample_t[1]) || a.sample_t_points == 0 || a.sample_x_points == 0 {
        return Err(invalid("analysis.sample_t", "needs t_lo <= t_hi and positive point counts"));
    }
    if n > 16 {
        return Err(invalid("dimension", "quasi-random sampling supports at most 16 dimensions"));
    }
    let reference_bounds = match &a.reference_bounds {
        None => None,
        Some(pb) => {
            let kind = match pb.kind.to_ascii_uppercase().as_str() {
                "PHI" => BoundKind::Phi,
                "M" => BoundKind::M,
                "LAMBDA_BAR" => BoundKind::LambdaBar,
                other => {
                    return Err(invalid(
                        "analysis.reference_bounds.kind",
                        format!("unknown kind `{other}` (expected PHI, M or LAMBDA_BAR)"),
                    ))
                }
            };
            if pb.values.len() != m {
                return Err(invalid(
                    "analysis.reference_bounds.values",
                    format!("has {} entries for {m} modes", pb.values.len()),
                ));
            }
            Some(ModeBounds::uniform(kind, &pb.values, lyapunov.jump_factors()))
        }
    };

    let mode_names = file
        .modes
        .iter()
        .enumerate()
        .map(|(i, mode)| mode.name.clone().unwrap_or_else(|| format!("mode {}", i + 1)))
        .collect();
    let checks: Vec<f64> = (0..=20).map(|k| sim.t0 + sim.horizon * k as f64 / 20.0).collect();
    let equilibrium_warnings = system.equilibrium_violations(&checks);

    Ok(Scenario {
        name: file.name,
        sha256,
        seed: file.seed,
        dimension: n,
        mode_names,
        system,
        lyapunov,
        law,
        sim: SimSettings {
            t0: sim.t0,
            horizon: sim.horizon,
            step: sim.step,
            x0: sim.x0.clone(),
            output_stride: sim.output_stride,
        },
        analysis: AnalysisSettings {
            t_grid,
            mc_samples: a.mc_samples,
            sample_radius: a.sample_radius,
            sample_t: a.sample_t,
            sample_t_points: a.sample_t_points,
            sample_x_points: a.sample_x_points,
            ua_time: a.ua_time,
            reference_bounds,
        },
        equilibrium_warnings,
    })
}

fn initial(initial_mode: usize, m: usize) -> Result<usize, ScenarioError> {
    if initial_mode == 0 || initial_mode > m {
        return Err(invalid("switching.initial_mode", format!("must be in 1..={m} (1-based), got {initial_mode}")));
    }
    Ok(initial_mode - 1)
}

fn law_error(matrix: &str, e: SwitchingError) -> ScenarioError {
    match e {
        SwitchingError::RowSum { row, .. } | SwitchingError::NonZeroDiagonal { row, .. } => {
            invalid(format!("switching.{matrix}[{row}]"), e)
        }
        SwitchingError::NegativeEntry { row, col, .. } => invalid(format!("switching.{matrix}[{row}][{col}]"), e),
        SwitchingError::NonPositiveExitRate { mode, .. } => invalid(format!("switching.{matrix}[{mode}][{mode}]"), e),
        SwitchingError::NotSquare { bad_row, .. } => invalid(format!("switching.{matrix}[{bad_row}]"), e),
        SwitchingError::InvalidDwell { mode, .. } => invalid(format!("switching.dwell[{mode}]"), e),
        SwitchingError::NegativeProbability { index, .. } => invalid(format!("switching.p[{index}]"), e),
        other => invalid(format!("switching.{matrix}"), other),
    }
}

fn build_law(entry: &SwitchingEntry, m: usize) -> Result<SwitchingLaw, ScenarioError> {
    match entry {
        SwitchingEntry::SemiMarkov { p, dwell, initial_mode } => {
            if p.len() != m {
                return Err(invalid("switching.P", format!("has {} rows for {m} modes", p.len())));
            }
            if dwell.len() != m {
                return Err(invalid("switching.dwell", format!("has {} entries for {m} modes", dwell.len())));
            }
            let r0 = initial(*initial_mode, m)?;
            let dwell = dwell.iter().map(|d| DwellModel::from(*d)).collect();
            SwitchingLaw::semi_markov(p.clone(), dwell, r0).map_err(|e| law_error("P", e))
        }
        SwitchingEntry::Markov { q, initial_mode } => {
            if q.len() != m {
                return Err(invalid("switching.Q", format!("has {} rows for {m} modes", q.len())));
            }
            let r0 = initial(*initial_mode, m)?;
            SwitchingLaw::markov(q.clone(), r0).map_err(|e| law_error("Q", e))
        }
        SwitchingEntry::Renewal { p, dwell, initial_mode } => {
            if p.len() != m {
                return Err(invalid("switching.p", format!("has {} entries for {m} modes", p.len())));
            }
            let r0 = initial(*initial_mode, m)?;
            SwitchingLaw::renewal(p.clone(), DwellModel::from(*dwell), r0).map_err(|e| match e {
                SwitchingError::InvalidDwell { .. } => invalid("switching.dwell", e),
                other => law_error("p", other),
            })
        }
    }
}

impl Scenario {
    pub fn mode_count(&self) -> usize {
        self.mode_names.len()
    }

    pub fn t_end(&self) -> f64 {
        self.sim.t0 + self.sim.horizon
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            system: self.system.clone(),
            law: self.law.clone(),
            t0: self.sim.t0,
            horizon: self.sim.horizon,
            step: self.sim.step,
            x0: self.sim.x0.clone(),
            output_stride: self.sim.output_stride,
            sup_from: self.sim.t0 + self.analysis.ua_time,
        }
    }

    /// The sampled region of the Lyapunov checks.
    pub fn samples(&self) -> Vec<Sample> {
        let a = &self.analysis;
        sample_mesh(a.sample_t[0], a.sample_t[1], a.sample_t_points, self.dimension, a.sample_radius, a.sample_x_points)
    }

    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo { samples: self.analysis.mc_samples, seed: self.seed, stream: 0 }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self
    }

    pub fn with_horizon(mut self, horizon: Option<f64>) -> Result<Self, ScenarioError> {
        if let Some(h) = horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid("--horizon", format!("must be positive, got {h}")));
            }
            self.sim.horizon = h;
        }
        Ok(self)
    }

    pub fn with_step(mut self, step: Option<f64>) -> Result<Self, ScenarioError> {
        if let Some(s) = step {
            if !(s > 0.0 && s <= self.sim.horizon) {
                return Err(invalid("--step", format!("must lie in (0, horizon], got {s}")));
            }
            self.sim.step = s;
        }
        Ok(self)
    }
}
