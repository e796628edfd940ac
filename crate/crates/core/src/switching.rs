//! Switching laws, their ergodic quantities, and random switching paths.
//!
//! Three laws are supported. A semi-Markov law moves between modes along an
//! embedded chain `P` (zero diagonal) and stays in mode `i` for a dwell
//! drawn from that mode's [`DwellModel`]. A Markov law is the special case
//! given by a generator `Q`: exponential dwell with rate `q_i = -Q_ii`,
//! then a jump to `j` with probability `Q_ij / q_i`. A renewal law draws
//! every dwell from one common model and every next mode independently
//! from `p`.
//!
//! Modes are 0-based throughout the library.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::rng::{StreamId, StreamRng};

const ROW_SUM_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwitchingError {
    #[error("matrix must be square and non-empty ({rows} rows, row {bad_row} has {cols} entries)")]
    NotSquare { rows: usize, bad_row: usize, cols: usize },
    #[error("row {row} sums to {sum}, expected {expected}")]
    RowSum { row: usize, sum: f64, expected: f64 },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("diagonal entry {row} of the embedded chain must be zero, got {value}")]
    NonZeroDiagonal { row: usize, value: f64 },
    #[error("mode {mode} has exit rate {rate}; every mode must have a positive exit rate")]
    NonPositiveExitRate { mode: usize, rate: f64 },
    #[error("chain is reducible: not every mode reaches every other")]
    Reducible,
    #[error("stationary solve failed: {0}")]
    Singular(&'static str),
    #[error("stationary residual {residual} exceeds {RESIDUAL_TOL}")]
    Residual { residual: f64 },
    #[error("probability vector sums to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("probability entry {index} = {value} is negative")]
    NegativeProbability { index: usize, value: f64 },
    #[error("dwell model for mode {mode}: {reason}")]
    InvalidDwell { mode: usize, reason: &'static str },
    #[error("mean dwell time of mode {mode} is {value}; must be positive")]
    NonPositiveMean { mode: usize, value: f64 },
    #[error("expected {expected} entries, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("initial mode {mode} out of range for {modes} modes")]
    InitialMode { mode: usize, modes: usize },
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("interval [{s}, {t}] is outside the path support [{t0}, {end}]")]
    OutsideSupport { s: f64, t: f64, t0: f64, end: f64 },
    #[error("switching path is malformed: {0}")]
    MalformedPath(&'static str),
}

/// Distribution of the time spent in a mode before the next switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DwellModel {
    Exponential { rate: f64 },
    Deterministic { duration: f64 },
    Uniform { low: f64, high: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl DwellModel {
    pub fn validate(&self, mode: usize) -> Result<(), SwitchingError> {
        let bad = |reason| Err(SwitchingError::InvalidDwell { mode, reason });
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            DwellModel::Exponential { rate } if !pos(rate) => bad("exponential rate must be positive"),
            DwellModel::Deterministic { duration } if !pos(duration) => {
                bad("deterministic duration must be positive")
            }
            DwellModel::Uniform { low, high } if !(pos(low) && high > low && high.is_finite()) => {
                bad("uniform bounds must satisfy 0 < low < high")
            }
            DwellModel::Gamma { shape, scale } if !(pos(shape) && pos(scale)) => {
                bad("gamma shape and scale must be positive")
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DwellModel::Exponential { rate } => 1.0 / rate,
            DwellModel::Deterministic { duration } => duration,
            DwellModel::Uniform { low, high } => 0.5 * (low + high),
            DwellModel::Gamma { shape, scale } => shape * scale,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, DwellModel::Deterministic { .. })
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            DwellModel::Exponential { rate } => rng.exponential(rate),
            DwellModel::Deterministic { duration } => duration,
            DwellModel::Uniform { low, high } => low + (high - low) * rng.uniform(),
            DwellModel::Gamma { shape, scale } => rng.gamma(shape, scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    SemiMarkov { transition: Matrix, dwell: Vec<DwellModel> },
    Markov { generator: Matrix },
    Renewal { probabilities: Vec<f64>, dwell: DwellModel },
}

/// A validated switching law together with its initial mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingLaw {
    kind: LawKind,
    initial_mode: usize,
}

/// Ergodic quantities of a law. Fields not defined for a law are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LawStatistics {
    /// Long-run fraction of time spent in each mode.
    pub occupancy: Vec<f64>,
    /// Stationary distribution of the embedded jump chain.
    pub embedded: Option<Vec<f64>>,
    /// Mean dwell per mode.
    pub mean_dwell: Option<Vec<f64>>,
    /// Exit rates `q_i` (Markov only).
    pub exit_rates: Option<Vec<f64>>,
    /// Mode probabilities (renewal only).
    pub mode_probabilities: Option<Vec<f64>>,
    /// Common mean dwell (renewal only).
    pub mean_interarrival: Option<f64>,
}

fn check_square(m: &Matrix) -> Result<usize, SwitchingError> {
    let n = m.len();
    if n == 0 {
        return Err(SwitchingError::NotSquare { rows: 0, bad_row: 0, cols: 0 });
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(SwitchingError::NotSquare { rows: n, bad_row: i, cols: row.len() });
        }
    }
    Ok(n)
}

fn check_stochastic(p: &Matrix) -> Result<usize, SwitchingError> {
    let n = check_square(p)?;
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(SwitchingError::NegativeEntry { row: i, col: j, value: v });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(SwitchingError::RowSum { row: i, sum, expected: 1.0 });
        }
    }
    Ok(n)
}

fn check_generator(q: &Matrix) -> Result<usize, SwitchingError> {
    let n = check_square(q)?;
    for (i, row) in q.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && !(v >= 0.0) {
                return Err(SwitchingError::NegativeEntry { row: i, col: j, value: v });
            }
        }
        let sum: f64 = row.iter().sum();
        if !(sum.abs() <= ROW_SUM_TOL) {
            return Err(SwitchingError::RowSum { row: i, sum, expected: 0.0 });
        }
    }
    Ok(n)
}

fn check_probability(p: &[f64]) -> Result<(), SwitchingError> {
    for (index, &value) in p.iter().enumerate() {
        if !(value >= 0.0) {
            return Err(SwitchingError::NegativeProbability { index, value });
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(SwitchingError::ProbabilitySum(sum));
    }
    Ok(())
}

// Solves x·A = 0 with Σx = 1 by replacing the last balance equation with the
// normalisation row.
fn left_null_vector(a: &Matrix) -> Result<Vec<f64>, SwitchingError> {
    let n = a.len();
    let mut sys: Matrix = (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect();
    sys[n - 1] = vec![1.0; n];
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    linalg::solve(sys, rhs).ok_or(SwitchingError::Singular("balance equations are singular"))
}

/// Stationary distribution `π̄` of a row-stochastic matrix: `π̄P = π̄`.
pub fn embedded_stationary(p: &Matrix) -> Result<Vec<f64>, SwitchingError> {
    let n = check_stochastic(p)?;
    if !linalg::strongly_connected(p) {
        return Err(SwitchingError::Reducible);
    }
    let mut shifted = p.clone();
    for (i, row) in shifted.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    let pi = left_null_vector(&shifted)?;
    let image = linalg::vec_mat(&pi, p);
    let residual = (0..n).map(|i| (image[i] - pi[i]).abs()).fold(0.0, f64::max);
    if residual >= RESIDUAL_TOL {
        return Err(SwitchingError::Residual { residual });
    }
    Ok(pi)
}

/// Time-occupancy distribution of a semi-Markov chain:
/// `π_i = π̄_i m_i / Σ_j π̄_j m_j`.
pub fn semi_markov_stationary(embedded: &[f64], mean_dwell: &[f64]) -> Result<Vec<f64>, SwitchingError> {
    if embedded.len() != mean_dwell.len() {
        return Err(SwitchingError::DimensionMismatch {
            expected: embedded.len(),
            found: mean_dwell.len(),
        });
    }
    check_probability(embedded)?;
    for (mode, &value) in mean_dwell.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(SwitchingError::NonPositiveMean { mode, value });
        }
    }
    let weighted: Vec<f64> = embedded.iter().zip(mean_dwell).map(|(p, m)| p * m).collect();
    let total: f64 = weighted.iter().sum();
    Ok(weighted.into_iter().map(|w| w / total).collect())
}

/// Stationary distribution of a continuous-time chain: `πQ = 0`, `Σπ = 1`.
pub fn ctmc_stationary(q: &Matrix) -> Result<Vec<f64>, SwitchingError> {
    let n = check_generator(q)?;
    if !linalg::strongly_connected(q) {
        return Err(SwitchingError::Reducible);
    }
    let pi = left_null_vector(q)?;
    let scale = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(1.0, f64::max);
    let image = linalg::vec_mat(&pi, q);
    let residual = image.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if residual >= RESIDUAL_TOL * scale || n == 0 {
        return Err(SwitchingError::Residual { residual });
    }
    Ok(pi)
}

impl SwitchingLaw {
    pub fn semi_markov(
        transition: Matrix,
        dwell: Vec<DwellModel>,
        initial_mode: usize,
    ) -> Result<Self, SwitchingError> {
        let n = check_stochastic(&transition)?;
        for (i, row) in transition.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(SwitchingError::NonZeroDiagonal { row: i, value: row[i] });
            }
        }
        if dwell.len() != n {
            return Err(SwitchingError::DimensionMismatch { expected: n, found: dwell.len() });
        }
        for (mode, d) in dwell.iter().enumerate() {
            d.validate(mode)?;
        }
        Self::with_initial(LawKind::SemiMarkov { transition, dwell }, n, initial_mode)
    }

    pub fn markov(generator: Matrix, initial_mode: usize) -> Result<Self, SwitchingError> {
        let n = check_generator(&generator)?;
        for (mode, row) in generator.iter().enumerate() {
            let rate = -row[mode];
            if !(rate > 0.0) {
                return Err(SwitchingError::NonPositiveExitRate { mode, rate });
            }
        }
        Self::with_initial(LawKind::Markov { generator }, n, initial_mode)
    }

    pub fn renewal(
        probabilities: Vec<f64>,
        dwell: DwellModel,
        initial_mode: usize,
    ) -> Result<Self, SwitchingError> {
        if probabilities.is_empty() {
            return Err(SwitchingError::DimensionMismatch { expected: 1, found: 0 });
        }
        check_probability(&probabilities)?;
        dwell.validate(0)?;
        let n = probabilities.len();
        Self::with_initial(LawKind::Renewal { probabilities, dwell }, n, initial_mode)
    }

    fn with_initial(kind: LawKind, n: usize, initial_mode: usize) -> Result<Self, SwitchingError> {
        if initial_mode >= n {
            return Err(SwitchingError::InitialMode { mode: initial_mode, modes: n });
        }
        Ok(SwitchingLaw { kind, initial_mode })
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn initial_mode(&self) -> usize {
        self.initial_mode
    }

    pub fn mode_count(&self) -> usize {
        match &self.kind {
            LawKind::SemiMarkov { transition, .. } => transition.len(),
            LawKind::Markov { generator } => generator.len(),
            LawKind::Renewal { probabilities, .. } => probabilities.len(),
        }
    }

    /// Dwell distribution of `mode`.
    pub fn dwell_model(&self, mode: usize) -> DwellModel {
        match &self.kind {
            LawKind::SemiMarkov { dwell, .. } => dwell[mode],
            LawKind::Markov { generator } => DwellModel::Exponential { rate: -generator[mode][mode] },
            LawKind::Renewal { dwell, .. } => *dwell,
        }
    }

    /// Whether consecutive modes of a sampled path must differ.
    pub fn forbids_self_transitions(&self) -> bool {
        !matches!(self.kind, LawKind::Renewal { .. })
    }

    /// Ergodic quantities of the law (requires irreducibility for chains).
    pub fn statistics(&self) -> Result<LawStatistics, SwitchingError> {
        let n = self.mode_count();
        let mean_dwell: Vec<f64> = (0..n).map(|i| self.dwell_model(i).mean()).collect();
        match &self.kind {
            LawKind::SemiMarkov { transition, .. } => {
                let embedded = embedded_stationary(transition)?;
                let occupancy = semi_markov_stationary(&embedded, &mean_dwell)?;
                Ok(LawStatistics {
                    occupancy,
                    embedded: Some(embedded),
                    mean_dwell: Some(mean_dwell),
                    ..Default::default()
                })
            }
            LawKind::Markov { generator } => {
                let occupancy = ctmc_stationary(generator)?;
                let exit_rates: Vec<f64> = (0..n).map(|i| -generator[i][i]).collect();
                let jump_chain: Matrix = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| if i == j { 0.0 } else { generator[i][j] / exit_rates[i] })
                            .collect()
                    })
                    .collect();
                let embedded = embedded_stationary(&jump_chain).ok();
                Ok(LawStatistics {
                    occupancy,
                    embedded,
                    mean_dwell: Some(mean_dwell),
                    exit_rates: Some(exit_rates),
                    ..Default::default()
                })
            }
            LawKind::Renewal { probabilities, dwell } => Ok(LawStatistics {
                occupancy: probabilities.clone(),
                embedded: Some(probabilities.clone()),
                mean_dwell: Some(mean_dwell),
                mode_probabilities: Some(probabilities.clone()),
                mean_interarrival: Some(dwell.mean()),
                ..Default::default()
            }),
        }
    }

    fn next_mode(&self, current: usize, rng: &mut StreamRng) -> usize {
        match &self.kind {
            LawKind::SemiMarkov { transition, .. } => rng.categorical(&transition[current]),
            LawKind::Markov { generator } => {
                let row: Vec<f64> = generator[current]
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| if j == current { 0.0 } else { v })
                    .collect();
                rng.categorical(&row)
            }
            LawKind::Renewal { probabilities, .. } => rng.categorical(probabilities),
        }
    }

    /// Samples a path on `[t0, t0 + horizon]` from the given stream.
    pub fn sample_path(&self, t0: f64, horizon: f64, rng: &mut StreamRng) -> Result<SwitchingPath, SwitchingError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SwitchingError::NonPositiveHorizon(horizon));
        }
        let end = t0 + horizon;
        let mut times = Vec::new();
        let mut modes = vec![self.initial_mode];
        let mut current = self.initial_mode;
        let mut t = t0;
        loop {
            let dwell = self.dwell_model(current).sample(rng);
            t += dwell;
            if t > end {
                break;
            }
            current = self.next_mode(current, rng);
            times.push(t);
            modes.push(current);
        }
        Ok(SwitchingPath { t0, horizon, times, modes })
    }
}

/// Samples a path from the substream `stream` of `master_seed`.
pub fn sample_path(
    law: &SwitchingLaw,
    t0: f64,
    horizon: f64,
    master_seed: u64,
    stream: StreamId,
) -> Result<SwitchingPath, SwitchingError> {
    law.sample_path(t0, horizon, &mut StreamRng::new(master_seed, stream))
}

/// A realised piecewise-constant mode signal.
///
/// `modes[k]` is active on `[times[k-1], times[k])`, with `times[-1] = t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingPath {
    t0: f64,
    horizon: f64,
    times: Vec<f64>,
    modes: Vec<usize>,
}

/// Switch counts and occupation times over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCounts {
    pub switches: usize,
    pub entries: Vec<usize>,
    pub occupation: Vec<f64>,
}

impl SwitchingPath {
    pub fn new(t0: f64, horizon: f64, times: Vec<f64>, modes: Vec<usize>) -> Result<Self, SwitchingError> {
        if !(horizon > 0.0) {
            return Err(SwitchingError::NonPositiveHorizon(horizon));
        }
        if modes.len() != times.len() + 1 {
            return Err(SwitchingError::MalformedPath("need exactly one more mode than switch times"));
        }
        let end = t0 + horizon;
        let mut prev = t0;
        for &t in &times {
            if !(t > prev && t <= end) {
                return Err(SwitchingError::MalformedPath(
                    "switch times must be strictly increasing inside (t0, t0 + horizon]",
                ));
            }
            prev = t;
        }
        Ok(SwitchingPath { t0, horizon, times, modes })
    }

    /// A path that never switches.
    pub fn constant(t0: f64, horizon: f64, mode: usize) -> Self {
        SwitchingPath { t0, horizon, times: Vec::new(), modes: vec![mode] }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn initial_mode(&self) -> usize {
        self.modes[0]
    }

    /// Largest mode index plus one.
    pub fn mode_span(&self) -> usize {
        self.modes.iter().copied().max().unwrap_or(0) + 1
    }

    /// Mode active at `t` (right-continuous at switch times).
    pub fn mode_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&tk| tk <= t);
        self.modes[k]
    }

    /// Segments `(start, end, mode)` covering `[t0, min(t_end, end)]`.
    pub fn segments(&self, t_end: f64) -> Vec<(f64, f64, usize)> {
        let stop = t_end.min(self.end());
        let mut out = Vec::new();
        let mut start = self.t0;
        for (k, &tk) in self.times.iter().enumerate() {
            if tk >= stop {
                break;
            }
            out.push((start, tk, self.modes[k]));
            start = tk;
        }
        let mode = self.mode_at(start);
        if stop > start || out.is_empty() {
            out.push((start, stop, mode));
        }
        out
    }

    /// Counts over the window `[s, t]`: switches in `(s, t]`, entries into
    /// each mode, and time spent in each mode.
    pub fn counts(&self, s: f64, t: f64, modes: usize) -> Result<PathCounts, SwitchingError> {
        if !(self.t0 <= s && s <= t && t <= self.end()) {
            return Err(SwitchingError::OutsideSupport { s, t, t0: self.t0, end: self.end() });
        }
        let modes = modes.max(self.mode_span());
        let mut entries = vec![0usize; modes];
        let mut occupation = vec![0.0; modes];
        let mut switches = 0;
        let mut cursor = s;
        let mut mode = self.mode_at(s);
        let first = self.times.partition_point(|&tk| tk <= s);
        for k in first..self.times.len() {
            let tk = self.times[k];
            if tk > t {
                break;
            }
            occupation[mode] += tk - cursor;
            cursor = tk;
            mode = self.modes[k + 1];
            entries[mode] += 1;
            switches += 1;
        }
        occupation[mode] += t - cursor;
        Ok(PathCounts { switches, entries, occupation })
    }

    /// Fraction of `[t0, t]` spent in each mode, for each `t` in `grid`.
    ///
    /// At `t = t0` the fraction is the indicator of the initial mode.
    pub fn occupancy_series(&self, grid: &[f64], modes: usize) -> Result<Vec<Vec<f64>>, SwitchingError> {
        let modes = modes.max(self.mode_span());
        let mut out = Vec::with_capacity(grid.len());
        for &t in grid {
            if t == self.t0 {
                let mut row = vec![0.0; modes];
                row[self.initial_mode()] = 1.0;
                out.push(row);
                continue;
            }
            let c = self.counts(self.t0, t, modes)?;
            let span = t - self.t0;
            out.push(c.occupation.iter().map(|v| v / span).collect());
        }
        Ok(out)
    }
}

/// Free-function form of [`SwitchingPath::counts`].
pub fn path_counts(path: &SwitchingPath, s: f64, t: f64, modes: usize) -> Result<PathCounts, SwitchingError> {
    path.counts(s, t, modes)
}

/// Free-function form of [`SwitchingPath::occupancy_series`].
pub fn occupancy_series(path: &SwitchingPath, grid: &[f64], modes: usize) -> Result<Vec<Vec<f64>>, SwitchingError> {
    path.occupancy_series(grid, modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamTag;

    pub(crate) fn example_p() -> Matrix {
        vec![vec![0.0, 0.8, 0.2], vec![0.7, 0.0, 0.3], vec![0.6, 0.4, 0.0]]
    }

    pub(crate) fn example_q() -> Matrix {
        vec![vec![-2.0, 1.0, 1.0], vec![4.0, -4.0, 0.0], vec![2.0, 1.0, -3.0]]
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn embedded_chain_examples() {
        assert!(close(&embedded_stationary(&example_p()).unwrap(), &[0.4, 0.4, 0.2], 1e-12));
        let swap = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(close(&embedded_stationary(&swap).unwrap(), &[0.5, 0.5], 1e-15));
        let cyc = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let third = 1.0 / 3.0;
        assert!(close(&embedded_stationary(&cyc).unwrap(), &[third, third, third], 1e-15));
    }

    #[test]
    fn embedded_chain_errors() {
        let reducible = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        assert_eq!(embedded_stationary(&reducible), Err(SwitchingError::Reducible));
        let bad = vec![vec![0.0, 0.9], vec![1.0, 0.0]];
        assert!(matches!(embedded_stationary(&bad), Err(SwitchingError::RowSum { row: 0, .. })));
    }

    #[test]
    fn semi_markov_occupancy_examples() {
        let pi = semi_markov_stationary(&[0.4, 0.4, 0.2], &[1.0, 3.0, 2.0]).unwrap();
        assert!(close(&pi, &[0.2, 0.6, 0.2], 1e-15));
        let pi = semi_markov_stationary(&[0.4, 0.4, 0.2], &[2.5, 2.5, 2.5]).unwrap();
        assert!(close(&pi, &[0.4, 0.4, 0.2], 1e-15));
        assert_eq!(semi_markov_stationary(&[1.0], &[5.0]).unwrap(), vec![1.0]);
        assert!(matches!(
            semi_markov_stationary(&[0.5, 0.5], &[1.0, 0.0]),
            Err(SwitchingError::NonPositiveMean { mode: 1, .. })
        ));
    }

    #[test]
    fn ctmc_examples() {
        assert!(close(&ctmc_stationary(&example_q()).unwrap(), &[0.6, 0.2, 0.2], 1e-12));
        let sym = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
        assert!(close(&ctmc_stationary(&sym).unwrap(), &[0.5, 0.5], 1e-15));
        let asym = vec![vec![-3.0, 3.0], vec![1.0, -1.0]];
        assert!(close(&ctmc_stationary(&asym).unwrap(), &[0.25, 0.75], 1e-15));
        let reducible = vec![vec![-1.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(ctmc_stationary(&reducible), Err(SwitchingError::Reducible));
        let bad = vec![vec![-1.0, 0.5], vec![1.0, -1.0]];
        assert!(matches!(ctmc_stationary(&bad), Err(SwitchingError::RowSum { .. })));
    }

    #[test]
    fn law_validation() {
        let mut p = example_p();
        p[0] = vec![0.1, 0.7, 0.2];
        let dwell = vec![DwellModel::Deterministic { duration: 1.0 }; 3];
        assert!(matches!(
            SwitchingLaw::semi_markov(p, dwell.clone(), 0),
            Err(SwitchingError::NonZeroDiagonal { row: 0, .. })
        ));
        assert!(SwitchingLaw::semi_markov(example_p(), dwell, 3).is_err());
        assert!(matches!(
            SwitchingLaw::markov(vec![vec![0.0]], 0),
            Err(SwitchingError::NonPositiveExitRate { .. })
        ));
        assert!(SwitchingLaw::renewal(vec![0.5, 0.6], DwellModel::Exponential { rate: 1.0 }, 0).is_err());
        assert!(DwellModel::Uniform { low: 2.0, high: 1.0 }.validate(0).is_err());
        assert_eq!(DwellModel::Exponential { rate: 4.0 }.mean(), 0.25);
    }

    #[test]
    fn deterministic_renewal_path() {
        let law = SwitchingLaw::renewal(vec![1.0], DwellModel::Deterministic { duration: 0.5 }, 0).unwrap();
        let path = sample_path(&law, 1.0, 2.0, 9, StreamId::new(StreamTag::Adhoc, 0)).unwrap();
        assert_eq!(path.times(), &[1.5, 2.0, 2.5, 3.0]);
        assert_eq!(path.modes(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn counts_by_definition() {
        let path = SwitchingPath::new(0.0, 3.0, vec![1.0, 2.0], vec![0, 1, 0]).unwrap();
        let c = path.counts(0.0, 3.0, 2).unwrap();
        assert_eq!(c.switches, 2);
        assert_eq!(c.entries, vec![1, 1]);
        assert_eq!(c.occupation, vec![2.0, 1.0]);
        // window starting exactly on a switch excludes that switch
        let c = path.counts(1.0, 2.5, 2).unwrap();
        assert_eq!(c.switches, 1);
        assert_eq!(c.occupation, vec![0.5, 1.0]);
        assert!(path.counts(-1.0, 1.0, 2).is_err());

        let constant = SwitchingPath::constant(0.0, 5.0, 1);
        let c = constant.counts(1.0, 4.0, 3).unwrap();
        assert_eq!((c.switches, c.occupation.clone()), (0, vec![0.0, 3.0, 0.0]));
        let occ = constant.occupancy_series(&[0.0, 2.0, 5.0], 2).unwrap();
        assert!(occ.iter().all(|row| row == &vec![0.0, 1.0]));
    }

    #[test]
    fn segments_cover_interval() {
        let path = SwitchingPath::new(0.0, 3.0, vec![1.0, 2.0], vec![0, 1, 0]).unwrap();
        assert_eq!(path.segments(1.5), vec![(0.0, 1.0, 0), (1.0, 1.5, 1)]);
        assert_eq!(path.segments(2.0), vec![(0.0, 1.0, 0), (1.0, 2.0, 1)]);
        assert_eq!(path.mode_at(2.0), 0);
        assert_eq!(path.mode_at(1.999), 1);
    }
}
