//! Stable-function estimates for rate functions `λ(t)`.
//!
//! The randomized classes bound the expected integral of `λ` over a random
//! dwell window `[t, t + S]`, uniformly in the start time `t`:
//!
//! * MUSF: `E[∫_t^{t+S} λ] ≤ M̂`,
//! * MUSF w.r.t. φ: `E[∫_t^{t+S} λ] ≤ E[φ(S)]`,
//! * MUESF: `E[∫_t^{t+S} λ] ≤ λ̄·E[S]`,
//!
//! with MUESF ⊂ MUSF w.r.t. φ ⊂ MUSF. A finite grid of start times cannot
//! certify "for all t", so verdicts here read "consistent with": the grid
//! maxima (plus three standard errors) are reported, and a bound that is
//! still rising at the end of the grid is left unclassified.
//!
//! The deterministic classes (`asf_check`, `uesf_check`) test the running
//! integral `∫_{t₀}^T λ` directly.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::expr::Expr;
use crate::quad::{self, QuadError, DEFAULT_TOL};
use crate::rng::{StreamId, StreamRng, StreamTag};
use crate::switching::DwellModel;

pub use crate::quad::quad;

/// Monte Carlo settings: sample count and the base stream index.
///
/// Grid point `k` draws from stream `(stream << 16) | k` under the
/// Monte Carlo tag of `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
}

impl MonteCarlo {
    pub const DEFAULT_SAMPLES: usize = 4096;

    fn stream_for(&self, k: usize) -> StreamId {
        StreamId::new(StreamTag::MonteCarlo, (self.stream << 16) | k as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanIntegralEstimate {
    pub t_grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub mc_samples: usize,
    pub quad_tol: f64,
    pub dwell_mean: f64,
}

impl MeanIntegralEstimate {
    /// `mean + 3·std_error` at each grid point.
    pub fn upper(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.std_error).map(|(m, s)| m + 3.0 * s).collect()
    }
}

/// 64 points spaced evenly in `ln(1 + t)` on `[0, 200]`.
pub fn default_t_grid() -> Vec<f64> {
    log_grid(200.0, 64)
}

/// `points` start times spaced evenly in `ln(1 + t)` on `[0, end]`.
pub fn log_grid(end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => {
            let mut g: Vec<f64> = (0..n)
                .map(|k| libm::expm1(libm::log1p(end) * k as f64 / (n - 1) as f64))
                .collect();
            g[0] = 0.0;
            g[n - 1] = end;
            g
        }
    }
}

/// Mean and standard error of `∫_t^{t+S} λ` over `samples` dwell draws.
pub fn mean_integral_at(
    lambda: &Expr,
    dwell: &DwellModel,
    t: f64,
    samples: usize,
    rng: &mut StreamRng,
) -> Result<(f64, f64), QuadError> {
    if dwell.is_deterministic() || samples <= 1 {
        let s = dwell.sample(rng);
        return Ok((quad::quad(lambda, t, t + s)?, 0.0));
    }
    // Welford
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..samples {
        let s = dwell.sample(rng);
        let v = quad::quad(lambda, t, t + s)?;
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let n = samples as f64;
    let variance = m2 / (n - 1.0);
    Ok((mean, libm::sqrt(variance / n)))
}

/// Monte Carlo estimate of `E[∫_t^{t+S} λ(h) dh]` at each start time.
pub fn mean_integral(
    lambda: &Expr,
    dwell: &DwellModel,
    t_grid: &[f64],
    mc: &MonteCarlo,
) -> Result<MeanIntegralEstimate, QuadError> {
    let mut mean = Vec::with_capacity(t_grid.len());
    let mut std_error = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let (m, s) = mean_integral_point(lambda, dwell, t, k, mc)?;
        mean.push(m);
        std_error.push(s);
    }
    Ok(assemble_estimate(t_grid, mean, std_error, dwell, mc))
}

/// Estimate at grid point `k` alone; lets callers evaluate points in any
/// order or in parallel and still reproduce [`mean_integral`] exactly.
pub fn mean_integral_point(
    lambda: &Expr,
    dwell: &DwellModel,
    t: f64,
    k: usize,
    mc: &MonteCarlo,
) -> Result<(f64, f64), QuadError> {
    let mut rng = StreamRng::new(mc.seed, mc.stream_for(k));
    mean_integral_at(lambda, dwell, t, mc.samples.max(1), &mut rng)
}

pub fn assemble_estimate(
    t_grid: &[f64],
    mean: Vec<f64>,
    std_error: Vec<f64>,
    dwell: &DwellModel,
    mc: &MonteCarlo,
) -> MeanIntegralEstimate {
    MeanIntegralEstimate {
        t_grid: t_grid.to_vec(),
        mean,
        std_error,
        mc_samples: if dwell.is_deterministic() { 1 } else { mc.samples.max(1) },
        quad_tol: DEFAULT_TOL,
        dwell_mean: dwell.mean(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StableVerdict {
    Muesf { lambda_bar: f64 },
    MusfWrtPhi { bound: f64 },
    Musf { m_hat: f64 },
    Unclassified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableFunctionClass {
    pub verdict: StableVerdict,
    /// Grid maximum of `mean + 3·std_error`.
    pub m_hat: f64,
    /// `m_hat / E[S]`.
    pub lambda_bar: f64,
    /// Start time where `m_hat` is attained.
    pub argmax_t: f64,
    pub evidence: MeanIntegralEstimate,
    pub notes: Vec<String>,
}

impl StableFunctionClass {
    /// The MUSF bound implied by the verdict (inclusion chain).
    pub fn musf_bound(&self) -> Option<f64> {
        match self.verdict {
            StableVerdict::Muesf { lambda_bar } => Some(lambda_bar * self.evidence.dwell_mean),
            StableVerdict::MusfWrtPhi { bound } => Some(bound),
            StableVerdict::Musf { m_hat } => Some(m_hat),
            StableVerdict::Unclassified => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.verdict {
            StableVerdict::Muesf { .. } => "consistent with MUESF",
            StableVerdict::MusfWrtPhi { .. } => "consistent with MUSF w.r.t. phi",
            StableVerdict::Musf { .. } => "consistent with MUSF",
            StableVerdict::Unclassified => "unclassified (bound still rising at grid end)",
        }
    }
}

/// Classifies an existing estimate.
///
/// The tail is the last quarter of the grid. If the lower confidence value
/// `mean - 3·se` somewhere in the tail exceeds every upper value
/// `mean + 3·se` before it, the grid maxima are still growing and the
/// function is left unclassified.
pub fn classify_estimate(est: &MeanIntegralEstimate) -> StableFunctionClass {
    let upper = est.upper();
    let n = upper.len();
    let mut notes = Vec::new();
    if n < 50 || est.t_grid.first().copied().unwrap_or(f64::NAN) > 0.0 || est.t_grid.last().copied().unwrap_or(0.0) < 100.0 {
        notes.push(String::from("grid does not span [0, 100] with at least 50 points; uniformity evidence is weak"));
    }
    let (mut argmax, mut m_hat) = (0, f64::NEG_INFINITY);
    for (k, &u) in upper.iter().enumerate() {
        if u > m_hat {
            m_hat = u;
            argmax = k;
        }
    }
    let lambda_bar = m_hat / est.dwell_mean;
    let tail_start = n - (n / 4).max(1).min(n);
    let head_max = upper[..tail_start].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail_low = (tail_start..n)
        .map(|k| est.mean[k] - 3.0 * est.std_error[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let rising = tail_start > 0 && tail_low > head_max + 1e-9 * (1.0 + head_max.abs());

    let verdict = if rising || !m_hat.is_finite() {
        notes.push(format!(
            "tail lower bound {tail_low} exceeds pre-tail maximum {head_max}; no uniform bound on this grid"
        ));
        StableVerdict::Unclassified
    } else {
        StableVerdict::Muesf { lambda_bar }
    };
    StableFunctionClass {
        verdict,
        m_hat,
        lambda_bar,
        argmax_t: est.t_grid.get(argmax).copied().unwrap_or(0.0),
        evidence: est.clone(),
        notes,
    }
}

/// Estimates and classifies `λ` under the dwell model.
pub fn classify(
    lambda: &Expr,
    dwell: &DwellModel,
    t_grid: &[f64],
    mc: &MonteCarlo,
) -> Result<StableFunctionClass, QuadError> {
    Ok(classify_estimate(&mean_integral(lambda, dwell, t_grid, mc)?))
}

/// Running integral `∫_{t0}^{T} λ` on a uniform grid of `points` intervals.
pub fn running_integral(lambda: &Expr, t0: f64, horizon: f64, points: usize) -> Result<(Vec<f64>, Vec<f64>), QuadError> {
    let points = points.max(1);
    let mut times = Vec::with_capacity(points + 1);
    let mut values = Vec::with_capacity(points + 1);
    times.push(t0);
    values.push(0.0);
    let mut acc = 0.0;
    let tol = DEFAULT_TOL / points as f64;
    for k in 1..=points {
        let (a, b) = (times[k - 1], t0 + horizon * k as f64 / points as f64);
        acc += quad::integrate(|h| Ok(lambda.eval_t(h)?), a, b, tol)?;
        times.push(b);
        values.push(acc);
    }
    Ok((times, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsfReport {
    pub times: Vec<f64>,
    pub integral: Vec<f64>,
    /// Least-squares slope of the running integral over the last decade.
    pub decade_slope: f64,
    pub consistent: bool,
}

/// Checks whether `∫_{t0}^T λ` keeps falling without bound.
///
/// Over the last decade `[t0 + horizon/10, t0 + horizon]` the fitted
/// decrease must be at least `1e-3·max(1, |I(T)|)`; a running integral that
/// has levelled off fails.
pub fn asf_check(lambda: &Expr, t0: f64, horizon: f64) -> Result<AsfReport, QuadError> {
    let (times, integral) = running_integral(lambda, t0, horizon, 1000)?;
    let start = t0 + horizon / 10.0;
    let idx: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= start).collect();
    let n = idx.len() as f64;
    let mt = idx.iter().map(|&k| times[k]).sum::<f64>() / n;
    let mi = idx.iter().map(|&k| integral[k]).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &k in &idx {
        sxy += (times[k] - mt) * (integral[k] - mi);
        sxx += (times[k] - mt) * (times[k] - mt);
    }
    let slope = sxy / sxx;
    let last = *integral.last().unwrap_or(&0.0);
    let drop = -slope * (t0 + horizon - start);
    let consistent = drop >= 1e-3 * last.abs().max(1.0);
    Ok(AsfReport { times, integral, decade_slope: slope, consistent })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UesfReport {
    pub pass: bool,
    /// Largest `I(t) - (-a(t - t0) + b)` over the grid.
    pub worst_margin: f64,
    pub worst_t: f64,
}

/// Checks `∫_{t0}^t λ ≤ -a(t - t0) + b` on a grid of 2000 intervals.
pub fn uesf_check(lambda: &Expr, a: f64, b: f64, t0: f64, horizon: f64) -> Result<UesfReport, QuadError> {
    let (times, integral) = running_integral(lambda, t0, horizon, 2000)?;
    let mut report = UesfReport { pass: true, worst_margin: f64::NEG_INFINITY, worst_t: t0 };
    for (t, i) in times.iter().zip(&integral) {
        let rhs = -a * (t - t0) + b;
        let margin = i - rhs;
        if margin > report.worst_margin {
            report.worst_margin = margin;
            report.worst_t = *t;
        }
        if margin > 1e-9 * (1.0 + rhs.abs()) {
            report.pass = false;
        }
    }
    Ok(report)
}
