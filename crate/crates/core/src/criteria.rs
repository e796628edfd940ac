//! Closed-form almost-sure stability criteria.
//!
//! Each criterion is a weighted sum of per-mode terms built from a bound on
//! the mean rate integral and the jump factor `μ_i`. A negative sum
//! certifies the criterion; zero or positive is inconclusive, since the
//! criteria are sufficient conditions only.
//!
//! | law         | PHI / M kind             | LAMBDA_BAR kind           |
//! |-------------|--------------------------|---------------------------|
//! | semi-Markov | `(v_i + ln μ_i)·π_i/m_i` | `(λ̄_i + ln μ_i/m_i)·π_i` |
//! | Markov      | `(v_i + ln μ_i)·π_i·q_i` | `(λ̄_i + q_i·ln μ_i)·π_i` |
//! | renewal     | `p_i·(v_i + ln μ)/θ`     | `p_i·(λ̄_i + ln μ/θ)`     |

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::switching::LawStatistics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("{what} has {found} entries, expected {expected}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("criterion {0} needs statistic `{1}` which the switching law does not provide")]
    MissingStatistic(CriterionId, &'static str),
    #[error("criterion {id} is not certified (value {value}); no exponent bound follows")]
    NotCertified { id: CriterionId, value: f64 },
    #[error("envelope exponent must be positive, got {0}")]
    Exponent(f64),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// `E[φ_i(S_i)]`, the mean-integral bound of an MUSF w.r.t. `φ_i`.
    Phi,
    /// `M̄_i` of an MUSF.
    M,
    /// `λ̄_i` of an MUESF.
    LambdaBar,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::Phi => "PHI",
            BoundKind::M => "M",
            BoundKind::LambdaBar => "LAMBDA_BAR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeBound {
    pub kind: BoundKind,
    pub value: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeBounds(pub Vec<ModeBound>);

impl ModeBounds {
    pub fn uniform(kind: BoundKind, values: &[f64], mu: &[f64]) -> Self {
        ModeBounds(values.iter().zip(mu).map(|(&value, &mu)| ModeBound { kind, value, mu }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn common_kind(&self) -> Option<BoundKind> {
        let first = self.0.first()?.kind;
        self.0.iter().all(|b| b.kind == first).then_some(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionId {
    S4,
    S4Prime,
    S4DoublePrime,
    M4,
    M4Prime,
    M4DoublePrime,
    R4,
    R4Prime,
    R4DoublePrime,
    E1,
    E2,
    E3,
    Mixed,
    GesBound,
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriterionId::S4 => "S4",
            CriterionId::S4Prime => "S4'",
            CriterionId::S4DoublePrime => "S4''",
            CriterionId::M4 => "M4",
            CriterionId::M4Prime => "M4'",
            CriterionId::M4DoublePrime => "M4''",
            CriterionId::R4 => "R4",
            CriterionId::R4Prime => "R4'",
            CriterionId::R4DoublePrime => "R4''",
            CriterionId::E1 => "E1",
            CriterionId::E2 => "E2",
            CriterionId::E3 => "E3",
            CriterionId::Mixed => "MIXED",
            CriterionId::GesBound => "GES_BOUND",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Certified => "certified",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub mode: usize,
    pub kind: BoundKind,
    pub bound: f64,
    pub mu: f64,
    /// Multiplier applied to the bound.
    pub weight: f64,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: CriterionId,
    pub value: f64,
    pub terms: Vec<Term>,
    pub verdict: Verdict,
}

impl CriterionReport {
    fn from_terms(id: CriterionId, terms: Vec<Term>) -> Self {
        let value: f64 = terms.iter().map(|t| t.term).sum();
        let verdict = if value < 0.0 { Verdict::Certified } else { Verdict::Inconclusive };
        CriterionReport { id, value, terms, verdict }
    }

    pub fn certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), CriteriaError> {
    if expected != found {
        return Err(CriteriaError::Dimension { what, expected, found });
    }
    Ok(())
}

fn pick_id(bounds: &ModeBounds, ids: [CriterionId; 3]) -> CriterionId {
    match bounds.common_kind() {
        Some(BoundKind::Phi) => ids[0],
        Some(BoundKind::M) => ids[1],
        Some(BoundKind::LambdaBar) => ids[2],
        None => CriterionId::Mixed,
    }
}

fn semi_markov_terms(bounds: &ModeBounds, pi: &[f64], m: &[f64]) -> Result<Vec<Term>, CriteriaError> {
    check_len("stationary distribution", bounds.len(), pi.len())?;
    check_len("mean dwell vector", bounds.len(), m.len())?;
    Ok(bounds
        .0
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let ln_mu = libm::log(b.mu);
            let (weight, term) = match b.kind {
                BoundKind::Phi | BoundKind::M => {
                    let w = pi[i] / m[i];
                    (w, (b.value + ln_mu) * w)
                }
                BoundKind::LambdaBar => (pi[i], (b.value + ln_mu / m[i]) * pi[i]),
            };
            Term { mode: i, kind: b.kind, bound: b.value, mu: b.mu, weight, term }
        })
        .collect())
}

/// Semi-Markov criterion (S4, S4', S4'' by bound kind; MIXED when kinds differ).
pub fn semi_markov_criterion(bounds: &ModeBounds, pi: &[f64], m: &[f64]) -> Result<CriterionReport, CriteriaError> {
    let terms = semi_markov_terms(bounds, pi, m)?;
    let id = pick_id(bounds, [CriterionId::S4, CriterionId::S4Prime, CriterionId::S4DoublePrime]);
    Ok(CriterionReport::from_terms(id, terms))
}

/// Mixed-kind semi-Markov criterion: each mode weighted by its own kind.
pub fn mixed_criterion(bounds: &ModeBounds, pi: &[f64], m: &[f64]) -> Result<CriterionReport, CriteriaError> {
    Ok(CriterionReport::from_terms(CriterionId::Mixed, semi_markov_terms(bounds, pi, m)?))
}

/// Markov criterion (M4, M4', M4'').
pub fn markov_criterion(bounds: &ModeBounds, pi: &[f64], q: &[f64]) -> Result<CriterionReport, CriteriaError> {
    check_len("stationary distribution", bounds.len(), pi.len())?;
    check_len("exit rate vector", bounds.len(), q.len())?;
    let terms = bounds
        .0
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let ln_mu = libm::log(b.mu);
            let (weight, term) = match b.kind {
                BoundKind::Phi | BoundKind::M => {
                    let w = pi[i] * q[i];
                    (w, (b.value + ln_mu) * w)
                }
                BoundKind::LambdaBar => (pi[i], (b.value + ln_mu * q[i]) * pi[i]),
            };
            Term { mode: i, kind: b.kind, bound: b.value, mu: b.mu, weight, term }
        })
        .collect();
    let id = pick_id(bounds, [CriterionId::M4, CriterionId::M4Prime, CriterionId::M4DoublePrime]);
    Ok(CriterionReport::from_terms(id, terms))
}

/// Renewal criterion (R4, R4', R4'') with a common jump factor `mu`.
///
/// The `ln μ` contribution is spread over the modes in proportion to `p`,
/// so the per-mode terms still sum to the criterion value.
pub fn renewal_criterion(bounds: &ModeBounds, p: &[f64], theta: f64, mu: f64) -> Result<CriterionReport, CriteriaError> {
    check_len("mode probabilities", bounds.len(), p.len())?;
    if !(theta > 0.0) {
        return Err(CriteriaError::NonPositive { what: "mean inter-switch time", value: theta });
    }
    let ln_mu = libm::log(mu);
    let terms = bounds
        .0
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (weight, term) = match b.kind {
                BoundKind::Phi | BoundKind::M => {
                    let w = p[i] / theta;
                    (w, (b.value + ln_mu) * w)
                }
                BoundKind::LambdaBar => (p[i], (b.value + ln_mu / theta) * p[i]),
            };
            Term { mode: i, kind: b.kind, bound: b.value, mu, weight, term }
        })
        .collect();
    let id = pick_id(bounds, [CriterionId::R4, CriterionId::R4Prime, CriterionId::R4DoublePrime]);
    Ok(CriterionReport::from_terms(id, terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeInvariantVariant {
    /// Semi-Markov: needs occupancy and mean dwell.
    E1,
    /// Markov: needs occupancy and exit rates.
    E2,
    /// Renewal: needs mode probabilities and mean inter-switch time.
    E3,
}

/// Criteria for constant rates `λ_i`, read off the law's statistics.
pub fn time_invariant_criterion(
    rates: &[f64],
    mu: &[f64],
    stats: &LawStatistics,
    variant: TimeInvariantVariant,
) -> Result<CriterionReport, CriteriaError> {
    check_len("jump factors", rates.len(), mu.len())?;
    let bounds = ModeBounds::uniform(BoundKind::LambdaBar, rates, mu);
    let (id, mut report) = match variant {
        TimeInvariantVariant::E1 => {
            let m = stats.mean_dwell.as_ref().ok_or(CriteriaError::MissingStatistic(CriterionId::E1, "mean_dwell"))?;
            if stats.mode_probabilities.is_some() {
                return Err(CriteriaError::MissingStatistic(CriterionId::E1, "semi-Markov occupancy"));
            }
            (CriterionId::E1, semi_markov_criterion(&bounds, &stats.occupancy, m)?)
        }
        TimeInvariantVariant::E2 => {
            let q = stats.exit_rates.as_ref().ok_or(CriteriaError::MissingStatistic(CriterionId::E2, "exit_rates"))?;
            (CriterionId::E2, markov_criterion(&bounds, &stats.occupancy, q)?)
        }
        TimeInvariantVariant::E3 => {
            let p = stats
                .mode_probabilities
                .as_ref()
                .ok_or(CriteriaError::MissingStatistic(CriterionId::E3, "mode_probabilities"))?;
            let theta = stats
                .mean_interarrival
                .ok_or(CriteriaError::MissingStatistic(CriterionId::E3, "mean_interarrival"))?;
            let common = mu.iter().copied().fold(1.0, f64::max);
            (CriterionId::E3, renewal_criterion(&bounds, p, theta, common)?)
        }
    };
    report.id = id;
    Ok(report)
}

/// Upper bound on `limsup (1/t)·ln|x(t)|` implied by a certified criterion
/// and the envelope exponent `p` of `α₁(s) = c·s^p`.
pub fn ges_exponent_bound(report: &CriterionReport, p_env: f64) -> Result<f64, CriteriaError> {
    if !(p_env > 0.0) {
        return Err(CriteriaError::Exponent(p_env));
    }
    if !report.certified() {
        return Err(CriteriaError::NotCertified { id: report.id, value: report.value });
    }
    Ok(report.value / p_env)
}
