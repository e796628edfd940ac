//! Adaptive Simpson quadrature.

use thiserror::Error;

use crate::expr::{EvalError, Expr};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand is not finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("tolerance not reached on [{a}, {b}] at depth {MAX_DEPTH}")]
    NoConvergence { a: f64, b: f64 },
    #[error("reversed interval [{a}, {b}]")]
    Reversed { a: f64, b: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

struct Panel {
    a: f64,
    m: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn eval_checked<F>(f: &mut F, t: f64) -> Result<f64, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let v = f(t)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QuadError::NonFinite { t })
    }
}

fn refine<F>(f: &mut F, p: Panel, tol: f64, depth: u32) -> Result<f64, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let Panel { a, m, b, fa, fm, fb, whole } = p;
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let flm = eval_checked(f, lm)?;
    let frm = eval_checked(f, rm)?;
    let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
    let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
    let both = left + right;
    let delta = both - whole;
    // below a few ulps of the panel value the estimate is rounding noise
    let floor = 8.0 * f64::EPSILON * (left.abs() + right.abs());
    if delta.abs() <= 15.0 * tol.max(floor) {
        return Ok(both + delta / 15.0);
    }
    if depth >= MAX_DEPTH || lm <= a || rm >= b {
        return Err(QuadError::NoConvergence { a, b });
    }
    let l = refine(f, Panel { a, m: lm, b: m, fa, fm: flm, fb: fm, whole: left }, 0.5 * tol, depth + 1)?;
    let r = refine(f, Panel { a: m, m: rm, b, fa: fm, fm: frm, fb, whole: right }, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    if !(a <= b) {
        return Err(QuadError::Reversed { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let fa = eval_checked(&mut f, a)?;
    let fm = eval_checked(&mut f, m)?;
    let fb = eval_checked(&mut f, b)?;
    let whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0;
    refine(&mut f, Panel { a, m, b, fa, fm, fb, whole }, tol, 0)
}

/// `∫_a^b λ(h) dh` for an expression in `t`, to absolute tolerance 1e-9.
pub fn quad(lambda: &Expr, a: f64, b: f64) -> Result<f64, QuadError> {
    integrate(|t| Ok(lambda.eval_t(t)?), a, b, DEFAULT_TOL)
}
