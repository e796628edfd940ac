//! Randomly switched time-varying ODEs: switching laws, RK4 integration,
//! indefinite multiple Lyapunov function checks, mean stable function
//! estimates and closed-form GUAS/GES criteria.
//!
//! `no_std` with `alloc`; all transcendental math goes through `libm` so
//! results are bit-reproducible across platforms.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod criteria;
pub mod dynamics;
pub mod ensemble;
pub mod expr;
mod linalg;
pub mod lyapunov;
pub mod musf;
pub mod quad;
pub mod rng;
pub mod switching;

pub use criteria::{CriterionId, CriterionReport, Verdict};
pub use dynamics::{integrate, SwitchedSystem, Trajectory};
pub use ensemble::{EnsembleConfig, EnsembleStats};
pub use expr::{parse_expr, Expr};
pub use lyapunov::{Envelope, LyapunovSpec};
pub use rng::{StreamId, StreamRng, StreamTag, GENERATOR_ID};
pub use switching::{DwellModel, SwitchingLaw, SwitchingPath};
