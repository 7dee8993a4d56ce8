use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter {name}: {value} (must be finite and strictly positive)")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("state is at the singular line E2 = -a (E2 = {e2})")]
    Singular { e2: f64 },

    #[error("unsupported derivative order {0} (expected 2..=5)")]
    UnsupportedOrder(usize),

    #[error("expected a coexistence equilibrium, got {0}")]
    KindMismatch(&'static str),

    #[error("denominator vanishes in {0}")]
    Pole(&'static str),

    #[error("not a Hopf point: |A0 - A1*A2| = {residual:e}, A1 = {a1:e}")]
    NotHopf { residual: f64, a1: f64 },

    #[error("first Lyapunov coefficient is not small enough for the second one: l1 = {0:e}")]
    L1NotSmall(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("integration failed: {0}")]
    Integration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
