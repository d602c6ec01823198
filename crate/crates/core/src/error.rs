use std::fmt;

use thiserror::Error;

/// A single broken invariant of a [`MarketInstance`](crate::MarketInstance).
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub index: Option<(usize, Option<usize>)>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some((i, Some(j))) => write!(f, "{}[{}][{}]: {}", self.field, i, j, self.message),
            Some((i, None)) => write!(f, "{}[{}]: {}", self.field, i, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum FppeError {
    #[error("invalid instance: {}", join(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("failed to parse instance: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("price {price} of good {good} is outside the dual domain")]
    Domain { good: usize, price: f64 },

    #[error("good {good} has price {price} but no bidder within the tie tolerance")]
    EmptyWinnerSet { good: usize, price: f64 },

    #[error("allocation flow infeasible: unmet demand {unmet:.3e} exceeds tolerance {tol:.3e}")]
    InfeasibleFlow { unmet: f64, tol: f64 },

    #[error("oracle grid search supports at most {max} goods, got {goods}")]
    OracleTooLarge { goods: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = FppeError> = std::result::Result<T, E>;
