//! First-price pacing equilibria (FPPE).
//!
//! Bidders with values and budgets compete in per-good first-price
//! auctions; each bidder scales all of its bids by one pacing multiplier.
//! The crate computes the unique equilibrium multipliers through the
//! price-space dual of a quasi-linear Eisenberg-Gale program, recovers an
//! allocation by max-flow, certifies the result against every equilibrium
//! condition, and runs comparative-statics and strategic experiments.

pub mod checks;
pub mod dual;
pub mod error;
pub mod flow;
pub mod knapsack;
pub mod market;
pub mod oracle;
pub mod par;
pub mod recovery;
pub mod statics;
pub mod strategic;

pub use checks::{certify, EquilibriumReport};
pub use dual::{solve_dual, DualPoint, Solution, SolveStatus};
pub use error::{FppeError, Result, Violation};
pub use market::{MarketInstance, Matrix, PacingOutcome, SolverConfig, StepRule};
