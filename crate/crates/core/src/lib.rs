//! Stacked machine-learning loss reserving.
//!
//! Level-1 learners (random forest, gradient boosting, a feedforward network),
//! Chain Ladder factors and a Changing Settlement Rate posterior feed a
//! level-2 network whose completed triangle drives a log-normal reserve
//! simulation. ODP and Mack bootstraps, the CSR posterior predictive and a
//! standalone network serve as benchmarks.

pub mod chain_ladder;
pub mod csr;
pub mod distribution;
pub mod error;
pub mod evaluation;
pub mod lognormal;
pub mod ml;
pub mod pipeline;
pub mod schedule_p;
pub mod seeds;
pub mod stacking;
pub mod stochastic;
pub mod triangle;

pub use distribution::{Outcome, Quantity, ReserveDistribution, Summary};
pub use error::{Error, Result};
pub use triangle::{CompanyDataset, Grid, Line, LossTriangle, TriangleKind};
