//! The federated empirical-risk problem and the server-side aggregators.

mod aggregate;
mod problem;

pub use aggregate::{aggregate, AggregatorKind, AggregatorSpec, Update};
pub use problem::{local_gradient_step, BatchSampler, FLProblem};
