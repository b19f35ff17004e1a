//! Markovian persuasion with stochastic revelations.
//!
//! Discounted values are computed by value iteration over a belief grid with
//! a concavification step, and checked against Monte-Carlo play of the
//! induced strategies.

pub mod belief;
pub mod chain;
pub mod envelope;
pub mod error;
pub mod payoff;
pub mod sim;
pub mod solver;

pub use belief::{Belief, BeliefGrid, GridFn, SignalKernel, Split};
pub use chain::Chain;
pub use error::{Error, Result};
