//! Mean-field jump processes on finite state spaces as gradient flows.
//!
//! A [`GibbsModel`] fixes an interaction energy on the probability simplex and
//! a family of reversible rate matrices. [`flow`] integrates the nonlinear
//! master equation and checks its gradient-flow structure, [`metric`] computes
//! the associated transport distance, [`particles`] simulates the N-particle
//! system, and [`ensemble`] lifts the flow to ensembles of initial conditions.

pub mod ensemble;
pub mod experiments;
pub mod error;
pub mod flow;
pub mod gibbs;
pub mod metric;
pub mod particles;
pub mod simplex;
pub mod testing;

pub use error::{Error, Result};
pub use gibbs::{Adjacency, GibbsModel, Potential, PotentialFn, RateMatrix, Scheme};
pub use simplex::{Dist, EdgeField, ExtReal, StateSpace};
