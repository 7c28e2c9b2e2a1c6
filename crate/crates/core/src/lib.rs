//! Symmetric hierarchical gamma process (SHGP) priors over reversible Markov
//! chains, and the SHGP hidden Markov model.
//!
//! A truncated gamma process supplies base weights `w`; symmetric edge
//! weights `J_ij ~ Gamma(alpha w_i w_j, alpha)` define a random walk on a
//! weighted undirected graph, whose row-normalised transition matrix is
//! reversible with stationary distribution proportional to the row sums of
//! `J`. The hidden Markov model places that chain under Poisson, Gaussian or
//! multinomial emissions and is fitted by a Gibbs sampler combining slice
//! sampling, HMC or NUTS, forward filtering backward sampling and conjugate
//! emission updates.
//!
//! Modules:
//!
//! * [`prior`]: base weights, weight matrices, transition matrices, densities.
//! * [`chain`]: simulation, transition counts, detailed balance and
//!   total-variation convergence checks.
//! * [`emissions`]: observation families and conjugate posterior draws.
//! * [`inference`]: the Gibbs sampler and its component kernels.
//! * [`predict`]: held-out predictive densities and error metrics.
//! * [`cli`]: configuration, file formats and the `shgp` subcommands.

pub mod chain;
pub mod cli;
pub mod emissions;
pub mod error;
pub mod inference;
pub mod predict;
pub mod prior;
pub mod stats;

pub use error::{Result, ShgpError};
