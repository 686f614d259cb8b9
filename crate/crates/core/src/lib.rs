//! All-to-all condition transfer with minibatch-coupled flow matching.
//!
//! A single vector field `v(x, t | c1, c2)` is trained so that integrating it
//! from `t = 0` to `t = 1` carries a sample of the conditional law `P_c1` to
//! `P_c2`, approximating the quadratic-cost optimal transport map for every
//! pair of conditions at once. Supervision comes from couplings between two
//! independent minibatches that minimize
//!
//! ```text
//! sum_i |x1_i - x2_pi(i)|^2 + beta * (|c1_i - c1_pi(i)|^2 + |c2_i - c2_pi(i)|^2)
//! ```
//!
//! Module map:
//!
//! - [`smallnet`]: dense tanh MLP with reverse-mode gradients and Adam.
//! - [`coupling`]: cost matrices, exact assignment, beta policies, block analysis.
//! - [`data`]: synthetic generators, CSV datasets, batch-pair sampling.
//! - [`flow`]: vector-field parametrizations and the flow-matching loss.
//! - [`trainer`]: the training loop, checkpoints and logs.
//! - [`transport`]: ODE integration and ground-truth transfer maps.
//! - [`eval`]: MSE against the oracle, empirical W2, efficiency curves, reports.
//! - [`cli`]: configuration files and the `a2a` command-line front end.

pub mod cli;
pub mod coupling;
pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod smallnet;
pub mod trainer;
pub mod transport;

pub use error::{Error, Result};
