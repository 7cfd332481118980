//! Sparse support recovery by scorer-guided tree search.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: index sets, top-`l` selection, residual projections, least squares;
//! - [`ensembles`]: sensing matrices, sparse signals, noisy measurements, training data;
//! - [`scorers`]: residual-to-probability index scorers (correlation, learned, oracle);
//! - [`ridge`]: sparse Bayesian ridge regression over an extended support;
//! - [`treesearch`]: expansion, pruning, initialization and the full tree search;
//! - [`baselines`]: OMP, gOMP, SP, CoSaMP, IHT, MMP-DF and SBL recovery;
//! - [`bench`]: seeded Monte-Carlo experiments, CSV output and model persistence.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod ensembles;
pub mod linalg;
pub mod ridge;
pub mod scorers;
pub mod treesearch;

pub use error::{Error, Result};
