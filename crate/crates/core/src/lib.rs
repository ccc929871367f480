//! Neuroevolution with a modularity-based linkage model.
//!
//! Fixed-topology tanh networks are evolved on n-bit parity. Crossover masks
//! come from Leiden communities of a weight-proximity graph ([`linkage_graph`])
//! or from a mutual-information linkage tree ([`linkage_tree`]) and are
//! applied by optimal mixing ([`mixing`]). [`evolution`] drives a generational
//! loop over the six experimental setups, [`metrics`] computes per-generation
//! statistics and [`runner`] orchestrates multi-trial experiments on disk.

pub mod error;
pub mod evolution;
pub mod individual;
pub mod linkage_graph;
pub mod linkage_tree;
pub mod metrics;
pub mod mixing;
pub mod network;
pub mod oracle;
pub mod par;
pub mod runner;

pub use error::{Error, Result};
