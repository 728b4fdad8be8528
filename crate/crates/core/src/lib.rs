//! Solver toolkit for asymmetric distributed constraint optimization problems
//! (ADCOPs), built around PT-ISABB: a two-phase hybrid that runs a bounded
//! utility-propagation pass over a pseudo tree to seed lower bounds, then an
//! asynchronous branch-and-bound search that exhausts the space.
//!
//! The crate also ships the baselines the solver is usually compared against
//! (chain SABB, tree search without inference, brute force), a deterministic
//! message-passing simulator with NCLO/traffic/privacy accounting, random
//! instance generators and a benchmark driver.

pub mod baselines;
pub mod cli;
pub mod cost;
pub mod error;
pub mod inference;
pub mod model;
pub mod pseudo_tree;
pub mod search;
pub mod sim;
pub mod utility;

pub use cost::Cost;
pub use error::{Error, Result};
pub use model::{AdcopInstance, AgentId, Assignment};
pub use pseudo_tree::PseudoTree;
pub use utility::{DimLimit, UtilityTable};
