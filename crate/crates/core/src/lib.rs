//! Stationary equilibrium of a competitive industry under an emission cap,
//! where polluting firms may pay a sunk cost to switch irreversibly to a
//! carbon-neutral technology.
//!
//! Pipeline: [`stopping`] solves one firm's investment threshold at a given
//! carbon price; [`equilibrium`] finds the carbon price that clears free
//! entry, the [`stationary`] density of polluting firms, the entry rate that
//! meets the cap, and aggregates; [`regulator`] chooses the welfare-maximizing
//! cap; [`statics`] runs scenario tables. [`oracles`] holds brute-force
//! simulation checks used by the test suite.

pub mod diffusion;
pub mod equilibrium;
pub mod error;
pub mod firm_model;
pub mod oracles;
pub mod quadrature;
pub mod regulator;
pub mod roots;
pub mod statics;
pub mod stationary;
pub mod stopping;

pub use equilibrium::{solve_equilibrium, Equilibrium};
pub use error::{Error, Result};
pub use firm_model::{Market, MarketParams, Tolerances};
