//! Strike conventions for pricing exchange options with the Margrabe
//! formula when vanilla smiles are skewed.
//!
//! The crate is organised bottom-up:
//!
//! - [`blackscholes`]: zero-rate call prices and implied volatility,
//! - [`margrabe`]: exchange-option closed form, exchange vol and implied correlation,
//! - [`heston`]: per-leg Heston pricing, smiles and ATM level/skew measurement,
//! - [`convention`]: log-linear strike conventions and the optimal coefficient `a*`,
//! - [`simulation`]: correlated Monte Carlo benchmark with a control variate,
//! - [`experiments`]: test cases, parameter sweeps and error metrics.

pub mod blackscholes;
pub mod convention;
pub mod error;
pub mod experiments;
pub mod heston;
pub mod margrabe;
pub mod normal;
pub mod quadrature;
pub mod simulation;

pub use error::{PricingError, Result};
