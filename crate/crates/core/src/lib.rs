//! Poisson GLM ratemaking for motor insurance portfolios.
//!
//! Load a portfolio of categorical rating factors, fit claim-frequency models
//! by iteratively reweighted least squares, test nested models by deviance,
//! price a tariff from the fitted relativities and analyse a Bonus-Malus
//! ladder as a Markov chain.

pub mod bonusmalus;
pub mod cli;
pub mod design;
pub mod error;
pub mod family;
pub mod fitter;
pub mod inference;
pub mod tariff;

pub use error::{Error, Result};
pub use family::FamilySpec;
pub use fitter::{fit, FitControls, FitResult};
