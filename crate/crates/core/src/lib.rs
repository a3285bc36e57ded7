//! Joint denoising and contour detection with the discrete Mumford-Shah
//! functional, with `(beta, lambda)` tuned by Monte-Carlo Stein risk estimates.

pub mod error;
pub mod experiment;
pub mod grid;
pub mod hyperopt;
pub mod imageio;
pub mod jacobian;
pub mod noise;
pub mod phantom;
pub mod solver;
pub mod stein;

pub use error::{DmsError, Result};
pub use grid::{DifferenceOperator, EdgeField, HyperParams, Image};
