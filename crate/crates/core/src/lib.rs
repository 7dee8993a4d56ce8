//! Bifurcation analysis of a stage-structured leafhopper / predatory-mite
//! model: equilibria, stability, Hopf and Bautin conditions, Lyapunov
//! coefficients, continuation and limit cycles.

pub mod continuation;
pub mod equilibria;
pub mod error;
pub mod hopf;
pub mod integrator;
pub mod lyapunov;
pub mod model;
pub mod poly;
pub mod stability;

pub use error::{Error, Result};
pub use model::{ModelParams, ParamName, ScaleMap, State};
