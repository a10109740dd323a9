//! Thermodynamic formalism on countable Markov shifts through finite
//! truncations: pressure, Gibbs and equilibrium states, the summability
//! exponent, weighted periodic-point equidistribution, Bowen-equation
//! dimension and level-1 large deviations.

pub mod equidist;
pub mod error;
pub mod ldp;
pub mod models;
pub mod numeric;
pub mod potential;
pub mod shift;
pub mod thermo;

pub use error::{Error, Result};
