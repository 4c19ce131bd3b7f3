//! Structure-preserving finite-difference schemes for the periodic KdV equation.

pub mod baselines;
pub mod circulant;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod preissman;
pub mod reduced;
pub mod scheme;
pub mod stencil;
pub mod sweep;
mod vecops;

pub use error::{KdvError, Result};
