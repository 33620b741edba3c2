//! Two-stage adaptive nonlocal phase filtering for InSAR interferograms.
//!
//! Stage 1 weights patches by a joint-pixel likelihood on the raw SLC pair
//! and measures local phase heterogeneity; stage 2 re-weights with an
//! adaptive Gaussian patch kernel on the stage-1 estimates, compensating
//! local fringes.

pub mod adaptivity;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod filter;
pub mod fringe;
pub mod io;
pub mod raster;
pub mod render;
pub mod similarity;
pub mod simulate;

pub use error::{Error, Result};
pub use raster::{ComplexRaster, EstimateBundle, GridShape, RealRaster, Semantic, SlcPair};
