//! Open tri-baker maps in the shift and intersection opening families.
//!
//! * [`classical`]: exact symbolic dynamics, survival areas, escape rates.
//! * [`quantum`]: BVS quantization and the open quantum maps.
//! * [`spectral`]: resonances, left/right eigenvectors, eigenoperators.
//! * [`phasespace`]: coherent states, Husimi grids, norm ratios, `I_rep`.

pub mod classical;
pub mod error;
pub mod grid;
pub mod phasespace;
pub mod quantum;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::PhaseGrid;
