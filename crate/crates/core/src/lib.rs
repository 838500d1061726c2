//! Numerical laboratory for pre-shock formation in the azimuthal 2D Euler equations.

pub mod euler_core;
pub mod initial_data;
pub mod spectral;
pub mod solver;
pub mod analysis;
pub mod diagnostics;
