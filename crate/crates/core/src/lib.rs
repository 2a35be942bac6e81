//! Numerical toolkit for (1+1)-dimensional wave maps into the unit sphere with
//! rough, Brownian-type initial data.

pub mod cutoff;
pub mod enhanced;
pub mod error;
pub mod fft;
pub mod grid;
pub mod illposed;
pub mod io;
pub mod randomdata;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Field1D, Field2D, Grid1D};
