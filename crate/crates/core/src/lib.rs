//! Mixed finite element discretization of the coupled Stokes-Darcy problem on
//! the unit square, with a decoupled nested MINRES solver.

pub mod assembly;
pub mod checks;
pub mod error;
pub mod fespace;
pub mod ftp;
pub mod krylov;
pub mod mesh;
pub mod precond;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
