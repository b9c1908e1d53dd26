//! Preconditioned, inexact primal-dual iterations for iterative
//! regularization of linearly constrained convex problems
//! `min R(x) + F(x)  s.t.  Ax = b`, where the iteration count plays the role
//! of the regularization parameter.

pub mod baselines;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linops;
pub mod pdsolver;
pub mod regularizers;
pub mod vecops;

pub use error::{Error, Result};
