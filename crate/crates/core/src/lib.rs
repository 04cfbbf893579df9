//! Market equilibrium as a linear complementarity problem.

pub mod lcp;
pub mod lp;
pub mod cli;
pub mod game;
pub mod io;
pub mod market;
pub mod perturbation;
