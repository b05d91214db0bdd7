//! Active sampling for generalized linear measurements over finite grids:
//! Christoffel functions of subspaces and model-class surrogates, optimal
//! sampling measures, weighted least-squares recovery, an adaptive
//! collocation loop, and the experiment harness comparing Christoffel
//! sampling against plain Monte Carlo.

pub mod cas;
pub mod christoffel;
pub mod harness;
pub mod imaging;
pub mod lsq;
pub mod measure;
pub mod operators;
pub mod polybasis;
