//! Exponential-ordering machinery for non-autonomous delay differential
//! equations, applied to almost periodic Nicholson patch models.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coeffs;
pub mod cone;
pub mod fnspace;
pub mod integrator;
pub mod nicholson;
pub mod run;
pub mod scenario;
