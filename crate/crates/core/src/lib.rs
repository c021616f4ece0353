//! Numerical laboratory for a competition system coupling local (random-walk)
//! and nonlocal (Levy-flight) dispersal on a bounded habitat with a lethal
//! exterior.
//!
//! The crate discretizes the coupled Fisher-KPP system
//!
//! ```text
//! u_t =        Delta u  + (sigma - (u+v)) u      u = 0 on the boundary
//! v_t = -(-Delta)^s v   + (sigma - (u+v)) v      v = 0 outside the box
//! ```
//!
//! computes its pure steady states and their linearized stability, certifies
//! mismatch-driven instability of the local-only equilibrium, and
//! demonstrates how exterior data can steer an s-harmonic profile inside a
//! ball, which no harmonic function can do.
//!
//! Modules follow the pipeline: [`mesh`] (grids, fields, quadrature),
//! [`operators`] (matrix assembly), [`spectral`] (eigenpairs, sharp
//! constants, branching thresholds), [`steady`] (energy minimization),
//! [`stability`] (quadratic form, mismatch certificates), [`dynamics`]
//! (IMEX time stepping), [`scenarios`] (the two instability constructions),
//! [`sharmonic`] (exterior-data fitting), with [`acceptance`] wiring the
//! whole gate.

pub mod acceptance;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod report;
pub mod scenarios;
pub mod sharmonic;
pub mod spectral;
pub mod stability;
pub mod steady;

pub use error::{Error, Result};
pub use mesh::{ball_nodes, build_grid, integrate, Field, Grid, NodeSet};
pub use operators::{
    assemble, assemble_classical, assemble_fractional, gagliardo_seminorm_sq, OperatorMatrix,
    OperatorSpec,
};
