//! Desk-scale numerical laboratory for elliptic regularity.
//!
//! The crate implements, on structured grids, the constructive side of the
//! classical elliptic toolbox:
//!
//! * [`grid`]: domains, grids, distance/curvature fields, FD stencils;
//! * [`holder`]: Hölder, weighted and Campanato norm estimators plus the
//!   interpolation-inequality checker;
//! * [`lp`]: Littlewood-Paley dyadic decomposition on periodic grids, block
//!   decay fits and the spectral Poisson solver;
//! * [`potential`]: Newtonian potentials with singularity splitting, the
//!   second-derivative representation and interior-estimate probes;
//! * [`elliptic`]: maximum-principle-respecting Dirichlet solver, the method
//!   of continuity and pointwise estimate probes;
//! * [`semilinear`]: monotone sub/supersolution iteration;
//! * [`fuchsian`]: boundary blow-up for the Loewner-Nirenberg equation,
//!   hyperbolic-radius asymptotics and the half-space degenerate model
//!   solver.
//!
//! Everything is deterministic: sampling is seeded, reductions are ordered,
//! and all solvers are direct. All public entry points are pure functions of
//! immutable inputs and are safe to call concurrently.

pub mod analytic;
pub mod band;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod expr;
pub mod fuchsian;
pub mod grid;
pub mod holder;
pub mod json;
pub mod lp;
pub mod potential;
pub mod semilinear;

pub use error::{Error, Result};
