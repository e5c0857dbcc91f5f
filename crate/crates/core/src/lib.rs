//! Dense motion estimation for smoke from skeletal flow.
//!
//! The pipeline has four stages, each in its own module:
//!
//! 1. [`skeleton`]: threshold the frame into a smoke mask and aggregate
//!    per-scale ridge maps into a multi-valued skeleton whose value at a
//!    pixel is the fraction of blur scales at which it is a ridge.
//! 2. [`sparse_flow`]: every skeletal point of frame one is attracted to the
//!    skeleton of frame two. Its destination is the expectation under a
//!    bilateral weight combining an oriented anisotropic Gaussian and a
//!    stability-similarity term. No point matching takes place.
//! 3. [`dense_interp`]: each flow component is filled in by penalized least
//!    squares solved in the cosine-transform domain.
//! 4. [`refine`]: a single-level variational refinement with brightness and
//!    gradient constancy, solved by fixed-point linearization and SOR.
//!
//! [`synth`] produces frame pairs with analytic ground truth and [`eval`]
//! scores flows against them. The crate is `no_std` and only needs `alloc`;
//! file formats and the command line live in the companion `smokeflow` crate.

#![no_std]

extern crate alloc;

mod math;

pub mod color;
pub mod dct;
pub mod dense_interp;
pub mod error;
pub mod eval;
pub mod flow;
pub mod imaging;
pub mod pipeline;
pub mod refine;
pub mod skeleton;
pub mod sparse_flow;
pub mod synth;

pub use error::{Error, Result};
pub use flow::FlowField;
pub use imaging::{Frame, Grid, Mask, Vec2};
