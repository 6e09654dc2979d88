//! Two-sided reduction of dense matrices to band form with static look-ahead.
//!
//! * [`sevp`]: symmetric matrix to symmetric band form.
//! * [`svd`]: general matrix to triangular-band or band form.
//! * [`runtime`]: task groups with declared footprints for look-ahead phases.
//! * [`depgraph`]: task dependency analysis of the general reduction.
//! * [`oracle`]: Jacobi reference solvers and verification helpers.
//! * [`bench`]: matrix generators, IO and the benchmark driver.

pub mod bench;
pub mod depgraph;
pub mod error;
pub mod flops;
pub mod householder;
pub mod kernels;
pub mod matrix;
pub mod oracle;
pub mod runtime;
pub mod sevp;
pub mod svd;

pub use error::{Error, Result};
pub use flops::{FlopClass, FlopCounter, FlopSnapshot};
pub use matrix::{MatMut, MatRef, Matrix};
pub use runtime::{EventTrace, ExecGroups, Region, Runtime};
