//! Numerical core of the cycle-confusion detection lab.
//!
//! Everything in this crate is pure computation over in-memory buffers: the
//! temporal cycle confusion matching losses, the image-level pretext tasks, a
//! small two-stage detector with hand-written backward passes, detection
//! metrics, the SGD optimizer and the synthetic moving-shapes renderer. The
//! crate is `no_std` and only needs `alloc`; file formats, datasets on disk and
//! the command line live in the `cycconf` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cycmatch;
pub mod det;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod real;
pub mod rng;
pub mod ssl_tasks;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
