//! Core of TransAtt: jointly learned representations of hierarchical
//! class-paths and attributes, with selective attention over an entity's
//! class-paths.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the
//! command-line driver and parallel execution live in the `transatt` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod encoder;
pub mod eval;
pub mod kb;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod train;
