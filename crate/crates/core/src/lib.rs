//! Core of the EV joint routing and scheduling toolkit.
//!
//! Everything here is `no_std` (with `alloc`): network and time-space graph
//! construction, instance generation, MIP assembly and verification, an exact
//! simplex / branch-and-bound solver, and the fleet-size-agnostic transformer
//! used to predict and fix binary variables. File formats, timing and the CLI
//! live in the `evjrs` crate.
#![no_std]

extern crate alloc;

pub mod hash;
pub mod instances;
pub mod learner;
pub mod mip;
pub mod netmodel;
pub mod solver;
