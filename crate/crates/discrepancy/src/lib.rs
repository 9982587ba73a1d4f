//! Deterministic discrepancy minimization.
//!
//! Solvers for set balancing, weighted set balancing, lattice rounding and
//! near-optimal edge coloring, built from a potential-function sequential
//! derandomizer, a multiplicative-weights controller, pairwise-independent
//! exhaustive search, and certified multi-way partitioners. All solvers are
//! deterministic and produce identical output for any worker count.

pub mod error;
pub mod exec;
pub mod gen;
pub mod instance;
pub mod io;
pub mod mwu;
pub mod pairwise;
pub mod partition;
pub mod potential;
pub mod profile;

pub mod edgecolor;
pub mod isolate;
pub mod lattice;
pub mod solver;

pub use error::{Error, Result};
pub use instance::{
    brute_force_min_disc, evaluate, evaluate_sets, evaluate_weighted, mix, Assignment, DiscReport,
    ImportanceVector, Partition, SetSystem, WeightedSystem,
};
pub use profile::{ConstantsProfile, Mode};
