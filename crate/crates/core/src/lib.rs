//! Hierarchical random walks and hierarchical continuous-time quantum walks.
//!
//! A hierarchical graph `G = (H; G_0, …, G_d)` has a global graph `H` on
//! `d + 1` vertices and one local graph per global vertex. The walker's
//! state is a global vertex together with one local vertex per local graph.
//! This crate builds the induced transition operators and Hamiltonians,
//! decomposes them spectrally from the factor spectra, and evaluates the
//! joint vertex distribution of the quantum walk.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod linalg;
pub mod spectral;
pub mod walk;

pub use error::{Error, Result};
pub use graph::{GraphModel, SymmetricOperator};
pub use hierarchy::{Convention, HierarchicalModel, ModelOptions};
pub use linalg::{ComplexMatrix, IndexSpace, Matrix, RealMatrix, Scalar};
pub use spectral::{eigh, EigenSystem, TransitionSpectrum};
pub use walk::{HamiltonianAssembly, JointDistribution, KbarModel, QuantumState};
