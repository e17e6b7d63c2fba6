//! Embedding eigenvalues into the absolutely continuous spectrum of periodic
//! Jacobi operators with decaying diagonal potentials.

pub mod cli;
pub mod embedder;
pub mod frame;
pub mod io;
pub mod jacobi;
pub mod linalg2;
pub mod scheduler;
pub mod verify;
