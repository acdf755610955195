//! Sparse and dense linear algebra used by the solvers.

pub mod dense;
pub mod lu;
pub mod ordering;
pub mod sparse;

pub use lu::{sparse_lu_solve, Ordering, SparseLu};
pub use sparse::{axpy, dot, norm2, CsrMatrix, TripletBuilder};
