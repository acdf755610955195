//! Affine decompositions of every parametrized form of the flow problem.

pub mod affine;
pub mod forms;
pub mod geometry;
pub mod stabilization;

pub use affine::{AffineOperator, AffineTerm, AffineVector};
pub use forms::{
    assemble_bilinear, assemble_convection, assemble_divergence, assemble_h1_seminorm, assemble_load,
    assemble_mass, assemble_mean, assemble_rhs, assemble_trilinear, assemble_trilinear_affine,
    assemble_viscous, convection_products, Diff, Problem, Product, Slot, TriProduct, Weight,
};
pub use geometry::{GeometryMap, Mu, Theta, ViscosityRule};
pub use stabilization::{
    assemble_ns_stabilization, assemble_stokes_stabilization, supg_mass_products, supg_momentum_products,
    NsStabilization, StabilizationConfig, StabilizationMethod, StokesStabilization,
};
