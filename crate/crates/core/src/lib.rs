pub mod analysis;
pub mod assembly;
pub mod config;
pub mod error;
pub mod fespace;
pub mod hifi;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod rb;

pub use analysis::{convergence_study, error_sweep, infsup_profile, ErrorReport, Field};
pub use assembly::{Mu, Problem, StabilizationConfig, StabilizationMethod};
pub use error::{Error, Result};
pub use fespace::{interpolate, interpolate_lifting, make_space, FeFunction, Family, FunctionSpace};
pub use config::RunConfig;
pub use hifi::{FePair, FeSolution, FullOrderModel, ParameterBox, ProblemConfig};
pub use rb::{greedy_offline, GreedySettings, RbOption, ReducedModel};
pub use mesh::{build_rect_mesh, build_rect_mesh_with, BoundaryTag, Diagonal, Mesh};
