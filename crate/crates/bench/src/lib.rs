//! Fixtures shared by the criterion benches.

use rbstab::rb::{greedy_offline, GreedySettings, Offline};
use rbstab::{FePair, FullOrderModel, ProblemConfig, StabilizationConfig, StabilizationMethod};

/// Stokes cavity with P1/P1 elements and pressure-Laplacian stabilization.
pub fn stokes_p1p1(nx: usize, ny: usize) -> FullOrderModel {
    let stab = StabilizationConfig::new(StabilizationMethod::BrezziPitkaranta, 0.05);
    FullOrderModel::new(ProblemConfig { nx, ny, ..ProblemConfig::stokes_cavity(FePair::P1P1, stab) }).unwrap()
}

/// Navier-Stokes cavity with P2/P2 elements and SUPG-type stabilization.
pub fn navier_stokes_p2p2(nx: usize, ny: usize) -> FullOrderModel {
    let stab = StabilizationConfig::new(StabilizationMethod::SupgFamily { rho: 0 }, 1.0);
    FullOrderModel::new(ProblemConfig { nx, ny, ..ProblemConfig::navier_stokes_cavity(FePair::P2P2, stab) }).unwrap()
}

pub fn train(fom: &FullOrderModel, n_max: usize, train_size: usize) -> Offline {
    greedy_offline(fom, GreedySettings { n_max, train_size, seed: 1 }).unwrap()
}
