use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{RbOption, ReducedModel, Snapshot};
use crate::assembly::Mu;
use crate::error::{Error, Result};
use crate::hifi::{FeSolution, FullOrderModel, ParameterBox};
use crate::linalg::SparseLu;

/// Indicator level below which a parameter counts as reproduced.
pub const REPRODUCTION_LEVEL: f64 = 1e-8;

/// `T^μ q`: the velocity with `(T^μ q, v)_{X_u} = b(v, q; μ)` for every
/// velocity `v` vanishing on the boundary.
pub struct SupremizerOperator<'a> {
    fom: &'a FullOrderModel,
    lu: SparseLu,
}

impl<'a> SupremizerOperator<'a> {
    pub fn new(fom: &'a FullOrderModel) -> Result<Self> {
        let nf = fom.free_dofs.len();
        let xff = fom.xu.submatrix(&fom.free_map, &fom.free_map, nf, nf);
        Ok(Self { fom, lu: SparseLu::factor(&xff)? })
    }

    pub fn apply(&self, q: &[f64], mu: Mu) -> Vec<f64> {
        let fom = self.fom;
        let mut bt = vec![0.0; fom.n_velocity()];
        fom.plain.pu.apply_transpose_acc(&fom.geometry, mu, 1.0, q, &mut bt);
        let rhs: Vec<f64> = fom.free_dofs.iter().map(|&i| bt[i]).collect();
        let sf = self.lu.solve(&rhs);
        let mut s = vec![0.0; fom.n_velocity()];
        for (&i, v) in fom.free_dofs.iter().zip(sf) {
            s[i] = v;
        }
        s
    }
}

/// `size` points of a jittered tensor grid on the box: cell centres of a
/// `k × k` grid moved by up to a quarter cell, `k = ⌈√size⌉`.
pub fn training_set(pbox: &ParameterBox, size: usize, seed: u64) -> Vec<Mu> {
    let k = (size as f64).sqrt().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(size);
    'outer: for j in 0..k {
        for i in 0..k {
            if out.len() == size {
                break 'outer;
            }
            let jx: f64 = rng.gen_range(-0.25..0.25);
            let jy: f64 = rng.gen_range(-0.25..0.25);
            out.push(pbox.lerp([(i as f64 + 0.5 + jx) / k as f64, (j as f64 + 0.5 + jy) / k as f64]));
        }
    }
    out
}

/// `size` uniform random points of the box avoiding `exclude`.
pub fn test_set(pbox: &ParameterBox, size: usize, seed: u64, exclude: &[Mu]) -> Vec<Mu> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7e57);
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let mu = pbox.lerp([rng.gen::<f64>(), rng.gen::<f64>()]);
        if !exclude.iter().any(|e| e == &mu) {
            out.push(mu);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedySettings {
    pub n_max: usize,
    pub train_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub selected: Vec<Mu>,
    /// Largest indicator over the training set when each parameter was chosen;
    /// 1 for the first pick, where the reduced solution is the lifting alone.
    pub max_indicator: Vec<f64>,
    pub train_size: usize,
    pub seed: u64,
}

/// Everything the greedy loop produced.
pub struct Offline {
    pub model: ReducedModel,
    pub trace: GreedyTrace,
    pub snapshots: Vec<Snapshot>,
    pub training: Vec<Mu>,
}

impl Offline {
    /// Model built from the first `n` snapshots.
    pub fn truncated(&self, fom: &FullOrderModel, n: usize) -> Result<ReducedModel> {
        if n == 0 || n > self.snapshots.len() {
            return Err(Error::OutOfRange { index: n, len: self.snapshots.len() });
        }
        ReducedModel::build(fom, &self.snapshots[..n], self.model.option, self.model.seed)
    }
}

pub fn snapshot(fom: &FullOrderModel, sup: &SupremizerOperator<'_>, mu: Mu) -> Result<(Snapshot, FeSolution)> {
    let sol = fom.solve(mu)?;
    let supremizer = sup.apply(&sol.pressure.coefficients, mu);
    Ok((
        Snapshot {
            mu,
            velocity: sol.velocity.coefficients.clone(),
            pressure: sol.pressure.coefficients.clone(),
            supremizer,
        },
        sol,
    ))
}

/// Relative full-order residual of the reconstructed reduced solution.
pub fn indicator(fom: &FullOrderModel, model: &ReducedModel, option: RbOption, mu: Mu) -> Result<f64> {
    match model.solve_option(option, mu) {
        Ok(s) => {
            let (u, p) = model.reconstruct_solution(&s);
            fom.relative_residual(mu, &u, &p)
        }
        // a failed reduced solve is the worst possible approximation
        Err(Error::ReducedSolve { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn argmax(values: &[f64], keep: impl Fn(usize) -> bool) -> usize {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if keep(i) && best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or(0)
}

/// Greedy sampling with the option (i) indicator.
pub fn greedy_offline(fom: &FullOrderModel, settings: GreedySettings) -> Result<Offline> {
    if settings.n_max == 0 || settings.train_size == 0 {
        return Err(Error::InvalidArgument("N_max and the training-set size must be at least 1".into()));
    }
    let pbox = fom.config.parameter_box;
    let training = training_set(&pbox, settings.train_size, settings.seed);
    let sup = SupremizerOperator::new(fom)?;
    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(settings.n_max);
    let mut trace = GreedyTrace {
        selected: Vec::new(),
        max_indicator: Vec::new(),
        train_size: settings.train_size,
        seed: settings.seed,
    };
    let mut model: Option<ReducedModel> = None;
    for _ in 0..settings.n_max {
        let (mu, value) = match &model {
            None => (pbox.center(), 1.0),
            Some(m) => {
                let values: Vec<f64> = training
                    .par_iter()
                    .map(|&mu| indicator(fom, m, RbOption::I, mu))
                    .collect::<Result<_>>()?;
                let best = argmax(&values, |_| true);
                if values[best] <= REPRODUCTION_LEVEL && trace.selected.contains(&training[best]) {
                    // the space is saturated; the maximum is round-off
                    let fresh = argmax(&values, |i| !trace.selected.contains(&training[i]));
                    (training[fresh], values[fresh])
                } else {
                    (training[best], values[best])
                }
            }
        };
        if trace.selected.contains(&mu) {
            return Err(Error::DuplicateSelection(mu[0], mu[1]));
        }
        let (snap, _) = snapshot(fom, &sup, mu)?;
        snapshots.push(snap);
        trace.selected.push(mu);
        trace.max_indicator.push(value);
        model = Some(ReducedModel::build(fom, &snapshots, RbOption::I, settings.seed)?);
    }
    Ok(Offline { model: model.unwrap(), trace, snapshots, training })
}
