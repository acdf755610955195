use nalgebra::{DMatrix, DVector};

use super::model::{AffineDense, RbOption, ReducedModel, View};
use crate::assembly::{GeometryMap, Mu};
use crate::error::{Error, Result};
use crate::hifi::Equation;
use crate::linalg::dense::{dense_solve, generalized_symmetric_eigen, schur_form, smallest_gsv};

pub const REDUCED_NEWTON_TOLERANCE: f64 = 1e-10;
pub const REDUCED_NEWTON_MAX_ITERATIONS: usize = 50;

/// Reduced operators of one option evaluated at one parameter.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// Velocity test × `[lifting, velocity trial]`.
    pub uu: DMatrix<f64>,
    pub up: DMatrix<f64>,
    /// Pressure test × `[lifting, velocity trial]`.
    pub pu: DMatrix<f64>,
    pub pp: DMatrix<f64>,
    /// `momentum[j]`: contribution `y_j · momentum[j] · y` to the momentum rows.
    pub momentum: Vec<DMatrix<f64>>,
    pub mass: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub mu: Mu,
    pub option: RbOption,
    /// Multiplier of the lifting column.
    pub lid: f64,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

fn combine(
    terms: &AffineDense,
    geo: &GeometryMap,
    mu: Mu,
    rows: Option<&[usize]>,
    cols: Option<&[usize]>,
    out: &mut DMatrix<f64>,
) {
    for (theta, m) in terms {
        let m = match rows {
            Some(r) => m.select_rows(r.iter()),
            None => m.clone(),
        };
        let m = match cols {
            Some(c) => m.select_columns(c.iter()),
            None => m,
        };
        *out += m * theta.eval(geo, mu);
    }
}

impl ReducedModel {
    pub fn system(&self, option: RbOption, mu: Mu) -> ReducedSystem {
        let geo = self.config.geometry();
        let View { trial, test } = self.view(option);
        let (nt, nk, np) = (test.len(), trial.len(), self.n_p());
        let mut s = ReducedSystem {
            uu: DMatrix::zeros(nt, nk),
            up: DMatrix::zeros(nt, np),
            pu: DMatrix::zeros(np, nk),
            pp: DMatrix::zeros(np, np),
            momentum: Vec::new(),
            mass: Vec::new(),
        };
        for part in self.parts(option) {
            combine(&part.uu, &geo, mu, Some(&test), Some(&trial), &mut s.uu);
            combine(&part.up, &geo, mu, Some(&test), None, &mut s.up);
            combine(&part.pu, &geo, mu, None, Some(&trial), &mut s.pu);
            combine(&part.pp, &geo, mu, None, None, &mut s.pp);
            for tensor in &part.nonlinear {
                let (target, rows, nr) = match tensor.equation {
                    Equation::Momentum => (&mut s.momentum, Some(test.as_slice()), nt),
                    Equation::Mass => (&mut s.mass, None, np),
                };
                if target.is_empty() {
                    *target = vec![DMatrix::zeros(nr, nk); nk];
                }
                for (theta, slices) in &tensor.terms {
                    let th = theta.eval(&geo, mu);
                    for (jj, &j) in trial.iter().enumerate() {
                        let m = match rows {
                            Some(r) => slices[j].select_rows(r.iter()),
                            None => slices[j].clone(),
                        };
                        target[jj] += m.select_columns(trial.iter()) * th;
                    }
                }
            }
        }
        s
    }
}

impl ReducedSystem {
    fn n_velocity(&self) -> usize {
        self.uu.ncols() - 1
    }

    fn n_pressure(&self) -> usize {
        self.pp.ncols()
    }

    fn full_trial(lid: f64, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len() + 1, std::iter::once(lid).chain(x.iter().copied()))
    }

    /// Residual `(R_u, R_p)` stacked, at lifting multiplier `lid`.
    pub fn residual(&self, lid: f64, x: &[f64], p: &[f64], nonlinear: bool) -> DVector<f64> {
        let y = Self::full_trial(lid, x);
        let p = DVector::from_column_slice(p);
        let mut ru = &self.uu * &y + &self.up * &p;
        let mut rp = &self.pu * &y + &self.pp * &p;
        if nonlinear {
            for (yj, t) in y.iter().zip(&self.momentum) {
                ru += t * &y * *yj;
            }
            for (yj, t) in y.iter().zip(&self.mass) {
                rp += t * &y * *yj;
            }
        }
        let mut r = DVector::zeros(ru.len() + rp.len());
        r.rows_mut(0, ru.len()).copy_from(&ru);
        r.rows_mut(ru.len(), rp.len()).copy_from(&rp);
        r
    }

    /// Jacobian with respect to the velocity and pressure coefficients.
    pub fn jacobian(&self, lid: f64, x: &[f64], nonlinear: bool) -> DMatrix<f64> {
        let nx = self.n_velocity();
        let np = self.n_pressure();
        let nt = self.uu.nrows();
        let y = Self::full_trial(lid, x);
        let mut uu = self.uu.columns(1, nx).into_owned();
        let mut pu = self.pu.columns(1, nx).into_owned();
        if nonlinear {
            for (tensor, block) in [(&self.momentum, &mut uu), (&self.mass, &mut pu)] {
                if tensor.is_empty() {
                    continue;
                }
                let mut frozen = DMatrix::zeros(block.nrows(), nx + 1);
                for (yj, t) in y.iter().zip(tensor.iter()) {
                    frozen += t * *yj;
                }
                *block += frozen.columns(1, nx);
                for m in 0..nx {
                    let col = &tensor[m + 1] * &y;
                    let mut c = block.column_mut(m);
                    c += col;
                }
            }
        }
        let mut j = DMatrix::zeros(nt + np, nx + np);
        j.view_mut((0, 0), (nt, nx)).copy_from(&uu);
        j.view_mut((0, nx), (nt, np)).copy_from(&self.up);
        j.view_mut((nt, 0), (np, nx)).copy_from(&pu);
        j.view_mut((nt, nx), (np, np)).copy_from(&self.pp);
        j
    }

    pub fn is_nonlinear(&self) -> bool {
        !self.momentum.is_empty() || !self.mass.is_empty()
    }
}

fn newton(
    sys: &ReducedSystem,
    option: RbOption,
    lid: f64,
    mut x: Vec<f64>,
    mut p: Vec<f64>,
    nonlinear: bool,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let nx = sys.n_velocity();
    let r0 = sys.residual(lid, &vec![0.0; nx], &vec![0.0; sys.n_pressure()], nonlinear).norm();
    let scale = if r0 > 0.0 { r0 } else { 1.0 };
    let max_iter = if nonlinear { REDUCED_NEWTON_MAX_ITERATIONS } else { 3 };
    let mut history = Vec::new();
    let fail = |e: Error| Error::ReducedSolve { option: option.name().into(), source: Box::new(e) };
    loop {
        let r = sys.residual(lid, &x, &p, nonlinear);
        let rel = r.norm() / scale;
        history.push(rel);
        let steps = history.len() - 1;
        if steps >= 1 && rel <= REDUCED_NEWTON_TOLERANCE {
            return Ok((x, p, history));
        }
        if steps >= max_iter || !rel.is_finite() {
            return Err(fail(Error::NonConvergence { iterations: steps, residual: rel, history }));
        }
        let j = sys.jacobian(lid, &x, nonlinear);
        if j.nrows() != j.ncols() {
            return Err(fail(Error::DimensionMismatch(format!("reduced system is {}x{}", j.nrows(), j.ncols()))));
        }
        let step = dense_solve(&j, &(-r)).ok_or_else(|| {
            fail(Error::DenseSingular(format!("{}x{} reduced saddle-point matrix", j.nrows(), j.ncols())))
        })?;
        for (xi, d) in x.iter_mut().zip(step.iter()) {
            *xi += d;
        }
        for (pi, d) in p.iter_mut().zip(step.iter().skip(nx)) {
            *pi += d;
        }
    }
}

impl ReducedModel {
    /// Online solve with the lifting scaled by `lid`.
    pub fn solve_scaled(&self, option: RbOption, mu: Mu, lid: f64) -> Result<ReducedSolution> {
        let sys = self.system(option, mu);
        let (nx, np) = (sys.n_velocity(), sys.n_pressure());
        let (x, p, mut history) = newton(&sys, option, lid, vec![0.0; nx], vec![0.0; np], false)?;
        let (x, p) = if sys.is_nonlinear() {
            let (x, p, h) = newton(&sys, option, lid, x, p, true)?;
            history = h;
            (x, p)
        } else {
            (x, p)
        };
        Ok(ReducedSolution {
            mu,
            option,
            lid,
            iterations: history.len() - 1,
            residual: *history.last().unwrap(),
            history,
            velocity: x,
            pressure: p,
        })
    }

    pub fn solve_option(&self, option: RbOption, mu: Mu) -> Result<ReducedSolution> {
        self.solve_scaled(option, mu, 1.0)
    }

    /// Online solve in the model's own option.
    pub fn solve(&self, mu: Mu) -> Result<ReducedSolution> {
        self.solve_option(self.option, mu)
    }

    pub fn reconstruct_solution(&self, s: &ReducedSolution) -> (Vec<f64>, Vec<f64>) {
        self.reconstruct(s.option, s.lid, &s.velocity, &s.pressure)
    }

    /// Reduced divergence matrix `B_N` (pressure × velocity test basis).
    pub fn divergence(&self, option: RbOption, mu: Mu) -> DMatrix<f64> {
        let geo = self.config.geometry();
        let trial = self.view(option).trial;
        let mut b = DMatrix::zeros(self.n_p(), trial.len() - 1);
        combine(&self.plain.pu, &geo, mu, None, Some(&trial[1..]), &mut b);
        b
    }

    pub fn velocity_gram(&self, option: RbOption) -> DMatrix<f64> {
        let test = self.view(option).test;
        self.xu.select_rows(test.iter()).select_columns(test.iter())
    }

    /// `s_pq` on the reduced pressure space; zero when the option drops stabilization.
    pub fn pressure_stabilization(&self, option: RbOption, mu: Mu) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n_p(), self.n_p());
        if self.uses_stabilization(option) {
            combine(&self.stabilization.pp, &self.config.geometry(), mu, None, None, &mut s);
            s *= -1.0;
        }
        s
    }

    /// Reduced inf-sup constant `β_N(μ)`.
    pub fn infsup(&self, option: RbOption, mu: Mu) -> Result<f64> {
        smallest_gsv(&self.divergence(option, mu), &self.velocity_gram(option), &self.xp)
    }

    /// Modified inf-sup constant `β̃_N(μ)`: the bracket
    /// `sqrt(qᵀ B X⁻¹ Bᵀ q) + sqrt(qᵀ S q)` minimized over the `X_p`-normalized
    /// eigenvectors of the combined form.
    pub fn modified_infsup(&self, option: RbOption, mu: Mu) -> Result<f64> {
        modified_infsup_from(
            &self.divergence(option, mu),
            &self.velocity_gram(option),
            &self.xp,
            &self.pressure_stabilization(option, mu),
        )
    }
}

pub fn modified_infsup_from(
    b: &DMatrix<f64>,
    xu: &DMatrix<f64>,
    xp: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<f64> {
    if b.nrows() == 0 {
        return Ok(0.0);
    }
    let m1 = schur_form(b, xu)?;
    let s = (s + s.transpose()) * 0.5;
    let (_, vecs) = generalized_symmetric_eigen(&(&m1 + &s), xp)?;
    let mut best = f64::INFINITY;
    for q in vecs.column_iter() {
        let sup = q.dot(&(&m1 * q)).max(0.0).sqrt();
        let stab = q.dot(&(&s * q)).max(0.0).sqrt();
        best = best.min(sup + stab);
    }
    Ok(best)
}
