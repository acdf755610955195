//! High-fidelity finite-element solves of the stabilized Stokes and
//! Navier-Stokes cavity problems.
//!
//! The unknowns are the total velocity `U` (boundary dofs pinned to the
//! lifting) and the pressure `P`. Free velocity rows and all pressure rows
//! form the residual
//!
//! ```text
//! R_u = (A - S_uv) U + (Bᵀ - S_pv) P + C(U) U - G(U) U - f
//! R_p = (B - S_uq) U - S_pq P - E(U) U - g
//! ```
//!
//! and a scalar multiplier enforces `∫ P = 0`. Stokes is a single Newton
//! step from `(lifting, 0)`.

use std::sync::Arc;

use crate::assembly::{
    assemble_divergence, assemble_h1_seminorm, assemble_load, assemble_mass, assemble_mean,
    assemble_stokes_stabilization, assemble_trilinear_affine, assemble_viscous, convection_products,
    supg_mass_products, supg_momentum_products, AffineOperator, Diff, GeometryMap, Mu, Problem,
    Slot, StabilizationConfig, StabilizationMethod, Theta, TriProduct, ViscosityRule, Weight,
};
use crate::error::{Error, Result};
use crate::fespace::{interpolate_lifting, make_space, FeFunction, Family, FunctionSpace};
use crate::linalg::{norm2, CsrMatrix, SparseLu, TripletBuilder};
use crate::mesh::{build_rect_mesh_with, Diagonal, Mesh};

/// Relative residual at which Newton stops.
pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITERATIONS: usize = 25;

/// Relative residuals below this are at the round-off floor of the solver.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Whether a Newton residual history ends quadratically: the last residual
/// is at most `10·r²` of its predecessor. A last step that lands on the
/// round-off floor is judged by the step before it.
pub fn has_quadratic_tail(history: &[f64]) -> bool {
    let quad = |prev: f64, next: f64| next <= 10.0 * prev * prev;
    match history {
        [.., a, b, c] if *c <= ROUNDOFF_FLOOR && !quad(*b, *c) => quad(*a, *b),
        [.., b, c] => quad(*b, *c),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FePair {
    P1P1,
    P2P2,
    P1P0,
    P2P1,
}

impl FePair {
    pub fn velocity_family(self) -> Family {
        match self {
            FePair::P1P1 | FePair::P1P0 => Family::P1,
            FePair::P2P2 | FePair::P2P1 => Family::P2,
        }
    }

    pub fn pressure_family(self) -> Family {
        match self {
            FePair::P1P1 | FePair::P2P1 => Family::P1,
            FePair::P2P2 => Family::P2,
            FePair::P1P0 => Family::P0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FePair::P1P1 => "P1P1",
            FePair::P2P2 => "P2P2",
            FePair::P1P0 => "P1P0",
            FePair::P2P1 => "P2P1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P1P1" => Ok(FePair::P1P1),
            "P2P2" => Ok(FePair::P2P2),
            "P1P0" => Ok(FePair::P1P0),
            "P2P1" => Ok(FePair::P2P1),
            _ => Err(Error::InvalidArgument(format!("unknown finite-element pair `{s}`"))),
        }
    }
}

/// Rectangle `[μ₁ range] × [μ₂ range]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterBox {
    pub mu1: [f64; 2],
    pub mu2: [f64; 2],
}

impl ParameterBox {
    pub fn new(mu1: [f64; 2], mu2: [f64; 2]) -> Self {
        Self { mu1, mu2 }
    }

    pub fn center(&self) -> Mu {
        [0.5 * (self.mu1[0] + self.mu1[1]), 0.5 * (self.mu2[0] + self.mu2[1])]
    }

    pub fn contains(&self, mu: Mu) -> bool {
        let tol = 1e-12;
        mu[0] >= self.mu1[0] - tol && mu[0] <= self.mu1[1] + tol && mu[1] >= self.mu2[0] - tol && mu[1] <= self.mu2[1] + tol
    }

    /// Maps `t ∈ [0,1]²` into the box.
    pub fn lerp(&self, t: [f64; 2]) -> Mu {
        [
            self.mu1[0] + t[0] * (self.mu1[1] - self.mu1[0]),
            self.mu2[0] + t[1] * (self.mu2[1] - self.mu2[0]),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ok(self.mu1) || !ok(self.mu2) {
            return Err(Error::InvalidArgument(format!("malformed parameter box {self:?}")));
        }
        if self.mu1[0] <= 0.0 {
            return Err(Error::InvalidArgument("mu1 must stay positive".into()));
        }
        if self.mu2[0] <= -1.0 {
            return Err(Error::InvalidArgument("mu2 must exceed -1 so the cavity has positive length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub problem: Problem,
    pub fe_pair: FePair,
    pub stabilization: StabilizationConfig,
    pub parameter_box: ParameterBox,
    pub nx: usize,
    pub ny: usize,
    pub diagonal: Diagonal,
    /// Reference value `μ̄₂` of the length parameter.
    pub mu2_ref: f64,
    /// Horizontal lid velocity; zero gives the homogeneous problem.
    pub lid_speed: f64,
}

impl ProblemConfig {
    /// Stokes cavity with `μ₁` the viscosity.
    pub fn stokes_cavity(fe_pair: FePair, stabilization: StabilizationConfig) -> Self {
        Self {
            problem: Problem::Stokes,
            fe_pair,
            stabilization,
            parameter_box: ParameterBox::new([0.25, 0.75], [1.0, 3.0]),
            nx: 32,
            ny: 16,
            diagonal: Diagonal::Uniform,
            mu2_ref: 1.0,
            lid_speed: 1.0,
        }
    }

    /// Navier-Stokes cavity with `μ₁` the Reynolds number.
    pub fn navier_stokes_cavity(fe_pair: FePair, stabilization: StabilizationConfig) -> Self {
        Self {
            problem: Problem::NavierStokes,
            parameter_box: ParameterBox::new([100.0, 200.0], [1.5, 3.0]),
            ..Self::stokes_cavity(fe_pair, stabilization)
        }
    }

    pub fn viscosity_rule(&self) -> ViscosityRule {
        match self.problem {
            Problem::Stokes => ViscosityRule::Viscosity,
            Problem::NavierStokes => ViscosityRule::Reynolds,
        }
    }

    pub fn geometry(&self) -> GeometryMap {
        GeometryMap::new(self.mu2_ref, self.viscosity_rule())
    }

    pub fn validate(&self) -> Result<()> {
        self.stabilization.validate()?;
        self.parameter_box.validate()?;
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument("mesh cell counts must be at least 1".into()));
        }
        if !(self.mu2_ref > -1.0 && self.mu2_ref.is_finite()) || !self.lid_speed.is_finite() {
            return Err(Error::InvalidArgument("reference length and lid speed must be finite, mu2_ref > -1".into()));
        }
        use StabilizationMethod as M;
        let method = self.stabilization.method;
        match (self.fe_pair, method) {
            (FePair::P2P1, m) if m != M::None => {
                return Err(Error::InvalidArgument("the P2P1 pair is stable and takes no stabilization".into()));
            }
            (FePair::P1P0, M::None | M::EdgeJumpP1P0) => {}
            (FePair::P1P0, _) => {
                return Err(Error::InvalidArgument("the P1P0 pair needs edge-jump stabilization or none".into()));
            }
            (_, M::EdgeJumpP1P0) => {
                return Err(Error::InvalidArgument("edge-jump stabilization needs the P1P0 pair".into()));
            }
            _ => {}
        }
        match (self.problem, method) {
            (Problem::Stokes, M::SupgFamily { .. }) => Err(Error::InvalidArgument(
                "the SUPG family stabilizes Navier-Stokes; use the residual family for Stokes".into(),
            )),
            (Problem::NavierStokes, M::ResidualBased { .. } | M::BrezziPitkaranta | M::EdgeJumpP1P0) => {
                Err(Error::InvalidArgument("Navier-Stokes supports the SUPG family or no stabilization".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn check_parameter(&self, mu: Mu) -> Result<()> {
        if !(mu[0] > 0.0 && mu[0].is_finite() && mu[1] > -1.0 && mu[1].is_finite()) {
            return Err(Error::InvalidArgument(format!("parameter ({}, {}) is outside the admissible range", mu[0], mu[1])));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    Momentum,
    Mass,
}

/// A trilinear contribution `Σ_q Θ_q t_q(w, u, test)` evaluated at `w = u`.
#[derive(Debug, Clone)]
pub struct NonlinearForm {
    pub equation: Equation,
    pub terms: Vec<(Theta, Vec<TriProduct>)>,
    pub weight: Weight,
}

/// Operators of one part of the algebraic system, signs included.
#[derive(Debug, Clone)]
pub struct SystemBlocks {
    /// Velocity test × velocity trial.
    pub uu: AffineOperator,
    /// Velocity test × pressure trial.
    pub up: AffineOperator,
    /// Pressure test × velocity trial.
    pub pu: AffineOperator,
    /// Pressure test × pressure trial.
    pub pp: AffineOperator,
    pub nonlinear: Vec<NonlinearForm>,
}

impl SystemBlocks {
    fn empty(nu: usize, np: usize) -> Self {
        Self {
            uu: AffineOperator::empty(nu, nu),
            up: AffineOperator::empty(nu, np),
            pu: AffineOperator::empty(np, nu),
            pp: AffineOperator::empty(np, np),
            nonlinear: Vec::new(),
        }
    }
}

/// Right-hand side contributions of a body force, already evaluated at one μ.
#[derive(Debug, Clone)]
pub struct Load {
    pub momentum: Vec<f64>,
    pub mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FeSolution {
    pub mu: Mu,
    /// Homogeneous part `U - lifting`.
    pub velocity: FeFunction,
    pub pressure: FeFunction,
    pub lifting: FeFunction,
    pub diagnostics: SolverDiagnostics,
}

impl FeSolution {
    pub fn total_velocity(&self) -> Vec<f64> {
        self.velocity.coefficients.iter().zip(&self.lifting.coefficients).map(|(u, l)| u + l).collect()
    }
}

/// Residual split into free momentum rows (boundary rows zero) and mass rows.
#[derive(Debug, Clone)]
pub struct Residual {
    pub momentum: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Residual {
    pub fn norm(&self) -> f64 {
        norm2(&self.momentum).hypot(norm2(&self.mass))
    }
}

/// All parameter-independent data of the discretized cavity problem.
pub struct FullOrderModel {
    pub config: ProblemConfig,
    pub geometry: GeometryMap,
    pub mesh: Arc<Mesh>,
    pub velocity: Arc<FunctionSpace>,
    pub pressure: Arc<FunctionSpace>,
    pub lifting: FeFunction,
    /// Galerkin terms.
    pub plain: SystemBlocks,
    /// Stabilization terms; empty without stabilization.
    pub stabilization: SystemBlocks,
    /// Velocity inner product (H¹ seminorm Gram matrix).
    pub xu: CsrMatrix,
    /// Pressure inner product (L² Gram matrix).
    pub xp: CsrMatrix,
    /// `∫ ψ_i` for the zero-mean constraint.
    pub mean: Vec<f64>,
    /// Free position of each velocity dof, `None` on the Dirichlet boundary.
    pub free_map: Vec<Option<usize>>,
    pub free_dofs: Vec<usize>,
}

impl FullOrderModel {
    pub fn new(config: ProblemConfig) -> Result<Self> {
        config.validate()?;
        let length = 1.0 + config.mu2_ref;
        let mesh = Arc::new(build_rect_mesh_with(length, 1.0, config.nx, config.ny, config.diagonal)?);
        let velocity = Arc::new(make_space(mesh.clone(), config.fe_pair.velocity_family(), 2)?);
        let pressure = Arc::new(make_space(mesh.clone(), config.fe_pair.pressure_family(), 1)?);
        let lifting = interpolate_lifting(&velocity, config.lid_speed)?;
        let (nu, np) = (velocity.dof_count(), pressure.dof_count());

        let b = assemble_divergence(&velocity, &pressure)?;
        let mut plain = SystemBlocks::empty(nu, np);
        plain.uu = assemble_viscous(&velocity)?;
        plain.up = b.transpose();
        plain.pu = b;
        if config.problem == Problem::NavierStokes {
            plain.nonlinear.push(NonlinearForm {
                equation: Equation::Momentum,
                terms: convection_products(),
                weight: Weight::One,
            });
        }

        let mut stabilization = SystemBlocks::empty(nu, np);
        let sc = config.stabilization;
        if sc.is_active() {
            let s = assemble_stokes_stabilization(&velocity, &pressure, &sc)?;
            stabilization.uu = s.s_uv.scaled(-1.0);
            stabilization.up = s.s_pv.scaled(-1.0);
            stabilization.pu = s.s_uq.scaled(-1.0);
            stabilization.pp = s.s_pq.scaled(-1.0);
            if let StabilizationMethod::SupgFamily { rho } = sc.method {
                let neg = |t: Vec<(Theta, Vec<TriProduct>)>| {
                    t.into_iter().map(|(th, p)| (th.scaled(-1.0), p)).collect::<Vec<_>>()
                };
                stabilization.nonlinear.push(NonlinearForm {
                    equation: Equation::Mass,
                    terms: neg(supg_mass_products(sc.delta)),
                    weight: Weight::DiameterSquared,
                });
                let g = supg_momentum_products(sc.delta, rho);
                if !g.is_empty() {
                    stabilization.nonlinear.push(NonlinearForm {
                        equation: Equation::Momentum,
                        terms: neg(g),
                        weight: Weight::DiameterSquared,
                    });
                }
            }
        }

        let xu = assemble_h1_seminorm(&velocity)?;
        let xp = assemble_mass(&pressure)?;
        let mean = assemble_mean(&pressure)?;
        let mask = velocity.dirichlet_mask();
        let mut free_map = vec![None; nu];
        let mut free_dofs = Vec::new();
        for (i, &fixed) in mask.iter().enumerate() {
            if !fixed {
                free_map[i] = Some(free_dofs.len());
                free_dofs.push(i);
            }
        }
        Ok(Self {
            geometry: config.geometry(),
            config,
            mesh,
            velocity,
            pressure,
            lifting,
            plain,
            stabilization,
            xu,
            xp,
            mean,
            free_map,
            free_dofs,
        })
    }

    pub fn n_velocity(&self) -> usize {
        self.velocity.dof_count()
    }

    pub fn n_pressure(&self) -> usize {
        self.pressure.dof_count()
    }

    pub fn is_stabilized(&self) -> bool {
        self.config.stabilization.is_active()
    }

    /// The blocks entering the system: Galerkin terms plus, if requested,
    /// the stabilization terms.
    pub fn parts(&self, stabilized: bool) -> Vec<&SystemBlocks> {
        if stabilized && self.is_stabilized() {
            vec![&self.plain, &self.stabilization]
        } else {
            vec![&self.plain]
        }
    }

    fn fe_function(&self, u: &[f64]) -> Result<FeFunction> {
        FeFunction::new(self.velocity.clone(), u.to_vec())
    }

    fn nonlinear_matrices(&self, form: &NonlinearForm, w: &FeFunction, mu: Mu, slot: Slot) -> Result<CsrMatrix> {
        let test = match form.equation {
            Equation::Momentum => &*self.velocity,
            Equation::Mass => &*self.pressure,
        };
        let op = assemble_trilinear_affine(test, &self.velocity, &form.terms, form.weight, w, slot)?;
        Ok(op.evaluate(&self.geometry, mu))
    }

    /// Body-force load for a field `f` given on the physical domain.
    pub fn body_force_load(&self, mu: Mu, f: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync)) -> Result<Load> {
        let geo = self.geometry;
        let a = geo.scale(mu[1]);
        let nu = geo.nu(mu);
        let g = |x: [f64; 2]| f(geo.to_physical(mu, x));
        let mut momentum = assemble_load(
            &self.velocity,
            &g,
            &[(Diff::Value, 0, 0, a), (Diff::Value, 1, 1, a)],
            Weight::One,
        )?;
        let mut mass = vec![0.0; self.n_pressure()];
        let sc = self.config.stabilization;
        if let StabilizationMethod::ResidualBased { rho } | StabilizationMethod::SupgFamily { rho } = sc.method {
            let d = sc.delta;
            mass = assemble_load(
                &self.pressure,
                &g,
                &[(Diff::Dx, 0, 0, -d), (Diff::Dy, 0, 1, -d * a)],
                Weight::DiameterSquared,
            )?;
            if rho != 0 {
                let c = rho as f64 * d * nu;
                let mut terms = Vec::new();
                for comp in 0..2 {
                    terms.push((Diff::Dxx, comp, comp, c / a));
                    terms.push((Diff::Dyy, comp, comp, c * a));
                }
                let extra = assemble_load(&self.velocity, &g, &terms, Weight::DiameterSquared)?;
                momentum.iter_mut().zip(extra).for_each(|(m, e)| *m += e);
            }
        }
        Ok(Load { momentum, mass })
    }

    /// Residual at total velocity `u` and pressure `p`.
    pub fn residual(&self, mu: Mu, u: &[f64], p: &[f64], stabilized: bool, load: Option<&Load>) -> Result<Residual> {
        self.residual_with(mu, u, p, stabilized, true, load)
    }

    fn residual_with(
        &self,
        mu: Mu,
        u: &[f64],
        p: &[f64],
        stabilized: bool,
        nonlinear: bool,
        load: Option<&Load>,
    ) -> Result<Residual> {
        if u.len() != self.n_velocity() || p.len() != self.n_pressure() {
            return Err(Error::DimensionMismatch("state does not match the discrete spaces".into()));
        }
        let geo = &self.geometry;
        let mut ru = vec![0.0; self.n_velocity()];
        let mut rp = vec![0.0; self.n_pressure()];
        let mut w = None;
        for part in self.parts(stabilized) {
            part.uu.apply_acc(geo, mu, 1.0, u, &mut ru);
            part.up.apply_acc(geo, mu, 1.0, p, &mut ru);
            part.pu.apply_acc(geo, mu, 1.0, u, &mut rp);
            part.pp.apply_acc(geo, mu, 1.0, p, &mut rp);
            if nonlinear {
                for form in &part.nonlinear {
                    if w.is_none() {
                        w = Some(self.fe_function(u)?);
                    }
                    let m = self.nonlinear_matrices(form, w.as_ref().unwrap(), mu, Slot::Transported)?;
                    let target = match form.equation {
                        Equation::Momentum => &mut ru,
                        Equation::Mass => &mut rp,
                    };
                    m.matvec_acc(1.0, u, target);
                }
            }
        }
        if let Some(l) = load {
            ru.iter_mut().zip(&l.momentum).for_each(|(r, f)| *r -= f);
            rp.iter_mut().zip(&l.mass).for_each(|(r, g)| *r -= g);
        }
        for (r, f) in ru.iter_mut().zip(&self.free_map) {
            if f.is_none() {
                *r = 0.0;
            }
        }
        Ok(Residual { momentum: ru, mass: rp })
    }

    /// Residual of the state `(lifting, 0)`, the normalization of every relative residual.
    pub fn reference_residual_norm(&self, mu: Mu, stabilized: bool, load: Option<&Load>) -> Result<f64> {
        let p = vec![0.0; self.n_pressure()];
        Ok(self.residual(mu, &self.lifting.coefficients, &p, stabilized, load)?.norm())
    }

    /// `‖R(U, P)‖ / ‖R(lifting, 0)‖` for the system in the configured formulation.
    pub fn relative_residual(&self, mu: Mu, u: &[f64], p: &[f64]) -> Result<f64> {
        let stab = self.is_stabilized();
        let r = self.residual(mu, u, p, stab, None)?.norm();
        let r0 = self.reference_residual_norm(mu, stab, None)?;
        Ok(if r0 > 0.0 { r / r0 } else { r })
    }

    /// Full velocity-velocity and pressure-velocity Jacobian blocks at `u`.
    fn jacobian_blocks(
        &self,
        mu: Mu,
        u: &[f64],
        stabilized: bool,
        nonlinear: bool,
    ) -> Result<[CsrMatrix; 4]> {
        let geo = &self.geometry;
        let mut uu = Vec::new();
        let mut up = Vec::new();
        let mut pu = Vec::new();
        let mut pp = Vec::new();
        let w = if nonlinear { Some(self.fe_function(u)?) } else { None };
        for part in self.parts(stabilized) {
            uu.push(part.uu.evaluate(geo, mu));
            up.push(part.up.evaluate(geo, mu));
            pu.push(part.pu.evaluate(geo, mu));
            pp.push(part.pp.evaluate(geo, mu));
            if let Some(w) = &w {
                for form in &part.nonlinear {
                    let target = match form.equation {
                        Equation::Momentum => &mut uu,
                        Equation::Mass => &mut pu,
                    };
                    target.push(self.nonlinear_matrices(form, w, mu, Slot::Transported)?);
                    target.push(self.nonlinear_matrices(form, w, mu, Slot::Transporting)?);
                }
            }
        }
        let sum = |ms: &[CsrMatrix]| {
            let parts: Vec<(f64, &CsrMatrix)> = ms.iter().map(|m| (1.0, m)).collect();
            CsrMatrix::linear_combination(&parts)
        };
        Ok([sum(&uu)?, sum(&up)?, sum(&pu)?, sum(&pp)?])
    }

    /// Saddle-point matrix on (free velocity, pressure, multiplier).
    pub fn system_matrix(&self, blocks: &[CsrMatrix; 4]) -> CsrMatrix {
        let nf = self.free_dofs.len();
        let np = self.n_pressure();
        let n = nf + np + 1;
        let [uu, up, pu, pp] = blocks;
        let mut b = TripletBuilder::with_capacity(n, n, uu.nnz() + up.nnz() + pu.nnz() + pp.nnz() + 2 * np);
        for &(m, row_off, col_off, rows_free, cols_free) in &[
            (uu, 0, 0, true, true),
            (up, 0, nf, true, false),
            (pu, nf, 0, false, true),
            (pp, nf, nf, false, false),
        ] {
            for r in 0..m.nrows() {
                let ri = if rows_free {
                    match self.free_map[r] {
                        Some(i) => i,
                        None => continue,
                    }
                } else {
                    r
                };
                for (c, v) in m.row(r) {
                    let ci = if cols_free {
                        match self.free_map[c] {
                            Some(j) => j,
                            None => continue,
                        }
                    } else {
                        c
                    };
                    b.push(row_off + ri, col_off + ci, v);
                }
            }
        }
        for (i, &m) in self.mean.iter().enumerate() {
            b.push(nf + i, n - 1, m);
            b.push(n - 1, nf + i, m);
        }
        b.build()
    }

    /// Newton iteration from `(u, p)`; at least one step is taken.
    fn newton(
        &self,
        mu: Mu,
        mut u: Vec<f64>,
        mut p: Vec<f64>,
        stabilized: bool,
        nonlinear: bool,
        load: Option<&Load>,
    ) -> Result<FeSolution> {
        self.config.check_parameter(mu)?;
        let p0 = vec![0.0; self.n_pressure()];
        let r0 = self.residual_with(mu, &self.lifting.coefficients, &p0, stabilized, nonlinear, load)?.norm();
        let scale = if r0 > 0.0 { r0 } else { 1.0 };
        let nf = self.free_dofs.len();
        let np = self.n_pressure();
        let max_iter = if nonlinear { NEWTON_MAX_ITERATIONS } else { 3 };
        let mut history = Vec::new();
        let mut iterations = 0;
        loop {
            let r = self.residual_with(mu, &u, &p, stabilized, nonlinear, load)?;
            let rel = r.norm() / scale;
            history.push(rel);
            if iterations >= 1 && rel <= NEWTON_TOLERANCE {
                break;
            }
            if iterations >= max_iter || !rel.is_finite() {
                return Err(Error::NonConvergence { iterations, residual: rel, history });
            }
            let blocks = self.jacobian_blocks(mu, &u, stabilized, nonlinear)?;
            let k = self.system_matrix(&blocks);
            let mut rhs = Vec::with_capacity(nf + np + 1);
            rhs.extend(self.free_dofs.iter().map(|&i| -r.momentum[i]));
            rhs.extend(r.mass.iter().map(|x| -x));
            rhs.push(-crate::linalg::dot(&self.mean, &p));
            let step = SparseLu::factor(&k)?.solve(&rhs);
            for (f, &i) in self.free_dofs.iter().enumerate() {
                u[i] += step[f];
            }
            for (j, pj) in p.iter_mut().enumerate() {
                *pj += step[nf + j];
            }
            iterations += 1;
        }
        let residual = *history.last().unwrap();
        let homogeneous: Vec<f64> = u.iter().zip(&self.lifting.coefficients).map(|(a, l)| a - l).collect();
        Ok(FeSolution {
            mu,
            velocity: FeFunction::new(self.velocity.clone(), homogeneous)?,
            pressure: FeFunction::new(self.pressure.clone(), p)?,
            lifting: self.lifting.clone(),
            diagnostics: SolverDiagnostics { iterations, residual, history },
        })
    }

    fn start(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lifting.coefficients.clone(), vec![0.0; self.n_pressure()])
    }

    /// Linear solve without the trilinear terms, in the configured formulation.
    pub fn solve_stokes(&self, mu: Mu) -> Result<FeSolution> {
        let (u, p) = self.start();
        self.newton(mu, u, p, self.is_stabilized(), false, None)
    }

    /// Linear solve with an additional body force.
    pub fn solve_stokes_forced(&self, mu: Mu, force: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync)) -> Result<FeSolution> {
        let load = self.body_force_load(mu, force)?;
        let (u, p) = self.start();
        self.newton(mu, u, p, self.is_stabilized(), false, Some(&load))
    }

    /// Newton iteration with the full Jacobian; starts from the linear solve
    /// at the same parameter unless a guess is given.
    pub fn solve_navier_stokes(&self, mu: Mu, initial: Option<&FeSolution>) -> Result<FeSolution> {
        let (u, p) = match initial {
            Some(s) => (s.total_velocity(), s.pressure.coefficients.clone()),
            None => {
                let s = self.solve_stokes(mu)?;
                (s.total_velocity(), s.pressure.coefficients)
            }
        };
        self.newton(mu, u, p, self.is_stabilized(), true, None)
    }

    /// Newton solves along geometrically spaced Reynolds numbers ending at `mu`.
    pub fn solve_navier_stokes_continuation(&self, mu: Mu, steps: usize) -> Result<FeSolution> {
        let start = mu[0].min(10.0);
        let steps = steps.max(1);
        let mut guess: Option<FeSolution> = None;
        let mut total = 0;
        for k in 0..=steps {
            let re = start * (mu[0] / start).powf(k as f64 / steps as f64);
            let s = self.solve_navier_stokes([re, mu[1]], guess.as_ref())?;
            total += s.diagnostics.iterations;
            guess = Some(s);
        }
        let mut s = guess.unwrap();
        s.mu = mu;
        s.diagnostics.iterations = total;
        Ok(s)
    }

    /// Solve in the configured formulation; Navier-Stokes falls back to
    /// continuation when plain Newton fails.
    pub fn solve(&self, mu: Mu) -> Result<FeSolution> {
        let wrap = |e: Error| Error::SnapshotFailed { mu1: mu[0], mu2: mu[1], source: Box::new(e) };
        match self.config.problem {
            Problem::Stokes => self.solve_stokes(mu).map_err(wrap),
            Problem::NavierStokes => match self.solve_navier_stokes(mu, None) {
                Err(Error::NonConvergence { .. }) => self.solve_navier_stokes_continuation(mu, 8).map_err(wrap),
                other => other.map_err(wrap),
            },
        }
    }

    /// `∫ P` for pressure coefficients `p`.
    pub fn pressure_mean(&self, p: &[f64]) -> f64 {
        crate::linalg::dot(&self.mean, p)
    }
}
