//! Residual-based stabilization forms.
//!
//! Each form is weighted element by element with `δ h_K²` on the reference
//! mesh. With the pulled-back operators `∇_o`, `Δ_o` and the Jacobian `|J| = a`:
//!
//! * `s_uv(u,v) = δ Σ h² ∫ (-ν Δ_o u)·(-ρ ν Δ_o v) a`
//! * `s_pv(p,v) = δ Σ h² ∫ ∇_o p·(-ρ ν Δ_o v) a`
//! * `s_uq(u,q) = δ Σ h² ∫ (-ν Δ_o u)·∇_o q a`
//! * `s_pq(p,q) = δ Σ h² ∫ ∇_o p·∇_o q a`
//!
//! The convective parts of the Navier-Stokes residual add the trilinear
//! forms `e(w,u,q) = δ Σ h² ∫ (w·∇_o u)·∇_o q a` and
//! `g(w,u,v) = δ Σ h² ∫ (w·∇_o u)·(-ρ ν Δ_o v) a`.

use super::affine::AffineOperator;
use super::forms::{assemble_bilinear, assemble_trilinear_affine, Diff, Product, Slot, TriProduct, Weight};
use super::geometry::Theta;
use crate::error::{Error, Result};
use crate::fespace::{FeFunction, Family, FunctionSpace};
use crate::linalg::TripletBuilder;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilizationMethod {
    None,
    BrezziPitkaranta,
    /// Stokes residual family: ρ = 0 Franca-Hughes, 1 Galerkin least squares, -1 Douglas-Wang.
    ResidualBased { rho: i32 },
    /// Navier-Stokes residual family: ρ = 0 SUPG, 1 Galerkin least squares, -1 Franca-Frey.
    SupgFamily { rho: i32 },
    EdgeJumpP1P0,
}

impl StabilizationMethod {
    pub fn rho(&self) -> i32 {
        match self {
            StabilizationMethod::ResidualBased { rho } | StabilizationMethod::SupgFamily { rho } => *rho,
            _ => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StabilizationMethod::None => "none",
            StabilizationMethod::BrezziPitkaranta => "brezzi-pitkaranta",
            StabilizationMethod::ResidualBased { .. } => "residual",
            StabilizationMethod::SupgFamily { .. } => "supg",
            StabilizationMethod::EdgeJumpP1P0 => "edge-jump",
        }
    }

    /// Parses the names produced by [`StabilizationMethod::name`].
    pub fn parse(name: &str, rho: i32) -> Result<Self> {
        Ok(match name {
            "none" => StabilizationMethod::None,
            "brezzi-pitkaranta" => StabilizationMethod::BrezziPitkaranta,
            "residual" => StabilizationMethod::ResidualBased { rho },
            "supg" => StabilizationMethod::SupgFamily { rho },
            "edge-jump" => StabilizationMethod::EdgeJumpP1P0,
            other => return Err(Error::InvalidArgument(format!("unknown stabilization method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationConfig {
    pub method: StabilizationMethod,
    pub delta: f64,
    /// Whether the reduced problem keeps the stabilization terms online.
    pub apply_online: bool,
}

impl StabilizationConfig {
    pub fn none() -> Self {
        Self { method: StabilizationMethod::None, delta: 0.0, apply_online: false }
    }

    pub fn new(method: StabilizationMethod, delta: f64) -> Self {
        Self { method, delta, apply_online: true }
    }

    pub fn is_active(&self) -> bool {
        self.method != StabilizationMethod::None
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "stabilization coefficient must satisfy delta >= 0, got {}",
                self.delta
            )));
        }
        let rho = self.method.rho();
        if !(-1..=1).contains(&rho) {
            return Err(Error::InvalidArgument(format!("rho must be one of -1, 0, 1, got {rho}")));
        }
        Ok(())
    }
}

/// The four linear stabilization blocks; absent blocks have no terms.
#[derive(Debug, Clone)]
pub struct StokesStabilization {
    /// Velocity × velocity.
    pub s_uv: AffineOperator,
    /// Velocity rows × pressure columns.
    pub s_pv: AffineOperator,
    /// Pressure rows × velocity columns.
    pub s_uq: AffineOperator,
    /// Pressure × pressure.
    pub s_pq: AffineOperator,
}

fn h2_operator(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    terms: Vec<(Theta, Vec<Product>)>,
) -> Result<AffineOperator> {
    let mut op = AffineOperator::empty(test.dof_count(), trial.dof_count());
    for (theta, products) in terms {
        op.push(theta, assemble_bilinear(test, trial, &products, Weight::DiameterSquared)?)?;
    }
    Ok(op.pruned())
}

fn pressure_laplacian(pres: &FunctionSpace, delta: f64) -> Result<AffineOperator> {
    h2_operator(
        pres,
        pres,
        vec![
            (Theta::new(delta, 0, -1), vec![Product::new((Diff::Dx, 0), (Diff::Dx, 0), 1.0)]),
            (Theta::new(delta, 0, 1), vec![Product::new((Diff::Dy, 0), (Diff::Dy, 0), 1.0)]),
        ],
    )
}

/// `s_uq`: rows are pressure dofs.
fn viscous_residual_pressure(vel: &FunctionSpace, pres: &FunctionSpace, delta: f64) -> Result<AffineOperator> {
    let p = |qd: Diff, ud: Diff, c: usize| vec![Product::new((qd, 0), (ud, c), -1.0)];
    h2_operator(
        pres,
        vel,
        vec![
            (Theta::new(delta, 1, -2), p(Diff::Dx, Diff::Dxx, 0)),
            (Theta::new(delta, 1, 0), p(Diff::Dx, Diff::Dyy, 0)),
            (Theta::new(delta, 1, -1), p(Diff::Dy, Diff::Dxx, 1)),
            (Theta::new(delta, 1, 1), p(Diff::Dy, Diff::Dyy, 1)),
        ],
    )
}

fn viscous_residual_velocity(vel: &FunctionSpace, coeff: f64) -> Result<AffineOperator> {
    let both = |a: Diff, b: Diff| (0..2).map(|c| Product::new((a, c), (b, c), 1.0)).collect::<Vec<_>>();
    let mut mixed = both(Diff::Dyy, Diff::Dxx);
    mixed.extend(both(Diff::Dxx, Diff::Dyy));
    h2_operator(
        vel,
        vel,
        vec![
            (Theta::new(coeff, 2, -3), both(Diff::Dxx, Diff::Dxx)),
            (Theta::new(coeff, 2, -1), mixed),
            (Theta::new(coeff, 2, 1), both(Diff::Dyy, Diff::Dyy)),
        ],
    )
}

/// Edge-jump pressure term `δ Σ_σ h_σ ∫_σ [p][q]` for piecewise constants.
fn edge_jump(pres: &FunctionSpace, delta: f64) -> Result<AffineOperator> {
    if pres.family != Family::P0 {
        return Err(Error::InvalidArgument("edge-jump stabilization needs a P0 pressure space".into()));
    }
    let mesh = &pres.mesh;
    let mut b = TripletBuilder::new(pres.dof_count(), pres.dof_count());
    for e in &mesh.interior_edges {
        let w = e.length * e.length;
        b.push(e.left, e.left, w);
        b.push(e.right, e.right, w);
        b.push(e.left, e.right, -w);
        b.push(e.right, e.left, -w);
    }
    AffineOperator::new(pres.dof_count(), pres.dof_count(), vec![(Theta::new(delta, 0, 0), b.build())])
}

pub fn assemble_stokes_stabilization(
    vel: &FunctionSpace,
    pres: &FunctionSpace,
    config: &StabilizationConfig,
) -> Result<StokesStabilization> {
    config.validate()?;
    let (nu, np) = (vel.dof_count(), pres.dof_count());
    let delta = config.delta;
    let mut out = StokesStabilization {
        s_uv: AffineOperator::empty(nu, nu),
        s_pv: AffineOperator::empty(nu, np),
        s_uq: AffineOperator::empty(np, nu),
        s_pq: AffineOperator::empty(np, np),
    };
    match config.method {
        StabilizationMethod::None => {
            return Err(Error::InvalidArgument("no stabilization method selected".into()));
        }
        StabilizationMethod::BrezziPitkaranta => {
            out.s_pq = pressure_laplacian(pres, delta)?;
        }
        StabilizationMethod::ResidualBased { rho } | StabilizationMethod::SupgFamily { rho } => {
            out.s_pq = pressure_laplacian(pres, delta)?;
            out.s_uq = viscous_residual_pressure(vel, pres, delta)?;
            if rho != 0 {
                out.s_pv = out.s_uq.transpose().scaled(rho as f64);
                out.s_uv = viscous_residual_velocity(vel, rho as f64 * delta)?;
            }
        }
        StabilizationMethod::EdgeJumpP1P0 => {
            out.s_pq = edge_jump(pres, delta)?;
        }
    }
    Ok(out)
}

/// Products of `e(w, u, q)`; the test space is the pressure space.
pub fn supg_mass_products(delta: f64) -> Vec<(Theta, Vec<TriProduct>)> {
    let t = |k: usize, qd: Diff, ud: Diff, c: usize| {
        vec![TriProduct { transport: k, product: Product::new((qd, 0), (ud, c), 1.0) }]
    };
    vec![
        (Theta::new(delta, 0, -1), t(0, Diff::Dx, Diff::Dx, 0)),
        (Theta::new(delta, 0, 0), t(1, Diff::Dx, Diff::Dy, 0)),
        (Theta::new(delta, 0, 0), t(0, Diff::Dy, Diff::Dx, 1)),
        (Theta::new(delta, 0, 1), t(1, Diff::Dy, Diff::Dy, 1)),
    ]
}

/// Products of `g(w, u, v)`; empty for ρ = 0.
pub fn supg_momentum_products(delta: f64, rho: i32) -> Vec<(Theta, Vec<TriProduct>)> {
    if rho == 0 {
        return Vec::new();
    }
    let c = -(rho as f64) * delta;
    let t = |k: usize, vd: Diff, ud: Diff| {
        (0..2)
            .map(|comp| TriProduct { transport: k, product: Product::new((vd, comp), (ud, comp), 1.0) })
            .collect::<Vec<_>>()
    };
    vec![
        (Theta::new(c, 1, -2), t(0, Diff::Dxx, Diff::Dx)),
        (Theta::new(c, 1, 0), t(0, Diff::Dyy, Diff::Dx)),
        (Theta::new(c, 1, -1), t(1, Diff::Dxx, Diff::Dy)),
        (Theta::new(c, 1, 1), t(1, Diff::Dyy, Diff::Dy)),
    ]
}

#[derive(Debug, Clone)]
pub struct NsStabilization {
    pub linear: StokesStabilization,
    /// `E(w)_kj = e(w, φ_j, ψ_k)`.
    pub s_uq_convective: AffineOperator,
    /// `G(w)_ij = g(w, φ_j, φ_i)`; empty for ρ = 0.
    pub s_uv_convective: AffineOperator,
}

pub fn assemble_ns_stabilization(
    vel: &FunctionSpace,
    pres: &FunctionSpace,
    config: &StabilizationConfig,
    w: &FeFunction,
) -> Result<NsStabilization> {
    let StabilizationMethod::SupgFamily { rho } = config.method else {
        return Err(Error::InvalidArgument("Navier-Stokes stabilization needs the SUPG family".into()));
    };
    let linear = assemble_stokes_stabilization(vel, pres, config)?;
    let e = assemble_trilinear_affine(
        pres,
        vel,
        &supg_mass_products(config.delta),
        Weight::DiameterSquared,
        w,
        Slot::Transported,
    )?;
    let g = assemble_trilinear_affine(
        vel,
        vel,
        &supg_momentum_products(config.delta, rho),
        Weight::DiameterSquared,
        w,
        Slot::Transported,
    )?;
    Ok(NsStabilization { linear, s_uq_convective: e, s_uv_convective: g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::geometry::{GeometryMap, ViscosityRule};
    use crate::fespace::{interpolate, make_space};
    use crate::linalg::CsrMatrix;
    use crate::mesh::{build_rect_mesh, Mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn unit_triangle() -> Arc<Mesh> {
        let mut m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        m.vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        m.triangles = vec![[0, 1, 2]];
        m.triangle_edges = vec![[0, 1, 2]];
        m.edges = vec![[0, 1], [1, 2], [0, 2]];
        m.interior_edges.clear();
        m.boundary_edges.clear();
        m.element_diameters = vec![2f64.sqrt()];
        Arc::new(m)
    }

    fn geo() -> GeometryMap {
        GeometryMap::new(1.0, ViscosityRule::Viscosity)
    }

    fn pair(nx: usize, ny: usize, fv: Family, fp: Family) -> (Arc<FunctionSpace>, Arc<FunctionSpace>) {
        let m = Arc::new(build_rect_mesh(2.0, 1.0, nx, ny).unwrap());
        (Arc::new(make_space(m.clone(), fv, 2).unwrap()), Arc::new(make_space(m, fp, 1).unwrap()))
    }

    #[test]
    fn p1_franca_hughes_is_brezzi_pitkaranta() {
        let (v, q) = pair(4, 2, Family::P1, Family::P1);
        let fh = assemble_stokes_stabilization(&v, &q, &StabilizationConfig::new(StabilizationMethod::ResidualBased { rho: 0 }, 0.05)).unwrap();
        assert!(fh.s_uv.is_empty() && fh.s_pv.is_empty() && fh.s_uq.is_empty());
        let bp = assemble_stokes_stabilization(&v, &q, &StabilizationConfig::new(StabilizationMethod::BrezziPitkaranta, 0.05)).unwrap();
        let mu = [0.5, 2.0];
        let d = CsrMatrix::linear_combination(&[(1.0, &fh.s_pq.evaluate(&geo(), mu)), (-1.0, &bp.s_pq.evaluate(&geo(), mu))]).unwrap();
        assert_eq!(d.max_abs(), 0.0);
        for t in &fh.s_pq.terms {
            assert!(t.value.asymmetry() <= 1e-14);
        }
    }

    #[test]
    fn single_triangle_pressure_stiffness() {
        let m = unit_triangle();
        let v = make_space(m.clone(), Family::P1, 2).unwrap();
        let q = make_space(m, Family::P1, 1).unwrap();
        let s = assemble_stokes_stabilization(&v, &q, &StabilizationConfig::new(StabilizationMethod::BrezziPitkaranta, 0.05)).unwrap();
        let got = s.s_pq.evaluate(&geo(), [1.0, 1.0]).to_dense();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - 0.1 * expect[i][j]).abs() < 1e-15, "{i}{j}");
            }
        }
    }

    #[test]
    fn edge_jump_on_one_cell() {
        let m = Arc::new(build_rect_mesh(1.0, 1.0, 1, 1).unwrap());
        let v = make_space(m.clone(), Family::P1, 2).unwrap();
        let q = make_space(m, Family::P0, 1).unwrap();
        let delta = 0.3;
        let s = assemble_stokes_stabilization(&v, &q, &StabilizationConfig::new(StabilizationMethod::EdgeJumpP1P0, delta)).unwrap();
        assert!(s.s_uq.is_empty() && s.s_uv.is_empty() && s.s_pv.is_empty());
        let got = s.s_pq.evaluate(&geo(), [1.0, 2.5]).to_dense();
        let h2 = 2.0;
        let expect = [[delta * h2, -delta * h2], [-delta * h2, delta * h2]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((got[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
        let p1 = make_space(Arc::new(build_rect_mesh(1.0, 1.0, 1, 1).unwrap()), Family::P1, 1).unwrap();
        let v1 = make_space(p1.mesh.clone(), Family::P1, 2).unwrap();
        assert!(assemble_stokes_stabilization(&v1, &p1, &StabilizationConfig::new(StabilizationMethod::EdgeJumpP1P0, delta)).is_err());
    }

    #[test]
    fn negative_delta_is_rejected() {
        let (v, q) = pair(2, 1, Family::P1, Family::P1);
        let cfg = StabilizationConfig::new(StabilizationMethod::BrezziPitkaranta, -1.0);
        assert!(matches!(assemble_stokes_stabilization(&v, &q, &cfg), Err(Error::InvalidArgument(_))));
    }

    /// Direct element-by-element evaluation of s_uq(u, q) with the mapped
    /// operators, used as an oracle for the affine split.
    fn direct_s_uq(v: &FunctionSpace, q: &FunctionSpace, u: &[f64], p: &[f64], delta: f64, nu: f64, a: f64) -> f64 {
        use crate::quadrature::TriangleRule;
        let mesh = &v.mesh;
        let rule = TriangleRule::degree5();
        let mut total = 0.0;
        for k in 0..mesh.n_triangles() {
            let g = mesh.element_geometry(k).unwrap();
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let bv = v.local_basis(&g, *l);
                let bq = q.local_basis(&g, *l);
                let mut lap = [0.0; 2];
                for (i, &n) in v.cell_nodes[k].iter().enumerate() {
                    for c in 0..2 {
                        let x = u[v.dof(n, c)];
                        lap[c] += x * (bv.hessians[i][0] / (a * a) + bv.hessians[i][2]);
                    }
                }
                let mut gq = [0.0; 2];
                for (i, &n) in q.cell_nodes[k].iter().enumerate() {
                    gq[0] += p[n] * bq.grads[i][0] / a;
                    gq[1] += p[n] * bq.grads[i][1];
                }
                total += delta * g.diameter.powi(2) * w * g.area * a * (-nu) * (lap[0] * gq[0] + lap[1] * gq[1]);
            }
        }
        total
    }

    #[test]
    fn viscous_residual_affine_split_matches_direct_evaluation() {
        let (v, q) = pair(4, 2, Family::P2, Family::P2);
        let cfg = StabilizationConfig::new(StabilizationMethod::ResidualBased { rho: 1 }, 0.07);
        let s = assemble_stokes_stabilization(&v, &q, &cfg).unwrap();
        assert_eq!(s.s_uq.len(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let u: Vec<f64> = (0..v.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..q.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mu = [rng.gen_range(0.25..0.75), rng.gen_range(1.0..3.0)];
            let g = geo();
            let direct = direct_s_uq(&v, &q, &u, &p, 0.07, g.nu(mu), g.scale(mu[1]));
            let affine = s.s_uq.evaluate(&g, mu).bilinear(&p, &u);
            assert!((direct - affine).abs() <= 1e-12 * direct.abs().max(1.0));
            // ρ = 1 makes s_pv the transpose of s_uq
            let pv = s.s_pv.evaluate(&g, mu).bilinear(&u, &p);
            assert!((pv - affine).abs() <= 1e-12 * affine.abs().max(1.0));
        }
        for t in &s.s_uv.terms {
            assert!(t.value.asymmetry() <= 1e-14);
        }
    }

    #[test]
    fn supg_examples() {
        let (v, q) = pair(4, 2, Family::P1, Family::P1);
        let cfg = StabilizationConfig::new(StabilizationMethod::SupgFamily { rho: 0 }, 0.2);
        let zero = FeFunction::zeros(v.clone());
        let s0 = assemble_ns_stabilization(&v, &q, &cfg, &zero).unwrap();
        assert!(s0.linear.s_uq.is_empty());
        assert!(s0.s_uq_convective.terms.iter().all(|t| t.value.nnz() == 0));
        assert!(s0.s_uv_convective.is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = FeFunction::new(v.clone(), (0..v.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let w2 = FeFunction::new(v.clone(), w.coefficients.iter().map(|x| 2.0 * x).collect()).unwrap();
        let e1 = assemble_ns_stabilization(&v, &q, &cfg, &w).unwrap().s_uq_convective.evaluate(&geo(), [120.0, 2.0]);
        let e2 = assemble_ns_stabilization(&v, &q, &cfg, &w2).unwrap().s_uq_convective.evaluate(&geo(), [120.0, 2.0]);
        let d = CsrMatrix::linear_combination(&[(2.0, &e1), (-1.0, &e2)]).unwrap();
        assert!(d.max_abs() < 1e-14);

        let stokes = StabilizationConfig::new(StabilizationMethod::ResidualBased { rho: 0 }, 0.2);
        assert!(assemble_ns_stabilization(&v, &q, &stokes, &w).is_err());
    }

    #[test]
    fn supg_single_triangle_entry() {
        let m = unit_triangle();
        let v = Arc::new(make_space(m.clone(), Family::P1, 2).unwrap());
        let q = Arc::new(make_space(m, Family::P1, 1).unwrap());
        let delta = 0.3;
        let cfg = StabilizationConfig::new(StabilizationMethod::SupgFamily { rho: 0 }, delta);
        let w = interpolate(&v, |_| vec![1.0, 0.0]);
        let e = assemble_ns_stabilization(&v, &q, &cfg, &w).unwrap().s_uq_convective.evaluate(&geo(), [100.0, 1.0]);
        let u = interpolate(&v, |p| vec![p[0], 0.0]);
        let qq = interpolate(&q, |p| vec![p[0]]);
        let val = e.bilinear(&qq.coefficients, &u.coefficients);
        assert!((val - delta * 2.0 * 0.5).abs() < 1e-15);
    }
}
