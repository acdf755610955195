//! Element kernels and the Galerkin forms of the flow problem.
//!
//! Every integral is taken on the reference mesh. A form is described as a
//! sum of [`Product`]s of differentiated test and trial shape functions,
//! optionally weighted by `h_K²` and, for trilinear forms, by one
//! component of a transporting field.

use rayon::prelude::*;

use super::affine::{AffineOperator, AffineVector};
use super::geometry::Theta;
use crate::error::{Error, Result};
use crate::fespace::{FeFunction, FunctionSpace, LocalBasis};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::quadrature::TriangleRule;

/// Triangles per parallel work item; fixed so results do not depend on the pool size.
const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diff {
    Value,
    Dx,
    Dy,
    Dxx,
    Dyy,
}

impl Diff {
    fn apply(self, b: &LocalBasis, a: usize) -> f64 {
        match self {
            Diff::Value => b.values[a],
            Diff::Dx => b.grads[a][0],
            Diff::Dy => b.grads[a][1],
            Diff::Dxx => b.hessians[a][0],
            Diff::Dyy => b.hessians[a][2],
        }
    }
}

/// `scale · D_test(v_c) · D_trial(u_c')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Product {
    pub test: (Diff, usize),
    pub trial: (Diff, usize),
    pub scale: f64,
}

impl Product {
    pub fn new(test: (Diff, usize), trial: (Diff, usize), scale: f64) -> Self {
        Self { test, trial, scale }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    One,
    /// Element weight `h_K²` with `h_K` the longest edge.
    DiameterSquared,
}

/// Which argument of a trilinear form `t(w, u, v)` the matrix acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// `M_ij = t(w, φ_j, ψ_i)`: `w` is frozen and transports the trial function.
    Transported,
    /// `M_ij = t(φ_j, w, ψ_i)`: the trial function is the transporting field.
    Transporting,
}

/// A product `w_k · D_trial(u_c') · D_test(v_c)` of a trilinear form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriProduct {
    pub transport: usize,
    pub product: Product,
}

fn check_component(space: &FunctionSpace, c: usize) -> Result<()> {
    if c >= space.components {
        return Err(Error::InvalidArgument(format!(
            "component {c} requested from a {}-component space",
            space.components
        )));
    }
    Ok(())
}

fn element_weight(w: Weight, h: f64) -> f64 {
    match w {
        Weight::One => 1.0,
        Weight::DiameterSquared => h * h,
    }
}

fn run_chunks<F>(n_cells: usize, nrows: usize, ncols: usize, kernel: F) -> CsrMatrix
where
    F: Fn(usize, &mut Vec<(usize, usize, f64)>) + Sync,
{
    let chunks: Vec<Vec<(usize, usize, f64)>> = (0..n_cells.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::new();
            for k in c * CHUNK..((c + 1) * CHUNK).min(n_cells) {
                kernel(k, &mut out);
            }
            out
        })
        .collect();
    let mut b = TripletBuilder::with_capacity(nrows, ncols, chunks.iter().map(Vec::len).sum());
    for c in chunks {
        b.append(c);
    }
    b.build()
}

/// Matrix of `Σ_products ∫ weight · D_test(ψ_i) D_trial(φ_j)` with rows
/// indexed by `test` dofs and columns by `trial` dofs.
pub fn assemble_bilinear(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    products: &[Product],
    weight: Weight,
) -> Result<CsrMatrix> {
    if !test.same_mesh(trial) {
        return Err(Error::InvalidArgument("test and trial spaces live on different meshes".into()));
    }
    for p in products {
        check_component(test, p.test.1)?;
        check_component(trial, p.trial.1)?;
    }
    let mesh = &test.mesh;
    let rule = TriangleRule::degree5();
    let (ct, cu) = (test.components, trial.components);
    Ok(run_chunks(mesh.n_triangles(), test.dof_count(), trial.dof_count(), |k, out| {
        let geom = mesh.geometry_unchecked(k);
        let wk = element_weight(weight, geom.diameter) * geom.area;
        let rows = test.cell_dofs(k);
        let cols = trial.cell_dofs(k);
        let mut local = vec![0.0; rows.len() * cols.len()];
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let bt = test.local_basis(&geom, *q);
            let bu = trial.local_basis(&geom, *q);
            let f = wk * w;
            for p in products {
                for a in 0..bt.n {
                    let ta = f * p.scale * p.test.0.apply(&bt, a);
                    if ta == 0.0 {
                        continue;
                    }
                    let r = a * ct + p.test.1;
                    for b in 0..bu.n {
                        local[r * cols.len() + b * cu + p.trial.1] += ta * p.trial.0.apply(&bu, b);
                    }
                }
            }
        }
        for (i, &gi) in rows.iter().enumerate() {
            for (j, &gj) in cols.iter().enumerate() {
                let v = local[i * cols.len() + j];
                if v != 0.0 {
                    out.push((gi, gj, v));
                }
            }
        }
    }))
}

/// Matrix of a trilinear form with one argument frozen to `w`; see [`Slot`].
/// The transporting field `w` must live in the velocity space `vel`.
pub fn assemble_trilinear(
    test: &FunctionSpace,
    vel: &FunctionSpace,
    products: &[TriProduct],
    weight: Weight,
    w: &FeFunction,
    slot: Slot,
) -> Result<CsrMatrix> {
    if !w.space.same_mesh(vel) || w.coefficients.len() != vel.dof_count() {
        return Err(Error::InvalidArgument("transporting field is not in the velocity space".into()));
    }
    if vel.components != 2 {
        return Err(Error::InvalidArgument("trilinear forms need a vector velocity space".into()));
    }
    for p in products {
        check_component(test, p.product.test.1)?;
        check_component(vel, p.product.trial.1)?;
        check_component(vel, p.transport)?;
    }
    let mesh = &test.mesh;
    let rule = TriangleRule::degree5();
    let ct = test.components;
    let coeff = &w.coefficients;
    Ok(run_chunks(mesh.n_triangles(), test.dof_count(), vel.dof_count(), |k, out| {
        let geom = mesh.geometry_unchecked(k);
        let wk = element_weight(weight, geom.diameter) * geom.area;
        let rows = test.cell_dofs(k);
        let cols = vel.cell_dofs(k);
        let nodes = &vel.cell_nodes[k];
        let mut local = vec![0.0; rows.len() * cols.len()];
        for (q, qw) in rule.points.iter().zip(&rule.weights) {
            let bt = test.local_basis(&geom, *q);
            let bu = vel.local_basis(&geom, *q);
            // w and its derivatives at the quadrature point, per component
            let field = |d: Diff, c: usize| -> f64 {
                (0..bu.n).map(|b| coeff[vel.dof(nodes[b], c)] * d.apply(&bu, b)).sum()
            };
            let f = wk * qw;
            for p in products {
                let pr = &p.product;
                match slot {
                    Slot::Transported => {
                        let wv = field(Diff::Value, p.transport);
                        if wv == 0.0 {
                            continue;
                        }
                        for a in 0..bt.n {
                            let ta = f * pr.scale * wv * pr.test.0.apply(&bt, a);
                            let r = a * ct + pr.test.1;
                            for b in 0..bu.n {
                                local[r * cols.len() + b * 2 + pr.trial.1] += ta * pr.trial.0.apply(&bu, b);
                            }
                        }
                    }
                    Slot::Transporting => {
                        let du = field(pr.trial.0, pr.trial.1);
                        if du == 0.0 {
                            continue;
                        }
                        for a in 0..bt.n {
                            let ta = f * pr.scale * du * pr.test.0.apply(&bt, a);
                            let r = a * ct + pr.test.1;
                            for b in 0..bu.n {
                                local[r * cols.len() + b * 2 + p.transport] += ta * bu.values[b];
                            }
                        }
                    }
                }
            }
        }
        for (i, &gi) in rows.iter().enumerate() {
            for (j, &gj) in cols.iter().enumerate() {
                let v = local[i * cols.len() + j];
                if v != 0.0 {
                    out.push((gi, gj, v));
                }
            }
        }
    }))
}

/// Load vector `∫ weight · Σ_terms scale · f_fc(x) · D(ψ_i)_c` for a source `f`.
pub fn assemble_load(
    test: &FunctionSpace,
    f: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
    terms: &[(Diff, usize, usize, f64)],
    weight: Weight,
) -> Result<Vec<f64>> {
    for t in terms {
        check_component(test, t.1)?;
    }
    let mesh = &test.mesh;
    let rule = TriangleRule::collapsed_gauss(6);
    let ct = test.components;
    let chunks: Vec<Vec<(usize, f64)>> = (0..mesh.n_triangles().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::new();
            for k in c * CHUNK..((c + 1) * CHUNK).min(mesh.n_triangles()) {
                let geom = mesh.geometry_unchecked(k);
                let wk = element_weight(weight, geom.diameter) * geom.area;
                let rows = test.cell_dofs(k);
                let mut local = vec![0.0; rows.len()];
                for (q, qw) in rule.points.iter().zip(&rule.weights) {
                    let b = test.local_basis(&geom, *q);
                    let fx = f(mesh.point(k, *q));
                    for &(d, c, fc, s) in terms {
                        for a in 0..b.n {
                            local[a * ct + c] += wk * qw * s * fx[fc] * d.apply(&b, a);
                        }
                    }
                }
                out.extend(rows.into_iter().zip(local));
            }
            out
        })
        .collect();
    let mut v = vec![0.0; test.dof_count()];
    for c in chunks {
        for (i, x) in c {
            v[i] += x;
        }
    }
    Ok(v)
}

fn both_components(test: Diff, trial: Diff) -> Vec<Product> {
    (0..2).map(|c| Product::new((test, c), (trial, c), 1.0)).collect()
}

fn require_vector(space: &FunctionSpace) -> Result<()> {
    if space.components != 2 {
        return Err(Error::InvalidArgument("expected a vector velocity space".into()));
    }
    Ok(())
}

/// Viscous form: `ν/a ∫ ∂x u·∂x v + ν a ∫ ∂y u·∂y v`.
pub fn assemble_viscous(vel: &FunctionSpace) -> Result<AffineOperator> {
    require_vector(vel)?;
    let n = vel.dof_count();
    let kx = assemble_bilinear(vel, vel, &both_components(Diff::Dx, Diff::Dx), Weight::One)?;
    let ky = assemble_bilinear(vel, vel, &both_components(Diff::Dy, Diff::Dy), Weight::One)?;
    AffineOperator::new(n, n, vec![(Theta::new(1.0, 1, -1), kx), (Theta::new(1.0, 1, 1), ky)])
}

/// Divergence form `b(v, q) = -∫ q ∂x v₁ - a ∫ q ∂y v₂`, rows indexed by pressure dofs.
pub fn assemble_divergence(vel: &FunctionSpace, pres: &FunctionSpace) -> Result<AffineOperator> {
    require_vector(vel)?;
    if !vel.same_mesh(pres) {
        return Err(Error::InvalidArgument("velocity and pressure spaces use different meshes".into()));
    }
    let bx = assemble_bilinear(pres, vel, &[Product::new((Diff::Value, 0), (Diff::Dx, 0), -1.0)], Weight::One)?;
    let by = assemble_bilinear(pres, vel, &[Product::new((Diff::Value, 0), (Diff::Dy, 1), -1.0)], Weight::One)?;
    AffineOperator::new(
        pres.dof_count(),
        vel.dof_count(),
        vec![(Theta::ONE, bx), (Theta::new(1.0, 0, 1), by)],
    )
}

/// Convective products `w₁ ∂x u·v` (Θ = 1) and `w₂ ∂y u·v` (Θ = a).
pub fn convection_products() -> Vec<(Theta, Vec<TriProduct>)> {
    let term = |k: usize, d: Diff| {
        (0..2)
            .map(|c| TriProduct { transport: k, product: Product::new((Diff::Value, c), (d, c), 1.0) })
            .collect::<Vec<_>>()
    };
    vec![(Theta::ONE, term(0, Diff::Dx)), (Theta::new(1.0, 0, 1), term(1, Diff::Dy))]
}

/// Affine trilinear form frozen at `w`.
pub fn assemble_trilinear_affine(
    test: &FunctionSpace,
    vel: &FunctionSpace,
    terms: &[(Theta, Vec<TriProduct>)],
    weight: Weight,
    w: &FeFunction,
    slot: Slot,
) -> Result<AffineOperator> {
    let mut op = AffineOperator::empty(test.dof_count(), vel.dof_count());
    for (theta, products) in terms {
        op.push(*theta, assemble_trilinear(test, vel, products, weight, w, slot)?)?;
    }
    Ok(op)
}

/// `C(w; μ)` with `C_ij = c(w, φ_j, φ_i; μ)`.
pub fn assemble_convection(vel: &FunctionSpace, w: &FeFunction) -> Result<AffineOperator> {
    require_vector(vel)?;
    assemble_trilinear_affine(vel, vel, &convection_products(), Weight::One, w, Slot::Transported)
}

/// Pressure mass matrix (L² Gram).
pub fn assemble_mass(space: &FunctionSpace) -> Result<CsrMatrix> {
    let products: Vec<Product> =
        (0..space.components).map(|c| Product::new((Diff::Value, c), (Diff::Value, c), 1.0)).collect();
    assemble_bilinear(space, space, &products, Weight::One)
}

/// H¹ seminorm Gram matrix on the reference domain.
pub fn assemble_h1_seminorm(space: &FunctionSpace) -> Result<CsrMatrix> {
    let mut products = Vec::new();
    for c in 0..space.components {
        products.push(Product::new((Diff::Dx, c), (Diff::Dx, c), 1.0));
        products.push(Product::new((Diff::Dy, c), (Diff::Dy, c), 1.0));
    }
    assemble_bilinear(space, space, &products, Weight::One)
}

/// `∫ ψ_i`, the zero-mean constraint row.
pub fn assemble_mean(space: &FunctionSpace) -> Result<Vec<f64>> {
    assemble_load(space, &|_| [1.0, 0.0], &[(Diff::Value, 0, 0, 1.0)], Weight::One)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Stokes,
    NavierStokes,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Stokes => "stokes",
            Problem::NavierStokes => "navier-stokes",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stokes" => Ok(Problem::Stokes),
            "navier-stokes" | "navierstokes" | "ns" => Ok(Problem::NavierStokes),
            other => Err(Error::InvalidArgument(format!("unknown problem `{other}`"))),
        }
    }
}

/// Lifting right-hand sides `f̄ = -A l (- C(l) l)` and `ḡ = -B l`.
pub fn assemble_rhs(
    vel: &FunctionSpace,
    pres: &FunctionSpace,
    lifting: &FeFunction,
    problem: Problem,
) -> Result<(AffineVector, AffineVector)> {
    if lifting.coefficients.len() != vel.dof_count() {
        return Err(Error::DimensionMismatch("lifting does not belong to the velocity space".into()));
    }
    let a = assemble_viscous(vel)?;
    let b = assemble_divergence(vel, pres)?;
    let mut f = AffineVector::from_operator_action(&a, &lifting.coefficients, -1.0);
    if problem == Problem::NavierStokes {
        let c = assemble_convection(vel, lifting)?;
        let cv = AffineVector::from_operator_action(&c, &lifting.coefficients, -1.0);
        f.terms.extend(cv.terms);
    }
    let g = AffineVector::from_operator_action(&b, &lifting.coefficients, -1.0);
    Ok((f, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::geometry::{GeometryMap, ViscosityRule};
    use crate::fespace::{interpolate, interpolate_lifting, make_space, Family};
    use crate::linalg::sparse::dot;
    use crate::mesh::{build_rect_mesh, Mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn spaces(nx: usize, ny: usize, fv: Family, fp: Family) -> (Arc<FunctionSpace>, Arc<FunctionSpace>) {
        let m = Arc::new(build_rect_mesh(2.0, 1.0, nx, ny).unwrap());
        (
            Arc::new(make_space(m.clone(), fv, 2).unwrap()),
            Arc::new(make_space(m, fp, 1).unwrap()),
        )
    }

    fn unit_triangle_mesh() -> Arc<Mesh> {
        // the first triangle of this mesh is (0,0),(1,0),(1,1); use a custom one instead
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

    #[test]
    fn viscous_matrix_examples() {
        let (v, _) = spaces(4, 2, Family::P2, Family::P1);
        let a = assemble_viscous(&v).unwrap();
        assert_eq!(a.len(), 2);
        let g = GeometryMap::new(1.0, ViscosityRule::Viscosity);
        // at the reference length the operator is ν times the vector Laplacian
        let lap = assemble_h1_seminorm(&v).unwrap();
        let m = a.evaluate(&g, [0.3, 1.0]);
        let diff = CsrMatrix::linear_combination(&[(1.0, &m), (-0.3, &lap)]).unwrap();
        assert!(diff.max_abs() < 1e-14);
        let ones = vec![1.0; v.dof_count()];
        assert!(m.matvec(&ones).iter().all(|x| x.abs() < 1e-12));
        for t in &a.terms {
            assert!(t.value.asymmetry() <= 1e-14);
        }
    }

    #[test]
    fn divergence_of_linear_field_on_one_triangle() {
        let m = unit_triangle_mesh();
        let v = Arc::new(make_space(m.clone(), Family::P1, 2).unwrap());
        let q = Arc::new(make_space(m, Family::P1, 1).unwrap());
        let b = assemble_divergence(&v, &q).unwrap();
        let g = GeometryMap::new(1.0, ViscosityRule::Viscosity);
        let bm = b.evaluate(&g, [1.0, 1.0]);
        let vx = interpolate(&v, |p| vec![p[0], 0.0]);
        let val = dot(&[1.0; 3], &bm.matvec(&vx.coefficients));
        assert!((val + 0.5).abs() < 1e-15);
    }

    #[test]
    fn divergence_kills_constant_pressure_on_homogeneous_fields() {
        let (v, q) = spaces(6, 4, Family::P2, Family::P1);
        let b = assemble_divergence(&v, &q).unwrap();
        let g = GeometryMap::new(1.0, ViscosityRule::Viscosity);
        let mask = v.dirichlet_mask();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mu2 in [1.0, 2.0, 3.0] {
            let bm = b.evaluate(&g, [0.5, mu2]);
            let vv: Vec<f64> =
                mask.iter().map(|&m| if m { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
            let s: f64 = bm.transpose_matvec(&vec![1.0; q.dof_count()]).iter().zip(&vv).map(|(a, b)| a * b).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn convection_examples() {
        let m = unit_triangle_mesh();
        let v = Arc::new(make_space(m, Family::P1, 2).unwrap());
        let zero = FeFunction::zeros(v.clone());
        let c0 = assemble_convection(&v, &zero).unwrap();
        assert!(c0.terms.iter().all(|t| t.value.nnz() == 0));
        let w = interpolate(&v, |_| vec![1.0, 0.0]);
        let c = assemble_convection(&v, &w).unwrap();
        let g = GeometryMap::new(1.0, ViscosityRule::Viscosity);
        let cm = c.evaluate(&g, [1.0, 1.0]);
        let x = interpolate(&v, |p| vec![p[0], 0.0]);
        // ∫_K x over the unit right triangle
        assert!((cm.bilinear(&x.coefficients, &x.coefficients) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn convection_is_skew_for_solenoidal_transport() {
        let (v, _) = spaces(8, 4, Family::P2, Family::P1);
        // quadratic and exactly solenoidal, so reproduced by P2
        let w = interpolate(&v, |p| vec![p[0] * p[0] + 0.3, -2.0 * p[0] * p[1] + 0.1]);
        let c = assemble_convection(&v, &w).unwrap();
        let g = GeometryMap::new(1.0, ViscosityRule::Viscosity);
        let cm = c.evaluate(&g, [1.0, 1.0]);
        let mask = v.dirichlet_mask();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vv: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        let norm2 = dot(&vv, &vv);
        let skew = cm.bilinear(&vv, &vv).abs();
        assert!(skew < 1e-10 * norm2, "skew {skew}");
        let wc = interpolate(&v, |_| vec![0.7, -0.2]);
        let cc = assemble_convection(&v, &wc).unwrap().evaluate(&g, [1.0, 1.0]);
        assert!(cc.bilinear(&vv, &vv).abs() < 1e-10 * norm2);
    }

    #[test]
    fn convection_is_linear_in_transport() {
        let (v, _) = spaces(4, 2, Family::P2, Family::P1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w1 = FeFunction::new(v.clone(), (0..v.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let w2 = FeFunction::new(v.clone(), w1.coefficients.iter().map(|x| 2.0 * x).collect()).unwrap();
        let g = GeometryMap::new(1.0, ViscosityRule::Viscosity);
        let c1 = assemble_convection(&v, &w1).unwrap().evaluate(&g, [1.0, 2.0]);
        let c2 = assemble_convection(&v, &w2).unwrap().evaluate(&g, [1.0, 2.0]);
        let d = CsrMatrix::linear_combination(&[(2.0, &c1), (-1.0, &c2)]).unwrap();
        assert!(d.max_abs() < 1e-13);
    }

    #[test]
    fn transporting_slot_matches_transported_slot() {
        let (v, _) = spaces(4, 2, Family::P2, Family::P1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rand_fn = || FeFunction::new(v.clone(), (0..v.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (w, u, z) = (rand_fn(), rand_fn(), rand_fn());
        for (_, prods) in convection_products() {
            let m1 = assemble_trilinear(&v, &v, &prods, Weight::One, &w, Slot::Transported).unwrap();
            let m2 = assemble_trilinear(&v, &v, &prods, Weight::One, &u, Slot::Transporting).unwrap();
            // t(w, u, z) both ways
            let a = m1.bilinear(&z.coefficients, &u.coefficients);
            let b = m2.bilinear(&z.coefficients, &w.coefficients);
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn rhs_examples() {
        let (v, q) = spaces(4, 2, Family::P2, Family::P2);
        let g = GeometryMap::new(1.0, ViscosityRule::Viscosity);
        let zero = FeFunction::zeros(v.clone());
        let (f, gg) = assemble_rhs(&v, &q, &zero, Problem::Stokes).unwrap();
        assert!(f.evaluate(&g, [0.4, 2.0]).iter().all(|&x| x == 0.0));
        assert!(gg.evaluate(&g, [0.4, 2.0]).iter().all(|&x| x == 0.0));
        let l = interpolate_lifting(&v, 1.0).unwrap();
        let mu = [0.4, 2.0];
        let (f, gs) = assemble_rhs(&v, &q, &l, Problem::Stokes).unwrap();
        let mut r = f.evaluate(&g, mu);
        assemble_viscous(&v).unwrap().apply_acc(&g, mu, 1.0, &l.coefficients, &mut r);
        assert!(r.iter().all(|x| x.abs() < 1e-14));
        let (_, gn) = assemble_rhs(&v, &q, &l, Problem::NavierStokes).unwrap();
        assert_eq!(gs.evaluate(&g, mu), gn.evaluate(&g, mu));
    }

    #[test]
    fn quadrature_matches_high_order_oracle() {
        // random triangles, P2 products of every kind, degree-5 rule vs 64-point collapsed Gauss
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let oracle = TriangleRule::collapsed_gauss(8);
        let fast = TriangleRule::degree5();
        for _ in 0..5 {
            let pts: [[f64; 2]; 3] = [
                [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                [rng.gen_range(1.0..2.0), rng.gen_range(0.0..1.0)],
                [rng.gen_range(0.0..2.0), rng.gen_range(1.0..2.0)],
            ];
            let geom = crate::mesh::triangle_geometry(pts[0], pts[1], pts[2]);
            let coef: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let integrand = |l: [f64; 3]| {
                let b = LocalBasis::new(Family::P2, &geom, l);
                let val = |c: usize, d: Diff| (0..6).map(|a| coef[6 * c + a] * d.apply(&b, a)).sum::<f64>();
                // degree-5 convection integrand w·∇u·v plus degree-4 mass
                val(0, Diff::Value) * val(1, Diff::Dx) * val(2, Diff::Value) + val(1, Diff::Value) * val(2, Diff::Value)
            };
            let i = |r: &TriangleRule| -> f64 {
                r.points.iter().zip(&r.weights).map(|(p, w)| w * integrand(*p)).sum::<f64>() * geom.area
            };
            let (a, b) = (i(&fast), i(&oracle));
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }
}
