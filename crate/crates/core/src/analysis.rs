//! Error metrics and experiment drivers: error-versus-N sweeps, manufactured
//! solution convergence and inf-sup profiles.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::assembly::{Mu, Problem, StabilizationConfig};
use crate::error::{Error, Result};
use crate::fespace::{interpolate, FeFunction};
use crate::hifi::{FePair, FeSolution, FullOrderModel, ParameterBox, ProblemConfig};
use crate::linalg::CsrMatrix;
use crate::quadrature::TriangleRule;
use crate::rb::{Offline, RbOption, ReducedModel};

/// `‖a - b‖ / ‖b‖` in the norm induced by `gram`; the absolute error when `b`
/// vanishes.
pub fn relative_error(gram: &CsrMatrix, approx: &[f64], truth: &[f64]) -> f64 {
    let d: Vec<f64> = approx.iter().zip(truth).map(|(a, b)| a - b).collect();
    let num = gram.bilinear(&d, &d).max(0.0).sqrt();
    if num == 0.0 {
        return 0.0;
    }
    let den = gram.bilinear(truth, truth).max(0.0).sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Velocity (H¹ seminorm) and pressure (L²) relative errors of `(u, p)`
/// against an FE solution.
pub fn solution_errors(fom: &FullOrderModel, u: &[f64], p: &[f64], truth: &FeSolution) -> [f64; 2] {
    [
        relative_error(&fom.xu, u, &truth.total_velocity()),
        relative_error(&fom.xp, p, &truth.pressure.coefficients),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Velocity,
    Pressure,
}

impl Field {
    pub const BOTH: [Field; 2] = [Field::Velocity, Field::Pressure];

    pub fn name(self) -> &'static str {
        match self {
            Field::Velocity => "velocity",
            Field::Pressure => "pressure",
        }
    }

    pub fn norm(self) -> &'static str {
        match self {
            Field::Velocity => "H1-seminorm",
            Field::Pressure => "L2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub option: RbOption,
    pub field: Field,
    pub mean: f64,
    pub max: f64,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTiming {
    pub truth: Duration,
    pub online: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    /// Test points that entered the statistics.
    pub test_set: Vec<Mu>,
    /// Test points dropped because the FE truth solve failed.
    pub excluded: Vec<(Mu, String)>,
    /// Per-point errors, indexed `[n][option][point] -> [velocity, pressure]`.
    pub pointwise: Vec<Vec<Vec<[f64; 2]>>>,
    pub timing: StageTiming,
}

impl ErrorReport {
    pub fn row(&self, n: usize, option: RbOption, field: Field) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.n == n && r.option == option && r.field == field)
    }
}

/// Errors of every `(N, option)` reduced solution against FE truth solves at
/// the test points. Reduced models for each `N` are rebuilt from the first
/// `N` greedy snapshots. A failed reduced solve counts as an infinite error.
pub fn error_sweep(
    fom: &FullOrderModel,
    offline: &Offline,
    n_values: &[usize],
    options: &[RbOption],
    test: &[Mu],
    seed: u64,
) -> Result<ErrorReport> {
    let start = Instant::now();
    let truths: Vec<Result<FeSolution>> = test.par_iter().with_min_len(1).map(|&mu| fom.solve(mu)).collect();
    let truth_time = start.elapsed();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (&mu, t) in test.iter().zip(truths) {
        match t {
            Ok(s) => kept.push(s),
            Err(e) => excluded.push((mu, e.to_string())),
        }
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut pointwise = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let model = offline.truncated(fom, n)?;
        let mut per_option = Vec::with_capacity(options.len());
        for &option in options {
            let errs: Vec<[f64; 2]> = kept
                .par_iter()
                .with_min_len(1)
                .map(|truth| reduced_errors(fom, &model, option, truth))
                .collect();
            for (f, field) in Field::BOTH.into_iter().enumerate() {
                let (mean, max) = mean_max(errs.iter().map(|e| e[f]));
                rows.push(ErrorRow { n, option, field, mean, max, n_test: kept.len(), seed });
            }
            per_option.push(errs);
        }
        pointwise.push(per_option);
    }
    Ok(ErrorReport {
        rows,
        test_set: kept.iter().map(|s| s.mu).collect(),
        excluded,
        pointwise,
        timing: StageTiming { truth: truth_time, online: start.elapsed() },
    })
}

/// Errors of the reduced solution under `option` against `truth`.
pub fn reduced_errors(fom: &FullOrderModel, model: &ReducedModel, option: RbOption, truth: &FeSolution) -> [f64; 2] {
    match model.solve_option(option, truth.mu) {
        Ok(s) => {
            let (u, p) = model.reconstruct_solution(&s);
            solution_errors(fom, &u, &p, truth)
        }
        Err(_) => [f64::INFINITY; 2],
    }
}

fn mean_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut sum, mut max, mut count) = (0.0, 0.0f64, 0usize);
    for v in values {
        sum += v;
        max = max.max(v);
        count += 1;
    }
    if count == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (sum / count as f64, max)
    }
}

/// Lid-free Stokes flow on `(0,2) × (0,1)` with stream function
/// `ψ = x²(2-x)² y²(1-y)²`, `u = (ψ_y, -ψ_x)` and `p = cos πx cos πy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub nu: f64,
}

impl Manufactured {
    fn factors(x: f64, y: f64) -> ([f64; 4], [f64; 4]) {
        let xs = [
            x * x * (2.0 - x) * (2.0 - x),
            8.0 * x - 12.0 * x * x + 4.0 * x.powi(3),
            8.0 - 24.0 * x + 12.0 * x * x,
            -24.0 + 24.0 * x,
        ];
        let ys = [
            y * y * (1.0 - y) * (1.0 - y),
            2.0 * y - 6.0 * y * y + 4.0 * y.powi(3),
            2.0 - 12.0 * y + 12.0 * y * y,
            -12.0 + 24.0 * y,
        ];
        (xs, ys)
    }

    pub fn velocity(&self, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = Self::factors(p[0], p[1]);
        [x[0] * y[1], -x[1] * y[0]]
    }

    /// Rows are components, columns derivatives.
    pub fn velocity_gradient(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let (x, y) = Self::factors(p[0], p[1]);
        [[x[1] * y[1], x[0] * y[2]], [-x[2] * y[0], -x[1] * y[1]]]
    }

    pub fn pressure(&self, p: [f64; 2]) -> f64 {
        (PI * p[0]).cos() * (PI * p[1]).cos()
    }

    pub fn force(&self, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = Self::factors(p[0], p[1]);
        let lap = [x[2] * y[1] + x[0] * y[3], -(x[3] * y[0] + x[1] * y[2])];
        let grad_p = [
            -PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
            -PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
        ];
        [-self.nu * lap[0] + grad_p[0], -self.nu * lap[1] + grad_p[1]]
    }
}

/// `(‖∇(u_h - u)‖, ‖∇u‖)` on the reference domain.
pub fn h1_seminorm_error(
    uh: &FeFunction,
    exact: impl Fn([f64; 2]) -> [[f64; 2]; 2],
    rule: &TriangleRule,
) -> Result<(f64, f64)> {
    let s = &uh.space;
    let (mut err, mut norm) = (0.0, 0.0);
    for k in 0..s.mesh.n_triangles() {
        let geom = s.mesh.element_geometry(k)?;
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let basis = s.local_basis(&geom, *bary);
            let g = exact(s.mesh.point(k, *bary));
            for (c, gc) in g.iter().enumerate().take(s.components) {
                let mut gh = [0.0; 2];
                for (a, &node) in s.cell_nodes[k].iter().enumerate() {
                    let v = uh.coefficients[s.dof(node, c)];
                    gh[0] += v * basis.grads[a][0];
                    gh[1] += v * basis.grads[a][1];
                }
                let d = [gh[0] - gc[0], gh[1] - gc[1]];
                err += w * geom.area * (d[0] * d[0] + d[1] * d[1]);
                norm += w * geom.area * (gc[0] * gc[0] + gc[1] * gc[1]);
            }
        }
    }
    Ok((err.sqrt(), norm.sqrt()))
}

/// `(‖p_h - p‖, ‖p‖)` in L² on the reference domain for a scalar field.
pub fn l2_error(ph: &FeFunction, exact: impl Fn([f64; 2]) -> f64, rule: &TriangleRule) -> Result<(f64, f64)> {
    let s = &ph.space;
    let (mut err, mut norm) = (0.0, 0.0);
    for k in 0..s.mesh.n_triangles() {
        let geom = s.mesh.element_geometry(k)?;
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let basis = s.local_basis(&geom, *bary);
            let e = exact(s.mesh.point(k, *bary));
            let vh: f64 = s.cell_nodes[k]
                .iter()
                .enumerate()
                .map(|(a, &node)| ph.coefficients[s.dof(node, 0)] * basis.values[a])
                .sum();
            err += w * geom.area * (vh - e) * (vh - e);
            norm += w * geom.area * e * e;
        }
    }
    Ok((err.sqrt(), norm.sqrt()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldErrors {
    /// Relative velocity errors in the H¹ seminorm, one per mesh.
    pub velocity_h1: Vec<f64>,
    /// Relative pressure errors in L², one per mesh.
    pub pressure_l2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub fe_pair: FePair,
    pub meshes: Vec<(usize, usize)>,
    pub h: Vec<f64>,
    pub fe: FieldErrors,
    /// Errors of the nodal interpolants of the exact fields.
    pub interpolation: FieldErrors,
}

/// Observed orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn observed_rates(h: &[f64], errors: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

impl ConvergenceStudy {
    pub fn velocity_rates(&self) -> Vec<f64> {
        observed_rates(&self.h, &self.fe.velocity_h1)
    }

    pub fn pressure_rates(&self) -> Vec<f64> {
        observed_rates(&self.h, &self.fe.pressure_l2)
    }

    pub fn interpolation_velocity_rates(&self) -> Vec<f64> {
        observed_rates(&self.h, &self.interpolation.velocity_h1)
    }

    pub fn interpolation_pressure_rates(&self) -> Vec<f64> {
        observed_rates(&self.h, &self.interpolation.pressure_l2)
    }
}

/// Stokes solves of the manufactured flow with unit viscosity on a sequence
/// of meshes of the undeformed domain.
pub fn convergence_study(
    fe_pair: FePair,
    stabilization: StabilizationConfig,
    meshes: &[(usize, usize)],
) -> Result<ConvergenceStudy> {
    if meshes.len() < 2 {
        return Err(Error::InvalidArgument("a convergence study needs at least two meshes".into()));
    }
    let exact = Manufactured { nu: 1.0 };
    let rule = TriangleRule::collapsed_gauss(6);
    let mut study = ConvergenceStudy {
        fe_pair,
        meshes: meshes.to_vec(),
        h: Vec::new(),
        fe: FieldErrors::default(),
        interpolation: FieldErrors::default(),
    };
    for &(nx, ny) in meshes {
        let config = ProblemConfig {
            problem: Problem::Stokes,
            parameter_box: ParameterBox::new([0.5, 2.0], [1.0, 1.0]),
            nx,
            ny,
            lid_speed: 0.0,
            ..ProblemConfig::stokes_cavity(fe_pair, stabilization)
        };
        let fom = FullOrderModel::new(config)?;
        let sol = fom.solve_stokes_forced([exact.nu, 1.0], &|x| exact.force(x))?;
        let ui = interpolate(&fom.velocity, |x| exact.velocity(x).to_vec());
        let pi = interpolate(&fom.pressure, |x| vec![exact.pressure(x)]);
        let grad = |x| exact.velocity_gradient(x);
        let pressure = |x| exact.pressure(x);
        for (target, u, p) in [
            (&mut study.fe, &sol.velocity, &sol.pressure),
            (&mut study.interpolation, &ui, &pi),
        ] {
            let (eu, nu) = h1_seminorm_error(u, grad, &rule)?;
            let (ep, np) = l2_error(p, pressure, &rule)?;
            target.velocity_h1.push(eu / nu);
            target.pressure_l2.push(ep / np);
        }
        study.h.push(fom.mesh.max_diameter());
    }
    Ok(study)
}

/// `k × k` tensor grid spanning the box, corners included.
pub fn parameter_grid(pbox: &ParameterBox, k: usize) -> Vec<Mu> {
    let t = |i: usize| if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
    (0..k).flat_map(|j| (0..k).map(move |i| pbox.lerp([t(i), t(j)]))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfSupRow {
    pub mu: Mu,
    pub option: RbOption,
    pub beta: f64,
    pub beta_modified: f64,
}

/// `β_N` and `β̃_N` per grid point and option.
pub fn infsup_profile(model: &ReducedModel, grid: &[Mu], options: &[RbOption]) -> Result<Vec<InfSupRow>> {
    let cells: Vec<(Mu, RbOption)> = grid.iter().flat_map(|&mu| options.iter().map(move |&o| (mu, o))).collect();
    cells
        .par_iter()
        .with_min_len(1)
        .map(|&(mu, option)| {
            Ok(InfSupRow {
                mu,
                option,
                beta: model.infsup(option, mu)?,
                beta_modified: model.modified_infsup(option, mu)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::StabilizationMethod;
    use crate::fespace::{make_space, Family};
    use crate::mesh::build_rect_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn identical_inputs_have_zero_error() {
        let fom = FullOrderModel::new(ProblemConfig {
            nx: 4,
            ny: 2,
            ..ProblemConfig::stokes_cavity(FePair::P2P1, StabilizationConfig::none())
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..fom.n_velocity()).map(|_| rng.gen()).collect();
        assert_eq!(relative_error(&fom.xu, &u, &u), 0.0);
        assert_eq!(relative_error(&fom.xu, &vec![0.0; u.len()], &vec![0.0; u.len()]), 0.0);
    }

    #[test]
    fn gram_norms_match_refined_quadrature() {
        let mesh = Arc::new(build_rect_mesh(2.0, 1.0, 5, 3).unwrap());
        let fom = FullOrderModel::new(ProblemConfig {
            nx: 5,
            ny: 3,
            ..ProblemConfig::stokes_cavity(FePair::P2P1, StabilizationConfig::none())
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rule = TriangleRule::collapsed_gauss(8);
        for family in [Family::P1, Family::P2] {
            let vs = Arc::new(make_space(mesh.clone(), family, 2).unwrap());
            let coeffs: Vec<f64> = (0..vs.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = FeFunction::new(vs, coeffs).unwrap();
            let (quad, _) = h1_seminorm_error(&f, |_| [[0.0; 2]; 2], &rule).unwrap();
            if family == Family::P2 {
                let gram = fom.xu.bilinear(&f.coefficients, &f.coefficients).sqrt();
                assert!((gram - quad).abs() <= 1e-10 * quad, "{gram} vs {quad}");
            }
            let (coarse, _) = h1_seminorm_error(&f, |_| [[0.0; 2]; 2], &TriangleRule::degree5()).unwrap();
            assert!((coarse - quad).abs() <= 1e-10 * quad, "{family:?} {coarse} {quad}");
        }
        let ps = Arc::new(make_space(mesh, Family::P1, 1).unwrap());
        let coeffs: Vec<f64> = (0..ps.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = FeFunction::new(ps, coeffs).unwrap();
        let (e, _) = l2_error(&p, |_| 0.0, &rule).unwrap();
        let gram = fom.xp.bilinear(&p.coefficients, &p.coefficients).sqrt();
        assert!((gram - e).abs() <= 1e-10 * e, "{gram} vs {e}");
    }

    #[test]
    fn manufactured_fields_are_consistent() {
        let m = Manufactured { nu: 1.3 };
        let h = 1e-5;
        for p in [[0.3, 0.4], [1.2, 0.7], [1.9, 0.1]] {
            // divergence free
            let g = m.velocity_gradient(p);
            assert!((g[0][0] + g[1][1]).abs() < 1e-14);
            // gradient against central differences
            for c in 0..2 {
                for d in 0..2 {
                    let mut a = p;
                    let mut b = p;
                    a[d] += h;
                    b[d] -= h;
                    let fd = (m.velocity(a)[c] - m.velocity(b)[c]) / (2.0 * h);
                    assert!((fd - g[c][d]).abs() < 1e-8);
                }
            }
            // force against a second difference Laplacian
            let lap: Vec<f64> = (0..2)
                .map(|c| {
                    let u = |q: [f64; 2]| m.velocity(q)[c];
                    let h = 1e-3;
                    (u([p[0] + h, p[1]]) + u([p[0] - h, p[1]]) + u([p[0], p[1] + h]) + u([p[0], p[1] - h])
                        - 4.0 * u(p))
                        / (h * h)
                })
                .collect();
            let dp = [
                (m.pressure([p[0] + h, p[1]]) - m.pressure([p[0] - h, p[1]])) / (2.0 * h),
                (m.pressure([p[0], p[1] + h]) - m.pressure([p[0], p[1] - h])) / (2.0 * h),
            ];
            let f = m.force(p);
            for c in 0..2 {
                assert!((f[c] - (-m.nu * lap[c] + dp[c])).abs() < 1e-5, "{c}: {} vs {}", f[c], -m.nu * lap[c] + dp[c]);
            }
        }
        for p in [[0.0, 0.5], [2.0, 0.3], [0.7, 0.0], [1.1, 1.0]] {
            assert_eq!(m.velocity(p), [0.0, 0.0]);
        }
    }

    #[test]
    fn taylor_hood_converges_quadratically() {
        let study = convergence_study(FePair::P2P1, StabilizationConfig::none(), &[(4, 2), (8, 4), (16, 8)]).unwrap();
        for r in study.velocity_rates() {
            assert!(r > 1.8, "{study:?}");
        }
    }

    #[test]
    fn grid_covers_the_corners() {
        let pbox = ParameterBox::new([0.25, 0.75], [1.0, 3.0]);
        let g = parameter_grid(&pbox, 5);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], [0.25, 1.0]);
        assert_eq!(g[24], [0.75, 3.0]);
        assert_eq!(g[2], [0.5, 1.0]);
    }

    #[test]
    fn stabilized_p1p1_converges() {
        let stab = StabilizationConfig::new(StabilizationMethod::BrezziPitkaranta, 0.05);
        let study = convergence_study(FePair::P1P1, stab, &[(8, 4), (16, 8)]).unwrap();
        assert!(study.velocity_rates()[0] > 0.85, "{study:?}");
        assert!(study.pressure_rates()[0] > 0.85, "{study:?}");
    }
}
