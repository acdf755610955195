use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbstab::analysis::{parameter_grid, relative_error, solution_errors};
use rbstab::linalg::dot;
use rbstab::rb::{greedy_offline, indicator, test_set, training_set, GreedySettings, Offline, RbOption};
use rbstab::{Error, FePair, FullOrderModel, ParameterBox, ProblemConfig, StabilizationConfig, StabilizationMethod};
use std::sync::OnceLock;

fn stokes_fom() -> &'static FullOrderModel {
    static FOM: OnceLock<FullOrderModel> = OnceLock::new();
    FOM.get_or_init(|| {
        let stab = StabilizationConfig::new(StabilizationMethod::BrezziPitkaranta, 0.05);
        FullOrderModel::new(ProblemConfig { nx: 8, ny: 4, ..ProblemConfig::stokes_cavity(FePair::P1P1, stab) }).unwrap()
    })
}

fn stokes_offline() -> &'static Offline {
    static OFF: OnceLock<Offline> = OnceLock::new();
    OFF.get_or_init(|| greedy_offline(stokes_fom(), GreedySettings { n_max: 6, train_size: 25, seed: 3 }).unwrap())
}

fn ns_fom() -> &'static FullOrderModel {
    static FOM: OnceLock<FullOrderModel> = OnceLock::new();
    FOM.get_or_init(|| {
        let stab = StabilizationConfig::new(StabilizationMethod::SupgFamily { rho: 0 }, 1.0);
        FullOrderModel::new(ProblemConfig { nx: 8, ny: 4, ..ProblemConfig::navier_stokes_cavity(FePair::P2P2, stab) })
            .unwrap()
    })
}

fn ns_offline() -> &'static Offline {
    static OFF: OnceLock<Offline> = OnceLock::new();
    OFF.get_or_init(|| greedy_offline(ns_fom(), GreedySettings { n_max: 4, train_size: 9, seed: 5 }).unwrap())
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn combination(vectors: &[&[f64]], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (v, c) in vectors.iter().zip(coeffs) {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += c * x;
        }
    }
    out
}

fn gram(vectors: &[&[f64]], m: &rbstab::linalg::CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(vectors.len(), vectors.len(), |i, j| m.bilinear(vectors[i], vectors[j]))
}

#[test]
fn single_snapshot_is_reproduced() {
    let fom = stokes_fom();
    let off = greedy_offline(fom, GreedySettings { n_max: 1, train_size: 4, seed: 1 }).unwrap();
    let mu = off.trace.selected[0];
    assert_eq!(mu, fom.config.parameter_box.center());
    let truth = fom.solve(mu).unwrap();
    let s = off.model.solve_option(RbOption::I, mu).unwrap();
    let (u, p) = off.model.reconstruct_solution(&s);
    let [eu, ep] = solution_errors(fom, &u, &p, &truth);
    assert!(eu <= 1e-8 && ep <= 1e-8, "{eu:e} {ep:e}");
}

#[test]
fn greedy_trace_is_consistent() {
    let fom = stokes_fom();
    let off = stokes_offline();
    let t = &off.trace;
    assert_eq!(t.selected.len(), 6);
    for (i, a) in t.selected.iter().enumerate() {
        assert!(t.selected[i + 1..].iter().all(|b| b != a));
        assert!(fom.config.parameter_box.contains(*a));
    }
    assert!(t.max_indicator.last().unwrap() < &t.max_indicator[1]);
    for mu in &t.selected {
        let r = indicator(fom, &off.model, RbOption::I, *mu).unwrap();
        assert!(r <= 1e-8, "indicator {r:e} at {mu:?}");
    }
}

#[test]
fn stokes_reproduces_training_snapshots() {
    let fom = stokes_fom();
    let off = stokes_offline();
    for snap in &off.snapshots {
        let truth_u: Vec<f64> = snap.velocity.iter().zip(&fom.lifting.coefficients).map(|(a, b)| a + b).collect();
        for option in [RbOption::I, RbOption::II] {
            let s = off.model.solve_option(option, snap.mu).unwrap();
            let (u, p) = off.model.reconstruct_solution(&s);
            let eu = relative_error(&fom.xu, &u, &truth_u);
            let ep = relative_error(&fom.xp, &p, &snap.pressure);
            assert!(eu <= 1e-8 && ep <= 1e-8, "{option}: {eu:e} {ep:e}");
        }
        let s = off.model.solve_option(RbOption::III, snap.mu).unwrap();
        let (_, p) = off.model.reconstruct_solution(&s);
        let ep = relative_error(&fom.xp, &p, &snap.pressure);
        assert!(ep >= 1e-4, "offline-only stabilization reproduced the pressure: {ep:e}");
    }
}

#[test]
fn bases_are_orthonormal() {
    let fom = stokes_fom();
    let b = &stokes_offline().model.bases;
    assert_eq!(b.n_u() + b.n_s(), 2 * 6);
    let vel = gram(&b.test(), &fom.xu);
    assert!((vel - DMatrix::identity(12, 12)).amax() <= 1e-10);
    let pres = gram(&b.pressure_vectors(), &fom.xp);
    assert!((pres - DMatrix::identity(6, 6)).amax() <= 1e-10);
    let model = &stokes_offline().model;
    assert!((&model.xu - DMatrix::identity(12, 12)).amax() <= 1e-10);
}

#[test]
fn supremizers_represent_the_divergence() {
    let fom = stokes_fom();
    let off = stokes_offline();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for snap in &off.snapshots {
        let b = fom.plain.pu.evaluate(&fom.geometry, snap.mu);
        for _ in 0..20 {
            let mut v = random(&mut rng, fom.n_velocity());
            for (x, f) in v.iter_mut().zip(&fom.free_map) {
                if f.is_none() {
                    *x = 0.0;
                }
            }
            let lhs = fom.xu.bilinear(&snap.supremizer, &v);
            let rhs = b.bilinear(&snap.pressure, &v);
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn projections_match_assembly() {
    let fom = stokes_fom();
    let model = &stokes_offline().model;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trial = model.bases.trial();
    let test = model.bases.test();
    let pres = model.bases.pressure_vectors();
    for _ in 0..20 {
        let mu = fom.config.parameter_box.lerp([rng.gen(), rng.gen()]);
        let w = random(&mut rng, trial.len());
        let v = random(&mut rng, test.len());
        let q = random(&mut rng, pres.len());
        let r = random(&mut rng, pres.len());
        let (wf, vf, qf, rf) =
            (combination(&trial, &w), combination(&test, &v), combination(&pres, &q), combination(&pres, &r));
        let sys = model.system(RbOption::I, mu);
        let wv = nalgebra::DVector::from_vec(w.clone());
        let vv = nalgebra::DVector::from_vec(v.clone());
        let qv = nalgebra::DVector::from_vec(q.clone());
        let rv = nalgebra::DVector::from_vec(r.clone());
        let geo = &fom.geometry;
        let fe_b = fom.plain.pu.evaluate(geo, mu).bilinear(&qf, &wf) + fom.stabilization.pu.evaluate(geo, mu).bilinear(&qf, &wf);
        let fe_a = fom.plain.uu.evaluate(geo, mu).bilinear(&vf, &wf) + fom.stabilization.uu.evaluate(geo, mu).bilinear(&vf, &wf);
        let fe_s = fom.stabilization.pp.evaluate(geo, mu).bilinear(&rf, &qf);
        let fe_bt = fom.plain.up.evaluate(geo, mu).bilinear(&vf, &qf) + fom.stabilization.up.evaluate(geo, mu).bilinear(&vf, &qf);
        let checks = [
            (qv.dot(&(&sys.pu * &wv)), fe_b),
            (vv.dot(&(&sys.uu * &wv)), fe_a),
            (rv.dot(&(&sys.pp * &qv)), fe_s),
            (vv.dot(&(&sys.up * &qv)), fe_bt),
        ];
        for (red, full) in checks {
            assert!((red - full).abs() <= 1e-10 * full.abs().max(1.0), "{red} vs {full}");
        }
        let bn = model.divergence(RbOption::I, mu);
        let plain_b = fom.plain.pu.evaluate(geo, mu).bilinear(&qf, &combination(&trial[1..], &w[1..]));
        let red_b = qv.dot(&(&bn * nalgebra::DVector::from_column_slice(&w[1..])));
        assert!((red_b - plain_b).abs() <= 1e-10 * plain_b.abs().max(1.0));
    }
}

#[test]
fn nonlinear_projection_matches_assembly() {
    let fom = ns_fom();
    let model = &ns_offline().model;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trial = model.bases.trial();
    let test = model.bases.test();
    let pres = model.bases.pressure_vectors();
    for _ in 0..20 {
        let mu = fom.config.parameter_box.lerp([rng.gen(), rng.gen()]);
        let lid: f64 = rng.gen_range(0.5..1.5);
        let x = random(&mut rng, trial.len() - 1);
        let p = random(&mut rng, pres.len());
        let mut y = vec![lid];
        y.extend(&x);
        let u = combination(&trial, &y);
        let pf = combination(&pres, &p);
        let full = fom.residual(mu, &u, &pf, true, None).unwrap();
        let sys = model.system(RbOption::I, mu);
        let red = sys.residual(lid, &x, &p, true);
        let projected: Vec<f64> = test
            .iter()
            .map(|z| dot(z, &full.momentum))
            .chain(pres.iter().map(|z| dot(z, &full.mass)))
            .collect();
        let scale = projected.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in red.iter().zip(&projected) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn strip_and_enrich_round_trip() {
    let model = &stokes_offline().model;
    let mu = [0.6, 2.0];
    let stripped = model.strip_supremizers();
    assert_eq!(stripped.option, RbOption::II);
    assert_eq!(stripped.n_s(), 0);
    let back = stripped.enrich_supremizers();
    assert_eq!(back.option, RbOption::I);
    assert_eq!(back.n_u() + back.n_s(), 2 * model.n());
    let (a, b) = (model.system(RbOption::I, mu), back.system(back.option, mu));
    for (x, y) in [(&a.uu, &b.uu), (&a.up, &b.up), (&a.pu, &b.pu), (&a.pp, &b.pp)] {
        assert_eq!(x.shape(), y.shape());
        assert!((x - y).amax() <= 1e-12);
    }
    let small = stripped.system(RbOption::II, mu);
    assert_eq!(small.uu.shape(), (model.n_u(), model.n_u() + 1));
}

#[test]
fn supremizers_raise_the_inf_sup_constant() {
    let fom = stokes_fom();
    let model = &stokes_offline().model;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let mu = fom.config.parameter_box.lerp([rng.gen(), rng.gen()]);
        let (bi, bii) = (model.infsup(RbOption::I, mu).unwrap(), model.infsup(RbOption::II, mu).unwrap());
        assert!(bi >= bii * (1.0 - 1e-10), "{bi} < {bii}");
        let (mi, mii) =
            (model.modified_infsup(RbOption::I, mu).unwrap(), model.modified_infsup(RbOption::II, mu).unwrap());
        assert!(mi >= mii * (1.0 - 1e-10));
        assert!(mi >= 1e-6 && mii >= 1e-6);
        let (biv, miv) = (model.infsup(RbOption::IV, mu).unwrap(), model.modified_infsup(RbOption::IV, mu).unwrap());
        assert!((biv - miv).abs() <= 1e-10 * biv.max(1e-300));
    }
}

#[test]
fn zero_lid_gives_zero_solution() {
    for off in [stokes_offline(), ns_offline()] {
        let mu = off.trace.selected[0];
        let s = off.model.solve_scaled(RbOption::I, mu, 0.0).unwrap();
        assert!(s.velocity.iter().chain(&s.pressure).all(|v| *v == 0.0));
    }
}

#[test]
fn navier_stokes_reproduces_training_snapshots() {
    let fom = ns_fom();
    let off = ns_offline();
    for snap in &off.snapshots {
        let truth_u: Vec<f64> = snap.velocity.iter().zip(&fom.lifting.coefficients).map(|(a, b)| a + b).collect();
        for option in [RbOption::I, RbOption::II] {
            let s = off.model.solve_option(option, snap.mu).unwrap();
            assert!(s.iterations <= 50);
            let (u, p) = off.model.reconstruct_solution(&s);
            let eu = relative_error(&fom.xu, &u, &truth_u);
            let ep = relative_error(&fom.xp, &p, &snap.pressure);
            assert!(eu <= 1e-6 && ep <= 1e-6, "{option}: {eu:e} {ep:e}");
        }
    }
}

#[test]
fn truncation_to_full_size_is_identity() {
    let off = stokes_offline();
    let full = off.truncated(stokes_fom(), off.snapshots.len()).unwrap();
    assert_eq!(full.bases.velocity, off.model.bases.velocity);
    assert_eq!(full.bases.pressure, off.model.bases.pressure);
    for (a, b) in [(&full.plain, &off.model.plain), (&full.stabilization, &off.model.stabilization)] {
        for (x, y) in [(&a.uu, &b.uu), (&a.up, &b.up), (&a.pu, &b.pu), (&a.pp, &b.pp)] {
            assert_eq!(x.len(), y.len());
            for ((_, m), (_, n)) in x.iter().zip(y) {
                assert_eq!(m, n);
            }
        }
    }
    assert!(matches!(off.truncated(stokes_fom(), 0), Err(Error::OutOfRange { .. })));
    let small = off.truncated(stokes_fom(), 3).unwrap();
    assert_eq!(small.parameters, off.trace.selected[..3]);
}

#[test]
fn saturated_training_set_reports_duplicate() {
    let fom = stokes_fom();
    let r = greedy_offline(fom, GreedySettings { n_max: 3, train_size: 1, seed: 2 });
    assert!(matches!(r, Err(Error::DuplicateSelection(..))), "{:?}", r.err());
}

#[test]
fn snapshot_failure_names_the_parameter() {
    let fom = FullOrderModel::new(ProblemConfig {
        nx: 4,
        ny: 2,
        ..ProblemConfig::stokes_cavity(FePair::P1P1, StabilizationConfig::none())
    })
    .unwrap();
    match greedy_offline(&fom, GreedySettings { n_max: 2, train_size: 4, seed: 2 }) {
        Err(Error::SnapshotFailed { mu1, mu2, .. }) => assert_eq!([mu1, mu2], fom.config.parameter_box.center()),
        Ok(off) => {
            // equal-order elements may still be solvable on tiny meshes; the pressure then carries spurious modes
            assert_eq!(off.trace.selected.len(), 2);
        }
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn parameter_sets_are_seeded_and_disjoint() {
    let pbox = ParameterBox::new([0.25, 0.75], [1.0, 3.0]);
    let a = training_set(&pbox, 100, 7);
    assert_eq!(a, training_set(&pbox, 100, 7));
    assert_ne!(a, training_set(&pbox, 100, 8));
    assert!(a.iter().all(|mu| pbox.contains(*mu)));
    let t = test_set(&pbox, 50, 7, &a);
    assert_eq!(t.len(), 50);
    assert!(t.iter().all(|mu| pbox.contains(*mu) && !a.contains(mu)));
    assert_eq!(parameter_grid(&pbox, 5).len(), 25);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn training_sets_fill_the_box(size in 1usize..200, seed in any::<u64>(), lo in 0.1f64..10.0, w in 0.0f64..5.0) {
            let pbox = ParameterBox::new([lo, lo + w], [1.0, 1.0 + w]);
            let s = training_set(&pbox, size, seed);
            prop_assert_eq!(s.len(), size);
            prop_assert!(s.iter().all(|mu| pbox.contains(*mu)));
        }
    }
}
