use std::sync::Arc;

use ale_minihydro::mesh_fespace::{cartesian_mesh, BoundaryKind, Discretization};
use ale_minihydro::tmop_mesh_opt::{
    advect_adaptivity, build_targets, limiting_radius, newton_solve, NewtonControls, NewtonStatus, QualityMetric,
    TargetMode, TmopObjective,
};
use ale_minihydro::Runtime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disc(dim: usize, n: usize, p: usize) -> Arc<Discretization> {
    let counts = vec![n; dim];
    let lengths = vec![1.0; dim];
    let mesh = cartesian_mesh(dim, &counts, &lengths, p).unwrap();
    Arc::new(Discretization::new(mesh, None, BoundaryKind::Walls).unwrap())
}

fn uniform_objective(rt: &Runtime, d: &Arc<Discretization>, x0: &[f64]) -> TmopObjective {
    let targets = build_targets(rt, d, &d.mesh.coords, TargetMode::IdealUniform, None).unwrap();
    TmopObjective::new(rt, d.clone(), QualityMetric::shape_for_dim(d.dim), targets, x0).unwrap()
}

fn free_direction(obj: &TmopObjective, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    obj.fixed_mask()
        .iter()
        .map(|&f| if f { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_derivatives(dim: usize, n: usize, p: usize) {
    let rt = Runtime::sequential();
    let d = disc(dim, n, p);
    let x0 = d.mesh.perturbed_positions(&d.boundary_nodes, 0.2, 3);
    let mut obj = uniform_objective(&rt, &d, &x0);
    obj.calibrate_gamma(7).unwrap();
    let x = obj.reference_perturbation(0.05, 11);
    let size = x.len();
    let a = free_direction(&obj, 1);
    let b = free_direction(&obj, 2);
    let eps = 1e-6;
    let shift = |s: f64, v: &[f64]| -> Vec<f64> { x.iter().zip(v).map(|(xi, vi)| xi + s * vi).collect() };

    let mut g = vec![0.0; size];
    obj.gradient(&x, &mut g).unwrap();
    let fd = (obj.objective(&shift(eps, &a)).unwrap() - obj.objective(&shift(-eps, &a)).unwrap()) / (2.0 * eps);
    let an = dot(&g, &a);
    assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "gradient {an} vs {fd}");

    let mut ha = vec![0.0; size];
    let mut hb = vec![0.0; size];
    obj.hessian_action(&x, &a, &mut ha).unwrap();
    obj.hessian_action(&x, &b, &mut hb).unwrap();
    let (mut gp, mut gm) = (vec![0.0; size], vec![0.0; size]);
    obj.gradient(&shift(eps, &a), &mut gp).unwrap();
    obj.gradient(&shift(-eps, &a), &mut gm).unwrap();
    let scale = ha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..size {
        let fd = (gp[i] - gm[i]) / (2.0 * eps);
        assert!((fd - ha[i]).abs() <= 1e-5 * scale, "hessian row {i}: {} vs {fd}", ha[i]);
    }
    let (ab, ba) = (dot(&b, &ha), dot(&a, &hb));
    assert!((ab - ba).abs() <= 1e-11 * ab.abs().max(1.0), "symmetry {ab} vs {ba}");

    let diag = obj.hessian_diagonal(&x).unwrap();
    let mut e = vec![0.0; size];
    let mut he = vec![0.0; size];
    for i in (0..size).step_by(size / 7 + 1) {
        e.fill(0.0);
        e[i] = 1.0;
        obj.hessian_action(&x, &e, &mut he).unwrap();
        assert!((he[i] - diag[i]).abs() <= 1e-10 * diag[i].abs().max(1.0), "diag {i}: {} vs {}", he[i], diag[i]);
    }
}

#[test]
fn derivatives_match_finite_differences_2d() {
    check_derivatives(2, 3, 2);
}

#[test]
fn derivatives_match_finite_differences_3d() {
    check_derivatives(3, 2, 2);
}

#[test]
fn newton_recovers_uniform_mesh() {
    let rt = Runtime::sequential();
    for (dim, n, p) in [(2, 4, 2), (3, 2, 2)] {
        let d = disc(dim, n, p);
        let mut x = d.mesh.perturbed_positions(&d.boundary_nodes, 0.3, 5);
        let obj = uniform_objective(&rt, &d, &d.mesh.coords);
        let report = newton_solve(&obj, &mut x, &NewtonControls::default()).unwrap();
        assert_eq!(report.status, NewtonStatus::Converged, "{report:?}");
        let err = x.iter().zip(&d.mesh.coords).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "dim {dim}: position error {err:e}");
        assert!(report.objective_history.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(report.min_det_final > 0.0);
    }
}

#[test]
fn optimal_mesh_takes_no_iterations() {
    let rt = Runtime::sequential();
    let d = disc(2, 3, 3);
    let obj = uniform_objective(&rt, &d, &d.mesh.coords);
    let mut x = d.mesh.coords.clone();
    let report = newton_solve(&obj, &mut x, &NewtonControls::default()).unwrap();
    assert_eq!(report.status, NewtonStatus::Converged);
    assert_eq!(report.iterations, 0);
    assert!(obj.objective(&x).unwrap().abs() < 1e-12);
}

#[test]
fn limiting_term_closed_form_and_translation() {
    let rt = Runtime::sequential();
    let d = disc(2, 4, 2);
    let x0 = d.mesh.coords.clone();
    let obj = uniform_objective(&rt, &d, &x0);
    let nn = d.mesh.num_nodes;
    let delta = [0.013, -0.021];
    let mut x = x0.clone();
    for c in 0..2 {
        for n in 0..nn {
            x[c * nn + n] += delta[c];
        }
    }
    let parts = obj.objective_parts(&x).unwrap();
    // Uniform mesh: every limiting radius is the element diagonal.
    let h = 0.25f64;
    let r2 = 2.0 * h * h;
    let expected = (delta[0] * delta[0] + delta[1] * delta[1]) / r2;
    assert!((parts.limiting - expected).abs() < 1e-12 * expected, "{} vs {expected}", parts.limiting);
    assert!(limiting_radius(&d.mesh, &x0).iter().all(|r| (r * r - r2).abs() < 1e-14));
    // The shape term does not see translations.
    assert!(parts.shape.abs() < 1e-12);
    let xp = obj.reference_perturbation(0.1, 4);
    let xt: Vec<f64> = xp.iter().enumerate().map(|(i, v)| v + delta[i / nn]).collect();
    let (a, b) = (obj.objective_parts(&xp).unwrap().shape, obj.objective_parts(&xt).unwrap().shape);
    assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
}

#[test]
fn calibrated_gamma_balances_terms() {
    let rt = Runtime::sequential();
    let d = disc(2, 4, 2);
    let x0 = d.mesh.perturbed_positions(&d.boundary_nodes, 0.2, 8);
    let mut obj = uniform_objective(&rt, &d, &x0);
    let gamma = obj.calibrate_gamma(21).unwrap();
    assert!(gamma > 0.0);
    let parts = obj.objective_parts(&obj.reference_perturbation(0.1, 21)).unwrap();
    assert!((gamma * parts.limiting - parts.shape).abs() < 1e-12 * parts.shape);
    assert!(obj.set_gamma(-1.0).is_err());
}

#[test]
fn constant_size_field_scales_targets() {
    let rt = Runtime::sequential();
    let d = disc(3, 2, 1);
    let ideal = build_targets(&rt, &d, &d.mesh.coords, TargetMode::IdealUniform, None).unwrap();
    let xi = vec![8.0; d.mesh.num_nodes];
    let sized = build_targets(&rt, &d, &d.mesh.coords, TargetMode::SizeAdapted, Some(&xi)).unwrap();
    for (a, b) in ideal.w.iter().zip(&sized.w) {
        assert!((b - 2.0 * a).abs() < 1e-14);
    }
    assert!(build_targets(&rt, &d, &d.mesh.coords, TargetMode::SizeAdapted, None).is_err());
    let bad = vec![0.0; d.mesh.num_nodes];
    assert!(build_targets(&rt, &d, &d.mesh.coords, TargetMode::SizeAdapted, Some(&bad)).is_err());
}

#[test]
fn size_field_drives_element_sizes() {
    let rt = Runtime::sequential();
    let d = disc(2, 8, 2);
    let nn = d.mesh.num_nodes;
    let x0 = d.mesh.coords.clone();
    // Left half asks for twice the area of the right half.
    let xi: Vec<f64> = (0..nn).map(|n| 1.5 - 0.5 * ((x0[n] - 0.5) / 0.1).tanh()).collect();
    let targets = build_targets(&rt, &d, &x0, TargetMode::SizeAdapted, Some(&xi)).unwrap();
    let metric = QualityMetric::shape_for_dim(2).with_size(1.0);
    let obj = TmopObjective::new(&rt, d.clone(), metric, targets, &x0).unwrap();
    let mut x = x0.clone();
    let report = newton_solve(&obj, &mut x, &NewtonControls::default()).unwrap();
    assert!(report.min_det_final > 0.0);
    assert!(report.objective_final() < report.objective_initial());
    let area = |e: usize| {
        let corners = d.mesh.corner_locals();
        let nodes = d.mesh.element_nodes(e);
        let p: Vec<[f64; 2]> = [0, 1, 3, 2].iter().map(|&k| [x[nodes[corners[k]]], x[nn + nodes[corners[k]]]]).collect();
        0.5 * (0..4)
            .map(|i| p[i][0] * p[(i + 1) % 4][1] - p[(i + 1) % 4][0] * p[i][1])
            .sum::<f64>()
    };
    let (mut left, mut right) = (0.0, 0.0);
    for ey in 0..8 {
        left += area(ey * 8);
        right += area(ey * 8 + 7);
    }
    let ratio = left / right;
    eprintln!("edge column area ratio {ratio}");
    assert!((1.5..=2.5).contains(&ratio), "{ratio}");
}

#[test]
fn adaptivity_advection() {
    let rt = Runtime::sequential();
    let d = disc(2, 4, 2);
    let nn = d.mesh.num_nodes;
    let x0 = d.mesh.coords.clone();
    let x1 = d.mesh.perturbed_positions(&d.boundary_nodes, 0.3, 9);
    let xi: Vec<f64> = (0..nn).map(|n| 1.0 + 2.0 * x0[n] - x0[nn + n]).collect();

    let (same, rep) = advect_adaptivity(&rt, &d, &xi, &x0, &x0, 0, 0.25).unwrap();
    assert_eq!(same, xi);
    assert_eq!(rep.steps, 0);

    let ones = vec![1.0; nn];
    let (c, _) = advect_adaptivity(&rt, &d, &ones, &x0, &x1, 0, 0.25).unwrap();
    assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-10));

    // A linear field is carried exactly: the nodes sample it at their new positions.
    let (moved, rep) = advect_adaptivity(&rt, &d, &xi, &x0, &x1, 0, 0.25).unwrap();
    assert!(rep.steps >= 1);
    for n in 0..nn {
        let exact = 1.0 + 2.0 * x1[n] - x1[nn + n];
        assert!((moved[n] - exact).abs() < 1e-9, "node {n}: {} vs {exact}", moved[n]);
    }
    assert!(advect_adaptivity(&rt, &d, &xi, &x0, &x1, 1, 1e-3).is_err());
}

