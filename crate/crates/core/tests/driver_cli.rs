use std::process::Command;

use ale_minihydro::driver::{
    bench_complexity, bench_strong_scaling, bench_throughput, complexity_csv, loglog_slope, problem_preset, read_dump,
    run_ale, throughput_csv, worked_example, write_dump, write_outputs, DriverError, DumpField, Phase,
    QuadratureConvention, RunConfig, EXIT_CONFIG, EXIT_NUMERICAL, PRESET_NAMES,
};
use ale_minihydro::lagrange_hydro::{LagrangeSolver, StepControls, ViscosityModel};
use ale_minihydro::pa_operators::LinearOperator;
use ale_minihydro::runtime::Runtime;

fn config(preset: &str, cycles: usize) -> RunConfig {
    RunConfig {
        preset: preset.into(),
        cycles,
        ..RunConfig::default()
    }
}

#[test]
fn every_preset_builds_a_valid_state() {
    let rt = Runtime::sequential();
    for name in PRESET_NAMES {
        let p = problem_preset(name).unwrap();
        let disc = p.discretization(1, None).unwrap();
        let st = p.initial_state(&rt, &disc).unwrap();
        assert!(st.rho_detj.iter().all(|r| *r > 0.0), "{name}");
        assert!(st.e.iter().all(|e| *e > 0.0), "{name}");
        assert_eq!(st.x, disc.mesh.coords);
    }
}

#[test]
fn uniform_preset_has_no_pressure_force() {
    let rt = Runtime::sequential();
    let p = problem_preset("uniform").unwrap();
    let disc = p.discretization(2, None).unwrap();
    let st = p.initial_state(&rt, &disc).unwrap();
    let solver =
        LagrangeSolver::new(&rt, disc.clone(), p.material(), ViscosityModel::default(), StepControls::default(), &st)
            .unwrap();
    let (force, _) = solver.force_operator(&st.x, &st.v, &st.e, &st.rho_detj).unwrap();
    let ones = vec![1.0; disc.l2.vsize()];
    let mut f1 = vec![0.0f64; disc.h1.vsize()];
    force.apply(&ones, &mut f1).unwrap();
    for (i, f) in f1.iter().enumerate() {
        if !disc.velocity_mask[i] {
            assert!(f.abs() < 1e-13, "dof {i}: {f}");
        }
    }
}

#[test]
fn sod_shock_moves_right() {
    let cfg = RunConfig {
        ale: false,
        zones: Some(vec![32, 2]),
        ..config("sod-1dx", 40)
    };
    let out = run_ale(&cfg).unwrap();
    let disc = problem_preset("sod-1dx").unwrap().discretization(2, Some(&[32, 2])).unwrap();
    let n = disc.h1.ndofs;
    let x0 = &disc.mesh.coords;
    let mut moved = 0;
    for i in 0..n {
        if (x0[i] - 0.5).abs() < 1e-12 {
            assert!(out.state.x[i] > 0.5, "interface node {i} at {}", out.state.x[i]);
            assert!(out.state.v[i] > 0.0);
            moved += 1;
        }
    }
    assert!(moved > 0);
    // Left state untouched by the rarefaction near the left wall.
    for i in 0..n {
        if x0[i] < 0.05 {
            assert!(out.state.v[i].abs() < 1e-8);
        }
    }
}

#[test]
fn remap_never_runs_when_cadence_exceeds_cycles() {
    let cfg = RunConfig {
        remap_every: 100,
        ..config("triple-pt-2d", 5)
    };
    let out = run_ale(&cfg).unwrap();
    assert!(out.remaps.is_empty());
    assert_eq!(out.timings.remaps, 0);
    assert!(out.cycles.iter().all(|c| !c.remapped));
    assert_eq!(out.conservation.mass_drift, 0.0);
}

#[test]
fn uniform_state_is_unchanged() {
    let out = run_ale(&config("uniform", 10)).unwrap();
    let disc = problem_preset("uniform").unwrap().discretization(2, None).unwrap();
    let max_dx = out.state.x.iter().zip(&disc.mesh.coords).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(max_dx < 1e-13, "{max_dx}");
    assert!(out.state.v.iter().all(|v| v.abs() < 1e-13));
    assert_eq!(out.conservation.mass_drift, 0.0);
    assert!(out.conservation.energy_drift < 1e-14);
    assert_eq!(out.cycles.len(), 10);
}

#[test]
fn triple_point_ale_run_conserves() {
    let out = run_ale(&config("triple-pt-2d", 50)).unwrap();
    assert_eq!(out.cycles.len(), 50);
    assert_eq!(out.remaps.len(), 2);
    let c = &out.conservation;
    assert!(c.mass_drift <= 1e-11, "{}", c.mass_drift);
    assert!(c.energy_drift <= 1e-10, "{}", c.energy_drift);
    assert_eq!(c.clamped_energy_dofs, 0);
    for r in &out.remaps {
        assert!(r.newton.objective_final() <= r.newton.objective_initial());
        assert!((r.mass_after - r.mass_before).abs() <= 1e-11 * r.mass_before);
        assert!((r.energy_after - r.energy_before).abs() <= 1e-11 * r.energy_before);
    }
    let t = &out.timings;
    assert!(t.lagrange_seconds > 0.0 && t.meshopt_seconds > 0.0 && t.remap_seconds > 0.0);
    assert!(t.slack() <= 0.05, "slack {}", t.slack());
}

#[test]
fn sequential_reruns_are_bitwise_identical() {
    let cfg = RunConfig {
        remap_every: 5,
        ..config("triple-pt-2d", 10)
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_outputs(&run_ale(&cfg).unwrap(), d.path()).unwrap();
    }
    let a = std::fs::read(dirs[0].path().join("state.bin")).unwrap();
    let b = std::fs::read(dirs[1].path().join("state.bin")).unwrap();
    assert_eq!(a, b);
    let fields = read_dump(&dirs[0].path().join("state.bin")).unwrap();
    let names: Vec<&str> = fields.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["header", "t", "x", "v", "e", "rho_detj"]);
    for f in ["cycles.csv", "remaps.json", "summary.json"] {
        assert!(dirs[0].path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dirs[0].path().join("cycles.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn dump_roundtrip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    let fields = vec![
        DumpField::new("a", &[1.0, -2.5, f64::MAX]),
        DumpField::new("empty", &[]),
    ];
    write_dump(&path, &fields).unwrap();
    assert_eq!(read_dump(&path).unwrap(), fields);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_dump(&path), Err(DriverError::Dump(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(read_dump(&path), Err(DriverError::Dump(_))));
    let mut extra = bytes;
    extra.push(0);
    std::fs::write(&path, &extra).unwrap();
    assert!(matches!(read_dump(&path), Err(DriverError::Dump(_))));
}

#[test]
fn errors_carry_phase_and_exit_code() {
    let cfg = RunConfig {
        dt_min: 0.5,
        dt_max: 1.0,
        ..config("triple-pt-2d", 3)
    };
    match run_ale(&cfg) {
        Err(e @ DriverError::Numerical { cycle: 1, phase: Phase::Lagrange, .. }) => {
            assert_eq!(e.exit_code(), EXIT_NUMERICAL)
        }
        other => panic!("{other:?}"),
    }
    let err = run_ale(&config("sedov", 3)).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
    let err = run_ale(&RunConfig { remap_every: 0, ..config("uniform", 3) }).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn complexity_table_matches_expected_exponents() {
    let report = bench_complexity(&[1, 2, 3, 4], &[2, 3], QuadratureConvention::Matched).unwrap();
    for r in &report.rows {
        assert_eq!(r.pa_storage, (r.q1d as u64).pow(r.dim as u32));
        assert_eq!(r.fa_storage, ((r.p + 1) as u64).pow(2 * r.dim as u32));
    }
    assert_eq!(report.slopes.len(), 12);
    for s in &report.slopes {
        assert!(s.within, "{s:?}");
    }
    let csv = complexity_csv(&report);
    assert_eq!(csv.lines().count(), 9);
    let default = bench_complexity(&[1, 2, 3, 4], &[3], QuadratureConvention::Default).unwrap();
    assert!(default.rows.iter().all(|r| r.pa_storage == ((r.p + 2) as u64).pow(3)));
    assert!((loglog_slope(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]) - 2.0).abs() < 1e-12);
}

#[test]
fn worked_example_counts() {
    let w = worked_example().unwrap();
    assert_eq!((w.nominal_fa, w.nominal_pa), (729_000, 27_000));
    assert_eq!((w.measured_fa, w.measured_pa), (4_096_000, 125_000));
    assert!(w.nominal_ratio >= 20.0 && w.measured_ratio >= 20.0);
    assert!(w.quote.contains("729K"));
}

#[test]
fn throughput_records_and_csv() {
    let base = config("uniform", 3);
    let sizes = vec![vec![1, 1], vec![2, 2], vec![4, 4]];
    let recs = bench_throughput(&base, &[1, 2], &sizes).unwrap();
    assert!(recs.iter().all(|r| r.dof_per_s > 0.0 && r.seconds > 0.0));
    for p in [1, 2] {
        let dofs: Vec<usize> = recs.iter().filter(|r| r.p == p && r.phase == "lagrange").map(|r| r.dofs).collect();
        assert_eq!(dofs.len(), 3);
        assert!(dofs.windows(2).all(|w| w[0] < w[1]));
    }
    let csv = throughput_csv(&recs);
    assert_eq!(csv.lines().next().unwrap(), "phase,p,dofs,cycles,seconds,dof_per_s");
    assert_eq!(csv.lines().count(), recs.len() + 1);
}

#[test]
fn scaling_baseline_efficiency_is_one() {
    let rows = bench_strong_scaling(&config("uniform", 2), &[1]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].workers, 1);
    assert_eq!(rows[0].efficiency, 1.0);
    assert!(rows[0].seconds_per_cycle > 0.0);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ale-minihydro"))
}

#[test]
fn cli_exit_codes_and_config_file() {
    let st = cli().args(["run", "--preset", "nope"]).output().unwrap();
    assert_eq!(st.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&st.stderr).contains("triple-pt-2d"));
    let st = cli().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(st.status.code(), Some(3));
    let st = cli().args(["run", "--preset", "uniform", "--dt-min", "0.5"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(&file, "preset = uniform\ncycles = 50 # overridden\norder = 1\n").unwrap();
    let out = dir.path().join("out");
    let st = cli()
        .args(["run", "--config"])
        .arg(&file)
        .args(["--cycles", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out.join("cycles.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"order\": 1"));
}
