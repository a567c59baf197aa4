use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::RunConfig;
use super::dump::{write_dump, DumpField};
use super::presets::problem_preset;
use super::DriverError;
use crate::lagrange_hydro::{HydroState, LagrangeSolver, StepControls, ViscosityModel};
use crate::memory_pool::ArenaKind;
use crate::mesh_fespace::{geometric_factors, Discretization};
use crate::remap_fct::{remap_all, RemapConfig, RemapDiagnostics};
use crate::runtime::Runtime;
use crate::tmop_mesh_opt::{build_targets, newton_solve, NewtonControls, NewtonReport, QualityMetric, TargetMode, TmopObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Lagrange,
    MeshOpt,
    Remap,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Lagrange => "lagrange",
            Phase::MeshOpt => "meshopt",
            Phase::Remap => "remap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub total: f64,
    pub remapped: bool,
    /// Internal energy DOFs clamped to zero this step.
    pub clamped_energy_dofs: usize,
    /// Temporary-pool growth events so far.
    pub pool_growth_events: u64,
    pub pool_peak_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemapRecord {
    pub cycle: usize,
    pub gamma: f64,
    pub newton: NewtonReport,
    pub remap: RemapDiagnostics,
    pub mass_before: f64,
    pub mass_after: f64,
    pub energy_before: f64,
    pub energy_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    /// Mesh, spaces, initial state and operator setup; not part of `total`.
    pub setup_seconds: f64,
    pub lagrange_seconds: f64,
    pub meshopt_seconds: f64,
    pub remap_seconds: f64,
    pub total_seconds: f64,
    pub lagrange_steps: usize,
    pub remaps: usize,
}

impl PhaseTimings {
    /// Fraction of the cycle-loop wall time spent outside the three phases.
    pub fn slack(&self) -> f64 {
        let phases = self.lagrange_seconds + self.meshopt_seconds + self.remap_seconds;
        if self.total_seconds > 0.0 {
            (self.total_seconds - phases).max(0.0) / self.total_seconds
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConservationReport {
    pub mass_initial: f64,
    pub mass_final: f64,
    pub mass_drift: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub energy_drift: f64,
    /// Largest per-stage semi-discrete energy balance of any step.
    pub max_energy_balance: f64,
    /// Clamping adds energy, so a nonzero count explains an energy drift.
    pub clamped_energy_dofs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArenaReport {
    pub arena: &'static str,
    pub current: u64,
    pub peak: u64,
    pub capacity: u64,
    pub alloc_count: u64,
    pub release_count: u64,
    pub growth_events: u64,
}

pub fn memory_report(rt: &Runtime) -> Vec<ArenaReport> {
    [(ArenaKind::Permanent, "permanent"), (ArenaKind::TemporaryPool, "temporary")]
        .into_iter()
        .map(|(kind, name)| {
            let s = rt.memory.stats(kind);
            ArenaReport {
                arena: name,
                current: s.current_bytes,
                peak: s.peak_bytes,
                capacity: s.pool_capacity_bytes,
                alloc_count: s.allocation_count,
                release_count: s.release_count,
                growth_events: s.growth_events,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub dim: usize,
    pub num_elements: usize,
    pub dofs: usize,
    #[serde(skip)]
    pub state: HydroState,
    pub cycles: Vec<CycleRecord>,
    pub remaps: Vec<RemapRecord>,
    pub timings: PhaseTimings,
    pub conservation: ConservationReport,
    pub memory: Vec<ArenaReport>,
}

impl RunOutcome {
    pub fn dump_fields(&self) -> Vec<DumpField> {
        vec![
            DumpField::new("header", &[self.dim as f64, self.config.order as f64, self.num_elements as f64]),
            DumpField::new("t", &[self.state.t]),
            DumpField::new("x", &self.state.x),
            DumpField::new("v", &self.state.v),
            DumpField::new("e", &self.state.e),
            DumpField::new("rho_detj", &self.state.rho_detj),
        ]
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn min_det(rt: &Runtime, disc: &Discretization, x: &[f64]) -> f64 {
    geometric_factors(rt.exec, &disc.h1, x, &disc.eb_h1)
        .map(|g| g.det.iter().copied().fold(f64::INFINITY, f64::min))
        .unwrap_or(f64::NEG_INFINITY)
}

/// Lagrange cycles with periodic mesh optimisation and remap.
pub fn run_ale(config: &RunConfig) -> Result<RunOutcome, DriverError> {
    config.validate()?;
    let start = Instant::now();
    let preset = problem_preset(&config.preset)?;
    let rt = Runtime::new(config.exec);
    let disc = preset.discretization(config.order, config.zones.as_deref())?;
    let mut state = preset.initial_state(&rt, &disc)?;
    let controls = StepControls {
        cfl: config.cfl,
        dt_min: config.dt_min,
        dt_max: config.dt_max,
    };
    let lagrange_err = |c: usize| move |e| DriverError::numerical(c, Phase::Lagrange, e);
    let mut solver = LagrangeSolver::new(&rt, disc.clone(), preset.material(), ViscosityModel::default(), controls, &state)
        .map_err(lagrange_err(0))?;
    solver.cg.rel_tol = config.cg_rel_tol;

    let mut timings = PhaseTimings {
        setup_seconds: start.elapsed().as_secs_f64(),
        ..Default::default()
    };
    let start = Instant::now();
    let mass0 = solver.total_mass(&state);
    let energy0 = solver.total_energy(&state).map_err(lagrange_err(0))?;
    let mut cycles = Vec::with_capacity(config.cycles);
    let mut remaps = Vec::new();
    let mut max_balance: f64 = 0.0;
    for c in 1..=config.cycles {
        if config.t_final.is_some_and(|t| state.t >= t) {
            break;
        }
        let t0 = Instant::now();
        let report = solver.step(&mut state, config.t_final).map_err(lagrange_err(c))?;
        timings.lagrange_seconds += t0.elapsed().as_secs_f64();
        timings.lagrange_steps += 1;
        max_balance = max_balance.max(report.energy_balance[0]).max(report.energy_balance[1]);

        let due = config.ale
            && (c % config.remap_every == 0
                || config.min_det_trigger.is_some_and(|th| min_det(&rt, &disc, &state.x) < th));
        if due {
            remaps.push(ale_step(&rt, &disc, &mut solver, &mut state, config, c, &mut timings)?);
        }
        let kinetic = solver.kinetic_energy(&state.v).map_err(lagrange_err(c))?;
        let internal = solver.internal_energy(&state.e);
        let pool = rt.memory.stats(ArenaKind::TemporaryPool);
        cycles.push(CycleRecord {
            cycle: c,
            t: state.t,
            dt: report.dt,
            mass: solver.total_mass(&state),
            kinetic,
            internal,
            total: kinetic + internal,
            remapped: due,
            clamped_energy_dofs: report.clamped_energy_dofs,
            pool_growth_events: pool.growth_events,
            pool_peak_bytes: pool.peak_bytes,
        });
    }
    let mass1 = solver.total_mass(&state);
    let energy1 = solver.total_energy(&state).map_err(lagrange_err(cycles.len()))?;
    timings.total_seconds = start.elapsed().as_secs_f64();
    Ok(RunOutcome {
        config: config.clone(),
        dim: disc.dim,
        num_elements: disc.mesh.num_elements,
        dofs: disc.total_dofs(),
        state,
        cycles,
        remaps,
        timings,
        conservation: ConservationReport {
            mass_initial: mass0,
            mass_final: mass1,
            mass_drift: rel(mass1, mass0),
            energy_initial: energy0,
            energy_final: energy1,
            energy_drift: rel(energy1, energy0),
            max_energy_balance: max_balance,
            clamped_energy_dofs: solver.clamp_events,
        },
        memory: memory_report(&rt),
    })
}

fn ale_step(
    rt: &Runtime,
    disc: &std::sync::Arc<Discretization>,
    solver: &mut LagrangeSolver,
    state: &mut HydroState,
    config: &RunConfig,
    cycle: usize,
    timings: &mut PhaseTimings,
) -> Result<RemapRecord, DriverError> {
    let opt_err = |e| DriverError::numerical(cycle, Phase::MeshOpt, e);
    let remap_err = |e: &dyn fmt::Display| DriverError::numerical(cycle, Phase::Remap, e);
    let t0 = Instant::now();
    let targets = build_targets(rt, disc, &state.x, TargetMode::IdealUniform, None).map_err(opt_err)?;
    let mut objective = TmopObjective::new(rt, disc.clone(), QualityMetric::shape_for_dim(disc.dim), targets, &state.x)
        .map_err(opt_err)?;
    let gamma = objective.calibrate_gamma(cycle as u64).map_err(opt_err)?;
    let mut x_new = state.x.clone();
    let controls = NewtonControls {
        max_newton: config.tmop_iters,
        ..NewtonControls::default()
    };
    let newton = newton_solve(&objective, &mut x_new, &controls).map_err(opt_err)?;
    drop(objective);
    timings.meshopt_seconds += t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mass_before = solver.total_mass(state);
    let energy_before = solver.total_energy(state).map_err(|e| remap_err(&e))?;
    let remap_config = RemapConfig {
        pseudo_steps: config.remap_steps,
        pseudo_cfl: config.pseudo_cfl,
        limiter: config.limiter,
        conserve_total_energy: true,
    };
    let (next, diag) = remap_all(rt, disc, state, &x_new, &remap_config).map_err(|e| remap_err(&e))?;
    *state = next;
    solver.rebuild_masses(state).map_err(|e| remap_err(&e))?;
    let mass_after = solver.total_mass(state);
    let energy_after = solver.total_energy(state).map_err(|e| remap_err(&e))?;
    timings.remap_seconds += t0.elapsed().as_secs_f64();
    timings.remaps += 1;
    Ok(RemapRecord {
        cycle,
        gamma,
        newton,
        remap: diag,
        mass_before,
        mass_after,
        energy_before,
        energy_after,
    })
}

/// `cycles.csv`, `remaps.json`, `summary.json`, `state.bin` and, with
/// `mem_report`, `memory.json` in `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), DriverError> {
    std::fs::create_dir_all(dir)?;
    let mut csv = String::from("cycle,t,dt,mass,kinetic,internal,total,remapped,clamped\n");
    for r in &outcome.cycles {
        csv.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}\n",
            r.cycle, r.t, r.dt, r.mass, r.kinetic, r.internal, r.total, r.remapped as u8, r.clamped_energy_dofs
        ));
    }
    std::fs::write(dir.join("cycles.csv"), csv)?;
    let json = |v: &dyn erased::Json| v.to_json();
    std::fs::write(dir.join("remaps.json"), json(&outcome.remaps))?;
    std::fs::write(dir.join("summary.json"), json(outcome))?;
    if outcome.config.mem_report {
        std::fs::write(dir.join("memory.json"), json(&outcome.memory))?;
    }
    write_dump(&dir.join("state.bin"), &outcome.dump_fields())?;
    std::io::stdout().flush()?;
    Ok(())
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string_pretty(self).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"))
        }
    }
}
