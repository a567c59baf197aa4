use serde::Serialize;

use super::config::RunConfig;
use super::run::run_ale;
use super::DriverError;
use crate::kernel_exec::ExecPlace;
use crate::mesh_fespace::{cartesian_mesh, geometric_factors, BoundaryKind, Discretization};
use crate::pa_operators::assembled::assemble_mass;
use crate::pa_operators::{LinearOperator, MassPA};
use crate::runtime::Runtime;
use crate::tensor_basis::flops;

/// Points per direction used by the complexity benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureConvention {
    /// `Q1D = p + 1`, the same growth rate as the DOFs per direction. The
    /// slopes are fitted against `p + 1`.
    Matched,
    /// The `Q1D = p + 2` rule the solvers use.
    Default,
}

impl QuadratureConvention {
    pub fn q1d(self, p: usize) -> usize {
        match self {
            QuadratureConvention::Matched => p + 1,
            QuadratureConvention::Default => p + 2,
        }
    }
}

/// Per-element counts of the scalar mass operator on one element.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub dim: usize,
    pub p: usize,
    pub q1d: usize,
    pub pa_storage: u64,
    pub pa_assembly_flops: u64,
    pub pa_apply_flops: u64,
    pub fa_storage: u64,
    pub fa_assembly_flops: u64,
    pub fa_apply_flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeCheck {
    pub quantity: &'static str,
    pub dim: usize,
    pub measured: f64,
    pub expected: f64,
    /// Within 10% of `expected`.
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub convention: QuadratureConvention,
    pub rows: Vec<ComplexityRow>,
    pub slopes: Vec<SlopeCheck>,
}

impl ComplexityReport {
    pub fn all_within(&self) -> bool {
        self.slopes.iter().all(|s| s.within)
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn element_counts(dim: usize, p: usize, convention: QuadratureConvention) -> Result<ComplexityRow, DriverError> {
    let rt = Runtime::sequential();
    let q1d = convention.q1d(p);
    let mesh = cartesian_mesh(dim, &vec![1; dim], &vec![1.0; dim], p)?;
    let disc = Discretization::new(mesh, Some(q1d), BoundaryKind::Free)?;
    let geom = geometric_factors(ExecPlace::Sequential, &disc.h1, &disc.mesh.coords, &disc.eb_h1)?;
    let op_err = |e: crate::pa_operators::OperatorError| DriverError::Config(e.to_string());

    flops::reset();
    let pa = MassPA::new(&rt, disc.h1_scalar.clone(), disc.eb_h1.clone(), &geom, None).map_err(op_err)?;
    let pa_assembly_flops = flops::count();
    let x: Vec<f64> = (0..disc.h1_scalar.vsize()).map(|i| 1.0 + i as f64 * 1e-3).collect();
    let mut y = vec![0.0; x.len()];
    flops::reset();
    pa.apply(&x, &mut y).map_err(op_err)?;
    let pa_apply_flops = flops::count();

    flops::reset();
    let fa = assemble_mass(&disc.h1_scalar, &disc.eb_h1, pa.point_data()).map_err(op_err)?;
    let fa_assembly_flops = flops::count();
    flops::reset();
    fa.matvec(&x, &mut y);
    let fa_apply_flops = flops::count();
    Ok(ComplexityRow {
        dim,
        p,
        q1d,
        pa_storage: pa.stored_values() as u64,
        pa_assembly_flops,
        pa_apply_flops,
        fa_storage: fa.nnz() as u64,
        fa_assembly_flops,
        fa_apply_flops,
    })
}

/// Stored values and multiply-adds per element of PA and FA mass operators,
/// with log-log slopes against `p + 1` next to the expected exponents.
pub fn bench_complexity(
    orders: &[usize],
    dims: &[usize],
    convention: QuadratureConvention,
) -> Result<ComplexityReport, DriverError> {
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &d in dims {
        let dim_rows = orders
            .iter()
            .map(|&p| element_counts(d, p, convention))
            .collect::<Result<Vec<_>, _>>()?;
        let n: Vec<f64> = dim_rows.iter().map(|r| (r.p + 1) as f64).collect();
        let df = d as f64;
        let quantities: [(&'static str, f64, fn(&ComplexityRow) -> u64); 6] = [
            ("pa_storage", df, |r| r.pa_storage),
            ("pa_assembly", df, |r| r.pa_assembly_flops),
            ("pa_apply", df + 1.0, |r| r.pa_apply_flops),
            ("fa_storage", 2.0 * df, |r| r.fa_storage),
            ("fa_assembly", 3.0 * df, |r| r.fa_assembly_flops),
            ("fa_apply", 2.0 * df, |r| r.fa_apply_flops),
        ];
        if dim_rows.len() >= 2 {
            for (quantity, expected, get) in quantities {
                let y: Vec<f64> = dim_rows.iter().map(|r| get(r) as f64).collect();
                let measured = loglog_slope(&n, &y);
                slopes.push(SlopeCheck {
                    quantity,
                    dim: d,
                    measured,
                    expected,
                    within: (measured - expected).abs() <= 0.1 * expected,
                });
            }
        }
        rows.extend(dim_rows);
    }
    Ok(ComplexityReport {
        convention,
        rows,
        slopes,
    })
}

pub fn complexity_csv(report: &ComplexityReport) -> String {
    let mut s = String::from("dim,p,q1d,pa_storage,pa_assembly_flops,pa_apply_flops,fa_storage,fa_assembly_flops,fa_apply_flops\n");
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.dim, r.p, r.q1d, r.pa_storage, r.pa_assembly_flops, r.pa_apply_flops, r.fa_storage, r.fa_assembly_flops, r.fa_apply_flops
        ));
    }
    s
}

/// Stored values of a 1000-element, d = 3, p = 3 mass operator, by the
/// `p^d` / `p^{2d}` rule of thumb and by the measured counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkedExample {
    pub elements: u64,
    pub dim: usize,
    pub p: usize,
    pub nominal_fa: u64,
    pub nominal_pa: u64,
    pub nominal_ratio: f64,
    /// Dense element blocks, `(p+1)^{2d}` per element.
    pub measured_fa: u64,
    /// Quadrature-point data at the default `Q1D = p + 2`.
    pub measured_pa: u64,
    pub measured_ratio: f64,
    pub quote: &'static str,
}

pub fn worked_example() -> Result<WorkedExample, DriverError> {
    let (elements, dim, p) = (1000u64, 3usize, 3usize);
    let row = element_counts(dim, p, QuadratureConvention::Default)?;
    let nominal_fa = elements * (p as u64).pow(2 * dim as u32);
    let nominal_pa = elements * (p as u64).pow(dim as u32);
    let measured_fa = elements * row.fa_storage;
    let measured_pa = elements * row.pa_storage;
    Ok(WorkedExample {
        elements,
        dim,
        p,
        nominal_fa,
        nominal_pa,
        nominal_ratio: nominal_fa as f64 / nominal_pa as f64,
        measured_fa,
        measured_pa,
        measured_ratio: measured_fa as f64 / measured_pa as f64,
        quote: "around 729K floating point values",
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRecord {
    /// `lagrange`, `meshopt`, `remap` or `total`.
    pub phase: &'static str,
    pub p: usize,
    pub dofs: usize,
    pub cycles: usize,
    pub seconds: f64,
    pub dof_per_s: f64,
}

fn record(phase: &'static str, p: usize, dofs: usize, cycles: usize, seconds: f64) -> ThroughputRecord {
    let seconds = seconds.max(1e-9);
    ThroughputRecord {
        phase,
        p,
        dofs,
        cycles,
        seconds,
        dof_per_s: (dofs * cycles) as f64 / seconds,
    }
}

/// One ALE run per (order, size) of `base`; the last cycle triggers a
/// remap so every phase is timed. `sizes` are zone counts per direction.
pub fn bench_throughput(
    base: &RunConfig,
    orders: &[usize],
    sizes: &[Vec<usize>],
) -> Result<Vec<ThroughputRecord>, DriverError> {
    let mut out = Vec::new();
    for &p in orders {
        for zones in sizes {
            let cfg = RunConfig {
                order: p,
                zones: Some(zones.clone()),
                remap_every: base.cycles,
                t_final: None,
                out: None,
                ..base.clone()
            };
            let run = run_ale(&cfg)?;
            let t = &run.timings;
            let steps = t.lagrange_steps;
            out.push(record("lagrange", p, run.dofs, steps, t.lagrange_seconds));
            if t.remaps > 0 {
                out.push(record("meshopt", p, run.dofs, t.remaps, t.meshopt_seconds));
                out.push(record("remap", p, run.dofs, t.remaps, t.remap_seconds));
            }
            out.push(record("total", p, run.dofs, steps, t.total_seconds));
        }
    }
    Ok(out)
}

pub fn throughput_csv(records: &[ThroughputRecord]) -> String {
    let mut s = String::from("phase,p,dofs,cycles,seconds,dof_per_s\n");
    for r in records {
        s.push_str(&format!("{},{},{},{},{:e},{:e}\n", r.phase, r.p, r.dofs, r.cycles, r.seconds, r.dof_per_s));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub workers: usize,
    pub seconds_per_cycle: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

/// Time per cycle of `base` on the threaded backend for each worker count.
/// A 1-worker baseline is always measured first.
pub fn bench_strong_scaling(base: &RunConfig, workers: &[usize]) -> Result<Vec<ScalingRow>, DriverError> {
    let mut counts = vec![1];
    counts.extend(workers.iter().copied().filter(|&w| w > 1));
    counts.dedup();
    let mut rows: Vec<ScalingRow> = Vec::with_capacity(counts.len());
    for w in counts {
        let exec = ExecPlace::Threaded(std::num::NonZeroUsize::new(w).expect("positive worker count"));
        let cfg = RunConfig {
            exec,
            out: None,
            ..base.clone()
        };
        let run = run_ale(&cfg)?;
        let per_cycle = run.timings.total_seconds.max(1e-9) / run.cycles.len().max(1) as f64;
        let base_time = rows.first().map_or(per_cycle, |r| r.seconds_per_cycle);
        let speedup = base_time / per_cycle;
        rows.push(ScalingRow {
            workers: w,
            seconds_per_cycle: per_cycle,
            speedup,
            efficiency: speedup / w as f64,
        });
    }
    Ok(rows)
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut s = String::from("workers,seconds_per_cycle,speedup,efficiency\n");
    for r in rows {
        s.push_str(&format!("{},{:e},{},{}\n", r.workers, r.seconds_per_cycle, r.speedup, r.efficiency));
    }
    s
}
