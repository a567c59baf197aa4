//! Run orchestration, problem presets, benchmarks and output formats.
//!
//! [`run_ale`] executes Lagrange cycles and, every `remap_every` cycles,
//! optimises the mesh and remaps the state onto it. The benchmarks count
//! stored values and FLOPs per element ([`bench_complexity`]), measure
//! throughput per phase ([`bench_throughput`]) and time a fixed problem
//! against the worker count ([`bench_strong_scaling`]).

mod bench;
mod config;
mod dump;
mod presets;
mod run;

pub use bench::{
    bench_complexity, bench_strong_scaling, bench_throughput, complexity_csv, loglog_slope, scaling_csv,
    throughput_csv, worked_example, ComplexityReport, ComplexityRow, QuadratureConvention, ScalingRow, SlopeCheck,
    ThroughputRecord, WorkedExample,
};
pub use config::RunConfig;
pub use dump::{read_dump, write_dump, DumpField, DUMP_MAGIC, DUMP_VERSION};
pub use presets::{problem_preset, Preset, PRESET_NAMES};
pub use run::{
    memory_report, run_ale, write_outputs, ArenaReport, ConservationReport, CycleRecord, Phase, PhaseTimings,
    RemapRecord, RunOutcome,
};

use thiserror::Error;

use crate::lagrange_hydro::HydroError;
use crate::mesh_fespace::MeshError;
use crate::remap_fct::RemapError;
use crate::tmop_mesh_opt::TmopError;

/// Exit code for a numerical abort (inverted mesh, solver failure, ...).
pub const EXIT_NUMERICAL: i32 = 2;
/// Exit code for an invalid configuration.
pub const EXIT_CONFIG: i32 = 3;
/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cycle {cycle}, {phase} phase: {message}")]
    Numerical { cycle: usize, phase: Phase, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dump: {0}")]
    Dump(String),
}

impl DriverError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Config(_) => EXIT_CONFIG,
            DriverError::Numerical { .. } => EXIT_NUMERICAL,
            DriverError::Io(_) | DriverError::Dump(_) => EXIT_IO,
        }
    }

    pub(crate) fn numerical(cycle: usize, phase: Phase, e: impl std::fmt::Display) -> Self {
        DriverError::Numerical {
            cycle,
            phase,
            message: e.to_string(),
        }
    }
}

impl From<MeshError> for DriverError {
    fn from(e: MeshError) -> Self {
        DriverError::Config(e.to_string())
    }
}

impl From<HydroError> for DriverError {
    fn from(e: HydroError) -> Self {
        DriverError::numerical(0, Phase::Lagrange, e)
    }
}

impl From<TmopError> for DriverError {
    fn from(e: TmopError) -> Self {
        DriverError::numerical(0, Phase::MeshOpt, e)
    }
}

impl From<RemapError> for DriverError {
    fn from(e: RemapError) -> Self {
        DriverError::numerical(0, Phase::Remap, e)
    }
}
