//! Energy-conserving high-order Lagrangian phase.
//!
//! Velocity lives in the continuous kinematic space, specific internal
//! energy in the discontinuous thermodynamic space. The semi-discrete system
//!
//! ```text
//! M_v dv/dt = -F·1      M_E de/dt = Fᵀ v      dx/dt = v
//! ```
//!
//! is advanced with a two-stage averaged Runge–Kutta scheme that uses the
//! same velocity in the energy and position updates, so the discrete total
//! energy is conserved up to the linear-solver residual.

mod solver;
mod state;

pub use solver::{LagrangeSolver, StepReport};
pub use state::{l2_mass_blocks, l2_point_values, project_l2, HydroState, MaterialModel, StepControls, ViscosityModel};

use thiserror::Error;

use crate::kernel_exec::ExecError;
use crate::memory_pool::MemoryError;
use crate::mesh_fespace::MeshError;
use crate::pa_operators::OperatorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydroError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("element {element} inverted at point {point} (detJ = {det:e})")]
    InvertedElement { element: usize, point: usize, det: f64 },
    #[error("time step {dt:e} fell below the minimum {dt_min:e}")]
    TimestepTooSmall { dt: f64, dt_min: f64 },
    #[error("mesh still inverted after {retries} time-step reductions")]
    RetriesExhausted { retries: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("mesh error: {0}")]
    Mesh(MeshError),
}

impl From<MeshError> for HydroError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::InvertedElement { element, point, det } => HydroError::InvertedElement { element, point, det },
            other => HydroError::Mesh(other),
        }
    }
}
