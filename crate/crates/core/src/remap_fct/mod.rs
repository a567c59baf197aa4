//! Remap: transfer of the hydrodynamic fields from the Lagrangian mesh to
//! the optimised mesh by advection in pseudo time, with the mesh moving at
//! `u = x_end - x_start`.
//!
//! Velocity uses the matrix-free continuous Galerkin path. Density and
//! internal energy density are transported as DG fields with assembled
//! upwind operators: a low-order update made monotone by graph viscosity,
//! corrected towards the high-order Galerkin update by Zalesak's limiter.

mod continuous;
mod dg;
mod remap;

pub use continuous::{
    advect_continuous, mesh_velocity, momentum_remap_step, positions_at, required_pseudo_steps, AdvectionReport,
};
pub use dg::{
    antidiffusive_fluxes, assemble_dg_advection, fct_correct, high_order_rate, high_order_update, l2_point_gradients,
    low_order_update, DgAdvection, DgConvectionPA, FieldBounds, LimiterStats, LumpedField,
};
pub use remap::{remap_all, transport_dg, DgTransport, FieldDiagnostics, RemapConfig, RemapDiagnostics};

use thiserror::Error;

use crate::kernel_exec::ExecError;
use crate::mesh_fespace::MeshError;
use crate::pa_operators::OperatorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemapError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("start and end positions differ in length ({start} vs {end})")]
    Topology { start: usize, end: usize },
    #[error("{requested} pseudo steps violate the pseudo CFL limit; {required} are required")]
    PseudoCfl { requested: usize, required: usize },
    #[error("pseudo step {dtau:e} exceeds the low-order limit {max_dtau:e}")]
    LowOrderStep { dtau: f64, max_dtau: f64 },
    #[error("invalid mesh along the path: {0}")]
    InvalidMesh(String),
    #[error("non-positive remapped density {value:e} at point {point}")]
    NonPositiveDensity { point: usize, value: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

impl From<MeshError> for RemapError {
    fn from(e: MeshError) -> Self {
        RemapError::InvalidMesh(e.to_string())
    }
}
