//! Target-matrix mesh optimisation.
//!
//! Node positions minimise `F(x) = ∫ μ(T) + γ ∫ |x - x₀|²/d²` where
//! `T = A W⁻¹` compares the physical Jacobian `A` with a target `W`. The
//! gradient, Hessian action and Hessian diagonal are computed element by
//! element from quadrature-point data, never forming the Hessian.

mod metric;
mod newton;
mod objective;

pub use metric::{QualityMetric, ShapeMetric};
pub use newton::{newton_solve, NewtonControls, NewtonReport, NewtonStatus};
pub use objective::{
    build_targets, limiting_radius, HessianOperator, ObjectiveParts, TargetMode, TargetTransform, TmopObjective,
};

use thiserror::Error;

use crate::kernel_exec::ExecError;
use crate::mesh_fespace::MeshError;
use crate::pa_operators::OperatorError;
use crate::remap_fct::{advect_continuous, AdvectionReport, RemapError};
use crate::runtime::Runtime;
use crate::mesh_fespace::Discretization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TmopError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Exec(ExecError),
    #[error("mesh error: {0}")]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Remap(Box<RemapError>),
}

impl From<ExecError> for TmopError {
    fn from(e: ExecError) -> Self {
        TmopError::from_exec(e)
    }
}

impl From<RemapError> for TmopError {
    fn from(e: RemapError) -> Self {
        TmopError::Remap(Box::new(e))
    }
}

impl TmopError {
    /// Kernel failures raised by the objective loops mean an inverted mesh.
    pub(crate) fn from_exec(e: ExecError) -> Self {
        match e {
            ExecError::KernelFailed { message, .. } => TmopError::InvalidMesh(message),
            other => TmopError::Exec(other),
        }
    }
}

/// Transport the nodal size field `xi` from the mesh at `x_start` to the mesh
/// at `x_end` by pseudo-time advection `dξ/dτ = u·∇ξ`, `u = x_end - x_start`.
pub fn advect_adaptivity(
    rt: &Runtime,
    disc: &Discretization,
    xi: &[f64],
    x_start: &[f64],
    x_end: &[f64],
    n_pseudo_steps: usize,
    pseudo_cfl: f64,
) -> Result<(Vec<f64>, AdvectionReport), TmopError> {
    Ok(advect_continuous(rt, disc, &disc.h1_scalar, xi, None, x_start, x_end, n_pseudo_steps, pseudo_cfl)?)
}
