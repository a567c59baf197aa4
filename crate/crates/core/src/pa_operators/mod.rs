//! Partially assembled finite element operators.
//!
//! Each operator stores only quadrature-point data `D` and applies
//! `A = Gᵀ Bᵀ D B G` (element restriction `G`, basis evaluation `B`) with
//! sum-factorised contractions. Full assembly ([`assembled`]) is provided as
//! an independent oracle and for the complexity comparison.

pub mod assembled;
mod cg;
mod convection;
mod diffusion;
mod force;
mod mass;

pub use cg::{cg_solve, CgOptions, CgSummary, ConstrainedOperator};
pub use convection::ConvectionPA;
pub use diffusion::DiffusionPA;
pub use force::{ForcePA, ForceTranspose};
pub use mass::MassPA;

use thiserror::Error;

use crate::kernel_exec::{launch_chunked, ExecError, GridConfig, LaunchContext};
use crate::memory_pool::MemoryError;
use crate::mesh_fespace::{FiniteElementSpace, MeshError};
use crate::runtime::Runtime;

/// Largest operator dimension accepted by full assembly.
pub const FULL_ASSEMBLY_MAX_DOFS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("vector length {got} does not match the expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("full assembly of {dofs} dofs exceeds the limit of {limit}")]
    TooLarge { dofs: usize, limit: usize },
    #[error("CG did not converge in {iterations} iterations (final residual {final_residual:e})")]
    NotConverged {
        iterations: usize,
        final_residual: f64,
        residual_history: Vec<f64>,
    },
    #[error("CG breakdown at iteration {iteration}: operator is not positive definite (pᵀAp = {curvature:e})")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("incompatible data: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// A linear map `y = A x`.
pub trait LinearOperator: Sync {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), OperatorError>;
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), OperatorError> {
    if expected == got {
        Ok(())
    } else {
        Err(OperatorError::Length { expected, got })
    }
}

/// Gather `x` on `input`, run `kernel` per element into an E-vector of
/// `output`, then scatter-add into the zeroed `y`.
pub(crate) fn element_apply<F>(
    rt: &Runtime,
    input: &FiniteElementSpace,
    output: &FiniteElementSpace,
    threads: usize,
    x: &[f64],
    y: &mut [f64],
    kernel: F,
) -> Result<(), OperatorError>
where
    F: Fn(&LaunchContext<'_>, usize, &[f64], &mut [f64]) -> Result<(), ExecError> + Sync,
{
    check_len(input.vsize(), x.len())?;
    check_len(output.vsize(), y.len())?;
    let mut ex = rt.memory.temp(input.esize())?;
    input.gather(rt.exec, x, &mut ex);
    let mut ey = rt.memory.temp(output.esize())?;
    let in_chunk = input.vdim * input.nloc;
    let ex_ref: &[f64] = &ex;
    let grid = GridConfig::new(output.num_elements, &[threads, threads])?;
    launch_chunked(rt.exec, grid, &mut ey, output.vdim * output.nloc, |ctx, ye| {
        let e = ctx.team_index();
        kernel(ctx, e, &ex_ref[e * in_chunk..(e + 1) * in_chunk], ye)
    })?;
    y.fill(0.0);
    output.scatter_add(&ey, y);
    Ok(())
}

/// Element-wise square (or mixed product) of basis tables for diagonals.
pub(crate) fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}
