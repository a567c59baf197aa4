//! Matrix-free high-order ALE hydrodynamics.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernel_exec`] and [`memory_pool`] provide the execution and memory
//!   substrate,
//! * [`tensor_basis`] and [`mesh_fespace`] provide 1D quadrature and basis
//!   tables, tensor contractions, meshes and finite element spaces,
//! * [`pa_operators`] implements partially assembled operators and solvers,
//! * [`lagrange_hydro`], [`tmop_mesh_opt`] and [`remap_fct`] are the three
//!   ALE phases,
//! * [`driver`] wires them into runs, benchmarks and reports.

pub mod driver;
pub mod kernel_exec;
pub mod lagrange_hydro;
pub mod linalg;
pub mod memory_pool;
pub mod mesh_fespace;
pub mod pa_operators;
pub mod remap_fct;
pub mod runtime;
pub mod tensor_basis;
pub mod tmop_mesh_opt;

pub use runtime::Runtime;
