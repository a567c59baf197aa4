//! High-order hexahedral / quadrilateral meshes, H1 and L2 spaces, element
//! restriction and geometric factors.

mod discretization;
mod faces;
mod geometry;
mod mesh;
mod space;

pub use discretization::{BoundaryKind, Discretization};
pub use faces::{face_axis, face_local_nodes, tangential_axes, BoundaryFace, FaceTopology, InteriorFace};
pub use geometry::{geometric_factors, interpolate_at_points, ElementBasis, GeometricFactors};
pub use mesh::{cartesian_mesh, HighOrderMesh};
pub use space::{Continuity, FiniteElementSpace};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    Dimension(usize),
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("element {element} is inverted at quadrature point {point} (detJ = {det:e})")]
    InvertedElement { element: usize, point: usize, det: f64 },
    #[error("vector length {got} does not match the expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("mesh file error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Exec(#[from] crate::kernel_exec::ExecError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor_basis::TensorError),
}

/// Lexicographic (axis 0 fastest) multi-index of local node `l`.
pub fn lex_index(l: usize, n1d: usize, dim: usize) -> [usize; 3] {
    let mut idx = [0usize; 3];
    let mut r = l;
    for slot in idx.iter_mut().take(dim) {
        *slot = r % n1d;
        r /= n1d;
    }
    idx
}

pub fn lex_linear(idx: &[usize], n1d: usize) -> usize {
    idx.iter().rev().fold(0, |acc, &i| acc * n1d + i)
}
