use std::sync::Arc;

use super::{ElementBasis, FaceTopology, FiniteElementSpace, HighOrderMesh, MeshError};
use crate::tensor_basis::{gauss_legendre, QuadratureRule1D};

/// Velocity boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryKind {
    /// `v·n = 0` on every axis-aligned boundary face.
    #[default]
    Walls,
    /// No constraint.
    Free,
}

/// Everything the three ALE phases share: mesh, spaces, one quadrature rule
/// and the face topology.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<HighOrderMesh>,
    pub dim: usize,
    pub order: usize,
    pub quad: QuadratureRule1D,
    /// Kinematic space (H1, order p, vdim = dim).
    pub h1: Arc<FiniteElementSpace>,
    /// Scalar H1 space on the same nodes.
    pub h1_scalar: Arc<FiniteElementSpace>,
    /// Thermodynamic space (L2, order p - 1).
    pub l2: Arc<FiniteElementSpace>,
    pub eb_h1: ElementBasis,
    pub eb_l2: ElementBasis,
    pub faces: Arc<FaceTopology>,
    pub boundary_nodes: Vec<bool>,
    /// Constrained velocity DOFs (H1 vector layout).
    pub velocity_mask: Vec<bool>,
}

impl Discretization {
    /// `nq1d` defaults to `order + 2`.
    pub fn new(mesh: HighOrderMesh, nq1d: Option<usize>, boundary: BoundaryKind) -> Result<Self, MeshError> {
        let order = mesh.order;
        let dim = mesh.dim;
        let quad = gauss_legendre(nq1d.unwrap_or(order + 2))?;
        let h1 = Arc::new(FiniteElementSpace::h1(&mesh, dim)?);
        let h1_scalar = Arc::new(FiniteElementSpace::h1(&mesh, 1)?);
        let l2 = Arc::new(FiniteElementSpace::l2(&mesh, order - 1, 1)?);
        let eb_h1 = ElementBasis::new(dim, h1.basis(&quad)?);
        let eb_l2 = ElementBasis::new(dim, l2.basis(&quad)?);
        let faces = FaceTopology::build(&mesh, &quad.points)?;
        let boundary_nodes = faces.boundary_nodes(&mesh);
        let velocity_mask = match boundary {
            BoundaryKind::Walls => faces.wall_mask(&mesh, &mesh.coords),
            BoundaryKind::Free => vec![false; h1.vsize()],
        };
        Ok(Self {
            mesh: Arc::new(mesh),
            dim,
            order,
            quad,
            h1,
            h1_scalar,
            l2,
            eb_h1,
            eb_l2,
            faces: Arc::new(faces),
            boundary_nodes,
            velocity_mask,
        })
    }

    pub fn nqpt(&self) -> usize {
        self.eb_h1.nqpt()
    }

    /// Number of kinematic plus thermodynamic unknowns.
    pub fn total_dofs(&self) -> usize {
        self.h1.vsize() + self.l2.vsize()
    }
}
