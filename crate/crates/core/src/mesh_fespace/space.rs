use super::{HighOrderMesh, MeshError};
use crate::kernel_exec::{for_each_chunk_mut, ExecPlace};
use crate::tensor_basis::{nodal_points, Basis1D, QuadratureRule1D, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    H1,
    L2,
}

/// Scalar or vector finite element space on a [`HighOrderMesh`].
///
/// Global (L-vector) layout is by component: `c * ndofs + dof`.
/// Element (E-vector) layout is `((e * vdim + c) * nloc + l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteElementSpace {
    pub continuity: Continuity,
    pub dim: usize,
    pub order: usize,
    pub vdim: usize,
    pub ndofs: usize,
    pub num_elements: usize,
    pub nloc: usize,
    dof_map: Vec<usize>,
}

impl FiniteElementSpace {
    /// Continuous space sharing the mesh nodes (order = mesh order).
    pub fn h1(mesh: &HighOrderMesh, vdim: usize) -> Result<Self, MeshError> {
        if vdim == 0 {
            return Err(MeshError::Invalid("vdim must be positive".into()));
        }
        Ok(Self {
            continuity: Continuity::H1,
            dim: mesh.dim,
            order: mesh.order,
            vdim,
            ndofs: mesh.num_nodes,
            num_elements: mesh.num_elements,
            nloc: mesh.nodes_per_element(),
            dof_map: mesh.elem_nodes.clone(),
        })
    }

    /// Discontinuous space of the given order with element-local numbering.
    pub fn l2(mesh: &HighOrderMesh, order: usize, vdim: usize) -> Result<Self, MeshError> {
        if vdim == 0 {
            return Err(MeshError::Invalid("vdim must be positive".into()));
        }
        let nloc = (order + 1).pow(mesh.dim as u32);
        Ok(Self {
            continuity: Continuity::L2,
            dim: mesh.dim,
            order,
            vdim,
            ndofs: mesh.num_elements * nloc,
            num_elements: mesh.num_elements,
            nloc,
            dof_map: (0..mesh.num_elements * nloc).collect(),
        })
    }

    pub fn nd1d(&self) -> usize {
        self.order + 1
    }

    pub fn nodes_1d(&self) -> Vec<f64> {
        nodal_points(self.order)
    }

    pub fn basis(&self, quad: &QuadratureRule1D) -> Result<Basis1D, TensorError> {
        Basis1D::new(&self.nodes_1d(), quad)
    }

    pub fn vsize(&self) -> usize {
        self.vdim * self.ndofs
    }

    pub fn esize(&self) -> usize {
        self.num_elements * self.vdim * self.nloc
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        &self.dof_map[e * self.nloc..(e + 1) * self.nloc]
    }

    pub fn with_vdim(&self, vdim: usize) -> Self {
        let mut s = self.clone();
        s.vdim = vdim;
        s
    }

    /// Element restriction: E-vector copies of the global values.
    pub fn gather(&self, place: ExecPlace, l: &[f64], e: &mut [f64]) {
        debug_assert_eq!(l.len(), self.vsize());
        debug_assert_eq!(e.len(), self.esize());
        let (nloc, vdim, ndofs) = (self.nloc, self.vdim, self.ndofs);
        for_each_chunk_mut(place, e, vdim * nloc, |el, chunk| {
            let dofs = &self.dof_map[el * nloc..(el + 1) * nloc];
            for c in 0..vdim {
                for (k, &d) in dofs.iter().enumerate() {
                    chunk[c * nloc + k] = l[c * ndofs + d];
                }
            }
        });
    }

    /// Transpose of [`gather`](Self::gather): adds element contributions
    /// into `l` in ascending element order.
    pub fn scatter_add(&self, e: &[f64], l: &mut [f64]) {
        debug_assert_eq!(l.len(), self.vsize());
        let (nloc, vdim, ndofs) = (self.nloc, self.vdim, self.ndofs);
        for el in 0..self.num_elements {
            let dofs = &self.dof_map[el * nloc..(el + 1) * nloc];
            for c in 0..vdim {
                let base = (el * vdim + c) * nloc;
                for (k, &d) in dofs.iter().enumerate() {
                    l[c * ndofs + d] += e[base + k];
                }
            }
        }
    }

    /// Number of elements sharing each scalar DOF.
    pub fn multiplicity(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.ndofs];
        for &d in &self.dof_map {
            m[d] += 1.0;
        }
        m
    }
}
