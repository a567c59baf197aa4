use super::{FiniteElementSpace, MeshError};
use crate::kernel_exec::{launch_chunked, ExecPlace, GridConfig};
use crate::linalg;
use crate::tensor_basis::{tensor_apply, Axis, Basis1D};

/// A 1D basis table lifted to a `dim`-dimensional tensor element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementBasis {
    pub dim: usize,
    pub basis: Basis1D,
}

impl ElementBasis {
    pub fn new(dim: usize, basis: Basis1D) -> Self {
        Self { dim, basis }
    }

    pub fn nd(&self) -> usize {
        self.basis.nd()
    }

    pub fn nq(&self) -> usize {
        self.basis.nq()
    }

    pub fn ndof(&self) -> usize {
        self.nd().pow(self.dim as u32)
    }

    pub fn nqpt(&self) -> usize {
        self.nq().pow(self.dim as u32)
    }

    pub fn tmp_len(&self) -> usize {
        2 * self.nd().max(self.nq()).pow(self.dim as u32)
    }

    /// Axis factors: `B` on every axis except `deriv`, which gets `G`.
    pub fn axes(&self, deriv: Option<usize>) -> [Axis<'_>; 3] {
        let (nq, nd) = (self.nq(), self.nd());
        let b = Axis::new(&self.basis.b, nq, nd);
        let g = Axis::new(&self.basis.g, nq, nd);
        let mut axes = [b; 3];
        if let Some(k) = deriv {
            axes[k] = g;
        }
        axes
    }

    /// Values (or the `deriv` reference derivative) at all quadrature points.
    pub fn eval(&self, deriv: Option<usize>, input: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let axes = self.axes(deriv);
        tensor_apply(&axes[..self.dim], false, input, out, tmp, false);
    }

    /// Adjoint of [`eval`](Self::eval), accumulated into `out`.
    pub fn eval_t(&self, deriv: Option<usize>, input: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let axes = self.axes(deriv);
        tensor_apply(&axes[..self.dim], true, input, out, tmp, true);
    }

    /// Tensor quadrature weights, axis 0 fastest.
    pub fn weights(&self) -> Vec<f64> {
        let w = &self.basis.weights;
        let nq = w.len();
        (0..self.nqpt())
            .map(|q| {
                let mut r = q;
                let mut p = 1.0;
                for _ in 0..self.dim {
                    p *= w[r % nq];
                    r /= nq;
                }
                p
            })
            .collect()
    }
}

/// Jacobians `J[i][j] = ∂x_i/∂ξ_j` (row-major), inverses and determinants at
/// every quadrature point of every element.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricFactors {
    pub dim: usize,
    pub nqpt: usize,
    pub num_elements: usize,
    pub jac: Vec<f64>,
    pub inv_jac: Vec<f64>,
    pub det: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GeometricFactors {
    pub fn j(&self, e: usize, q: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        let i = (e * self.nqpt + q) * dd;
        &self.jac[i..i + dd]
    }

    pub fn inv(&self, e: usize, q: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        let i = (e * self.nqpt + q) * dd;
        &self.inv_jac[i..i + dd]
    }

    pub fn detj(&self, e: usize, q: usize) -> f64 {
        self.det[e * self.nqpt + q]
    }

    /// Quadrature weight times detJ.
    pub fn wdet(&self, e: usize, q: usize) -> f64 {
        self.weights[q] * self.det[e * self.nqpt + q]
    }

    pub fn min_det(&self) -> f64 {
        self.det.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        (0..self.num_elements)
            .map(|e| (0..self.nqpt).map(|q| self.wdet(e, q)).sum::<f64>())
            .sum()
    }
}

/// Geometric factors of the mesh positions `positions` (an H1 vector field
/// with `vdim = dim`). Any non-positive determinant is an error.
pub fn geometric_factors(
    place: ExecPlace,
    h1: &FiniteElementSpace,
    positions: &[f64],
    eb: &ElementBasis,
) -> Result<GeometricFactors, MeshError> {
    let d = h1.dim;
    if h1.vdim != d || positions.len() != h1.vsize() {
        return Err(MeshError::Length {
            expected: d * h1.ndofs,
            got: positions.len(),
        });
    }
    let ne = h1.num_elements;
    let nloc = h1.nloc;
    let nqpt = eb.nqpt();
    let dd = d * d;
    let mut epos = vec![0.0; h1.esize()];
    h1.gather(place, positions, &mut epos);
    let chunk = nqpt * (2 * dd + 1);
    let mut out = vec![0.0; ne * chunk];
    let grid = GridConfig::new(ne, &[eb.nq(), eb.nq()])?;
    launch_chunked(place, grid, &mut out, chunk, |ctx, o| {
        let e = ctx.team_index();
        let tmp = ctx.scratch(eb.tmp_len())?;
        let g = ctx.scratch(nqpt)?;
        let (jac, rest) = o.split_at_mut(nqpt * dd);
        let (inv, det) = rest.split_at_mut(nqpt * dd);
        for c in 0..d {
            let xc = &epos[(e * d + c) * nloc..(e * d + c + 1) * nloc];
            for k in 0..d {
                eb.eval(Some(k), xc, g, tmp);
                for q in 0..nqpt {
                    jac[q * dd + c * d + k] = g[q];
                }
            }
        }
        for q in 0..nqpt {
            det[q] = linalg::inverse(d, &jac[q * dd..(q + 1) * dd], &mut inv[q * dd..(q + 1) * dd]);
        }
        Ok(())
    })?;
    let mut gf = GeometricFactors {
        dim: d,
        nqpt,
        num_elements: ne,
        jac: Vec::with_capacity(ne * nqpt * dd),
        inv_jac: Vec::with_capacity(ne * nqpt * dd),
        det: Vec::with_capacity(ne * nqpt),
        weights: eb.weights(),
    };
    for o in out.chunks(chunk) {
        gf.jac.extend_from_slice(&o[..nqpt * dd]);
        gf.inv_jac.extend_from_slice(&o[nqpt * dd..2 * nqpt * dd]);
        gf.det.extend_from_slice(&o[2 * nqpt * dd..]);
    }
    for e in 0..ne {
        for q in 0..nqpt {
            let det = gf.det[e * nqpt + q];
            if !(det > 0.0) {
                return Err(MeshError::InvertedElement { element: e, point: q, det });
            }
        }
    }
    Ok(gf)
}

/// Values of the field `l` at every quadrature point, laid out as
/// `((e * vdim + c) * nqpt + q)`.
pub fn interpolate_at_points(
    place: ExecPlace,
    space: &FiniteElementSpace,
    l: &[f64],
    eb: &ElementBasis,
) -> Result<Vec<f64>, MeshError> {
    if l.len() != space.vsize() {
        return Err(MeshError::Length {
            expected: space.vsize(),
            got: l.len(),
        });
    }
    let (vdim, nloc, nqpt) = (space.vdim, space.nloc, eb.nqpt());
    let mut ev = vec![0.0; space.esize()];
    space.gather(place, l, &mut ev);
    let mut out = vec![0.0; space.num_elements * vdim * nqpt];
    let grid = GridConfig::new(space.num_elements, &[eb.nq()])?;
    launch_chunked(place, grid, &mut out, vdim * nqpt, |ctx, o| {
        let e = ctx.team_index();
        let tmp = ctx.scratch(eb.tmp_len())?;
        for c in 0..vdim {
            let x = &ev[(e * vdim + c) * nloc..(e * vdim + c + 1) * nloc];
            eb.eval(None, x, &mut o[c * nqpt..(c + 1) * nqpt], tmp);
        }
        Ok(())
    })?;
    Ok(out)
}
