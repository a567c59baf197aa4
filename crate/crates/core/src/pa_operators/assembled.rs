//! Traditional full assembly into sparse matrices.
//!
//! Element matrices are formed entry by entry with explicit quadrature loops
//! over products of 1D basis values, without sum factorisation. The result
//! serves as an oracle for the partially assembled operators and as the
//! baseline of the complexity comparison.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::{check_len, LinearOperator, OperatorError, FULL_ASSEMBLY_MAX_DOFS};
use crate::mesh_fespace::{lex_index, ElementBasis, FiniteElementSpace};
use crate::tensor_basis::flops;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *vals.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            y[i] = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
        flops::add(self.nnz() as u64);
    }

    /// Matrix-market coordinate text (1-based indices).
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "%%MatrixMarket matrix coordinate real general");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (j, v) in cols.iter().zip(vals) {
                let _ = writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v);
            }
        }
        s
    }

    pub fn write_coordinate(&self, path: &Path) -> Result<(), OperatorError> {
        let mut f = std::fs::File::create(path).map_err(|e| OperatorError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(self.to_coordinate_text().as_bytes())
            .map_err(|e| OperatorError::Io(format!("{}: {e}", path.display())))
    }
}

impl LinearOperator for CsrMatrix {
    fn height(&self) -> usize {
        self.nrows
    }

    fn width(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        check_len(self.ncols, x.len())?;
        check_len(self.nrows, y.len())?;
        self.matvec(x, y);
        Ok(())
    }
}

/// Dense reference tables: `phi[q * ndof + i]` and
/// `dphi[(k * nqpt + q) * ndof + i]`, each an explicit product of 1D values.
struct PointTables {
    nqpt: usize,
    ndof: usize,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

fn point_tables(eb: &ElementBasis) -> PointTables {
    let (d, nd, nq) = (eb.dim, eb.nd(), eb.nq());
    let (ndof, nqpt) = (eb.ndof(), eb.nqpt());
    let mut phi = vec![0.0; nqpt * ndof];
    let mut dphi = vec![0.0; d * nqpt * ndof];
    for q in 0..nqpt {
        let qi = lex_index(q, nq, d);
        for i in 0..ndof {
            let ii = lex_index(i, nd, d);
            phi[q * ndof + i] = (0..d).map(|a| eb.basis.b[qi[a] * nd + ii[a]]).product();
            for k in 0..d {
                dphi[(k * nqpt + q) * ndof + i] = (0..d)
                    .map(|a| {
                        let t = if a == k { &eb.basis.g } else { &eb.basis.b };
                        t[qi[a] * nd + ii[a]]
                    })
                    .product();
            }
        }
    }
    PointTables { nqpt, ndof, phi, dphi }
}

fn guard(dofs: usize) -> Result<(), OperatorError> {
    if dofs > FULL_ASSEMBLY_MAX_DOFS {
        Err(OperatorError::TooLarge {
            dofs,
            limit: FULL_ASSEMBLY_MAX_DOFS,
        })
    } else {
        Ok(())
    }
}

/// Assemble a component-wise (block-diagonal) operator from a scalar
/// element matrix builder.
fn assemble_blockwise(
    space: &FiniteElementSpace,
    eb: &ElementBasis,
    entry: impl Fn(&PointTables, usize, usize, usize) -> f64,
) -> Result<CsrMatrix, OperatorError> {
    guard(space.vsize())?;
    let t = point_tables(eb);
    let n = t.ndof;
    let mut trip = Vec::with_capacity(space.num_elements * space.vdim * n * n);
    let mut elmat = vec![0.0; n * n];
    for e in 0..space.num_elements {
        for i in 0..n {
            for j in 0..n {
                elmat[i * n + j] = entry(&t, e, i, j);
            }
        }
        flops::add((n * n * t.nqpt) as u64);
        let dofs = space.element_dofs(e);
        for c in 0..space.vdim {
            for i in 0..n {
                for j in 0..n {
                    trip.push((c * space.ndofs + dofs[i], c * space.ndofs + dofs[j], elmat[i * n + j]));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(space.vsize(), space.vsize(), trip))
}

/// Mass matrix from point data `D_q` (see [`super::MassPA`]).
pub fn assemble_mass(space: &FiniteElementSpace, eb: &ElementBasis, data: &[f64]) -> Result<CsrMatrix, OperatorError> {
    check_len(space.num_elements * eb.nqpt(), data.len())?;
    assemble_blockwise(space, eb, |t, e, i, j| {
        (0..t.nqpt)
            .map(|q| data[e * t.nqpt + q] * t.phi[q * t.ndof + i] * t.phi[q * t.ndof + j])
            .sum()
    })
}

/// Diffusion matrix from d×d point data (see [`super::DiffusionPA`]).
pub fn assemble_diffusion(space: &FiniteElementSpace, eb: &ElementBasis, data: &[f64]) -> Result<CsrMatrix, OperatorError> {
    let d = eb.dim;
    check_len(space.num_elements * eb.nqpt() * d * d, data.len())?;
    assemble_blockwise(space, eb, |t, e, i, j| {
        let mut s = 0.0;
        for q in 0..t.nqpt {
            for k in 0..d {
                for l in 0..d {
                    s += data[(e * t.nqpt + q) * d * d + k * d + l]
                        * t.dphi[(k * t.nqpt + q) * t.ndof + i]
                        * t.dphi[(l * t.nqpt + q) * t.ndof + j];
                }
            }
        }
        s
    })
}

/// Convection matrix `∫ φ_i u·∇φ_j` from d-vector point data.
pub fn assemble_convection(space: &FiniteElementSpace, eb: &ElementBasis, data: &[f64]) -> Result<CsrMatrix, OperatorError> {
    let d = eb.dim;
    check_len(space.num_elements * eb.nqpt() * d, data.len())?;
    assemble_blockwise(space, eb, |t, e, i, j| {
        let mut s = 0.0;
        for q in 0..t.nqpt {
            for k in 0..d {
                s += data[(e * t.nqpt + q) * d + k] * t.phi[q * t.ndof + i] * t.dphi[(k * t.nqpt + q) * t.ndof + j];
            }
        }
        s
    })
}

/// Rectangular force matrix (H1 vector rows, L2 columns).
pub fn assemble_force(
    h1: &FiniteElementSpace,
    l2: &FiniteElementSpace,
    eb_h1: &ElementBasis,
    eb_l2: &ElementBasis,
    data: &[f64],
) -> Result<CsrMatrix, OperatorError> {
    let d = eb_h1.dim;
    guard(h1.vsize().max(l2.vsize()))?;
    check_len(h1.num_elements * eb_h1.nqpt() * d * d, data.len())?;
    let th = point_tables(eb_h1);
    let tl = point_tables(eb_l2);
    let nq = th.nqpt;
    let mut trip = Vec::new();
    for e in 0..h1.num_elements {
        let hd = h1.element_dofs(e);
        let ld = l2.element_dofs(e);
        for c in 0..d {
            for i in 0..th.ndof {
                for j in 0..tl.ndof {
                    let mut s = 0.0;
                    for q in 0..nq {
                        for k in 0..d {
                            s += data[(e * nq + q) * d * d + c * d + k]
                                * th.dphi[(k * nq + q) * th.ndof + i]
                                * tl.phi[q * tl.ndof + j];
                        }
                    }
                    trip.push((c * h1.ndofs + hd[i], ld[j], s));
                }
            }
        }
        flops::add((d * th.ndof * tl.ndof * nq * d) as u64);
    }
    Ok(CsrMatrix::from_triplets(h1.vsize(), l2.vsize(), trip))
}
