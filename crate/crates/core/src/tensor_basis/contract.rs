use super::TensorError;

/// Per-thread count of multiply-add operations issued by tensor kernels.
pub mod flops {
    use std::cell::Cell;

    thread_local! {
        static COUNT: Cell<u64> = const { Cell::new(0) };
    }

    pub fn add(n: u64) {
        COUNT.with(|c| c.set(c.get() + n));
    }

    pub fn reset() {
        COUNT.with(|c| c.set(0));
    }

    pub fn count() -> u64 {
        COUNT.with(|c| c.get())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::Shape(format!(
                "{rows}x{cols} matrix given {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn axis(&self) -> Axis<'_> {
        Axis {
            m: &self.data,
            rows: self.rows,
            cols: self.cols,
        }
    }
}

/// Dense tensor with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl ElementTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(TensorError::Shape(format!("dims {dims:?} given {} values", data.len())));
        }
        Ok(Self { dims, data })
    }
}

/// Contract one axis of `input` (shape `dims`) with a row-major matrix.
///
/// Forward: the axis extent must equal `cols` and becomes `rows`.
/// Transpose: the axis extent must equal `rows` and becomes `cols`.
/// With `accumulate` the result is added to `out`.
#[allow(clippy::too_many_arguments)]
pub fn contract_axis(
    m: &[f64],
    rows: usize,
    cols: usize,
    transpose: bool,
    input: &[f64],
    dims: &[usize],
    axis: usize,
    out: &mut [f64],
    accumulate: bool,
) {
    let pre: usize = dims[..axis].iter().product();
    let post: usize = dims[axis + 1..].iter().product();
    let (nin, nout) = if transpose { (rows, cols) } else { (cols, rows) };
    debug_assert_eq!(dims[axis], nin);
    let out = &mut out[..pre * nout * post];
    if !accumulate {
        out.fill(0.0);
    }
    for k in 0..post {
        for r in 0..nout {
            let o = &mut out[pre * (r + nout * k)..pre * (r + 1 + nout * k)];
            for c in 0..nin {
                let a = if transpose { m[c * cols + r] } else { m[r * cols + c] };
                if a == 0.0 {
                    continue;
                }
                let i = &input[pre * (c + nin * k)..pre * (c + 1 + nin * k)];
                for (ov, iv) in o.iter_mut().zip(i) {
                    *ov += a * iv;
                }
            }
        }
    }
    flops::add((pre * nin * nout * post) as u64);
}

/// Contract `tensor` along `dim` with `matrix` (`matrix.cols` must match).
pub fn contract_dim(matrix: &DenseMatrix, tensor: &ElementTensor, dim: usize) -> Result<ElementTensor, TensorError> {
    contract_checked(matrix, tensor, dim, false)
}

/// Contract `tensor` along `dim` with `matrixᵀ` (`matrix.rows` must match).
pub fn contract_dim_transpose(
    matrix: &DenseMatrix,
    tensor: &ElementTensor,
    dim: usize,
) -> Result<ElementTensor, TensorError> {
    contract_checked(matrix, tensor, dim, true)
}

fn contract_checked(m: &DenseMatrix, t: &ElementTensor, dim: usize, transpose: bool) -> Result<ElementTensor, TensorError> {
    if dim >= t.dims.len() {
        return Err(TensorError::Shape(format!("axis {dim} out of range for rank {}", t.dims.len())));
    }
    let (nin, nout) = if transpose { (m.rows, m.cols) } else { (m.cols, m.rows) };
    if t.dims[dim] != nin {
        return Err(TensorError::Shape(format!(
            "axis {dim} has extent {} but the matrix expects {nin}",
            t.dims[dim]
        )));
    }
    let mut dims = t.dims.clone();
    dims[dim] = nout;
    let mut data = vec![0.0; dims.iter().product()];
    contract_axis(&m.data, m.rows, m.cols, transpose, &t.data, &t.dims, dim, &mut data, false);
    Ok(ElementTensor { dims, data })
}

/// One factor of a tensor-product operator.
#[derive(Debug, Clone, Copy)]
pub struct Axis<'a> {
    pub m: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> Axis<'a> {
    pub fn new(m: &'a [f64], rows: usize, cols: usize) -> Self {
        Self { m, rows, cols }
    }
}

/// Scratch length needed by [`tensor_apply`] for these axes.
pub fn tensor_tmp_len(axes: &[Axis<'_>]) -> usize {
    2 * axes.iter().map(|a| a.rows.max(a.cols)).product::<usize>()
}

/// Apply `A_{d-1} ⊗ ... ⊗ A_0` (forward) or its transpose by successive
/// single-axis contractions. Axis 0 is the fastest index. The transpose
/// variant adds into `out` when `accumulate` is set.
pub fn tensor_apply(
    axes: &[Axis<'_>],
    transpose: bool,
    input: &[f64],
    out: &mut [f64],
    tmp: &mut [f64],
    accumulate: bool,
) {
    let d = axes.len();
    let mut dims: Vec<usize> = axes.iter().map(|a| if transpose { a.rows } else { a.cols }).collect();
    let half = tmp.len() / 2;
    let (ta, tb) = tmp.split_at_mut(half);
    let mut src_is_input = true;
    let mut src_in_a = false;
    for (a, ax) in axes.iter().enumerate() {
        let last = a + 1 == d;
        let nout = if transpose { ax.cols } else { ax.rows };
        let mut next = dims.clone();
        next[a] = nout;
        let (src, dst): (&[f64], &mut [f64]) = if src_is_input {
            (input, if last { &mut *out } else { &mut *ta })
        } else if src_in_a {
            (&*ta, if last { &mut *out } else { &mut *tb })
        } else {
            (&*tb, if last { &mut *out } else { &mut *ta })
        };
        contract_axis(ax.m, ax.rows, ax.cols, transpose, src, &dims, a, dst, last && accumulate);
        if !last {
            src_in_a = src_is_input || !src_in_a;
            src_is_input = false;
        }
        dims = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_basis::{gauss_legendre, Basis1D};

    #[test]
    fn contract_dim_example() {
        let m = DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let t = ElementTensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let r = contract_dim(&m, &t, 0).unwrap();
        assert_eq!(r.data, vec![3.0, 8.0]);
        let bad = DenseMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(contract_dim(&bad, &t, 0), Err(TensorError::Shape(_))));
        assert!(contract_dim(&m, &t, 2).is_err());
    }

    #[test]
    fn transpose_is_adjoint() {
        // <A x, y> == <x, Aᵀ y> over a 3-axis tensor.
        let quad = gauss_legendre(5).unwrap();
        let basis = Basis1D::of_order(3, &quad).unwrap();
        let (nd, nq) = (basis.nd(), basis.nq());
        let axes = [
            Axis::new(&basis.b, nq, nd),
            Axis::new(&basis.g, nq, nd),
            Axis::new(&basis.b, nq, nd),
        ];
        let x: Vec<f64> = (0..nd.pow(3)).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..nq.pow(3)).map(|i| ((i * 3) % 13) as f64 * 0.1).collect();
        let mut tmp = vec![0.0; tensor_tmp_len(&axes)];
        let mut ax = vec![0.0; nq.pow(3)];
        tensor_apply(&axes, false, &x, &mut ax, &mut tmp, false);
        let mut aty = vec![0.0; nd.pow(3)];
        tensor_apply(&axes, true, &y, &mut aty, &mut tmp, false);
        let l: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let r: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((l - r).abs() < 1e-10 * l.abs().max(1.0));
    }

    #[test]
    fn sum_factorization_matches_direct_sum() {
        let quad = gauss_legendre(4).unwrap();
        let basis = Basis1D::of_order(2, &quad).unwrap();
        let (nd, nq) = (basis.nd(), basis.nq());
        let x: Vec<f64> = (0..nd * nd).map(|i| (i as f64).sin()).collect();
        let axes = [Axis::new(&basis.g, nq, nd), Axis::new(&basis.b, nq, nd)];
        let mut tmp = vec![0.0; tensor_tmp_len(&axes)];
        let mut y = vec![0.0; nq * nq];
        tensor_apply(&axes, false, &x, &mut y, &mut tmp, false);
        for q1 in 0..nq {
            for q0 in 0..nq {
                let mut s = 0.0;
                for i1 in 0..nd {
                    for i0 in 0..nd {
                        s += basis.g[q0 * nd + i0] * basis.b[q1 * nd + i1] * x[i0 + nd * i1];
                    }
                }
                assert!((y[q0 + nq * q1] - s).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn flop_counter_counts_contractions() {
        flops::reset();
        let m = DenseMatrix::new(3, 2, vec![1.0; 6]).unwrap();
        let t = ElementTensor::new(vec![2, 4], vec![1.0; 8]).unwrap();
        contract_dim(&m, &t, 0).unwrap();
        assert_eq!(flops::count(), 3 * 2 * 4);
    }
}
