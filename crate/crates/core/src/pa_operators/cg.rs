use super::{check_len, LinearOperator, OperatorError};
use crate::linalg::dot;
use crate::runtime::Runtime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSummary {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Preconditioned residual norm `sqrt(rᵀ M⁻¹ r)` after each iteration.
    pub history: Vec<f64>,
}

/// Preconditioned conjugate gradients for SPD operators, optionally with a
/// Jacobi (diagonal) preconditioner. `x` holds the initial guess and
/// receives the solution. Stops once the preconditioned residual norm drops
/// below `max(rel_tol * initial, abs_tol)`.
pub fn cg_solve(
    rt: &Runtime,
    op: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    diag: Option<&[f64]>,
    opts: CgOptions,
) -> Result<CgSummary, OperatorError> {
    let n = op.height();
    check_len(n, b.len())?;
    check_len(n, x.len())?;
    if let Some(d) = diag {
        check_len(n, d.len())?;
        if let Some(bad) = d.iter().position(|&v| !(v > 0.0)) {
            return Err(OperatorError::Data(format!("non-positive diagonal entry at {bad}")));
        }
    }
    let precond = |r: &[f64], z: &mut [f64]| match diag {
        Some(d) => {
            for i in 0..n {
                z[i] = r[i] / d[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    let mut r = rt.memory.temp(n)?;
    let mut z = rt.memory.temp(n)?;
    let mut p = rt.memory.temp(n)?;
    let mut ap = rt.memory.temp(n)?;
    op.apply(x, &mut ap)?;
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    precond(&r, &mut z);
    let mut rz = dot(&r, &z);
    let initial = rz.max(0.0).sqrt();
    let target = (opts.rel_tol * initial).max(opts.abs_tol);
    let mut history = Vec::new();
    if initial <= target || initial == 0.0 {
        return Ok(CgSummary {
            iterations: 0,
            initial_residual: initial,
            final_residual: initial,
            history,
        });
    }
    p.copy_from_slice(&z);
    for it in 1..=opts.max_iter {
        op.apply(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(OperatorError::Breakdown {
                iteration: it,
                curvature: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let res = rz_new.max(0.0).sqrt();
        history.push(res);
        if res <= target {
            return Ok(CgSummary {
                iterations: it,
                initial_residual: initial,
                final_residual: res,
                history,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(OperatorError::NotConverged {
        iterations: opts.max_iter,
        final_residual: history.last().copied().unwrap_or(initial),
        residual_history: history,
    })
}

/// Restriction of an operator to unconstrained DOFs: constrained rows and
/// columns are replaced by the identity, keeping the operator SPD.
pub struct ConstrainedOperator<'a> {
    pub inner: &'a dyn LinearOperator,
    pub mask: &'a [bool],
    pub rt: &'a Runtime,
}

impl LinearOperator for ConstrainedOperator<'_> {
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn width(&self) -> usize {
        self.inner.width()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        let mut xz = self.rt.memory.temp_from(x)?;
        for (v, &m) in xz.iter_mut().zip(self.mask) {
            if m {
                *v = 0.0;
            }
        }
        self.inner.apply(&xz, y)?;
        for i in 0..y.len() {
            if self.mask[i] {
                y[i] = x[i];
            }
        }
        Ok(())
    }
}
