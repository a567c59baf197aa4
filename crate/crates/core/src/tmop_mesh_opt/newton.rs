use serde::{Deserialize, Serialize};

use super::objective::{HessianOperator, TmopObjective};
use super::TmopError;
use crate::linalg::{dot, norm2};
use crate::pa_operators::{cg_solve, CgOptions, ConstrainedOperator, OperatorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonControls {
    pub max_newton: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub cg_rel_tol: f64,
    pub cg_max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonControls {
    fn default() -> Self {
        Self {
            max_newton: 50,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            cg_rel_tol: 1e-8,
            cg_max_iter: 100,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NewtonStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub status: NewtonStatus,
    pub iterations: usize,
    /// Objective at the initial and every accepted iterate.
    pub objective_history: Vec<f64>,
    pub gradient_initial: f64,
    pub gradient_final: f64,
    pub min_det_initial: f64,
    pub min_det_final: f64,
    pub cg_iterations: usize,
    pub fallback_steps: usize,
}

impl NewtonReport {
    pub fn objective_initial(&self) -> f64 {
        self.objective_history[0]
    }

    pub fn objective_final(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::NAN)
    }
}

/// Minimise the objective over the free nodes by Newton's method with a
/// Jacobi-preconditioned CG inner solve and a backtracking line search that
/// rejects invalid meshes. `x` is updated in place.
pub fn newton_solve(obj: &TmopObjective, x: &mut [f64], controls: &NewtonControls) -> Result<NewtonReport, TmopError> {
    let rt = obj.runtime().clone();
    let mask = obj.fixed_mask().to_vec();
    let n = x.len();
    let mut f = obj.objective(x)?;
    if !f.is_finite() {
        return Err(TmopError::InvalidMesh("initial mesh is not valid".into()));
    }
    let min_det_initial = obj.min_det(x)?;
    let mut g = vec![0.0; n];
    let masked_gradient = |x: &[f64], g: &mut [f64]| -> Result<f64, TmopError> {
        obj.gradient(x, g)?;
        for (v, &m) in g.iter_mut().zip(&mask) {
            if m {
                *v = 0.0;
            }
        }
        Ok(norm2(g))
    };
    let mut gnorm = masked_gradient(x, &mut g)?;
    let gradient_initial = gnorm;
    let tol = (controls.rel_tol * gradient_initial).max(controls.abs_tol);
    let mut history = vec![f];
    let mut cg_total = 0;
    let mut fallback = 0;
    let mut status = NewtonStatus::MaxIterations;
    let mut iterations = 0;
    let mut dx = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let noise = 64.0 * f64::EPSILON * (obj.target_volume() + f.abs());
    loop {
        if gnorm <= tol {
            status = NewtonStatus::Converged;
            break;
        }
        if iterations == controls.max_newton {
            break;
        }
        let mut diag = obj.hessian_diagonal(x)?;
        for (v, &m) in diag.iter_mut().zip(&mask) {
            if m {
                *v = 1.0;
            }
        }
        let diag_ok = diag.iter().all(|v| *v > 0.0);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        dx.fill(0.0);
        let hess = HessianOperator { objective: obj, x };
        let op = ConstrainedOperator { inner: &hess, mask: &mask, rt: &rt };
        let opts = CgOptions {
            rel_tol: controls.cg_rel_tol,
            abs_tol: 0.0,
            max_iter: controls.cg_max_iter,
        };
        let solved = cg_solve(&rt, &op, &rhs, &mut dx, diag_ok.then_some(&diag[..]), opts);
        let use_newton = match solved {
            Ok(s) => {
                cg_total += s.iterations;
                true
            }
            // A partial CG solution is still usable if it points downhill.
            Err(OperatorError::NotConverged { iterations, .. }) => {
                cg_total += iterations;
                dot(&dx, &g) < 0.0
            }
            Err(OperatorError::Breakdown { iteration, .. }) => {
                cg_total += iteration;
                false
            }
            Err(e) => return Err(e.into()),
        };
        if !use_newton {
            fallback += 1;
            for i in 0..n {
                dx[i] = if mask[i] { 0.0 } else { -g[i] / diag[i].abs().max(f64::MIN_POSITIVE) };
            }
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=controls.max_halvings {
            for i in 0..n {
                trial[i] = x[i] + alpha * dx[i];
            }
            let ft = obj.objective(&trial)?;
            // Near the minimum F stops resolving progress; the gradient
            // norm decides inside the rounding band.
            let better = ft.is_finite() && (ft < f || (ft <= f + noise && masked_gradient(&trial, &mut gt)? < gnorm));
            if better {
                x.copy_from_slice(&trial);
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            status = NewtonStatus::LineSearchFailed;
            break;
        }
        iterations += 1;
        history.push(f);
        gnorm = masked_gradient(x, &mut g)?;
    }
    Ok(NewtonReport {
        status,
        iterations,
        objective_history: history,
        gradient_initial,
        gradient_final: gnorm,
        min_det_initial,
        min_det_final: obj.min_det(x)?,
        cg_iterations: cg_total,
        fallback_steps: fallback,
    })
}
