use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::RemapError;
use crate::mesh_fespace::{geometric_factors, interpolate_at_points, Discretization, FiniteElementSpace};
use crate::pa_operators::{cg_solve, CgOptions, ConstrainedOperator, ConvectionPA, LinearOperator, MassPA};
use crate::runtime::Runtime;

/// Mesh velocity in pseudo-time: `u = x_end - x_start`.
pub fn mesh_velocity(x_start: &[f64], x_end: &[f64]) -> Result<Vec<f64>, RemapError> {
    if x_start.len() != x_end.len() {
        return Err(RemapError::Topology {
            start: x_start.len(),
            end: x_end.len(),
        });
    }
    Ok(x_end.iter().zip(x_start).map(|(b, a)| b - a).collect())
}

/// `x(τ) = x_start + τ u`.
pub fn positions_at(x_start: &[f64], u: &[f64], tau: f64) -> Vec<f64> {
    x_start.iter().zip(u).map(|(x, v)| x + tau * v).collect()
}

/// Smallest number of pseudo steps keeping every node's displacement per
/// step within `pseudo_cfl` times its element's node spacing.
pub fn required_pseudo_steps(disc: &Discretization, x_start: &[f64], u: &[f64], pseudo_cfl: f64) -> Result<usize, RemapError> {
    if !(pseudo_cfl > 0.0) {
        return Err(RemapError::InvalidParameter(format!("pseudo CFL must be positive, got {pseudo_cfl}")));
    }
    let mesh = &disc.mesh;
    let d = disc.dim;
    let nn = mesh.num_nodes;
    let diam = mesh.element_diameters(x_start);
    let mut worst: f64 = 0.0;
    for (e, de) in diam.iter().enumerate() {
        let spacing = de / (mesh.order as f64 * (d as f64).sqrt());
        for &n in mesh.element_nodes(e) {
            let disp = (0..d).map(|c| u[c * nn + n].powi(2)).sum::<f64>().sqrt();
            worst = worst.max(disp / spacing);
        }
    }
    Ok(((worst / pseudo_cfl).ceil() as usize).max(1))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvectionReport {
    pub steps: usize,
    pub cg_iterations: usize,
}

/// Matrix-free operators of the continuous advection `M(τ) dv/dτ = K(τ) v`
/// at one pseudo time.
struct ContinuousStage {
    mass: MassPA,
    conv: ConvectionPA,
    diag: Vec<f64>,
}

impl ContinuousStage {
    fn new(rt: &Runtime, disc: &Discretization, space: &Arc<FiniteElementSpace>, x: &[f64], u: &[f64]) -> Result<Self, RemapError> {
        let geom = geometric_factors(rt.exec, &disc.h1, x, &disc.eb_h1)?;
        let uq = interpolate_at_points(rt.exec, &disc.h1, u, &disc.eb_h1)?;
        let conv = ConvectionPA::new(rt, space.clone(), disc.eb_h1.clone(), &geom, &uq)?;
        let mass = MassPA::new(rt, space.clone(), disc.eb_h1.clone(), &geom, None)?;
        let diag = mass.diagonal()?;
        Ok(Self { mass, conv, diag })
    }

    /// `M⁻¹ K v`, keeping masked DOFs fixed.
    fn rate(&self, rt: &Runtime, v: &[f64], mask: Option<&[bool]>, out: &mut [f64]) -> Result<usize, RemapError> {
        let mut rhs = vec![0.0; v.len()];
        self.conv.apply(v, &mut rhs)?;
        out.fill(0.0);
        let opts = CgOptions {
            rel_tol: 1e-13,
            abs_tol: 1e-300,
            max_iter: 2000,
        };
        let summary = match mask {
            Some(m) => {
                for (r, &fixed) in rhs.iter_mut().zip(m) {
                    if fixed {
                        *r = 0.0;
                    }
                }
                let op = ConstrainedOperator { inner: &self.mass, mask: m, rt };
                let diag: Vec<f64> = self.diag.iter().zip(m).map(|(&d, &f)| if f { 1.0 } else { d }).collect();
                cg_solve(rt, &op, &rhs, out, Some(&diag), opts)?
            }
            None => cg_solve(rt, &self.mass, &rhs, out, Some(&self.diag), opts)?,
        };
        Ok(summary.iterations)
    }
}

/// One SSP-RK2 pseudo step of `M dv/dτ = K v` from `tau` to `tau + dtau`.
#[allow(clippy::too_many_arguments)]
pub fn momentum_remap_step(
    rt: &Runtime,
    disc: &Discretization,
    space: &Arc<FiniteElementSpace>,
    v: &mut [f64],
    mask: Option<&[bool]>,
    x_start: &[f64],
    u: &[f64],
    tau: f64,
    dtau: f64,
) -> Result<usize, RemapError> {
    let n = v.len();
    let mut k = vec![0.0; n];
    let s0 = ContinuousStage::new(rt, disc, space, &positions_at(x_start, u, tau), u)?;
    let mut iters = s0.rate(rt, v, mask, &mut k)?;
    let v1: Vec<f64> = v.iter().zip(&k).map(|(a, b)| a + dtau * b).collect();
    let s1 = ContinuousStage::new(rt, disc, space, &positions_at(x_start, u, tau + dtau), u)?;
    iters += s1.rate(rt, &v1, mask, &mut k)?;
    for i in 0..n {
        v[i] = 0.5 * v[i] + 0.5 * (v1[i] + dtau * k[i]);
    }
    Ok(iters)
}

/// Advect a continuous field (scalar or vector H1) from the mesh at
/// `x_start` to the mesh at `x_end`. `n_steps = 0` picks the CFL-derived
/// count; an explicit count below it is refused.
#[allow(clippy::too_many_arguments)]
pub fn advect_continuous(
    rt: &Runtime,
    disc: &Discretization,
    space: &Arc<FiniteElementSpace>,
    field: &[f64],
    mask: Option<&[bool]>,
    x_start: &[f64],
    x_end: &[f64],
    n_steps: usize,
    pseudo_cfl: f64,
) -> Result<(Vec<f64>, AdvectionReport), RemapError> {
    if field.len() != space.vsize() {
        return Err(RemapError::InvalidParameter(format!(
            "field has {} values, space expects {}",
            field.len(),
            space.vsize()
        )));
    }
    let u = mesh_velocity(x_start, x_end)?;
    let mut out = field.to_vec();
    if u.iter().all(|v| *v == 0.0) {
        return Ok((out, AdvectionReport::default()));
    }
    let required = required_pseudo_steps(disc, x_start, &u, pseudo_cfl)?;
    let steps = if n_steps == 0 { required } else { n_steps };
    if steps < required {
        return Err(RemapError::PseudoCfl { requested: steps, required });
    }
    let dtau = 1.0 / steps as f64;
    let mut report = AdvectionReport { steps, cg_iterations: 0 };
    for s in 0..steps {
        report.cg_iterations += momentum_remap_step(rt, disc, space, &mut out, mask, x_start, &u, s as f64 * dtau, dtau)?;
    }
    Ok((out, report))
}
