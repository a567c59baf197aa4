use serde::{Deserialize, Serialize};

use super::HydroError;
use crate::linalg::DenseLu;
use crate::mesh_fespace::{geometric_factors, interpolate_at_points, Discretization};
use crate::runtime::Runtime;

/// Ideal-gas equation of state `p = (γ - 1) ρ e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub gamma: f64,
}

impl MaterialModel {
    pub fn new(gamma: f64) -> Result<Self, HydroError> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(HydroError::InvalidParameter(format!("gamma must exceed 1, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn pressure(&self, rho: f64, e: f64) -> f64 {
        (self.gamma - 1.0) * rho * e.max(0.0)
    }

    pub fn sound_speed(&self, e: f64) -> f64 {
        (self.gamma * (self.gamma - 1.0) * e.max(0.0)).sqrt()
    }
}

/// Tensor artificial viscosity `σ_v = ρ (q2 h² |μ| + q1 h c_s) ε(v)`,
/// active in compression only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViscosityModel {
    pub q1: f64,
    pub q2: f64,
}

impl Default for ViscosityModel {
    fn default() -> Self {
        Self { q1: 0.5, q2: 2.0 }
    }
}

impl ViscosityModel {
    pub fn none() -> Self {
        Self { q1: 0.0, q2: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControls {
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            dt_min: 1e-12,
            dt_max: 1e-2,
        }
    }
}

/// Hydrodynamic unknowns. `rho_detj` holds `ρ detJ` at every quadrature
/// point; it is invariant during the Lagrangian phase (strong mass
/// conservation) and is only rewritten by the remap.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub e: Vec<f64>,
    pub rho_detj: Vec<f64>,
    pub t: f64,
}

impl HydroState {
    /// Initial state from point functions of the position: density and
    /// energy are sampled at quadrature points (energy is then projected,
    /// mass-weighted, onto the L2 space), velocity is interpolated at nodes.
    pub fn from_functions(
        rt: &Runtime,
        disc: &Discretization,
        rho: impl Fn(&[f64]) -> f64,
        e: impl Fn(&[f64]) -> f64,
        v: impl Fn(&[f64], &mut [f64]),
    ) -> Result<Self, HydroError> {
        let d = disc.dim;
        let x = disc.mesh.coords.clone();
        let geom = geometric_factors(rt.exec, &disc.h1, &x, &disc.eb_h1)?;
        let xq = interpolate_at_points(rt.exec, &disc.h1, &x, &disc.eb_h1)?;
        let nqpt = disc.nqpt();
        let ne = disc.mesh.num_elements;
        let mut rho_detj = vec![0.0; ne * nqpt];
        let mut e_q = vec![0.0; ne * nqpt];
        let mut pt = [0.0; 3];
        for el in 0..ne {
            for q in 0..nqpt {
                for c in 0..d {
                    pt[c] = xq[(el * d + c) * nqpt + q];
                }
                let r = rho(&pt[..d]);
                if !(r > 0.0) {
                    return Err(HydroError::InvalidParameter(format!("non-positive initial density {r}")));
                }
                rho_detj[el * nqpt + q] = r * geom.detj(el, q);
                e_q[el * nqpt + q] = e(&pt[..d]);
            }
        }
        let e_l2 = project_l2(disc, &rho_detj, &e_q)?;
        let nn = disc.mesh.num_nodes;
        let mut vel = vec![0.0; d * nn];
        let mut vv = [0.0; 3];
        for n in 0..nn {
            for c in 0..d {
                pt[c] = x[c * nn + n];
            }
            v(&pt[..d], &mut vv[..d]);
            for c in 0..d {
                vel[c * nn + n] = if disc.velocity_mask[c * nn + n] { 0.0 } else { vv[c] };
            }
        }
        Ok(Self {
            x,
            v: vel,
            e: e_l2,
            rho_detj,
            t: 0.0,
        })
    }
}

/// Element mass blocks `Σ_q w_q c_q φ_i φ_j` of the L2 space, where `c_q`
/// already includes detJ.
pub fn l2_mass_blocks(disc: &Discretization, weight_detj: &[f64]) -> Vec<f64> {
    let eb = &disc.eb_l2;
    let n = eb.ndof();
    let nqpt = eb.nqpt();
    let w = eb.weights();
    let phi = l2_point_values(disc);
    let ne = disc.mesh.num_elements;
    let mut blocks = vec![0.0; ne * n * n];
    for e in 0..ne {
        let blk = &mut blocks[e * n * n..(e + 1) * n * n];
        for q in 0..nqpt {
            let c = w[q] * weight_detj[e * nqpt + q];
            let row = &phi[q * n..(q + 1) * n];
            for i in 0..n {
                let ci = c * row[i];
                for j in 0..n {
                    blk[i * n + j] += ci * row[j];
                }
            }
        }
    }
    blocks
}

/// `phi[q * ndof + i]`: L2 basis values at the quadrature points.
pub fn l2_point_values(disc: &Discretization) -> Vec<f64> {
    let eb = &disc.eb_l2;
    let (d, nd, nq) = (eb.dim, eb.nd(), eb.nq());
    let (n, nqpt) = (eb.ndof(), eb.nqpt());
    let mut phi = vec![0.0; nqpt * n];
    for q in 0..nqpt {
        let qi = crate::mesh_fespace::lex_index(q, nq, d);
        for i in 0..n {
            let ii = crate::mesh_fespace::lex_index(i, nd, d);
            phi[q * n + i] = (0..d).map(|a| eb.basis.b[qi[a] * nd + ii[a]]).product();
        }
    }
    phi
}

/// Weighted L2 projection: `M_c u = ∫ c f φ` per element, with `c_q`
/// including detJ.
pub fn project_l2(disc: &Discretization, weight_detj: &[f64], f_q: &[f64]) -> Result<Vec<f64>, HydroError> {
    let eb = &disc.eb_l2;
    let n = eb.ndof();
    let nqpt = eb.nqpt();
    let w = eb.weights();
    let phi = l2_point_values(disc);
    let blocks = l2_mass_blocks(disc, weight_detj);
    let ne = disc.mesh.num_elements;
    let mut out = vec![0.0; ne * n];
    for e in 0..ne {
        let rhs = &mut out[e * n..(e + 1) * n];
        for q in 0..nqpt {
            let c = w[q] * weight_detj[e * nqpt + q] * f_q[e * nqpt + q];
            for i in 0..n {
                rhs[i] += c * phi[q * n + i];
            }
        }
        let lu = DenseLu::factor(n, &blocks[e * n * n..(e + 1) * n * n])
            .ok_or_else(|| HydroError::InvalidParameter(format!("singular mass block in element {e}")))?;
        lu.solve(rhs);
    }
    Ok(out)
}
