use serde::{Deserialize, Serialize};

use super::continuous::{advect_continuous, mesh_velocity, positions_at, required_pseudo_steps};
use super::dg::{
    antidiffusive_fluxes, assemble_dg_advection, fct_correct, high_order_rate, high_order_update, low_order_update,
    DgAdvection, FieldBounds, LimiterStats, LumpedField,
};
use super::RemapError;
use crate::lagrange_hydro::{l2_mass_blocks, l2_point_values, HydroState};
use crate::linalg::{dot, DenseLu};
use crate::mesh_fespace::{geometric_factors, Discretization};
use crate::pa_operators::{LinearOperator, MassPA};
use crate::runtime::Runtime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemapConfig {
    /// Pseudo steps; 0 derives the count from `pseudo_cfl`.
    pub pseudo_steps: usize,
    pub pseudo_cfl: f64,
    /// Apply the FCT limiter (off gives the plain high-order update).
    pub limiter: bool,
    /// Move the kinetic energy change of the momentum remap into the
    /// internal energy so the total energy is unchanged.
    pub conserve_total_energy: bool,
}

impl Default for RemapConfig {
    fn default() -> Self {
        Self {
            pseudo_steps: 0,
            pseudo_cfl: 0.25,
            limiter: true,
            conserve_total_energy: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldDiagnostics {
    pub name: String,
    pub min_before: f64,
    pub max_before: f64,
    pub min_after: f64,
    pub max_after: f64,
    pub total_before: f64,
    pub total_after: f64,
    /// DOF values outside the stage bounds, summed over all stages.
    pub bound_violations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RemapDiagnostics {
    pub pseudo_steps: usize,
    pub step_doublings: usize,
    pub mass_before: f64,
    pub mass_after: f64,
    /// Internal energy carried by the transport alone.
    pub internal_energy_before: f64,
    pub internal_energy_after: f64,
    pub kinetic_energy_before: f64,
    pub kinetic_energy_after: f64,
    /// Kinetic energy moved into internal energy.
    pub energy_exchange: f64,
    pub limiter_fraction: f64,
    /// Largest additive shift matching the final values to the new volumes.
    pub volume_correction: f64,
    /// Elements whose projected or transported polynomial was pulled
    /// towards its mean to stay in range.
    pub squeezed_elements: usize,
    pub momentum_cg_iterations: usize,
    pub fields: Vec<FieldDiagnostics>,
}

impl RemapDiagnostics {
    pub fn mass_delta(&self) -> f64 {
        rel(self.mass_after, self.mass_before)
    }

    pub fn internal_energy_delta(&self) -> f64 {
        rel(self.internal_energy_after, self.internal_energy_before)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn kinetic_energy(rt: &Runtime, disc: &Discretization, rho_detj: &[f64], v: &[f64]) -> Result<f64, RemapError> {
    let w = disc.eb_h1.weights();
    let nqpt = w.len();
    let data: Vec<f64> = rho_detj.iter().enumerate().map(|(i, r)| w[i % nqpt] * r).collect();
    let m = MassPA::from_point_data(rt, disc.h1.clone(), disc.eb_h1.clone(), &data)?;
    let mut mv = vec![0.0; v.len()];
    m.apply(v, &mut mv)?;
    Ok(0.5 * dot(v, &mv))
}

/// `M u = Σ_q w_q s_q φ_i`, with `M` weighted by `weight_detj`.
fn project(disc: &Discretization, weight_detj: &[f64], src_q: &[f64]) -> Result<Vec<f64>, RemapError> {
    let n = disc.l2.nloc;
    let nqpt = disc.nqpt();
    let ne = disc.mesh.num_elements;
    let w = disc.eb_l2.weights();
    let phi = l2_point_values(disc);
    let blocks = l2_mass_blocks(disc, weight_detj);
    let mut out = vec![0.0; ne * n];
    for e in 0..ne {
        let rhs = &mut out[e * n..(e + 1) * n];
        for q in 0..nqpt {
            let c = w[q] * src_q[e * nqpt + q];
            for i in 0..n {
                rhs[i] += c * phi[q * n + i];
            }
        }
        DenseLu::factor(n, &blocks[e * n * n..(e + 1) * n * n])
            .ok_or_else(|| RemapError::InvalidMesh(format!("singular mass block {e}")))?
            .solve(rhs);
    }
    Ok(out)
}

/// Per-element range of point values over the element and its face
/// neighbours.
fn point_bounds(disc: &Discretization, values_q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nqpt = disc.nqpt();
    let ne = disc.mesh.num_elements;
    let own: Vec<(f64, f64)> = (0..ne).map(|e| min_max(&values_q[e * nqpt..(e + 1) * nqpt])).collect();
    let mut lo = vec![0.0; ne];
    let mut hi = vec![0.0; ne];
    for e in 0..ne {
        let (mut a, mut b) = own[e];
        for &nb in &disc.faces.neighbors[e] {
            a = a.min(own[nb].0);
            b = b.max(own[nb].1);
        }
        lo[e] = a;
        hi[e] = b;
    }
    (lo, hi)
}

/// Scale each element's deviation from its `weight_detj`-weighted mean
/// until DOF and point values lie in `[lo_e, hi_e]`. The weighted integral
/// is unchanged. Returns the number of elements touched.
fn squeeze(disc: &Discretization, weight_detj: &[f64], u: &mut [f64], lo: &[f64], hi: &[f64]) -> usize {
    let n = disc.l2.nloc;
    let nqpt = disc.nqpt();
    let w = disc.eb_l2.weights();
    let phi = l2_point_values(disc);
    let mut touched = 0;
    let mut m = vec![0.0; n];
    let mut uq = vec![0.0; nqpt];
    for e in 0..disc.mesh.num_elements {
        let ue = &mut u[e * n..(e + 1) * n];
        m.fill(0.0);
        for q in 0..nqpt {
            let c = w[q] * weight_detj[e * nqpt + q];
            for i in 0..n {
                m[i] += c * phi[q * n + i];
            }
            uq[q] = (0..n).map(|i| phi[q * n + i] * ue[i]).sum();
        }
        let mean = dot(&m, ue) / m.iter().sum::<f64>();
        let (a, b) = (lo[e].min(mean), hi[e].max(mean));
        let mut theta: f64 = 1.0;
        for &v in ue.iter().chain(&uq) {
            if v > b {
                theta = theta.min((b - mean) / (v - mean));
            } else if v < a {
                theta = theta.min((mean - a) / (mean - v));
            }
        }
        if theta < 1.0 {
            touched += 1;
            for v in ue.iter_mut() {
                *v = mean + theta * (*v - mean);
            }
        }
    }
    touched
}

fn at_points(disc: &Discretization, u: &[f64]) -> Vec<f64> {
    let n = disc.l2.nloc;
    let nqpt = disc.nqpt();
    let phi = l2_point_values(disc);
    let ne = disc.mesh.num_elements;
    let mut out = vec![0.0; ne * nqpt];
    for e in 0..ne {
        for q in 0..nqpt {
            out[e * nqpt + q] = (0..n).map(|i| phi[q * n + i] * u[e * n + i]).sum();
        }
    }
    out
}

struct StageOutcome {
    field: LumpedField,
    stats: LimiterStats,
    violations: usize,
}

fn stage(
    disc: &Discretization,
    adv: &DgAdvection,
    field: &LumpedField,
    dtau: f64,
    limiter: bool,
) -> Result<StageOutcome, RemapError> {
    let w = field.values();
    let bounds = FieldBounds::from_stencil(disc, &w);
    let low = low_order_update(adv, field, dtau)?;
    if limiter {
        let rate = high_order_rate(adv, &w);
        let fluxes = antidiffusive_fluxes(adv, &w, &rate);
        let (out, stats) = fct_correct(&low, &fluxes, &bounds, dtau);
        let violations = bounds.violations(&out.values(), 1e-12);
        Ok(StageOutcome {
            field: out,
            stats,
            violations,
        })
    } else {
        Ok(StageOutcome {
            field: high_order_update(adv, field, dtau),
            stats: LimiterStats::default(),
            violations: 0,
        })
    }
}

/// Transport of DG fields `values` (one per entry) from `x_start` to
/// `x_end` with SSP-RK2 in pseudo time. Returns the values on the new mesh,
/// the limiter statistics, the bound violations per field and the largest
/// volume correction.
pub struct DgTransport {
    pub values: Vec<Vec<f64>>,
    pub stats: LimiterStats,
    pub violations: Vec<usize>,
    pub volume_correction: f64,
    pub totals_before: Vec<f64>,
    pub totals_after: Vec<f64>,
}

pub fn transport_dg(
    rt: &Runtime,
    disc: &Discretization,
    values: &[Vec<f64>],
    x_start: &[f64],
    x_end: &[f64],
    steps: usize,
    limiter: bool,
) -> Result<DgTransport, RemapError> {
    let u = mesh_velocity(x_start, x_end)?;
    if steps == 0 {
        return Err(RemapError::InvalidParameter("pseudo step count must be positive".into()));
    }
    let dtau = 1.0 / steps as f64;
    let mut adv_a = assemble_dg_advection(rt, disc, x_start, &u)?;
    let mut fields: Vec<LumpedField> = values.iter().map(|w| LumpedField::new(adv_a.lumped.clone(), w)).collect();
    let totals_before: Vec<f64> = fields.iter().map(|f| f.total()).collect();
    let mut stats = LimiterStats::default();
    let mut violations = vec![0; values.len()];
    for s in 0..steps {
        let x_b = if s + 1 == steps {
            x_end.to_vec()
        } else {
            positions_at(x_start, &u, (s + 1) as f64 / steps as f64)
        };
        let adv_b = assemble_dg_advection(rt, disc, &x_b, &u)?;
        for (k, f) in fields.iter_mut().enumerate() {
            let s1 = stage(disc, &adv_a, f, dtau, limiter)?;
            let s2 = stage(disc, &adv_b, &s1.field, dtau, limiter)?;
            *f = LumpedField::average(f, &s2.field);
            for st in [s1.stats, s2.stats] {
                stats.fluxes += st.fluxes;
                stats.limited += st.limited;
            }
            violations[k] += s1.violations + s2.violations;
        }
        adv_a = adv_b;
    }
    // Match the transported totals against the volumes of the final mesh.
    let volume: f64 = adv_a.lumped.iter().sum();
    let mut correction: f64 = 0.0;
    let mut out = Vec::with_capacity(fields.len());
    let mut totals_after = Vec::with_capacity(fields.len());
    for f in &fields {
        let mut w = f.values();
        let delta = (f.total() - dot(&adv_a.lumped, &w)) / volume;
        for v in w.iter_mut() {
            *v += delta;
        }
        correction = correction.max(delta.abs());
        totals_after.push(dot(&adv_a.lumped, &w));
        out.push(w);
    }
    Ok(DgTransport {
        values: out,
        stats,
        violations,
        volume_correction: correction,
        totals_before,
        totals_after,
    })
}

/// Transfer the hydrodynamic state from its Lagrangian mesh to `x_new`.
/// Velocity goes through the matrix-free continuous path; density and
/// internal energy density through DG transport with FCT.
pub fn remap_all(
    rt: &Runtime,
    disc: &Discretization,
    state: &HydroState,
    x_new: &[f64],
    config: &RemapConfig,
) -> Result<(HydroState, RemapDiagnostics), RemapError> {
    let u = mesh_velocity(&state.x, x_new)?;
    let nqpt = disc.nqpt();
    let wq = disc.eb_h1.weights();
    let weighted_sum = |v: &[f64]| -> f64 { v.iter().enumerate().map(|(i, r)| wq[i % nqpt] * r).sum() };
    let e_q = at_points(disc, &state.e);
    let rhoe_detj: Vec<f64> = state.rho_detj.iter().zip(&e_q).map(|(r, e)| r * e).collect();
    let mut diag = RemapDiagnostics {
        mass_before: weighted_sum(&state.rho_detj),
        internal_energy_before: weighted_sum(&rhoe_detj),
        kinetic_energy_before: kinetic_energy(rt, disc, &state.rho_detj, &state.v)?,
        ..Default::default()
    };
    if u.iter().all(|v| *v == 0.0) {
        diag.mass_after = diag.mass_before;
        diag.internal_energy_after = diag.internal_energy_before;
        diag.kinetic_energy_after = diag.kinetic_energy_before;
        return Ok((state.clone(), diag));
    }

    // Conserved products as DG fields on the Lagrangian mesh.
    let geom0 = geometric_factors(rt.exec, &disc.h1, &state.x, &disc.eb_h1)?;
    // Projecting data that jumps inside an element overshoots; squeeze
    // back to the neighbourhood range so the density stays positive.
    let mut rho = project(disc, &geom0.det, &state.rho_detj)?;
    let mut rhoe = project(disc, &geom0.det, &rhoe_detj)?;
    let rho_src: Vec<f64> = state.rho_detj.iter().zip(&geom0.det).map(|(a, b)| a / b).collect();
    let rhoe_src: Vec<f64> = rhoe_detj.iter().zip(&geom0.det).map(|(a, b)| a / b).collect();
    let (lo, hi) = point_bounds(disc, &rho_src);
    diag.squeezed_elements = squeeze(disc, &geom0.det, &mut rho, &lo, &hi);
    let (lo, hi) = point_bounds(disc, &rhoe_src);
    diag.squeezed_elements += squeeze(disc, &geom0.det, &mut rhoe, &lo, &hi);

    let required = required_pseudo_steps(disc, &state.x, &u, config.pseudo_cfl)?;
    let mut steps = if config.pseudo_steps == 0 { required } else { config.pseudo_steps };
    if steps < required {
        return Err(RemapError::PseudoCfl { requested: steps, required });
    }
    let fields = vec![rho.clone(), rhoe.clone()];
    let transport = loop {
        match transport_dg(rt, disc, &fields, &state.x, x_new, steps, config.limiter) {
            Ok(t) => break t,
            Err(RemapError::LowOrderStep { .. }) if diag.step_doublings < 6 => {
                steps *= 2;
                diag.step_doublings += 1;
            }
            Err(e) => return Err(e),
        }
    };
    diag.pseudo_steps = steps;
    diag.limiter_fraction = transport.stats.fraction();
    diag.volume_correction = transport.volume_correction;

    let (v_new, adv_report) =
        advect_continuous(rt, disc, &disc.h1, &state.v, Some(&disc.velocity_mask), &state.x, x_new, steps, config.pseudo_cfl)?;
    diag.momentum_cg_iterations = adv_report.cg_iterations;

    let geom1 = geometric_factors(rt.exec, &disc.h1, x_new, &disc.eb_h1)?;
    // DOFs are bounded by the limiter; keep point values inside the DOF range.
    let n = disc.l2.nloc;
    let mut values = transport.values.clone();
    for v in values.iter_mut() {
        let (lo, hi): (Vec<f64>, Vec<f64>) = v.chunks(n).map(min_max).unzip();
        diag.squeezed_elements += squeeze(disc, &geom1.det, v, &lo, &hi);
    }
    let rho_q = at_points(disc, &values[0]);
    let rhoe_q = at_points(disc, &values[1]);
    let mut rho_detj = vec![0.0; rho_q.len()];
    for (i, r) in rho_q.iter().enumerate() {
        if !(*r > 0.0) {
            return Err(RemapError::NonPositiveDensity { point: i, value: *r });
        }
        rho_detj[i] = r * geom1.det[i];
    }
    let rhoe_detj_new: Vec<f64> = rhoe_q.iter().zip(&geom1.det).map(|(a, b)| a * b).collect();
    let mut e_new = project(disc, &rho_detj, &rhoe_detj_new)?;

    diag.mass_after = weighted_sum(&rho_detj);
    diag.internal_energy_after = weighted_sum(&rhoe_detj_new);
    diag.kinetic_energy_after = kinetic_energy(rt, disc, &rho_detj, &v_new)?;
    if config.conserve_total_energy {
        let shift = (diag.kinetic_energy_before - diag.kinetic_energy_after) / diag.mass_after;
        for e in e_new.iter_mut() {
            *e += shift;
        }
        diag.energy_exchange = diag.kinetic_energy_before - diag.kinetic_energy_after;
    }
    for (k, name) in ["density", "energy_density"].iter().enumerate() {
        let before = [&rho, &rhoe][k];
        let (min_before, max_before) = min_max(before);
        let (min_after, max_after) = min_max(&values[k]);
        diag.fields.push(FieldDiagnostics {
            name: name.to_string(),
            min_before,
            max_before,
            min_after,
            max_after,
            total_before: transport.totals_before[k],
            total_after: transport.totals_after[k],
            bound_violations: transport.violations[k],
        });
    }
    let new_state = HydroState {
        x: x_new.to_vec(),
        v: v_new,
        e: e_new,
        rho_detj,
        t: state.t,
    };
    Ok((new_state, diag))
}
