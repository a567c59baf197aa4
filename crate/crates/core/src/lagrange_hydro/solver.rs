use std::sync::Arc;

use serde::Serialize;

use super::state::{l2_mass_blocks, HydroState, MaterialModel, StepControls, ViscosityModel};
use super::HydroError;
use crate::kernel_exec::{launch_chunked, GridConfig};
use crate::linalg::{self, DenseLu};
use crate::mesh_fespace::{geometric_factors, Discretization};
use crate::pa_operators::{cg_solve, CgOptions, ConstrainedOperator, ForcePA, LinearOperator, MassPA};
use crate::runtime::Runtime;

/// Time-step reductions attempted when a stage inverts an element.
pub const MAX_DT_RETRIES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub dt: f64,
    pub dt_estimate: f64,
    pub retries: usize,
    pub cg_iterations: [usize; 2],
    /// Per-stage semi-discrete energy balance `|vᵀ(F·1) - 1ᵀ(Fᵀv)|`,
    /// relative to the magnitude of the terms.
    pub energy_balance: [f64; 2],
    pub clamped_energy_dofs: usize,
}

struct Stage {
    force: ForcePA,
    f1: Vec<f64>,
    accel: Vec<f64>,
    dt_estimate: f64,
    cg_iterations: usize,
}

/// Lagrangian phase operator for one discretization.
pub struct LagrangeSolver {
    rt: Runtime,
    disc: Arc<Discretization>,
    pub material: MaterialModel,
    pub viscosity: ViscosityModel,
    pub controls: StepControls,
    pub cg: CgOptions,
    mass_v: MassPA,
    mass_v_diag: Vec<f64>,
    mass_e_lu: Vec<DenseLu>,
    mass_e_rowsum: Vec<f64>,
    pub clamp_events: usize,
}

impl LagrangeSolver {
    pub fn new(
        rt: &Runtime,
        disc: Arc<Discretization>,
        material: MaterialModel,
        viscosity: ViscosityModel,
        controls: StepControls,
        state: &HydroState,
    ) -> Result<Self, HydroError> {
        if !(controls.cfl > 0.0) || !(controls.dt_min > 0.0) || !(controls.dt_max >= controls.dt_min) {
            return Err(HydroError::InvalidParameter(format!("invalid step controls {controls:?}")));
        }
        if viscosity.q1 < 0.0 || viscosity.q2 < 0.0 {
            return Err(HydroError::InvalidParameter("viscosity coefficients must be non-negative".into()));
        }
        let (mass_v, mass_v_diag, mass_e_lu, mass_e_rowsum) = Self::masses(rt, &disc, state)?;
        Ok(Self {
            rt: rt.clone(),
            disc,
            material,
            viscosity,
            controls,
            cg: CgOptions {
                rel_tol: 1e-12,
                abs_tol: 0.0,
                max_iter: 1000,
            },
            mass_v,
            mass_v_diag,
            mass_e_lu,
            mass_e_rowsum,
            clamp_events: 0,
        })
    }

    #[allow(clippy::type_complexity)]
    fn masses(
        rt: &Runtime,
        disc: &Arc<Discretization>,
        state: &HydroState,
    ) -> Result<(MassPA, Vec<f64>, Vec<DenseLu>, Vec<f64>), HydroError> {
        let nqpt = disc.nqpt();
        let ne = disc.mesh.num_elements;
        if state.rho_detj.len() != ne * nqpt {
            return Err(HydroError::InvalidParameter("density data has the wrong length".into()));
        }
        let w = disc.eb_h1.weights();
        let data: Vec<f64> = (0..ne * nqpt).map(|i| w[i % nqpt] * state.rho_detj[i]).collect();
        let mass_v = MassPA::from_point_data(rt, disc.h1.clone(), disc.eb_h1.clone(), &data)?;
        let mut diag = mass_v.diagonal()?;
        for (dv, &m) in diag.iter_mut().zip(&disc.velocity_mask) {
            if m {
                *dv = 1.0;
            }
        }
        let n = disc.l2.nloc;
        let blocks = l2_mass_blocks(disc, &state.rho_detj);
        let mut lus = Vec::with_capacity(ne);
        let mut rowsum = vec![0.0; disc.l2.vsize()];
        for e in 0..ne {
            let blk = &blocks[e * n * n..(e + 1) * n * n];
            for i in 0..n {
                rowsum[e * n + i] = blk[i * n..(i + 1) * n].iter().sum();
            }
            lus.push(
                DenseLu::factor(n, blk)
                    .ok_or_else(|| HydroError::InvalidParameter(format!("singular energy mass block {e}")))?,
            );
        }
        Ok((mass_v, diag, lus, rowsum))
    }

    /// Recompute the (time-invariant) mass operators after `rho_detj`
    /// changed, i.e. after a remap.
    pub fn rebuild_masses(&mut self, state: &HydroState) -> Result<(), HydroError> {
        let (m, d, lu, rs) = Self::masses(&self.rt, &self.disc, state)?;
        self.mass_v = m;
        self.mass_v_diag = d;
        self.mass_e_lu = lu;
        self.mass_e_rowsum = rs;
        Ok(())
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    pub fn velocity_mass(&self) -> &MassPA {
        &self.mass_v
    }

    pub fn total_mass(&self, state: &HydroState) -> f64 {
        let w = self.disc.eb_h1.weights();
        let nqpt = w.len();
        state.rho_detj.iter().enumerate().map(|(i, r)| w[i % nqpt] * r).sum()
    }

    pub fn kinetic_energy(&self, v: &[f64]) -> Result<f64, HydroError> {
        let mut mv = self.rt.memory.temp(v.len())?;
        self.mass_v.apply(v, &mut mv)?;
        Ok(0.5 * linalg::dot(v, &mv))
    }

    pub fn internal_energy(&self, e: &[f64]) -> f64 {
        linalg::dot(&self.mass_e_rowsum, e)
    }

    pub fn total_energy(&self, state: &HydroState) -> Result<f64, HydroError> {
        Ok(self.kinetic_energy(&state.v)? + self.internal_energy(&state.e))
    }

    /// Momentum `Σ_c` components of `M_v v`.
    pub fn momentum(&self, v: &[f64]) -> Result<Vec<f64>, HydroError> {
        let mut mv = vec![0.0; v.len()];
        self.mass_v.apply(v, &mut mv)?;
        let n = self.disc.h1.ndofs;
        Ok((0..self.disc.dim).map(|c| mv[c * n..(c + 1) * n].iter().sum()).collect())
    }

    /// Force operator at the given state plus the CFL time-step estimate.
    pub fn force_operator(&self, x: &[f64], v: &[f64], e: &[f64], rho_detj: &[f64]) -> Result<(ForcePA, f64), HydroError> {
        let disc = &*self.disc;
        let d = disc.dim;
        let dd = d * d;
        let (ebh, ebl) = (&disc.eb_h1, &disc.eb_l2);
        let nqpt = disc.nqpt();
        let ne = disc.mesh.num_elements;
        let (nloc_h, nloc_l) = (disc.h1.nloc, disc.l2.nloc);
        let geom = geometric_factors(self.rt.exec, &disc.h1, x, ebh)?;
        let mut ev = self.rt.memory.temp(disc.h1.esize())?;
        disc.h1.gather(self.rt.exec, v, &mut ev);
        let mut ee = self.rt.memory.temp(disc.l2.esize())?;
        disc.l2.gather(self.rt.exec, e, &mut ee);
        let chunk = nqpt * (dd + 1);
        let mut out = self.rt.memory.temp(ne * chunk)?;
        let grid = GridConfig::new(ne, &[ebh.nq(), ebh.nq()])?;
        let material = self.material;
        let visc = self.viscosity;
        let order = disc.order as f64;
        let tmp_len = ebh.tmp_len().max(ebl.tmp_len());
        let (ev, ee): (&[f64], &[f64]) = (&ev, &ee);
        launch_chunked(self.rt.exec, grid, &mut out, chunk, |ctx, o| {
            let el = ctx.team_index();
            let tmp = ctx.scratch(tmp_len)?;
            let vq = ctx.scratch(d * nqpt)?;
            let dv = ctx.scratch(dd * nqpt)?;
            let eq = ctx.scratch(nqpt)?;
            for c in 0..d {
                let vc = &ev[(el * d + c) * nloc_h..(el * d + c + 1) * nloc_h];
                ebh.eval(None, vc, &mut vq[c * nqpt..(c + 1) * nqpt], tmp);
                for k in 0..d {
                    ebh.eval(Some(k), vc, &mut dv[(c * d + k) * nqpt..(c * d + k + 1) * nqpt], tmp);
                }
            }
            ebl.eval(None, &ee[el * nloc_l..(el + 1) * nloc_l], eq, tmp);
            let (dout, dtout) = o.split_at_mut(nqpt * dd);
            for q in 0..nqpt {
                let inv = geom.inv(el, q);
                let det = geom.detj(el, q);
                let rho = rho_detj[el * nqpt + q] / det;
                let e_q = eq[q];
                let mut eps = [0.0; 9];
                for c in 0..d {
                    for j in 0..d {
                        let mut g = 0.0;
                        for k in 0..d {
                            g += dv[(c * d + k) * nqpt + q] * inv[k * d + j];
                        }
                        eps[c * d + j] += 0.5 * g;
                        eps[j * d + c] += 0.5 * g;
                    }
                }
                // Widths: smallest over all directions for the time step,
                // along the compression direction for the viscosity.
                let h_min = 2.0 * linalg::min_singular_value(d, geom.j(el, q)) / order;
                let cs = material.sound_speed(e_q);
                let mut sigma = [0.0; 9];
                let p = material.pressure(rho, e_q);
                for c in 0..d {
                    sigma[c * d + c] = -p;
                }
                let mut coeff = 0.0;
                let mu = linalg::sym_min_eigenvalue(d, &eps[..dd]);
                if mu < 0.0 {
                    let s = linalg::sym_eigenvector(d, &eps[..dd], mu);
                    let mut js = 0.0;
                    for k in 0..d {
                        let r: f64 = (0..d).map(|j| inv[k * d + j] * s[j]).sum();
                        js += r * r;
                    }
                    let h = 2.0 / (js.sqrt() * order);
                    coeff = rho * (visc.q2 * h * h * mu.abs() + visc.q1 * h * cs);
                    for i in 0..dd {
                        sigma[i] += coeff * eps[i];
                    }
                }
                let w = geom.weights[q] * det;
                for c in 0..d {
                    for k in 0..d {
                        let mut s = 0.0;
                        for j in 0..d {
                            s += sigma[c * d + j] * inv[k * d + j];
                        }
                        dout[q * dd + c * d + k] = w * s;
                    }
                }
                let speed2: f64 = (0..d).map(|c| vq[c * nqpt + q].powi(2)).sum();
                let speed = cs + speed2.sqrt() + 2.5 * coeff / (rho * h_min);
                dtout[q] = if speed > 0.0 { h_min / speed } else { f64::INFINITY };
            }
            Ok(())
        })?;
        let mut data = self.rt.memory.temp(ne * nqpt * dd)?;
        let mut dt_est = f64::INFINITY;
        for (el, o) in out.chunks(chunk).enumerate() {
            data[el * nqpt * dd..(el + 1) * nqpt * dd].copy_from_slice(&o[..nqpt * dd]);
            dt_est = o[nqpt * dd..].iter().cloned().fold(dt_est, f64::min);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(HydroError::NonFinite("stress"));
        }
        let force = ForcePA::new(
            &self.rt,
            disc.h1.clone(),
            disc.l2.clone(),
            ebh.clone(),
            ebl.clone(),
            &data,
        )?;
        Ok((force, dt_est))
    }

    fn stage(&self, x: &[f64], v: &[f64], e: &[f64], rho_detj: &[f64]) -> Result<Stage, HydroError> {
        let (force, dt_estimate) = self.force_operator(x, v, e, rho_detj)?;
        let ones = vec![1.0; self.disc.l2.vsize()];
        let mut f1 = vec![0.0; self.disc.h1.vsize()];
        force.apply(&ones, &mut f1)?;
        let mut rhs = self.rt.memory.temp(f1.len())?;
        for i in 0..f1.len() {
            rhs[i] = if self.disc.velocity_mask[i] { 0.0 } else { -f1[i] };
        }
        let op = ConstrainedOperator {
            inner: &self.mass_v,
            mask: &self.disc.velocity_mask,
            rt: &self.rt,
        };
        let mut accel = vec![0.0; f1.len()];
        let summary = cg_solve(&self.rt, &op, &rhs, &mut accel, Some(&self.mass_v_diag), self.cg)?;
        Ok(Stage {
            force,
            f1,
            accel,
            dt_estimate,
            cg_iterations: summary.iterations,
        })
    }

    /// `M_E⁻¹ Fᵀ vel`, plus the relative balance against `velᵀ (F·1)`.
    fn energy_rate(&self, stage: &Stage, vel: &[f64]) -> Result<(Vec<f64>, f64), HydroError> {
        let mut rate = vec![0.0; self.disc.l2.vsize()];
        stage.force.apply_transpose(vel, &mut rate)?;
        let mut work = 0.0;
        let mut scale = 0.0;
        for (vi, fi) in vel.iter().zip(&stage.f1) {
            work += vi * fi;
            scale += (vi * fi).abs();
        }
        let heat: f64 = rate.iter().sum();
        scale += rate.iter().map(|r| r.abs()).sum::<f64>();
        let balance = if scale > 0.0 { (work - heat).abs() / scale } else { 0.0 };
        let n = self.disc.l2.nloc;
        for (e, lu) in self.mass_e_lu.iter().enumerate() {
            lu.solve(&mut rate[e * n..(e + 1) * n]);
        }
        Ok((rate, balance))
    }

    /// CFL-limited stable time step for `state`.
    pub fn estimate_dt(&self, state: &HydroState) -> Result<f64, HydroError> {
        let (_, est) = self.force_operator(&state.x, &state.v, &state.e, &state.rho_detj)?;
        Ok((self.controls.cfl * est).min(self.controls.dt_max))
    }

    /// One adaptive step; never steps past `t_end` when given.
    pub fn step(&mut self, state: &mut HydroState, t_end: Option<f64>) -> Result<StepReport, HydroError> {
        let s0 = self.stage(&state.x, &state.v, &state.e, &state.rho_detj)?;
        let mut dt = (self.controls.cfl * s0.dt_estimate).min(self.controls.dt_max);
        if dt < self.controls.dt_min {
            return Err(HydroError::TimestepTooSmall {
                dt,
                dt_min: self.controls.dt_min,
            });
        }
        if let Some(t_end) = t_end {
            dt = dt.min(t_end - state.t).max(0.0);
        }
        self.advance_with_retries(state, dt, s0, true)
    }

    /// One step with a prescribed `dt` (no CFL control, no retries).
    pub fn step_fixed(&mut self, state: &mut HydroState, dt: f64) -> Result<StepReport, HydroError> {
        let s0 = self.stage(&state.x, &state.v, &state.e, &state.rho_detj)?;
        self.advance_with_retries(state, dt, s0, false)
    }

    fn advance_with_retries(
        &mut self,
        state: &mut HydroState,
        mut dt: f64,
        s0: Stage,
        retry: bool,
    ) -> Result<StepReport, HydroError> {
        let max = if retry { MAX_DT_RETRIES } else { 0 };
        for attempt in 0..=max {
            match self.advance(state, dt, &s0) {
                Ok((next, mut report)) => {
                    *state = next;
                    report.retries = attempt;
                    self.clamp_events += report.clamped_energy_dofs;
                    return Ok(report);
                }
                Err(HydroError::InvertedElement { .. }) if attempt < max => {
                    dt *= 0.5;
                    if dt < self.controls.dt_min {
                        return Err(HydroError::TimestepTooSmall {
                            dt,
                            dt_min: self.controls.dt_min,
                        });
                    }
                }
                Err(e @ HydroError::InvertedElement { .. }) if !retry => return Err(e),
                Err(HydroError::InvertedElement { .. }) => {
                    return Err(HydroError::RetriesExhausted { retries: max });
                }
                Err(e) => return Err(e),
            }
        }
        Err(HydroError::RetriesExhausted { retries: max })
    }

    fn advance(&self, s: &HydroState, dt: f64, s0: &Stage) -> Result<(HydroState, StepReport), HydroError> {
        let n_h = s.v.len();
        let half = 0.5 * dt;
        // Stage 1: state at the half step.
        let mut vel0 = vec![0.0; n_h];
        for i in 0..n_h {
            vel0[i] = s.v[i] + half * s0.accel[i];
        }
        let (rate0, bal0) = self.energy_rate(s0, &vel0)?;
        let mut xh = s.x.clone();
        linalg::axpy(half, &vel0, &mut xh);
        let mut vh = s.v.clone();
        linalg::axpy(half, &s0.accel, &mut vh);
        let mut eh = s.e.clone();
        linalg::axpy(half, &rate0, &mut eh);
        // Stage 2: full step with half-step forces and averaged velocity.
        let s1 = self.stage(&xh, &vh, &eh, &s.rho_detj)?;
        let mut vel1 = vec![0.0; n_h];
        for i in 0..n_h {
            vel1[i] = s.v[i] + half * s1.accel[i];
        }
        let (rate1, bal1) = self.energy_rate(&s1, &vel1)?;
        let mut next = s.clone();
        linalg::axpy(dt, &s1.accel, &mut next.v);
        linalg::axpy(dt, &rate1, &mut next.e);
        linalg::axpy(dt, &vel1, &mut next.x);
        next.t = s.t + dt;
        if next.v.iter().chain(&next.e).chain(&next.x).any(|v| !v.is_finite()) {
            return Err(HydroError::NonFinite("state"));
        }
        // Reject steps that end on an inverted mesh.
        geometric_factors(self.rt.exec, &self.disc.h1, &next.x, &self.disc.eb_h1)?;
        let mut clamped = 0;
        for e in next.e.iter_mut() {
            if *e < 0.0 {
                *e = 0.0;
                clamped += 1;
            }
        }
        Ok((
            next,
            StepReport {
                dt,
                dt_estimate: s0.dt_estimate,
                retries: 0,
                cg_iterations: [s0.cg_iterations, s1.cg_iterations],
                energy_balance: [bal0, bal1],
                clamped_energy_dofs: clamped,
            },
        ))
    }
}
