use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metric::QualityMetric;
use super::TmopError;
use crate::kernel_exec::{launch_chunked, GridConfig, DEFAULT_SCRATCH_BYTES};
use crate::linalg;
use crate::mesh_fespace::{geometric_factors, interpolate_at_points, Discretization, ElementBasis, HighOrderMesh};
use crate::pa_operators::{check_len, hadamard, LinearOperator, OperatorError};
use crate::runtime::Runtime;
use crate::tensor_basis::{tensor_apply, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Every target is the square/cube with the mean element volume.
    IdealUniform,
    /// Ideal targets scaled in volume by the positive field `ξ`.
    SizeAdapted,
}

/// Target Jacobians `W` at every quadrature point, with inverses and
/// determinants. `T = A W⁻¹` with `A` the physical Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTransform {
    pub dim: usize,
    pub nqpt: usize,
    pub num_elements: usize,
    pub w: Vec<f64>,
    pub w_inv: Vec<f64>,
    pub w_det: Vec<f64>,
}

/// Targets built on the mesh at `x_ref`. `xi` is a scalar H1 field used in
/// size-adapted mode; it scales each target's volume by `ξ`.
pub fn build_targets(
    rt: &Runtime,
    disc: &Discretization,
    x_ref: &[f64],
    mode: TargetMode,
    xi: Option<&[f64]>,
) -> Result<TargetTransform, TmopError> {
    let d = disc.dim;
    let dd = d * d;
    let ne = disc.mesh.num_elements;
    let nqpt = disc.nqpt();
    let geom = geometric_factors(rt.exec, &disc.h1, x_ref, &disc.eb_h1)?;
    let mean_volume = geom.volume() / ne as f64;
    let xi_q = match mode {
        TargetMode::IdealUniform => None,
        TargetMode::SizeAdapted => {
            let xi = xi.ok_or_else(|| TmopError::InvalidParameter("size-adapted targets need a size field".into()))?;
            if let Some(bad) = xi.iter().find(|v| !(**v > 0.0)) {
                return Err(TmopError::InvalidParameter(format!("size field must be positive, found {bad}")));
            }
            let xq = interpolate_at_points(rt.exec, &disc.h1_scalar, xi, &disc.eb_h1)?;
            if let Some(bad) = xq.iter().find(|v| !(**v > 0.0)) {
                return Err(TmopError::InvalidParameter(format!("size field is {bad} at a quadrature point")));
            }
            Some(xq)
        }
    };
    let n = ne * nqpt;
    let mut t = TargetTransform {
        dim: d,
        nqpt,
        num_elements: ne,
        w: vec![0.0; n * dd],
        w_inv: vec![0.0; n * dd],
        w_det: vec![0.0; n],
    };
    for i in 0..n {
        let scale = xi_q.as_ref().map_or(1.0, |x| x[i]);
        // Reference element is [-1, 1]^d, hence the half side.
        let s = 0.5 * (scale * mean_volume).powf(1.0 / d as f64);
        for c in 0..d {
            t.w[i * dd + c * d + c] = s;
            t.w_inv[i * dd + c * d + c] = 1.0 / s;
        }
        t.w_det[i] = s.powi(d as i32);
    }
    Ok(t)
}

/// The objective `F(x) = ∫ μ(T(x)) + γ ∫ |x - x₀|² / d(x₀)²`, both integrals
/// taken over the targets (`w_q det W_q`). Boundary nodes are held fixed.
pub struct TmopObjective {
    rt: Runtime,
    disc: Arc<Discretization>,
    pub metric: QualityMetric,
    targets: TargetTransform,
    gamma: f64,
    x0: Vec<f64>,
    x0_q: Vec<f64>,
    wdw: Vec<f64>,
    lim_w: Vec<f64>,
    fixed: Vec<bool>,
}

/// The two parts of the objective before weighting by `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub shape: f64,
    pub limiting: f64,
}

impl TmopObjective {
    pub fn new(
        rt: &Runtime,
        disc: Arc<Discretization>,
        metric: QualityMetric,
        targets: TargetTransform,
        x0: &[f64],
    ) -> Result<Self, TmopError> {
        let d = disc.dim;
        let ne = disc.mesh.num_elements;
        let nqpt = disc.nqpt();
        check_len(disc.h1.vsize(), x0.len())?;
        if targets.num_elements != ne || targets.nqpt != nqpt || targets.dim != d {
            return Err(TmopError::InvalidParameter("targets do not match the discretization".into()));
        }
        let mesh = &disc.mesh;
        let radius = limiting_radius(mesh, x0);
        let r_q = interpolate_at_points(rt.exec, &disc.h1_scalar, &radius, &disc.eb_h1)?;
        let x0_q = interpolate_at_points(rt.exec, &disc.h1, x0, &disc.eb_h1)?;
        let w = disc.eb_h1.weights();
        let mut wdw = vec![0.0; ne * nqpt];
        let mut lim_w = vec![0.0; ne * nqpt];
        for e in 0..ne {
            for q in 0..nqpt {
                let i = e * nqpt + q;
                wdw[i] = w[q] * targets.w_det[i];
                lim_w[i] = wdw[i] / (r_q[i] * r_q[i]);
            }
        }
        let nn = mesh.num_nodes;
        let mut fixed = vec![false; d * nn];
        for c in 0..d {
            for n in 0..nn {
                fixed[c * nn + n] = disc.boundary_nodes[n];
            }
        }
        Ok(Self {
            rt: rt.clone(),
            disc,
            metric,
            targets,
            gamma: 0.0,
            x0: x0.to_vec(),
            x0_q,
            wdw,
            lim_w,
            fixed,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<(), TmopError> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(TmopError::InvalidParameter(format!("limiting weight must be non-negative, got {gamma}")));
        }
        self.gamma = gamma;
        Ok(())
    }

    /// Choose `γ` so that both integrals are equal at a deterministic
    /// perturbation of the free nodes of `x₀` by `0.1` of the local node
    /// spacing (halved until the perturbed mesh is valid). Returns the
    /// chosen value.
    pub fn calibrate_gamma(&mut self, seed: u64) -> Result<f64, TmopError> {
        let mut fraction = 0.1;
        let mut parts = self.objective_parts(&self.reference_perturbation(fraction, seed))?;
        for _ in 0..10 {
            if parts.shape.is_finite() {
                break;
            }
            fraction *= 0.5;
            parts = self.objective_parts(&self.reference_perturbation(fraction, seed))?;
        }
        let gamma = if parts.limiting > 0.0 && parts.shape.is_finite() {
            parts.shape / parts.limiting
        } else {
            0.0
        };
        self.set_gamma(gamma)?;
        Ok(gamma)
    }

    /// `x₀` with every free node moved by `fraction` of its node spacing in a
    /// random direction. The spacing is the limiting radius over `p √d`.
    pub fn reference_perturbation(&self, fraction: f64, seed: u64) -> Vec<f64> {
        let mesh = &self.disc.mesh;
        let d = self.disc.dim;
        let nn = mesh.num_nodes;
        let spacing = (self.disc.order as f64) * (d as f64).sqrt();
        let radius = limiting_radius(mesh, &self.x0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = self.x0.clone();
        for n in 0..nn {
            let mut dir = [0.0; 3];
            for v in dir.iter_mut().take(d) {
                *v = rng.gen_range(-1.0..1.0);
            }
            let len = dir[..d].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            if !self.disc.boundary_nodes[n] {
                for c in 0..d {
                    x[c * nn + n] += fraction * radius[n] / spacing * dir[c] / len;
                }
            }
        }
        x
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn targets(&self) -> &TargetTransform {
        &self.targets
    }

    pub fn reference_positions(&self) -> &[f64] {
        &self.x0
    }

    /// Fixed DOFs (H1 vector layout).
    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    fn eb(&self) -> &ElementBasis {
        &self.disc.eb_h1
    }

    /// One team per element with enough scratch for `words` values.
    fn grid(&self, words: usize) -> Result<GridConfig, TmopError> {
        let eb = self.eb();
        let bytes = DEFAULT_SCRATCH_BYTES.max(8 * (words + 64));
        Ok(GridConfig::new(self.disc.mesh.num_elements, &[eb.nq(), eb.nq()])?.with_scratch_bytes(bytes))
    }

    fn gather(&self, x: &[f64]) -> Result<Vec<f64>, TmopError> {
        check_len(self.disc.h1.vsize(), x.len())?;
        let mut e = vec![0.0; self.disc.h1.esize()];
        self.disc.h1.gather(self.rt.exec, x, &mut e);
        Ok(e)
    }

    /// Both integrals; the shape part is `+∞` if `T` is not invertible at
    /// some point.
    pub fn objective_parts(&self, x: &[f64]) -> Result<ObjectiveParts, TmopError> {
        let xe = self.gather(x)?;
        let eb = self.eb();
        let (d, nqpt, nloc) = (self.disc.dim, eb.nqpt(), self.disc.h1.nloc);
        let dd = d * d;
        let ne = self.disc.mesh.num_elements;
        let mut out = vec![0.0; ne * 2];
        let grid = self.grid(eb.tmp_len() + nqpt * (dd + 1))?;
        let metric = self.metric;
        launch_chunked(self.rt.exec, grid, &mut out, 2, |ctx, o| {
            let e = ctx.team_index();
            let tmp = ctx.scratch(eb.tmp_len())?;
            let g = ctx.scratch(nqpt)?;
            let a = ctx.scratch(nqpt * dd)?;
            let xel = &xe[e * d * nloc..(e + 1) * d * nloc];
            jacobians(eb, xel, nloc, a, g, tmp);
            let mut t = [0.0; 9];
            let mut shape = 0.0;
            for q in 0..nqpt {
                let i = e * nqpt + q;
                linalg::matmul(d, &a[q * dd..(q + 1) * dd], &self.targets.w_inv[i * dd..(i + 1) * dd], &mut t);
                if !(linalg::det(d, &t[..dd]) > 0.0) {
                    shape = f64::INFINITY;
                    break;
                }
                shape += self.wdw[i] * metric.eval(d, &t[..dd]);
            }
            let mut lim = 0.0;
            for c in 0..d {
                eb.eval(None, &xel[c * nloc..(c + 1) * nloc], g, tmp);
                for q in 0..nqpt {
                    let i = e * nqpt + q;
                    let r = g[q] - self.x0_q[(e * d + c) * nqpt + q];
                    lim += self.lim_w[i] * r * r;
                }
            }
            o[0] = shape;
            o[1] = lim;
            Ok(())
        })?;
        let mut parts = ObjectiveParts { shape: 0.0, limiting: 0.0 };
        for o in out.chunks(2) {
            parts.shape += o[0];
            parts.limiting += o[1];
        }
        Ok(parts)
    }

    /// `Σ w_q det W_q`, the scale of the rounding error in `F`.
    pub fn target_volume(&self) -> f64 {
        self.wdw.iter().sum()
    }

    /// `F(x)`, or `+∞` on an invalid mesh.
    pub fn objective(&self, x: &[f64]) -> Result<f64, TmopError> {
        let p = self.objective_parts(x)?;
        Ok(p.shape + self.gamma * p.limiting)
    }

    /// Smallest `det A` over all quadrature points.
    pub fn min_det(&self, x: &[f64]) -> Result<f64, TmopError> {
        let xe = self.gather(x)?;
        let eb = self.eb();
        let (d, nqpt, nloc) = (self.disc.dim, eb.nqpt(), self.disc.h1.nloc);
        let dd = d * d;
        let ne = self.disc.mesh.num_elements;
        let mut out = vec![0.0; ne];
        let grid = self.grid(eb.tmp_len() + nqpt * (dd + 1))?;
        launch_chunked(self.rt.exec, grid, &mut out, 1, |ctx, o| {
            let e = ctx.team_index();
            let tmp = ctx.scratch(eb.tmp_len())?;
            let g = ctx.scratch(nqpt)?;
            let a = ctx.scratch(nqpt * dd)?;
            jacobians(eb, &xe[e * d * nloc..(e + 1) * d * nloc], nloc, a, g, tmp);
            o[0] = (0..nqpt)
                .map(|q| linalg::det(d, &a[q * dd..(q + 1) * dd]))
                .fold(f64::INFINITY, f64::min);
            Ok(())
        })?;
        Ok(out.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Per-element loop shared by the gradient and the Hessian action:
    /// `point(q, T, dT, Y)` fills `Y = ∂(...)/∂T` and the result is mapped
    /// back through `W⁻ᵀ` and the basis gradients; `lim(x_q - x0_q, dx_q)`
    /// gives the limiting contribution per component.
    fn element_residual<P>(&self, x: &[f64], dx: Option<&[f64]>, out: &mut [f64], point: P) -> Result<(), TmopError>
    where
        P: Fn(&[f64], &[f64], &mut [f64]) + Sync,
    {
        let xe = self.gather(x)?;
        let dxe = dx.map(|v| self.gather(v)).transpose()?;
        let eb = self.eb();
        let (d, nqpt, nloc) = (self.disc.dim, eb.nqpt(), self.disc.h1.nloc);
        let dd = d * d;
        let gamma = self.gamma;
        let mut ye = vec![0.0; self.disc.h1.esize()];
        let grid = self.grid(eb.tmp_len() + nqpt * (3 * dd + 1))?;
        launch_chunked(self.rt.exec, grid, &mut ye, d * nloc, |ctx, yel| {
            let e = ctx.team_index();
            let tmp = ctx.scratch(eb.tmp_len())?;
            let g = ctx.scratch(nqpt)?;
            let a = ctx.scratch(nqpt * dd)?;
            let da = ctx.scratch(nqpt * dd)?;
            let ymat = ctx.scratch(nqpt * dd)?;
            let xel = &xe[e * d * nloc..(e + 1) * d * nloc];
            jacobians(eb, xel, nloc, a, g, tmp);
            if let Some(dxe) = &dxe {
                jacobians(eb, &dxe[e * d * nloc..(e + 1) * d * nloc], nloc, da, g, tmp);
            }
            let mut t = [0.0; 9];
            let mut dt = [0.0; 9];
            let mut p = [0.0; 9];
            for q in 0..nqpt {
                let i = e * nqpt + q;
                let winv = &self.targets.w_inv[i * dd..(i + 1) * dd];
                linalg::matmul(d, &a[q * dd..(q + 1) * dd], winv, &mut t);
                let det = linalg::det(d, &t[..dd]);
                if !(det > 0.0) {
                    return Err(ctx.fail(format!("element {e} is inverted at point {q} (det T = {det:e})")));
                }
                linalg::matmul(d, &da[q * dd..(q + 1) * dd], winv, &mut dt);
                point(&t[..dd], &dt[..dd], &mut p[..dd]);
                // Y = w det W · P W⁻ᵀ
                for c in 0..d {
                    for k in 0..d {
                        let mut s = 0.0;
                        for j in 0..d {
                            s += p[c * d + j] * winv[k * d + j];
                        }
                        ymat[(c * d + k) * nqpt + q] = self.wdw[i] * s;
                    }
                }
            }
            for c in 0..d {
                let yc = &mut yel[c * nloc..(c + 1) * nloc];
                for k in 0..d {
                    eb.eval_t(Some(k), &ymat[(c * d + k) * nqpt..(c * d + k + 1) * nqpt], yc, tmp);
                }
                if gamma != 0.0 {
                    let src = match &dxe {
                        Some(dxe) => &dxe[(e * d + c) * nloc..(e * d + c + 1) * nloc],
                        None => &xel[c * nloc..(c + 1) * nloc],
                    };
                    eb.eval(None, src, g, tmp);
                    for q in 0..nqpt {
                        let i = e * nqpt + q;
                        let r = if dxe.is_some() {
                            g[q]
                        } else {
                            g[q] - self.x0_q[(e * d + c) * nqpt + q]
                        };
                        g[q] = 2.0 * gamma * self.lim_w[i] * r;
                    }
                    eb.eval_t(None, g, yc, tmp);
                }
            }
            Ok(())
        })
        .map_err(TmopError::from_exec)?;
        out.fill(0.0);
        self.disc.h1.scatter_add(&ye, out);
        Ok(())
    }

    /// `∂F/∂x` (all DOFs, including fixed ones).
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<(), TmopError> {
        check_len(self.disc.h1.vsize(), out.len())?;
        let d = self.disc.dim;
        let metric = self.metric;
        self.element_residual(x, None, out, |t, _, p| metric.first(d, t, p))
    }

    /// `(∂²F/∂x²) dx`.
    pub fn hessian_action(&self, x: &[f64], dx: &[f64], out: &mut [f64]) -> Result<(), TmopError> {
        check_len(self.disc.h1.vsize(), out.len())?;
        let d = self.disc.dim;
        let dd = d * d;
        let metric = self.metric;
        self.element_residual(x, Some(dx), out, |t, dt, z| {
            let mut h = [0.0; 81];
            metric.second(d, t, &mut h);
            for a in 0..dd {
                z[a] = (0..dd).map(|b| h[a * dd + b] * dt[b]).sum();
            }
        })
    }

    /// Diagonal of the Hessian, computed without forming it.
    pub fn hessian_diagonal(&self, x: &[f64]) -> Result<Vec<f64>, TmopError> {
        let xe = self.gather(x)?;
        let eb = self.eb();
        let (d, nqpt, nloc, nq, nd) = (self.disc.dim, eb.nqpt(), self.disc.h1.nloc, eb.nq(), eb.nd());
        let dd = d * d;
        let gamma = self.gamma;
        let metric = self.metric;
        let bb = hadamard(&eb.basis.b, &eb.basis.b);
        let gb = hadamard(&eb.basis.g, &eb.basis.b);
        let gg = hadamard(&eb.basis.g, &eb.basis.g);
        let mut ye = vec![0.0; self.disc.h1.esize()];
        let grid = self.grid(eb.tmp_len() + nqpt * (dd + 1 + d * dd))?;
        launch_chunked(self.rt.exec, grid, &mut ye, d * nloc, |ctx, yel| {
            let e = ctx.team_index();
            let tmp = ctx.scratch(eb.tmp_len())?;
            let g = ctx.scratch(nqpt)?;
            let a = ctx.scratch(nqpt * dd)?;
            // kc[(c * dd + k * d + l) * nqpt + q]
            let kc = ctx.scratch(d * dd * nqpt)?;
            jacobians(eb, &xe[e * d * nloc..(e + 1) * d * nloc], nloc, a, g, tmp);
            let mut t = [0.0; 9];
            let mut h = [0.0; 81];
            for q in 0..nqpt {
                let i = e * nqpt + q;
                let winv = &self.targets.w_inv[i * dd..(i + 1) * dd];
                linalg::matmul(d, &a[q * dd..(q + 1) * dd], winv, &mut t);
                let det = linalg::det(d, &t[..dd]);
                if !(det > 0.0) {
                    return Err(ctx.fail(format!("element {e} is inverted at point {q} (det T = {det:e})")));
                }
                metric.second(d, &t[..dd], &mut h);
                for c in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            let mut s = 0.0;
                            for j in 0..d {
                                for m in 0..d {
                                    s += winv[k * d + j] * h[(c * d + j) * dd + c * d + m] * winv[l * d + m];
                                }
                            }
                            kc[(c * dd + k * d + l) * nqpt + q] = self.wdw[i] * s;
                        }
                    }
                }
            }
            for c in 0..d {
                let yc = &mut yel[c * nloc..(c + 1) * nloc];
                for k in 0..d {
                    for l in 0..d {
                        let mut axes = [Axis::new(&bb, nq, nd); 3];
                        for (ax_i, ax) in axes.iter_mut().enumerate().take(d) {
                            let m: &[f64] = match (ax_i == k, ax_i == l) {
                                (true, true) => &gg,
                                (true, false) | (false, true) => &gb,
                                (false, false) => &bb,
                            };
                            *ax = Axis::new(m, nq, nd);
                        }
                        let src = &kc[(c * dd + k * d + l) * nqpt..(c * dd + k * d + l + 1) * nqpt];
                        tensor_apply(&axes[..d], true, src, yc, tmp, true);
                    }
                }
                if gamma != 0.0 {
                    for q in 0..nqpt {
                        g[q] = 2.0 * gamma * self.lim_w[e * nqpt + q];
                    }
                    let axes = [Axis::new(&bb, nq, nd); 3];
                    tensor_apply(&axes[..d], true, g, yc, tmp, true);
                }
            }
            Ok(())
        })
        .map_err(TmopError::from_exec)?;
        let mut diag = vec![0.0; self.disc.h1.vsize()];
        self.disc.h1.scatter_add(&ye, &mut diag);
        Ok(diag)
    }
}

/// Per node: the smallest diameter of the adjacent elements at `x0`.
pub fn limiting_radius(mesh: &HighOrderMesh, x0: &[f64]) -> Vec<f64> {
    let diam = mesh.element_diameters(x0);
    let mut radius = vec![f64::INFINITY; mesh.num_nodes];
    for e in 0..mesh.num_elements {
        for &n in mesh.element_nodes(e) {
            radius[n] = radius[n].min(diam[e]);
        }
    }
    radius
}

/// `a[q * dd + c * d + k] = ∂x_c/∂ξ_k` at every point of one element.
fn jacobians(eb: &ElementBasis, xe: &[f64], nloc: usize, a: &mut [f64], g: &mut [f64], tmp: &mut [f64]) {
    let d = eb.dim;
    let dd = d * d;
    let nqpt = eb.nqpt();
    for c in 0..d {
        for k in 0..d {
            eb.eval(Some(k), &xe[c * nloc..(c + 1) * nloc], g, tmp);
            for q in 0..nqpt {
                a[q * dd + c * d + k] = g[q];
            }
        }
    }
}

/// The Hessian at a fixed `x` as a linear operator.
pub struct HessianOperator<'a> {
    pub objective: &'a TmopObjective,
    pub x: &'a [f64],
}

impl LinearOperator for HessianOperator<'_> {
    fn height(&self) -> usize {
        self.x.len()
    }

    fn width(&self) -> usize {
        self.x.len()
    }

    fn apply(&self, dx: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        self.objective
            .hessian_action(self.x, dx, y)
            .map_err(|e| OperatorError::Data(e.to_string()))
    }
}
