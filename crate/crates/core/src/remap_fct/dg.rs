use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RemapError;
use crate::kernel_exec::{launch_chunked, GridConfig};
use crate::lagrange_hydro::l2_point_values;
use crate::linalg::{self, DenseLu};
use crate::mesh_fespace::{
    face_axis, geometric_factors, interpolate_at_points, lex_index, tangential_axes, Discretization,
};
use crate::pa_operators::assembled::CsrMatrix;
use crate::pa_operators::{LinearOperator, OperatorError};
use crate::runtime::Runtime;
use crate::tensor_basis::lagrange_eval;

/// Basis tables on the faces of the reference element. Face point `s`
/// enumerates the tangential quadrature points, first tangential axis
/// fastest.
#[derive(Debug, Clone)]
pub(crate) struct FaceTables {
    pub npts: usize,
    /// `weight[f][s]`
    pub weight: Vec<Vec<f64>>,
    /// H1 values `h1_val[f][s * nl + l]`.
    pub h1_val: Vec<Vec<f64>>,
    /// H1 reference gradients `h1_grad[f][(s * d + k) * nl + l]`.
    pub h1_grad: Vec<Vec<f64>>,
    /// L2 values `l2_val[f][s * n + i]`.
    pub l2_val: Vec<Vec<f64>>,
}

impl FaceTables {
    pub fn new(disc: &Discretization) -> Self {
        let d = disc.dim;
        let pts = &disc.quad.points;
        let wts = &disc.quad.weights;
        let nq = pts.len();
        let npts = nq.pow((d - 1) as u32);
        let h1_nodes = disc.h1.nodes_1d();
        let l2_nodes = disc.l2.nodes_1d();
        let (nh, nl2) = (h1_nodes.len(), l2_nodes.len());
        let nl = disc.h1.nloc;
        let n = disc.l2.nloc;
        let mut t = Self {
            npts,
            weight: Vec::new(),
            h1_val: Vec::new(),
            h1_grad: Vec::new(),
            l2_val: Vec::new(),
        };
        let mut hv = vec![0.0; nh];
        let mut hg = vec![0.0; nh];
        let mut lv = vec![0.0; nl2];
        let mut lg = vec![0.0; nl2];
        for f in 0..2 * d {
            let (axis, side) = face_axis(f);
            let tang = tangential_axes(d, axis);
            let mut weight = vec![1.0; npts];
            let mut h1_val = vec![0.0; npts * nl];
            let mut h1_grad = vec![0.0; npts * d * nl];
            let mut l2_val = vec![0.0; npts * n];
            for s in 0..npts {
                let mut xi = [0.0; 3];
                xi[axis] = if side == 1 { 1.0 } else { -1.0 };
                let mut r = s;
                for &a in &tang {
                    xi[a] = pts[r % nq];
                    weight[s] *= wts[r % nq];
                    r /= nq;
                }
                // 1D tables per axis.
                let mut h1v = [[0.0; 16]; 3];
                let mut h1g = [[0.0; 16]; 3];
                let mut l2v = [[0.0; 16]; 3];
                for a in 0..d {
                    lagrange_eval(&h1_nodes, xi[a], &mut hv, &mut hg);
                    h1v[a][..nh].copy_from_slice(&hv);
                    h1g[a][..nh].copy_from_slice(&hg);
                    lagrange_eval(&l2_nodes, xi[a], &mut lv, &mut lg);
                    l2v[a][..nl2].copy_from_slice(&lv);
                }
                for l in 0..nl {
                    let idx = lex_index(l, nh, d);
                    h1_val[s * nl + l] = (0..d).map(|a| h1v[a][idx[a]]).product();
                    for k in 0..d {
                        h1_grad[(s * d + k) * nl + l] =
                            (0..d).map(|a| if a == k { h1g[a][idx[a]] } else { h1v[a][idx[a]] }).product();
                    }
                }
                for i in 0..n {
                    let idx = lex_index(i, nl2, d);
                    l2_val[s * n + i] = (0..d).map(|a| l2v[a][idx[a]]).product();
                }
            }
            t.weight.push(weight);
            t.h1_val.push(h1_val);
            t.h1_grad.push(h1_grad);
            t.l2_val.push(l2_val);
        }
        t
    }

    /// Area-weighted outward normal flux `u·N` at every point of face `f` of
    /// element `e`.
    pub fn normal_flux(&self, disc: &Discretization, e: usize, f: usize, x: &[f64], u: &[f64]) -> Vec<f64> {
        let d = disc.dim;
        let nl = disc.h1.nloc;
        let nn = disc.mesh.num_nodes;
        let nodes = disc.mesh.element_nodes(e);
        let (axis, side) = face_axis(f);
        let sign = if side == 1 { 1.0 } else { -1.0 };
        let mut out = vec![0.0; self.npts];
        let mut jac = [0.0; 9];
        let mut adj = [0.0; 9];
        for (s, o) in out.iter_mut().enumerate() {
            jac.fill(0.0);
            let mut uc = [0.0; 3];
            for (l, &node) in nodes.iter().enumerate() {
                let v = self.h1_val[f][s * nl + l];
                for c in 0..d {
                    uc[c] += u[c * nn + node] * v;
                    for k in 0..d {
                        jac[c * d + k] += x[c * nn + node] * self.h1_grad[f][(s * d + k) * nl + l];
                    }
                }
            }
            linalg::adjugate(d, &jac[..d * d], &mut adj);
            // Cofactor column `axis` = row `axis` of the adjugate.
            let mut un = 0.0;
            for c in 0..d {
                un += uc[c] * adj[axis * d + c];
            }
            *o = sign * un * self.weight[f][s];
        }
        out
    }
}

/// Assembled DG advection operators at one pseudo time. The transport
/// matrix `K*` is in flux form (zero column sums when the boundary does not
/// move); its row sums are the lumped-mass rates `ṁ`.
#[derive(Debug, Clone)]
pub struct DgAdvection {
    pub nloc: usize,
    pub num_elements: usize,
    pub mass_blocks: Vec<f64>,
    pub lumped: Vec<f64>,
    /// `dM/dτ` blocks, diagonal shifted so their row sums equal `ṁ`.
    pub mdot_blocks: Vec<f64>,
    pub mdot_lumped: Vec<f64>,
    pub k_star: CsrMatrix,
    /// Graph-viscosity dissipation: symmetric, zero row and column sums.
    pub dissipation: CsrMatrix,
    /// Off-diagonal couplings `(i, j, M_ij, Ṁ_ij, D_ij)` with `i < j`.
    pub pairs: Vec<(usize, usize, f64, f64, f64)>,
    mass_lu: Vec<DenseLu>,
}

impl DgAdvection {
    pub fn size(&self) -> usize {
        self.nloc * self.num_elements
    }

    /// `L_ii = K*_ii + D_ii`.
    pub fn low_order_diagonal(&self) -> Vec<f64> {
        (0..self.size())
            .map(|i| self.k_star.get(i, i) + self.dissipation.get(i, i))
            .collect()
    }

    /// Largest pseudo step for which the low-order update stays a convex
    /// combination starting from the lumped masses `m`.
    pub fn max_low_order_step(&self, m: &[f64]) -> f64 {
        let ldiag = self.low_order_diagonal();
        let mut best = f64::INFINITY;
        for i in 0..self.size() {
            if ldiag[i] < 0.0 {
                best = best.min(m[i] / -ldiag[i]);
            }
            if self.mdot_lumped[i] < 0.0 {
                best = best.min(m[i] / -self.mdot_lumped[i]);
            }
        }
        best
    }

    /// Solve `M y = b` element by element.
    pub fn mass_solve(&self, b: &mut [f64]) {
        let n = self.nloc;
        for (e, lu) in self.mass_lu.iter().enumerate() {
            lu.solve(&mut b[e * n..(e + 1) * n]);
        }
    }

    pub fn block_matvec(&self, blocks: &[f64], x: &[f64], y: &mut [f64]) {
        let n = self.nloc;
        for e in 0..self.num_elements {
            linalg::dense_matvec(n, n, &blocks[e * n * n..(e + 1) * n * n], &x[e * n..(e + 1) * n], &mut y[e * n..(e + 1) * n]);
        }
    }
}

/// Assemble the DG advection operators for the thermodynamic space on the
/// mesh at `x` moving with node velocity `u`.
pub fn assemble_dg_advection(rt: &Runtime, disc: &Discretization, x: &[f64], u: &[f64]) -> Result<DgAdvection, RemapError> {
    let d = disc.dim;
    let dd = d * d;
    let ne = disc.mesh.num_elements;
    let nqpt = disc.nqpt();
    let n = disc.l2.nloc;
    let nl = disc.h1.nloc;
    let geom = geometric_factors(rt.exec, &disc.h1, x, &disc.eb_h1)?;
    let uq = interpolate_at_points(rt.exec, &disc.h1, u, &disc.eb_h1)?;
    let phi = l2_point_values(disc);
    let dphi = l2_point_gradients(disc);
    let mut ue = vec![0.0; disc.h1.esize()];
    disc.h1.gather(rt.exec, u, &mut ue);
    let eb = &disc.eb_h1;

    // Element blocks: mass, dM/dτ and the volume part of K*.
    let chunk = 3 * n * n;
    let mut blocks = vec![0.0; ne * chunk];
    let grid = GridConfig::new(ne, &[eb.nq()])?;
    launch_chunked(rt.exec, grid, &mut blocks, chunk, |ctx, o| {
        let e = ctx.team_index();
        let tmp = ctx.scratch(eb.tmp_len())?;
        let g = ctx.scratch(nqpt)?;
        let du = ctx.scratch(nqpt * dd)?;
        for c in 0..d {
            for k in 0..d {
                eb.eval(Some(k), &ue[(e * d + c) * nl..(e * d + c + 1) * nl], g, tmp);
                for q in 0..nqpt {
                    du[q * dd + c * d + k] = g[q];
                }
            }
        }
        let (m, rest) = o.split_at_mut(n * n);
        let (mdot, kv) = rest.split_at_mut(n * n);
        for q in 0..nqpt {
            let inv = geom.inv(e, q);
            let wdet = geom.wdet(e, q);
            let mut div = 0.0;
            let mut a = [0.0; 3];
            for k in 0..d {
                for c in 0..d {
                    div += du[q * dd + c * d + k] * inv[k * d + c];
                    a[k] += inv[k * d + c] * uq[(e * d + c) * nqpt + q];
                }
            }
            let ph = &phi[q * n..(q + 1) * n];
            for i in 0..n {
                let adv_i: f64 = (0..d).map(|k| a[k] * dphi[(k * nqpt + q) * n + i]).sum();
                for j in 0..n {
                    m[i * n + j] += wdet * ph[i] * ph[j];
                    mdot[i * n + j] += wdet * div * ph[i] * ph[j];
                    kv[i * n + j] -= wdet * adv_i * ph[j];
                }
            }
        }
        Ok(())
    })?;

    let mut trip = Vec::new();
    for e in 0..ne {
        let kv = &blocks[e * chunk + 2 * n * n..(e + 1) * chunk];
        for i in 0..n {
            for j in 0..n {
                trip.push((e * n + i, e * n + j, kv[i * n + j]));
            }
        }
    }
    // Upwind face fluxes.
    let faces = FaceTables::new(disc);
    let np = faces.npts;
    for face in &disc.faces.interior {
        let [e0, e1] = face.elem;
        let [f0, f1] = face.local_face;
        let un = faces.normal_flux(disc, e0, f0, x, u);
        for s in 0..np {
            let p0 = &faces.l2_val[f0][s * n..(s + 1) * n];
            let s1 = face.qmap[s];
            let p1 = &faces.l2_val[f1][s1 * n..(s1 + 1) * n];
            let (up, pu) = if un[s] < 0.0 { (e0, p0) } else { (e1, p1) };
            for i in 0..n {
                for j in 0..n {
                    trip.push((e0 * n + i, up * n + j, p0[i] * pu[j] * un[s]));
                    trip.push((e1 * n + i, up * n + j, -p1[i] * pu[j] * un[s]));
                }
            }
        }
    }
    for bf in &disc.faces.boundary {
        let un = faces.normal_flux(disc, bf.elem, bf.local_face, x, u);
        let e = bf.elem;
        for s in 0..np {
            if un[s] == 0.0 {
                continue;
            }
            let p = &faces.l2_val[bf.local_face][s * n..(s + 1) * n];
            for i in 0..n {
                for j in 0..n {
                    trip.push((e * n + i, e * n + j, p[i] * p[j] * un[s]));
                }
            }
        }
    }
    let size = ne * n;
    let k_star = CsrMatrix::from_triplets(size, size, trip);
    let mdot_lumped: Vec<f64> = (0..size).map(|i| k_star.row(i).1.iter().sum()).collect();

    let mut mass_blocks = vec![0.0; ne * n * n];
    let mut mdot_blocks = vec![0.0; ne * n * n];
    let mut lumped = vec![0.0; size];
    let mut mass_lu = Vec::with_capacity(ne);
    for e in 0..ne {
        let src = &blocks[e * chunk..(e + 1) * chunk];
        mass_blocks[e * n * n..(e + 1) * n * n].copy_from_slice(&src[..n * n]);
        mdot_blocks[e * n * n..(e + 1) * n * n].copy_from_slice(&src[n * n..2 * n * n]);
        for i in 0..n {
            lumped[e * n + i] = src[i * n..(i + 1) * n].iter().sum();
            let rs: f64 = src[n * n + i * n..n * n + (i + 1) * n].iter().sum();
            mdot_blocks[e * n * n + i * n + i] += mdot_lumped[e * n + i] - rs;
        }
        mass_lu.push(
            DenseLu::factor(n, &src[..n * n]).ok_or_else(|| RemapError::InvalidMesh(format!("singular mass block {e}")))?,
        );
    }

    // Discrete upwinding: D_ij = max(0, -K_ij, -K_ji) over the union pattern.
    let mut pair_set: BTreeMap<(usize, usize), (f64, f64, f64)> = BTreeMap::new();
    for i in 0..size {
        let (cols, _) = k_star.row(i);
        for &j in cols {
            if i != j {
                pair_set.insert((i.min(j), i.max(j)), (0.0, 0.0, 0.0));
            }
        }
    }
    let mut dtrip = Vec::with_capacity(4 * pair_set.len());
    for (&(i, j), v) in pair_set.iter_mut() {
        let dij = 0.0f64.max(-k_star.get(i, j)).max(-k_star.get(j, i));
        v.2 = dij;
        if dij != 0.0 {
            dtrip.push((i, j, dij));
            dtrip.push((j, i, dij));
            dtrip.push((i, i, -dij));
            dtrip.push((j, j, -dij));
        }
    }
    for e in 0..ne {
        for a in 0..n {
            for b in a + 1..n {
                let (i, j) = (e * n + a, e * n + b);
                let entry = pair_set.entry((i, j)).or_insert((0.0, 0.0, 0.0));
                entry.0 = mass_blocks[e * n * n + a * n + b];
                entry.1 = mdot_blocks[e * n * n + a * n + b];
            }
        }
    }
    let dissipation = CsrMatrix::from_triplets(size, size, dtrip);
    let pairs = pair_set.into_iter().map(|((i, j), (m, md, dv))| (i, j, m, md, dv)).collect();
    Ok(DgAdvection {
        nloc: n,
        num_elements: ne,
        mass_blocks,
        lumped,
        mdot_blocks,
        mdot_lumped,
        k_star,
        dissipation,
        pairs,
        mass_lu,
    })
}

/// `g[(k * nqpt + q) * n + i] = ∂φ_i/∂ξ_k` at the quadrature points.
pub fn l2_point_gradients(disc: &Discretization) -> Vec<f64> {
    let eb = &disc.eb_l2;
    let (d, nd, nq) = (eb.dim, eb.nd(), eb.nq());
    let (n, nqpt) = (eb.ndof(), eb.nqpt());
    let mut g = vec![0.0; d * nqpt * n];
    for k in 0..d {
        for q in 0..nqpt {
            let qi = lex_index(q, nq, d);
            for i in 0..n {
                let ii = lex_index(i, nd, d);
                g[(k * nqpt + q) * n + i] = (0..d)
                    .map(|a| {
                        let t = if a == k { &eb.basis.g } else { &eb.basis.b };
                        t[qi[a] * nd + ii[a]]
                    })
                    .product();
            }
        }
    }
    g
}

/// A DG field stored through its lumped masses `mass` and conserved content
/// `content = mass · w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedField {
    pub mass: Vec<f64>,
    pub content: Vec<f64>,
}

impl LumpedField {
    pub fn new(mass: Vec<f64>, values: &[f64]) -> Self {
        let content = mass.iter().zip(values).map(|(m, w)| m * w).collect();
        Self { mass, content }
    }

    pub fn values(&self) -> Vec<f64> {
        self.content.iter().zip(&self.mass).map(|(c, m)| c / m).collect()
    }

    pub fn total(&self) -> f64 {
        self.content.iter().sum()
    }

    /// `(a + b) / 2` componentwise.
    pub fn average(a: &Self, b: &Self) -> Self {
        Self {
            mass: a.mass.iter().zip(&b.mass).map(|(x, y)| 0.5 * (x + y)).collect(),
            content: a.content.iter().zip(&b.content).map(|(x, y)| 0.5 * (x + y)).collect(),
        }
    }
}

/// Per-DOF admissible range from the element and its face neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FieldBounds {
    pub fn from_stencil(disc: &Discretization, w: &[f64]) -> Self {
        let n = disc.l2.nloc;
        let ne = disc.mesh.num_elements;
        let emin: Vec<f64> = (0..ne).map(|e| w[e * n..(e + 1) * n].iter().copied().fold(f64::INFINITY, f64::min)).collect();
        let emax: Vec<f64> =
            (0..ne).map(|e| w[e * n..(e + 1) * n].iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut min = vec![0.0; ne * n];
        let mut max = vec![0.0; ne * n];
        for e in 0..ne {
            let mut lo = emin[e];
            let mut hi = emax[e];
            for &nb in &disc.faces.neighbors[e] {
                lo = lo.min(emin[nb]);
                hi = hi.max(emax[nb]);
            }
            min[e * n..(e + 1) * n].fill(lo);
            max[e * n..(e + 1) * n].fill(hi);
        }
        Self { min, max }
    }

    /// Number of values outside the bounds by more than `slack` (relative
    /// to the bound magnitude).
    pub fn violations(&self, w: &[f64], slack: f64) -> usize {
        w.iter()
            .enumerate()
            .filter(|&(i, &v)| {
                let tol = slack * (1.0 + self.min[i].abs().max(self.max[i].abs()));
                v < self.min[i] - tol || v > self.max[i] + tol
            })
            .count()
    }
}

/// Low-order (bound-preserving) forward-Euler step:
/// `content += dτ (K* + D) w`, `mass += dτ ṁ`.
pub fn low_order_update(adv: &DgAdvection, field: &LumpedField, dtau: f64) -> Result<LumpedField, RemapError> {
    // Positive lumped masses are what makes the update a convex combination.
    if let Some(i) = field.mass.iter().position(|m| !(*m > 0.0)) {
        return Err(RemapError::InvalidMesh(format!("non-positive lumped mass at dof {i}")));
    }
    let max_step = adv.max_low_order_step(&field.mass);
    if dtau > max_step {
        return Err(RemapError::LowOrderStep { dtau, max_dtau: max_step });
    }
    let w = field.values();
    let size = adv.size();
    let mut kw = vec![0.0; size];
    let mut dw = vec![0.0; size];
    adv.k_star.matvec(&w, &mut kw);
    adv.dissipation.matvec(&w, &mut dw);
    Ok(LumpedField {
        mass: (0..size).map(|i| field.mass[i] + dtau * adv.mdot_lumped[i]).collect(),
        content: (0..size).map(|i| field.content[i] + dtau * (kw[i] + dw[i])).collect(),
    })
}

/// High-order Galerkin rate `ẇ = M⁻¹ (K* - Ṁ) w`.
pub fn high_order_rate(adv: &DgAdvection, w: &[f64]) -> Vec<f64> {
    let size = adv.size();
    let mut kw = vec![0.0; size];
    let mut mw = vec![0.0; size];
    adv.k_star.matvec(w, &mut kw);
    adv.block_matvec(&adv.mdot_blocks, w, &mut mw);
    for i in 0..size {
        kw[i] -= mw[i];
    }
    adv.mass_solve(&mut kw);
    kw
}

/// High-order forward-Euler step in conserved form.
pub fn high_order_update(adv: &DgAdvection, field: &LumpedField, dtau: f64) -> LumpedField {
    let w = field.values();
    let rate = high_order_rate(adv, &w);
    let size = adv.size();
    LumpedField {
        mass: (0..size).map(|i| field.mass[i] + dtau * adv.mdot_lumped[i]).collect(),
        content: (0..size)
            .map(|i| field.content[i] + dtau * (adv.mdot_lumped[i] * w[i] + adv.lumped[i] * rate[i]))
            .collect(),
    }
}

/// Antidiffusive fluxes `f_ij` (`i < j`, `f_ji = -f_ij`) whose sum turns
/// the low-order rate into the high-order one.
pub fn antidiffusive_fluxes(adv: &DgAdvection, w: &[f64], rate: &[f64]) -> Vec<(usize, usize, f64)> {
    adv.pairs
        .iter()
        .map(|&(i, j, m, md, dv)| (i, j, m * (rate[i] - rate[j]) + (md + dv) * (w[i] - w[j])))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LimiterStats {
    pub fluxes: usize,
    /// Fluxes scaled by a factor below one.
    pub limited: usize,
}

impl LimiterStats {
    pub fn fraction(&self) -> f64 {
        if self.fluxes == 0 {
            0.0
        } else {
            self.limited as f64 / self.fluxes as f64
        }
    }
}

/// Zalesak limiting of `dτ f_ij` added to the low-order state so every
/// value stays within `bounds`.
pub fn fct_correct(
    low: &LumpedField,
    fluxes: &[(usize, usize, f64)],
    bounds: &FieldBounds,
    dtau: f64,
) -> (LumpedField, LimiterStats) {
    let size = low.mass.len();
    let mut p_plus = vec![0.0; size];
    let mut p_minus = vec![0.0; size];
    for &(i, j, f) in fluxes {
        let g = dtau * f;
        if g > 0.0 {
            p_plus[i] += g;
            p_minus[j] -= g;
        } else {
            p_minus[i] += g;
            p_plus[j] -= g;
        }
    }
    let mut r_plus = vec![0.0; size];
    let mut r_minus = vec![0.0; size];
    for i in 0..size {
        let q_plus = (low.mass[i] * bounds.max[i] - low.content[i]).max(0.0);
        let q_minus = (low.mass[i] * bounds.min[i] - low.content[i]).min(0.0);
        r_plus[i] = if p_plus[i] > q_plus { q_plus / p_plus[i] } else { 1.0 };
        r_minus[i] = if p_minus[i] < q_minus { q_minus / p_minus[i] } else { 1.0 };
    }
    let mut out = low.clone();
    let mut stats = LimiterStats {
        fluxes: fluxes.len(),
        limited: 0,
    };
    for &(i, j, f) in fluxes {
        let g = dtau * f;
        let alpha = if g > 0.0 {
            r_plus[i].min(r_minus[j])
        } else {
            r_minus[i].min(r_plus[j])
        };
        if alpha < 1.0 {
            stats.limited += 1;
        }
        out.content[i] += alpha * g;
        out.content[j] -= alpha * g;
    }
    (out, stats)
}

/// Matrix-free action of `K*` from point and face data; the assembled
/// matrix is its oracle.
pub struct DgConvectionPA {
    nloc: usize,
    num_elements: usize,
    /// `vol[(e * nqpt + q) * d + k] = w detJ (J⁻¹u)_k`
    vol: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    dim: usize,
    nqpt: usize,
    interior: Vec<(usize, usize, usize, usize, Vec<usize>, Vec<f64>)>,
    boundary: Vec<(usize, usize, Vec<f64>)>,
    faces: FaceTables,
}

impl DgConvectionPA {
    pub fn new(rt: &Runtime, disc: &Discretization, x: &[f64], u: &[f64]) -> Result<Self, RemapError> {
        let d = disc.dim;
        let ne = disc.mesh.num_elements;
        let nqpt = disc.nqpt();
        let geom = geometric_factors(rt.exec, &disc.h1, x, &disc.eb_h1)?;
        let uq = interpolate_at_points(rt.exec, &disc.h1, u, &disc.eb_h1)?;
        let mut vol = vec![0.0; ne * nqpt * d];
        for e in 0..ne {
            for q in 0..nqpt {
                let inv = geom.inv(e, q);
                for k in 0..d {
                    let a: f64 = (0..d).map(|c| inv[k * d + c] * uq[(e * d + c) * nqpt + q]).sum();
                    vol[(e * nqpt + q) * d + k] = geom.wdet(e, q) * a;
                }
            }
        }
        let faces = FaceTables::new(disc);
        let interior = disc
            .faces
            .interior
            .iter()
            .map(|f| {
                let un = faces.normal_flux(disc, f.elem[0], f.local_face[0], x, u);
                (f.elem[0], f.local_face[0], f.elem[1], f.local_face[1], f.qmap.clone(), un)
            })
            .collect();
        let boundary = disc
            .faces
            .boundary
            .iter()
            .map(|b| (b.elem, b.local_face, faces.normal_flux(disc, b.elem, b.local_face, x, u)))
            .collect();
        Ok(Self {
            nloc: disc.l2.nloc,
            num_elements: ne,
            vol,
            phi: l2_point_values(disc),
            dphi: l2_point_gradients(disc),
            dim: d,
            nqpt,
            interior,
            boundary,
            faces,
        })
    }
}

impl LinearOperator for DgConvectionPA {
    fn height(&self) -> usize {
        self.nloc * self.num_elements
    }

    fn width(&self) -> usize {
        self.height()
    }

    fn apply(&self, w: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        let (n, d, nqpt) = (self.nloc, self.dim, self.nqpt);
        if w.len() != self.height() || y.len() != self.height() {
            return Err(OperatorError::Length {
                expected: self.height(),
                got: w.len().min(y.len()),
            });
        }
        y.fill(0.0);
        let mut wq = vec![0.0; nqpt];
        for e in 0..self.num_elements {
            let we = &w[e * n..(e + 1) * n];
            for (q, v) in wq.iter_mut().enumerate() {
                *v = (0..n).map(|j| self.phi[q * n + j] * we[j]).sum();
            }
            let ye = &mut y[e * n..(e + 1) * n];
            for k in 0..d {
                for q in 0..nqpt {
                    let s = self.vol[(e * nqpt + q) * d + k] * wq[q];
                    for i in 0..n {
                        ye[i] -= self.dphi[(k * nqpt + q) * n + i] * s;
                    }
                }
            }
        }
        let trace = |f: usize, s: usize, e: usize| -> f64 {
            (0..n).map(|j| self.faces.l2_val[f][s * n + j] * w[e * n + j]).sum()
        };
        for (e0, f0, e1, f1, qmap, un) in &self.interior {
            for s in 0..self.faces.npts {
                let s1 = qmap[s];
                let wu = if un[s] < 0.0 { trace(*f0, s, *e0) } else { trace(*f1, s1, *e1) };
                let flux = un[s] * wu;
                for i in 0..n {
                    y[e0 * n + i] += self.faces.l2_val[*f0][s * n + i] * flux;
                    y[e1 * n + i] -= self.faces.l2_val[*f1][s1 * n + i] * flux;
                }
            }
        }
        for (e, f, un) in &self.boundary {
            for s in 0..self.faces.npts {
                let flux = un[s] * trace(*f, s, *e);
                for i in 0..n {
                    y[e * n + i] += self.faces.l2_val[*f][s * n + i] * flux;
                }
            }
        }
        Ok(())
    }
}
