//! Mesh-quality metrics `μ(T)` of the target-to-physical Jacobian `T`,
//! with first (`∂μ/∂T`) and second (`∂²μ/∂T²`) derivatives.
//!
//! Everything is expressed through the invariants `I1 = |T|²`,
//! `I2 = |adj T|²` and `I3 = det T`. Matrices are row-major d×d; the second
//! derivative is stored as `h[(i*d + j) * d*d + (k*d + l)]`.

use serde::{Deserialize, Serialize};

use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeMetric {
    /// `|T|² / (2 det T) - 1` (2D shape).
    Mu2,
    /// `|T|² |T⁻¹|² / 9 - 1` (3D shape).
    Mu302,
}

/// Shape metric plus an optional size term `w ½(τ - 1/τ)²`, `τ = det T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetric {
    pub shape: ShapeMetric,
    pub size_weight: f64,
}

impl QualityMetric {
    pub fn shape_for_dim(dim: usize) -> Self {
        Self {
            shape: if dim == 2 { ShapeMetric::Mu2 } else { ShapeMetric::Mu302 },
            size_weight: 0.0,
        }
    }

    pub fn with_size(mut self, weight: f64) -> Self {
        self.size_weight = weight;
        self
    }

    pub fn eval(&self, d: usize, t: &[f64]) -> f64 {
        let i1 = linalg::frobenius2(d, t);
        let i3 = linalg::det(d, t);
        let shape = match self.shape {
            ShapeMetric::Mu2 => i1 / (2.0 * i3) - 1.0,
            ShapeMetric::Mu302 => {
                let mut adj = [0.0; 9];
                linalg::adjugate(d, t, &mut adj);
                i1 * linalg::frobenius2(d, &adj) / (9.0 * i3 * i3) - 1.0
            }
        };
        let size = if self.size_weight != 0.0 {
            0.5 * (i3 - 1.0 / i3).powi(2)
        } else {
            0.0
        };
        shape + self.size_weight * size
    }

    /// `p = ∂μ/∂T`.
    pub fn first(&self, d: usize, t: &[f64], p: &mut [f64]) {
        let dd = d * d;
        let inv = Invariants::new(d, t);
        match self.shape {
            ShapeMetric::Mu2 => {
                let (i1, i3) = (inv.i1, inv.i3);
                for a in 0..dd {
                    p[a] = inv.di1[a] / (2.0 * i3) - i1 * inv.di3[a] / (2.0 * i3 * i3);
                }
            }
            ShapeMetric::Mu302 => {
                let (i1, i2, i3) = (inv.i1, inv.i2, inv.i3);
                let f = i1 * i2 / 9.0;
                let g = 1.0 / (i3 * i3);
                for a in 0..dd {
                    let df = (i2 * inv.di1[a] + i1 * inv.di2[a]) / 9.0;
                    let dg = -2.0 / (i3 * i3 * i3) * inv.di3[a];
                    p[a] = df * g + f * dg;
                }
            }
        }
        if self.size_weight != 0.0 {
            let tau = inv.i3;
            let s = self.size_weight * (tau - 1.0 / tau) * (1.0 + 1.0 / (tau * tau));
            for a in 0..dd {
                p[a] += s * inv.di3[a];
            }
        }
    }

    /// `h = ∂²μ/∂T²` (dd × dd, symmetric).
    pub fn second(&self, d: usize, t: &[f64], h: &mut [f64]) {
        let dd = d * d;
        let inv = Invariants::new(d, t);
        let d2i1 = |a: usize, b: usize| if a == b { 2.0 } else { 0.0 };
        let d2i3 = second_det(d, t);
        match self.shape {
            ShapeMetric::Mu2 => {
                let (i1, i3) = (inv.i1, inv.i3);
                for a in 0..dd {
                    for b in 0..dd {
                        h[a * dd + b] = d2i1(a, b) / (2.0 * i3)
                            - (inv.di1[a] * inv.di3[b] + inv.di3[a] * inv.di1[b]) / (2.0 * i3 * i3)
                            + i1 * inv.di3[a] * inv.di3[b] / (i3 * i3 * i3)
                            - i1 * d2i3[a * dd + b] / (2.0 * i3 * i3);
                    }
                }
            }
            ShapeMetric::Mu302 => {
                let (i1, i2, i3) = (inv.i1, inv.i2, inv.i3);
                let d2i2 = second_adj2(d, t, i1);
                let f = i1 * i2 / 9.0;
                let g = 1.0 / (i3 * i3);
                let mut df = [0.0; 9];
                let mut dg = [0.0; 9];
                for a in 0..dd {
                    df[a] = (i2 * inv.di1[a] + i1 * inv.di2[a]) / 9.0;
                    dg[a] = -2.0 / (i3 * i3 * i3) * inv.di3[a];
                }
                for a in 0..dd {
                    for b in 0..dd {
                        let d2f = (inv.di2[a] * inv.di1[b]
                            + inv.di1[a] * inv.di2[b]
                            + i2 * d2i1(a, b)
                            + i1 * d2i2[a * dd + b])
                            / 9.0;
                        let d2g = 6.0 / (i3 * i3 * i3 * i3) * inv.di3[a] * inv.di3[b]
                            - 2.0 / (i3 * i3 * i3) * d2i3[a * dd + b];
                        h[a * dd + b] = d2f * g + df[a] * dg[b] + dg[a] * df[b] + f * d2g;
                    }
                }
            }
        }
        if self.size_weight != 0.0 {
            let tau = inv.i3;
            let r = tau - 1.0 / tau;
            let dr = 1.0 + 1.0 / (tau * tau);
            let c1 = self.size_weight * (dr * dr + r * (-2.0 / (tau * tau * tau)));
            let c2 = self.size_weight * r * dr;
            for a in 0..dd {
                for b in 0..dd {
                    h[a * dd + b] += c1 * inv.di3[a] * inv.di3[b] + c2 * d2i3[a * dd + b];
                }
            }
        }
    }
}

struct Invariants {
    i1: f64,
    i2: f64,
    i3: f64,
    di1: [f64; 9],
    di2: [f64; 9],
    di3: [f64; 9],
}

impl Invariants {
    fn new(d: usize, t: &[f64]) -> Self {
        let dd = d * d;
        let i1 = linalg::frobenius2(d, t);
        let i3 = linalg::det(d, t);
        let mut adj = [0.0; 9];
        linalg::adjugate(d, t, &mut adj);
        let i2 = linalg::frobenius2(d, &adj);
        let mut di1 = [0.0; 9];
        let mut di3 = [0.0; 9];
        for i in 0..d {
            for j in 0..d {
                di1[i * d + j] = 2.0 * t[i * d + j];
                // cofactor = adjugate transposed
                di3[i * d + j] = adj[j * d + i];
            }
        }
        let mut di2 = [0.0; 9];
        if d == 3 {
            // 2 I1 T - 2 T TᵀT
            let mut tt = [0.0; 9];
            let mut ttt = [0.0; 9];
            let mut tr = [0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    tr[i * 3 + j] = t[j * 3 + i];
                }
            }
            linalg::matmul(3, &tr, t, &mut tt);
            linalg::matmul(3, t, &tt, &mut ttt);
            for a in 0..dd {
                di2[a] = 2.0 * i1 * t[a] - 2.0 * ttt[a];
            }
        } else {
            di2[..dd].copy_from_slice(&di1[..dd]);
        }
        Self { i1, i2, i3, di1, di2, di3 }
    }
}

fn levi_civita3(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// `∂² det T / ∂T_ij ∂T_kl`.
fn second_det(d: usize, t: &[f64]) -> [f64; 81] {
    let dd = d * d;
    let mut h = [0.0; 81];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let v = if d == 2 {
                        let e = |a: usize, b: usize| match (a, b) {
                            (0, 1) => 1.0,
                            (1, 0) => -1.0,
                            _ => 0.0,
                        };
                        e(i, k) * e(j, l)
                    } else {
                        let mut s = 0.0;
                        for m in 0..3 {
                            for n in 0..3 {
                                s += levi_civita3(i, k, m) * levi_civita3(j, l, n) * t[m * 3 + n];
                            }
                        }
                        s
                    };
                    h[(i * d + j) * dd + k * d + l] = v;
                }
            }
        }
    }
    h
}

/// `∂² |adj T|² / ∂T_ij ∂T_kl` for d = 3.
fn second_adj2(d: usize, t: &[f64], i1: f64) -> [f64; 81] {
    let dd = d * d;
    let mut tt = [0.0; 9]; // TᵀT
    let mut tt2 = [0.0; 9]; // TTᵀ
    for a in 0..d {
        for b in 0..d {
            for m in 0..d {
                tt[a * d + b] += t[m * d + a] * t[m * d + b];
                tt2[a * d + b] += t[a * d + m] * t[b * d + m];
            }
        }
    }
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut h = [0.0; 81];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    h[(i * d + j) * dd + k * d + l] = 4.0 * t[i * d + j] * t[k * d + l]
                        + 2.0 * i1 * delta(i, k) * delta(j, l)
                        - 2.0
                            * (delta(i, k) * tt[l * d + j]
                                + t[i * d + l] * t[k * d + j]
                                + tt2[i * d + k] * delta(j, l));
                }
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn metrics(d: usize) -> [QualityMetric; 2] {
        let m = QualityMetric::shape_for_dim(d);
        [m, m.with_size(0.7)]
    }

    fn random_t(d: usize, vals: &[f64]) -> Vec<f64> {
        let mut t: Vec<f64> = vals[..d * d].iter().map(|v| 0.3 * v).collect();
        for i in 0..d {
            t[i * d + i] += 1.0;
        }
        t
    }

    #[test]
    fn identity_is_optimal() {
        for d in [2, 3] {
            let mut id = vec![0.0; d * d];
            for i in 0..d {
                id[i * d + i] = 1.0;
            }
            for m in metrics(d) {
                assert!(m.eval(d, &id).abs() < 1e-15);
                let mut p = vec![0.0; d * d];
                m.first(d, &id, &mut p);
                assert!(p.iter().all(|v| v.abs() < 1e-14));
            }
            // Shape metrics are scale invariant.
            let scaled: Vec<f64> = id.iter().map(|v| 2.5 * v).collect();
            assert!(QualityMetric::shape_for_dim(d).eval(d, &scaled).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(d in 2usize..4, vals in prop::collection::vec(-1.0f64..1.0, 9)) {
            let t = random_t(d, &vals);
            prop_assume!(linalg::det(d, &t) > 0.2);
            let dd = d * d;
            for m in metrics(d) {
                let mut p = vec![0.0; dd];
                m.first(d, &t, &mut p);
                let mut h = vec![0.0; dd * dd];
                m.second(d, &t, &mut h);
                let eps = 1e-6;
                for a in 0..dd {
                    let mut tp = t.clone();
                    let mut tm = t.clone();
                    tp[a] += eps;
                    tm[a] -= eps;
                    let fd = (m.eval(d, &tp) - m.eval(d, &tm)) / (2.0 * eps);
                    prop_assert!((fd - p[a]).abs() < 1e-6 * (1.0 + p[a].abs()), "first {a}: {fd} vs {}", p[a]);
                    let mut pp = vec![0.0; dd];
                    let mut pm = vec![0.0; dd];
                    m.first(d, &tp, &mut pp);
                    m.first(d, &tm, &mut pm);
                    for b in 0..dd {
                        let fd2 = (pp[b] - pm[b]) / (2.0 * eps);
                        prop_assert!((fd2 - h[b * dd + a]).abs() < 1e-5 * (1.0 + h[b * dd + a].abs()));
                        prop_assert!((h[a * dd + b] - h[b * dd + a]).abs() < 1e-10 * (1.0 + h[a * dd + b].abs()));
                    }
                }
            }
        }
    }
}
