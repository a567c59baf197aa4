//! Small dense helpers: vector kernels, d×d matrices (row-major, stride d)
//! and dense LU factorizations for element blocks.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn det(d: usize, a: &[f64]) -> f64 {
    match d {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Adjugate (transpose of the cofactor matrix): `adj(A) A = det(A) I`.
pub fn adjugate(d: usize, a: &[f64], out: &mut [f64]) {
    match d {
        1 => out[0] = 1.0,
        2 => {
            out[0] = a[3];
            out[1] = -a[1];
            out[2] = -a[2];
            out[3] = a[0];
        }
        3 => {
            out[0] = a[4] * a[8] - a[5] * a[7];
            out[1] = a[2] * a[7] - a[1] * a[8];
            out[2] = a[1] * a[5] - a[2] * a[4];
            out[3] = a[5] * a[6] - a[3] * a[8];
            out[4] = a[0] * a[8] - a[2] * a[6];
            out[5] = a[2] * a[3] - a[0] * a[5];
            out[6] = a[3] * a[7] - a[4] * a[6];
            out[7] = a[1] * a[6] - a[0] * a[7];
            out[8] = a[0] * a[4] - a[1] * a[3];
        }
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Inverse; returns the determinant.
pub fn inverse(d: usize, a: &[f64], out: &mut [f64]) -> f64 {
    let det = det(d, a);
    adjugate(d, a, out);
    for v in out[..d * d].iter_mut() {
        *v /= det;
    }
    det
}

/// c = a b for d×d matrices.
pub fn matmul(d: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            c[i * d + j] = s;
        }
    }
}

/// c = a bᵀ
pub fn matmul_bt(d: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[j * d + k];
            }
            c[i * d + j] = s;
        }
    }
}

pub fn frobenius2(d: usize, a: &[f64]) -> f64 {
    a[..d * d].iter().map(|v| v * v).sum()
}

/// Smallest eigenvalue of a symmetric d×d matrix.
pub fn sym_min_eigenvalue(d: usize, a: &[f64]) -> f64 {
    match d {
        1 => a[0],
        2 => {
            let m = 0.5 * (a[0] + a[3]);
            let r = (0.25 * (a[0] - a[3]).powi(2) + a[1] * a[1]).sqrt();
            m - r
        }
        3 => {
            let p1 = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
            let q = (a[0] + a[4] + a[8]) / 3.0;
            if p1 <= 1e-300 {
                return a[0].min(a[4]).min(a[8]);
            }
            let p2 = (a[0] - q).powi(2) + (a[4] - q).powi(2) + (a[8] - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let mut b = [0.0; 9];
            for i in 0..9 {
                b[i] = a[i] / p;
            }
            for i in 0..3 {
                b[4 * i] -= q / p;
            }
            let r = (det(3, &b) / 2.0).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos()
        }
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Unit eigenvector of a symmetric `a` for the eigenvalue `lambda`; any
/// unit vector when the eigenvalue is repeated.
pub fn sym_eigenvector(d: usize, a: &[f64], lambda: f64) -> [f64; 3] {
    let mut best = [0.0; 3];
    let mut best_norm = 0.0;
    let mut consider = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > best_norm {
            best_norm = n;
            best = v;
        }
    };
    match d {
        1 => consider([1.0, 0.0, 0.0]),
        2 => {
            consider([a[1], lambda - a[0], 0.0]);
            consider([lambda - a[3], a[2], 0.0]);
        }
        3 => {
            let r = |i: usize| {
                let mut row = [a[3 * i], a[3 * i + 1], a[3 * i + 2]];
                row[i] -= lambda;
                row
            };
            let cross = |u: [f64; 3], v: [f64; 3]| {
                [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
            };
            consider(cross(r(0), r(1)));
            consider(cross(r(0), r(2)));
            consider(cross(r(1), r(2)));
        }
        _ => panic!("unsupported dimension {d}"),
    }
    let scale: f64 = a[..d * d].iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    if best_norm <= 1e-12 * scale * scale {
        return [1.0, 0.0, 0.0];
    }
    best.map(|v| v / best_norm)
}

/// Smallest singular value of a d×d matrix.
pub fn min_singular_value(d: usize, a: &[f64]) -> f64 {
    let mut ata = [0.0; 9];
    for i in 0..d {
        for j in 0..d {
            ata[i * d + j] = (0..d).map(|k| a[k * d + i] * a[k * d + j]).sum();
        }
    }
    sym_min_eigenvalue(d, &ata[..d * d]).max(0.0).sqrt()
}

/// Dense LU factorization with partial pivoting of an n×n row-major matrix.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    /// Returns `None` for a (numerically) singular matrix.
    pub fn factor(n: usize, a: &[f64]) -> Option<Self> {
        let mut lu = a[..n * n].to_vec();
        let mut piv: Vec<usize> = (0..n).collect();
        let scale = norm_inf(&lu).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= 1e-14 * scale {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let inv = 1.0 / lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] * inv;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Some(Self { n, lu, piv })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Solve in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        b[..n].copy_from_slice(&x);
    }
}

/// y = A x for a dense row-major n×m block.
pub fn dense_matvec(n: usize, m: usize, a: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        y[i] = dot(&a[i * m..(i + 1) * m], &x[..m]);
    }
}
