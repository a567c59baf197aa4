use std::f64::consts::PI;

use super::TensorError;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;

/// Points in [-1, 1] (ascending) and weights summing to 2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Legendre polynomial and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        // Endpoint limit: P_n'(±1) = (±1)^{n+1} n(n+1)/2.
        let s = if x > 0.0 || n % 2 == 1 { 1.0 } else { -1.0 };
        s * nf * (nf + 1.0) / 2.0
    } else {
        nf * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, dp)
}

/// Gauss–Legendre rule with `n` points (exact to degree 2n-1).
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule1D, TensorError> {
    if n == 0 {
        return Err(TensorError::InvalidOrder {
            what: "quadrature point count",
            min: 1,
            got: 0,
        });
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITERS {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Newton from the right end yields descending roots; mirror for symmetry.
        points[n - 1 - i] = x;
        points[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok(QuadratureRule1D { points, weights })
}

/// Gauss–Lobatto rule with `p + 1` points including both endpoints
/// (exact to degree 2p-1).
pub fn gauss_lobatto(p: usize) -> Result<QuadratureRule1D, TensorError> {
    if p == 0 {
        return Err(TensorError::InvalidOrder {
            what: "Lobatto order",
            min: 1,
            got: 0,
        });
    }
    let n = p + 1;
    let pf = p as f64;
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    points[0] = -1.0;
    points[p] = 1.0;
    // Interior nodes are roots of P_p'; P_p'' comes from the Legendre ODE.
    for i in 1..n.div_ceil(2) {
        let mut x = (PI * i as f64 / pf).cos();
        for _ in 0..NEWTON_MAX_ITERS {
            let (pv, dp) = legendre(p, x);
            let d2p = (2.0 * x * dp - pf * (pf + 1.0) * pv) / (1.0 - x * x);
            let dx = dp / d2p;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        points[p - i] = x;
        points[i] = -x;
    }
    if n % 2 == 1 {
        points[p / 2] = 0.0;
    }
    for i in 0..n {
        let (pv, _) = legendre(p, points[i]);
        weights[i] = 2.0 / (pf * (pf + 1.0) * pv * pv);
    }
    Ok(QuadratureRule1D { points, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_rule() {
        let r = gauss_legendre(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((r.points[0] + x).abs() < 1e-15 && (r.points[1] - x).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15 && (r.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_point_rule() {
        let r = gauss_legendre(1).unwrap();
        assert_eq!(r.points, vec![0.0]);
        assert!((r.weights[0] - 2.0).abs() < 1e-15);
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_lobatto(0).is_err());
    }

    #[test]
    fn lobatto_p2() {
        let r = gauss_lobatto(2).unwrap();
        assert_eq!(r.points, vec![-1.0, 0.0, 1.0]);
        let expect = [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0];
        for (w, e) in r.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-14);
        }
        let r = gauss_lobatto(3).unwrap();
        assert!((r.points[2] - 1.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exactness_degree_2n_minus_1() {
        for n in 1..=12 {
            let r = gauss_legendre(n).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for k in 0..=(2 * n - 1) {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} k={k}");
            }
            for i in 1..n {
                assert!(r.points[i] > r.points[i - 1]);
                assert!(r.points[i].abs() < 1.0);
            }
        }
    }

    #[test]
    fn lobatto_exactness() {
        for p in 1..=10 {
            let r = gauss_lobatto(p).unwrap();
            for k in 0..=(2 * p - 1) {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "p={p} k={k}");
            }
        }
    }
}
