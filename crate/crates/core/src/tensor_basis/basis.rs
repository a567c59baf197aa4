use super::quadrature::{gauss_lobatto, QuadratureRule1D};
use super::TensorError;

/// Nodal points of an order-`p` 1D Lagrange basis: Gauss–Lobatto points for
/// `p >= 1` and the element midpoint for `p = 0`.
pub fn nodal_points(p: usize) -> Vec<f64> {
    if p == 0 {
        vec![0.0]
    } else {
        gauss_lobatto(p).expect("p >= 1").points
    }
}

/// Values and derivatives of all Lagrange polynomials on `nodes` at `x`.
pub fn lagrange_eval(nodes: &[f64], x: f64, values: &mut [f64], derivs: &mut [f64]) {
    let n = nodes.len();
    for j in 0..n {
        let mut denom = 1.0;
        let mut val = 1.0;
        let mut der = 0.0;
        for k in 0..n {
            if k == j {
                continue;
            }
            denom *= nodes[j] - nodes[k];
            // Product rule accumulated on the fly.
            der = der * (x - nodes[k]) + val;
            val *= x - nodes[k];
        }
        values[j] = val / denom;
        derivs[j] = der / denom;
    }
}

/// Basis tables at quadrature points: `b[q * nd + i] = φ_i(x_q)` and
/// `g[q * nd + i] = φ_i'(x_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis1D {
    pub nodes: Vec<f64>,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub b: Vec<f64>,
    pub g: Vec<f64>,
}

impl Basis1D {
    pub fn new(nodes: &[f64], quad: &QuadratureRule1D) -> Result<Self, TensorError> {
        if nodes.is_empty() || quad.is_empty() {
            return Err(TensorError::Shape("empty node or point set".into()));
        }
        let (b, g) = Self::tables(nodes, &quad.points);
        Ok(Self {
            nodes: nodes.to_vec(),
            points: quad.points.clone(),
            weights: quad.weights.clone(),
            b,
            g,
        })
    }

    /// Basis of order `p` (see [`nodal_points`]).
    pub fn of_order(p: usize, quad: &QuadratureRule1D) -> Result<Self, TensorError> {
        Self::new(&nodal_points(p), quad)
    }

    /// Value and derivative tables at arbitrary points.
    pub fn tables(nodes: &[f64], points: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nd = nodes.len();
        let mut b = vec![0.0; points.len() * nd];
        let mut g = vec![0.0; points.len() * nd];
        for (q, &x) in points.iter().enumerate() {
            lagrange_eval(nodes, x, &mut b[q * nd..(q + 1) * nd], &mut g[q * nd..(q + 1) * nd]);
        }
        (b, g)
    }

    pub fn nd(&self) -> usize {
        self.nodes.len()
    }

    pub fn nq(&self) -> usize {
        self.points.len()
    }
}
