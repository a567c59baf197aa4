//! 1D quadrature, nodal Lagrange bases and tensor contractions.

mod basis;
mod contract;
mod quadrature;

pub use basis::{lagrange_eval, nodal_points, Basis1D};
pub use contract::{
    contract_axis, contract_dim, contract_dim_transpose, flops, tensor_apply, tensor_tmp_len, Axis,
    DenseMatrix, ElementTensor,
};
pub use quadrature::{gauss_legendre, gauss_lobatto, QuadratureRule1D};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{what} must be at least {min}, got {got}")]
    InvalidOrder {
        what: &'static str,
        min: usize,
        got: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
}
