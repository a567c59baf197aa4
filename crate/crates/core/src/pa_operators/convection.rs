use std::sync::Arc;

use super::{check_len, element_apply, LinearOperator, OperatorError};
use crate::memory_pool::{ArenaKind, PoolVec};
use crate::mesh_fespace::{ElementBasis, FiniteElementSpace, GeometricFactors};
use crate::runtime::Runtime;
use crate::tensor_basis::flops;

/// Continuous convection `K_ij = ∫ φ_i (u·∇φ_j)`, applied component-wise.
/// Point data: `D_q[k] = w_q detJ_q (J⁻¹ u_q)_k`.
pub struct ConvectionPA {
    rt: Runtime,
    space: Arc<FiniteElementSpace>,
    eb: ElementBasis,
    qdata: PoolVec,
}

impl ConvectionPA {
    /// `velocity` holds `u` at every point, laid out `((e * d + c) * nqpt + q)`.
    pub fn new(
        rt: &Runtime,
        space: Arc<FiniteElementSpace>,
        eb: ElementBasis,
        geom: &GeometricFactors,
        velocity: &[f64],
    ) -> Result<Self, OperatorError> {
        let d = eb.dim;
        let nqpt = eb.nqpt();
        let ne = space.num_elements;
        check_len(ne * d * nqpt, velocity.len())?;
        let mut qdata = rt.memory.take(ArenaKind::Permanent, ne * nqpt * d)?;
        for e in 0..ne {
            for q in 0..nqpt {
                let inv = geom.inv(e, q);
                let w = geom.wdet(e, q);
                for k in 0..d {
                    let mut v = 0.0;
                    for c in 0..d {
                        v += inv[k * d + c] * velocity[(e * d + c) * nqpt + q];
                    }
                    qdata[(e * nqpt + q) * d + k] = w * v;
                }
            }
        }
        flops::add((ne * nqpt * d * d) as u64);
        Ok(Self {
            rt: rt.clone(),
            space,
            eb,
            qdata,
        })
    }

    pub fn stored_values(&self) -> usize {
        self.qdata.len()
    }

    pub fn point_data(&self) -> &[f64] {
        &self.qdata
    }
}

impl LinearOperator for ConvectionPA {
    fn height(&self) -> usize {
        self.space.vsize()
    }

    fn width(&self) -> usize {
        self.space.vsize()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        let eb = &self.eb;
        let (nqpt, nloc, vdim, d) = (eb.nqpt(), self.space.nloc, self.space.vdim, eb.dim);
        let qd: &[f64] = &self.qdata;
        element_apply(&self.rt, &self.space, &self.space, eb.nq(), x, y, |ctx, e, xe, ye| {
            let tmp = ctx.scratch(eb.tmp_len())?;
            let g = ctx.scratch(nqpt)?;
            let s = ctx.scratch(nqpt)?;
            for c in 0..vdim {
                s.fill(0.0);
                for k in 0..d {
                    eb.eval(Some(k), &xe[c * nloc..(c + 1) * nloc], g, tmp);
                    for q in 0..nqpt {
                        s[q] += qd[(e * nqpt + q) * d + k] * g[q];
                    }
                }
                flops::add((nqpt * d) as u64);
                eb.eval_t(None, s, &mut ye[c * nloc..(c + 1) * nloc], tmp);
            }
            Ok(())
        })
    }
}
