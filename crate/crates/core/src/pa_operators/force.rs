use std::sync::Arc;

use super::{check_len, element_apply, LinearOperator, OperatorError};
use crate::memory_pool::{ArenaKind, PoolVec};
use crate::mesh_fespace::{ElementBasis, FiniteElementSpace};
use crate::runtime::Runtime;
use crate::tensor_basis::flops;

/// Mixed force operator `F_(c,i),j = ∫ (σ:∇w_i^c) ψ_j` mapping the L2
/// (thermodynamic) space to the H1 vector (kinematic) space.
///
/// Point data per point is the d×d matrix `D[c][k] = w detJ (σ J⁻ᵀ)_{ck}`.
pub struct ForcePA {
    rt: Runtime,
    h1: Arc<FiniteElementSpace>,
    l2: Arc<FiniteElementSpace>,
    eb_h1: ElementBasis,
    eb_l2: ElementBasis,
    qdata: PoolVec,
}

impl ForcePA {
    pub fn new(
        rt: &Runtime,
        h1: Arc<FiniteElementSpace>,
        l2: Arc<FiniteElementSpace>,
        eb_h1: ElementBasis,
        eb_l2: ElementBasis,
        data: &[f64],
    ) -> Result<Self, OperatorError> {
        let d = h1.dim;
        if h1.vdim != d || l2.vdim != 1 {
            return Err(OperatorError::Data("force needs a vector H1 and a scalar L2 space".into()));
        }
        if eb_h1.nq() != eb_l2.nq() {
            return Err(OperatorError::Data("H1 and L2 bases use different quadratures".into()));
        }
        check_len(h1.num_elements * eb_h1.nqpt() * d * d, data.len())?;
        let mut qdata = rt.memory.take(ArenaKind::Permanent, data.len())?;
        qdata.copy_from_slice(data);
        Ok(Self {
            rt: rt.clone(),
            h1,
            l2,
            eb_h1,
            eb_l2,
            qdata,
        })
    }

    pub fn stored_values(&self) -> usize {
        self.qdata.len()
    }

    /// `y = Fᵀ v` (H1 vector to L2).
    pub fn apply_transpose(&self, v: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        let (ebh, ebl) = (&self.eb_h1, &self.eb_l2);
        let d = ebh.dim;
        let (nqpt, nloc) = (ebh.nqpt(), self.h1.nloc);
        let qd: &[f64] = &self.qdata;
        let tmp_len = ebh.tmp_len().max(ebl.tmp_len());
        element_apply(&self.rt, &self.h1, &self.l2, ebh.nq(), v, y, |ctx, e, ve, ye| {
            let tmp = ctx.scratch(tmp_len)?;
            let g = ctx.scratch(nqpt)?;
            let s = ctx.scratch(nqpt)?;
            for c in 0..d {
                for k in 0..d {
                    ebh.eval(Some(k), &ve[c * nloc..(c + 1) * nloc], g, tmp);
                    for q in 0..nqpt {
                        s[q] += qd[(e * nqpt + q) * d * d + c * d + k] * g[q];
                    }
                }
            }
            flops::add((nqpt * d * d) as u64);
            ebl.eval_t(None, s, ye, tmp);
            Ok(())
        })
    }
}

impl LinearOperator for ForcePA {
    fn height(&self) -> usize {
        self.h1.vsize()
    }

    fn width(&self) -> usize {
        self.l2.vsize()
    }

    /// `y = F e` (L2 to H1 vector).
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        let (ebh, ebl) = (&self.eb_h1, &self.eb_l2);
        let d = ebh.dim;
        let (nqpt, nloc) = (ebh.nqpt(), self.h1.nloc);
        let qd: &[f64] = &self.qdata;
        let tmp_len = ebh.tmp_len().max(ebl.tmp_len());
        element_apply(&self.rt, &self.l2, &self.h1, ebh.nq(), x, y, |ctx, e, xe, ye| {
            let tmp = ctx.scratch(tmp_len)?;
            let phi = ctx.scratch(nqpt)?;
            let f = ctx.scratch(nqpt)?;
            ebl.eval(None, xe, phi, tmp);
            for c in 0..d {
                for k in 0..d {
                    for q in 0..nqpt {
                        f[q] = qd[(e * nqpt + q) * d * d + c * d + k] * phi[q];
                    }
                    ebh.eval_t(Some(k), f, &mut ye[c * nloc..(c + 1) * nloc], tmp);
                }
            }
            flops::add((nqpt * d * d) as u64);
            Ok(())
        })
    }
}

/// `Fᵀ` as a [`LinearOperator`].
pub struct ForceTranspose<'a>(pub &'a ForcePA);

impl LinearOperator for ForceTranspose<'_> {
    fn height(&self) -> usize {
        self.0.width()
    }

    fn width(&self) -> usize {
        self.0.height()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        self.0.apply_transpose(x, y)
    }
}
