use std::sync::Arc;

use super::{check_len, element_apply, hadamard, LinearOperator, OperatorError};
use crate::memory_pool::{ArenaKind, PoolVec};
use crate::mesh_fespace::{ElementBasis, FiniteElementSpace, GeometricFactors};
use crate::runtime::Runtime;
use crate::tensor_basis::{flops, tensor_apply, Axis};

/// Mass operator `M_ij = ∫ c φ_i φ_j`, applied component-wise for vector
/// spaces. Point data: `D_q = w_q c_q detJ_q`.
pub struct MassPA {
    rt: Runtime,
    space: Arc<FiniteElementSpace>,
    eb: ElementBasis,
    qdata: PoolVec,
}

impl MassPA {
    /// `coeff` (per point, `NE * nqpt`) defaults to 1.
    pub fn new(
        rt: &Runtime,
        space: Arc<FiniteElementSpace>,
        eb: ElementBasis,
        geom: &GeometricFactors,
        coeff: Option<&[f64]>,
    ) -> Result<Self, OperatorError> {
        let nqpt = eb.nqpt();
        let n = space.num_elements * nqpt;
        check_len(n, geom.det.len())?;
        if let Some(c) = coeff {
            check_len(n, c.len())?;
        }
        let mut qdata = rt.memory.take(ArenaKind::Permanent, n)?;
        for e in 0..space.num_elements {
            for q in 0..nqpt {
                let i = e * nqpt + q;
                qdata[i] = geom.wdet(e, q) * coeff.map_or(1.0, |c| c[i]);
            }
        }
        flops::add(2 * n as u64);
        Ok(Self {
            rt: rt.clone(),
            space,
            eb,
            qdata,
        })
    }

    /// Build from precomputed point data `D_q` (already weighted).
    pub fn from_point_data(
        rt: &Runtime,
        space: Arc<FiniteElementSpace>,
        eb: ElementBasis,
        data: &[f64],
    ) -> Result<Self, OperatorError> {
        check_len(space.num_elements * eb.nqpt(), data.len())?;
        let mut qdata = rt.memory.take(ArenaKind::Permanent, data.len())?;
        qdata.copy_from_slice(data);
        Ok(Self {
            rt: rt.clone(),
            space,
            eb,
            qdata,
        })
    }

    pub fn space(&self) -> &Arc<FiniteElementSpace> {
        &self.space
    }

    pub fn point_data(&self) -> &[f64] {
        &self.qdata
    }

    /// Number of stored values (the PA memory footprint).
    pub fn stored_values(&self) -> usize {
        self.qdata.len()
    }

    pub fn diagonal(&self) -> Result<Vec<f64>, OperatorError> {
        let bsq = hadamard(&self.eb.basis.b, &self.eb.basis.b);
        let (nq, nd, nqpt, dim) = (self.eb.nq(), self.eb.nd(), self.eb.nqpt(), self.eb.dim);
        let axes = [Axis::new(&bsq, nq, nd); 3];
        let vdim = self.space.vdim;
        let nloc = self.space.nloc;
        let qd: &[f64] = &self.qdata;
        let zero = vec![0.0; self.space.vsize()];
        let mut diag = vec![0.0; self.space.vsize()];
        let tmp_len = self.eb.tmp_len();
        element_apply(&self.rt, &self.space, &self.space, nq, &zero, &mut diag, |ctx, e, _, ye| {
            let tmp = ctx.scratch(tmp_len)?;
            for c in 0..vdim {
                tensor_apply(
                    &axes[..dim],
                    true,
                    &qd[e * nqpt..(e + 1) * nqpt],
                    &mut ye[c * nloc..(c + 1) * nloc],
                    tmp,
                    true,
                );
            }
            Ok(())
        })?;
        Ok(diag)
    }
}

impl LinearOperator for MassPA {
    fn height(&self) -> usize {
        self.space.vsize()
    }

    fn width(&self) -> usize {
        self.space.vsize()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), OperatorError> {
        let eb = &self.eb;
        let (nqpt, nloc, vdim) = (eb.nqpt(), self.space.nloc, self.space.vdim);
        let qd: &[f64] = &self.qdata;
        element_apply(&self.rt, &self.space, &self.space, eb.nq(), x, y, |ctx, e, xe, ye| {
            let tmp = ctx.scratch(eb.tmp_len())?;
            let u = ctx.scratch(nqpt)?;
            for c in 0..vdim {
                eb.eval(None, &xe[c * nloc..(c + 1) * nloc], u, tmp);
                for (uq, dq) in u.iter_mut().zip(&qd[e * nqpt..(e + 1) * nqpt]) {
                    *uq *= dq;
                }
                flops::add(nqpt as u64);
                eb.eval_t(None, u, &mut ye[c * nloc..(c + 1) * nloc], tmp);
            }
            Ok(())
        })
    }
}
