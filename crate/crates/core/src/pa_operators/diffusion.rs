use std::sync::Arc;

use super::{check_len, element_apply, hadamard, LinearOperator, OperatorError};
use crate::memory_pool::{ArenaKind, PoolVec};
use crate::mesh_fespace::{ElementBasis, FiniteElementSpace, GeometricFactors};
use crate::runtime::Runtime;
use crate::tensor_basis::{flops, tensor_apply, Axis};

/// Diffusion operator `K_ij = ∫ ν ∇φ_i·∇φ_j`. Point data (d×d per point):
/// `D_q = w_q ν_q detJ_q J⁻¹ J⁻ᵀ`.
pub struct DiffusionPA {
    rt: Runtime,
    space: Arc<FiniteElementSpace>,
    eb: ElementBasis,
    qdata: PoolVec,
}

impl DiffusionPA {
    pub fn new(
        rt: &Runtime,
        space: Arc<FiniteElementSpace>,
        eb: ElementBasis,
        geom: &GeometricFactors,
        coeff: Option<&[f64]>,
    ) -> Result<Self, OperatorError> {
        let d = eb.dim;
        let dd = d * d;
        let nqpt = eb.nqpt();
        let n = space.num_elements * nqpt;
        check_len(n, geom.det.len())?;
        if let Some(c) = coeff {
            check_len(n, c.len())?;
        }
        let mut qdata = rt.memory.take(ArenaKind::Permanent, n * dd)?;
        for e in 0..space.num_elements {
            for q in 0..nqpt {
                let i = e * nqpt + q;
                let s = geom.wdet(e, q) * coeff.map_or(1.0, |c| c[i]);
                let inv = geom.inv(e, q);
                for k in 0..d {
                    for l in 0..d {
                        let mut v = 0.0;
                        for m in 0..d {
                            v += inv[k * d + m] * inv[l * d + m];
                        }
                        qdata[i * dd + k * d + l] = s * v;
                    }
                }
            }
        }
        flops::add((n * dd * d) as u64);
        Ok(Self {
            rt: rt.clone(),
            space,
            eb,
            qdata,
        })
    }

    pub fn point_data(&self) -> &[f64] {
        &self.qdata
    }

    pub fn stored_values(&self) -> usize {
        self.qdata.len()
    }

    pub fn diagonal(&self) -> Result<Vec<f64>, OperatorError> {
        let eb = &self.eb;
        let (nq, nd, nqpt, d) = (eb.nq(), eb.nd(), eb.nqpt(), eb.dim);
        let bb = hadamard(&eb.basis.b, &eb.basis.b);
        let gb = hadamard(&eb.basis.g, &eb.basis.b);
        let gg = hadamard(&eb.basis.g, &eb.basis.g);
        let (vdim, nloc) = (self.space.vdim, self.space.nloc);
        let qd: &[f64] = &self.qdata;
        let zero = vec![0.0; self.space.vsize()];
        let mut diag = vec![0.0; self.space.vsize()];
        element_apply(&self.rt, &self.space, &self.space, nq, &zero, &mut diag, |ctx, e, _, ye| {
            let tmp = ctx.scratch(eb.tmp_len())?;
            let kls = ctx.scratch(nqpt)?;
            let block = ctx.scratch(nloc)?;
            for l in 0..d {
                for s in 0..d {
                    for q in 0..nqpt {
                        kls[q] = qd[(e * nqpt + q) * d * d + l * d + s];
                    }
                    let mut axes = [Axis::new(&bb, nq, nd); 3];
                    for (a, ax) in axes.iter_mut().enumerate().take(d) {
                        let m: &[f64] = match (a == l, a == s) {
                            (true, true) => &gg,
                            (true, false) | (false, true) => &gb,
                            (false, false) => &bb,
                        };
                        *ax = Axis::new(m, nq, nd);
                    }
                    tensor_apply(&axes[..d], true, kls, block, tmp, true);
                }
            }
            for c in 0..vdim {
                ye[c * nloc..(c + 1) * nloc].copy_from_slice(block);
            }
            Ok(())
        })?;
        Ok(diag)
    }
}

impl LinearOperator for DiffusionPA {
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
            let grad = ctx.scratch(d * nqpt)?;
            let flux = ctx.scratch(nqpt)?;
            for c in 0..vdim {
                let xc = &xe[c * nloc..(c + 1) * nloc];
                for k in 0..d {
                    eb.eval(Some(k), xc, &mut grad[k * nqpt..(k + 1) * nqpt], tmp);
                }
                for k in 0..d {
                    for q in 0..nqpt {
                        let dq = &qd[(e * nqpt + q) * d * d + k * d..];
                        flux[q] = (0..d).map(|l| dq[l] * grad[l * nqpt + q]).sum();
                    }
                    eb.eval_t(Some(k), flux, &mut ye[c * nloc..(c + 1) * nloc], tmp);
                }
                flops::add((nqpt * d * d) as u64);
            }
            Ok(())
        })
    }
}
