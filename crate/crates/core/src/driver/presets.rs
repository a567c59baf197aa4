use std::f64::consts::PI;
use std::sync::Arc;

use super::DriverError;
use crate::lagrange_hydro::{HydroState, MaterialModel};
use crate::mesh_fespace::{cartesian_mesh, BoundaryKind, Discretization};
use crate::runtime::Runtime;

pub const PRESET_NAMES: [&str; 5] = ["triple-pt-2d", "triple-pt-3d", "sod-1dx", "taylor-green", "uniform"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    TriplePoint2,
    TriplePoint3,
    Sod,
    TaylorGreen,
    Uniform,
}

/// Initial data of a named problem on a box `[0, L_0] x ... ` with walls.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    kind: Kind,
    pub dim: usize,
    pub lengths: Vec<f64>,
    pub default_zones: Vec<usize>,
    pub gamma: f64,
}

pub fn problem_preset(name: &str) -> Result<Preset, DriverError> {
    let (name, kind, lengths, zones, gamma): (&'static str, _, Vec<f64>, Vec<usize>, _) = match name {
        "triple-pt-2d" => ("triple-pt-2d", Kind::TriplePoint2, vec![7.0, 3.0], vec![14, 6], 1.5),
        "triple-pt-3d" => ("triple-pt-3d", Kind::TriplePoint3, vec![7.0, 3.0, 3.0], vec![14, 4, 4], 1.5),
        "sod-1dx" => ("sod-1dx", Kind::Sod, vec![1.0, 0.1], vec![32, 2], 1.4),
        "taylor-green" => ("taylor-green", Kind::TaylorGreen, vec![1.0, 1.0], vec![8, 8], 5.0 / 3.0),
        "uniform" => ("uniform", Kind::Uniform, vec![1.0, 1.0], vec![8, 8], 1.4),
        other => {
            return Err(DriverError::Config(format!(
                "unknown preset `{other}`; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(Preset {
        name,
        kind,
        dim: lengths.len(),
        lengths,
        default_zones: zones,
        gamma,
    })
}

impl Preset {
    pub fn density(&self, x: &[f64]) -> f64 {
        match self.kind {
            Kind::TriplePoint2 => {
                if x[0] > 1.0 && x[1] > 1.5 {
                    0.125
                } else {
                    1.0
                }
            }
            Kind::TriplePoint3 => {
                let upper = (x[1] > 1.5) != (x[2] > 1.5);
                if x[0] > 1.0 && upper {
                    0.125
                } else {
                    1.0
                }
            }
            Kind::Sod => {
                if x[0] < 0.5 {
                    1.0
                } else {
                    0.125
                }
            }
            Kind::TaylorGreen | Kind::Uniform => 1.0,
        }
    }

    pub fn pressure(&self, x: &[f64]) -> f64 {
        match self.kind {
            Kind::TriplePoint2 | Kind::TriplePoint3 => {
                if x[0] < 1.0 {
                    1.0
                } else {
                    0.1
                }
            }
            Kind::Sod => {
                if x[0] < 0.5 {
                    1.0
                } else {
                    0.1
                }
            }
            Kind::TaylorGreen => 100.0 + ((2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos()) / 4.0,
            Kind::Uniform => 1.0,
        }
    }

    pub fn velocity(&self, x: &[f64], v: &mut [f64]) {
        v.fill(0.0);
        if self.kind == Kind::TaylorGreen {
            v[0] = (PI * x[0]).sin() * (PI * x[1]).cos();
            v[1] = -(PI * x[0]).cos() * (PI * x[1]).sin();
        }
    }

    pub fn specific_energy(&self, x: &[f64]) -> f64 {
        self.pressure(x) / ((self.gamma - 1.0) * self.density(x))
    }

    pub fn material(&self) -> MaterialModel {
        MaterialModel { gamma: self.gamma }
    }

    pub fn discretization(&self, order: usize, zones: Option<&[usize]>) -> Result<Arc<Discretization>, DriverError> {
        let zones = zones.unwrap_or(&self.default_zones);
        let mesh = cartesian_mesh(self.dim, zones, &self.lengths, order)?;
        Ok(Arc::new(Discretization::new(mesh, None, BoundaryKind::Walls)?))
    }

    pub fn initial_state(&self, rt: &Runtime, disc: &Discretization) -> Result<HydroState, DriverError> {
        HydroState::from_functions(
            rt,
            disc,
            |x| self.density(x),
            |x| self.specific_energy(x),
            |x, v| self.velocity(x, v),
        )
        .map_err(|e| DriverError::Config(format!("initial state for {}: {e}", self.name)))
    }
}
