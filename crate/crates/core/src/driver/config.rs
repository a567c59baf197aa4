use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::presets::problem_preset;
use super::DriverError;
use crate::kernel_exec::ExecPlace;

/// Everything a run needs. Built from defaults, then an optional key=value
/// file, then command-line flags; keys are the long flag names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: String,
    pub order: usize,
    /// Elements per direction; `None` uses the preset's default.
    pub zones: Option<Vec<usize>>,
    #[serde(serialize_with = "display")]
    pub exec: ExecPlace,
    pub cycles: usize,
    /// Stop early once this time is reached.
    pub t_final: Option<f64>,
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Relative tolerance of the momentum mass solves.
    pub cg_rel_tol: f64,
    pub ale: bool,
    /// Lagrange cycles between mesh optimisation + remap.
    pub remap_every: usize,
    /// Also trigger ALE when the smallest detJ drops below this value.
    pub min_det_trigger: Option<f64>,
    pub tmop_iters: usize,
    /// 0 picks the count from `pseudo_cfl`.
    pub remap_steps: usize,
    pub pseudo_cfl: f64,
    pub limiter: bool,
    pub out: Option<PathBuf>,
    pub mem_report: bool,
}

fn display<S: serde::Serializer>(v: &ExecPlace, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "triple-pt-2d".into(),
            order: 2,
            zones: None,
            exec: ExecPlace::Sequential,
            cycles: 50,
            t_final: None,
            cfl: 0.5,
            dt_min: 1e-12,
            dt_max: 1.0,
            cg_rel_tol: 1e-12,
            ale: true,
            remap_every: 25,
            min_det_trigger: None,
            tmop_iters: 20,
            remap_steps: 0,
            pseudo_cfl: 0.25,
            limiter: true,
            out: None,
            mem_report: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, DriverError> {
    value
        .trim()
        .parse()
        .map_err(|_| DriverError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, DriverError> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(DriverError::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

/// `16x8` or `16,8`.
pub(crate) fn parse_zones(value: &str) -> Result<Vec<usize>, DriverError> {
    let zones: Result<Vec<usize>, _> = value.split(['x', ',']).map(|s| s.trim().parse::<usize>()).collect();
    match zones {
        Ok(z) if !z.is_empty() && z.iter().all(|&n| n > 0) => Ok(z),
        _ => Err(DriverError::Config(format!("invalid zone spec `{value}` (expected e.g. 16x8)"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), DriverError> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        match key.as_str() {
            "preset" => self.preset = value.trim().to_string(),
            "order" => self.order = parse(&key, value)?,
            "zones" => self.zones = Some(parse_zones(value)?),
            "exec" => {
                self.exec = value
                    .trim()
                    .parse()
                    .map_err(|e: crate::kernel_exec::ExecError| DriverError::Config(e.to_string()))?
            }
            "cycles" => self.cycles = parse(&key, value)?,
            "t-final" => self.t_final = Some(parse(&key, value)?),
            "cfl" => self.cfl = parse(&key, value)?,
            "dt-min" => self.dt_min = parse(&key, value)?,
            "dt-max" => self.dt_max = parse(&key, value)?,
            "cg-rel-tol" => self.cg_rel_tol = parse(&key, value)?,
            "ale" => self.ale = parse_bool(&key, value)?,
            "remap-every" => self.remap_every = parse(&key, value)?,
            "min-det-trigger" => self.min_det_trigger = Some(parse(&key, value)?),
            "tmop-iters" => self.tmop_iters = parse(&key, value)?,
            "remap-steps" => self.remap_steps = parse(&key, value)?,
            "pseudo-cfl" => self.pseudo_cfl = parse(&key, value)?,
            "limiter" => self.limiter = parse_bool(&key, value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "mem-report" => self.mem_report = parse_bool(&key, value)?,
            _ => return Err(DriverError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), DriverError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DriverError::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| DriverError::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("configuration error: "))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), DriverError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DriverError::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        let preset = problem_preset(&self.preset)?;
        let fail = |m: String| Err(DriverError::Config(m));
        if !(1..=8).contains(&self.order) {
            return fail(format!("order must be in 1..=8, got {}", self.order));
        }
        if let Some(z) = &self.zones {
            if z.len() != preset.dim {
                return fail(format!("preset {} is {}D but zones has {} entries", self.preset, preset.dim, z.len()));
            }
        }
        if self.cycles == 0 {
            return fail("cycles must be at least 1".into());
        }
        if !(self.cfl > 0.0) || !(self.dt_min > 0.0) || !(self.dt_max >= self.dt_min) {
            return fail("need cfl > 0 and 0 < dt-min <= dt-max".into());
        }
        if !(self.cg_rel_tol > 0.0 && self.cg_rel_tol < 1.0) {
            return fail("cg-rel-tol must be in (0, 1)".into());
        }
        if self.ale && self.remap_every == 0 {
            return fail("remap-every must be at least 1 when ALE is enabled".into());
        }
        if !(self.pseudo_cfl > 0.0) {
            return fail("pseudo-cfl must be positive".into());
        }
        Ok(())
    }
}
