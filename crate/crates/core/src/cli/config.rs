//! JSON experiment configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::flow::{ordering_margin, Schedule};
use crate::geom::{ManifoldModel, ModelKind};
use crate::initial::Generator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default = "unit_periods")]
    pub periods: Vec<f64>,
    pub resolution: usize,
}

fn one() -> usize {
    1
}

fn unit_periods() -> Vec<f64> {
    vec![1.0]
}

impl ModelSpec {
    pub fn build(&self) -> Result<ManifoldModel> {
        let prefix = |e: Error| match e {
            Error::Config { field, message } => Error::config(format!("model.{field}"), message),
            other => other,
        };
        match self.kind {
            ModelKind::FlatTorus => {
                ManifoldModel::flat_torus(self.n, &self.periods, self.resolution).map_err(prefix)
            }
            ModelKind::FubiniStudyCp1 => {
                if self.n != 1 {
                    return Err(Error::config("model.n", "CP¹ has complex dimension 1"));
                }
                ManifoldModel::fubini_study(self.resolution).map_err(prefix)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suites {
    #[serde(default = "yes")]
    pub positivity: bool,
    #[serde(default)]
    pub identities: bool,
    #[serde(default)]
    pub sharpness: bool,
    #[serde(default)]
    pub conservation: bool,
}

fn yes() -> bool {
    true
}

impl Default for Suites {
    fn default() -> Self {
        Suites { positivity: true, identities: false, sharpness: false, conservation: false }
    }
}

impl Suites {
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (on, name) in [
            (self.positivity, "positivity"),
            (self.identities, "identities"),
            (self.sharpness, "sharpness"),
            (self.conservation, "conservation"),
        ] {
            if on {
                out.push(name);
            }
        }
        out
    }

    /// Keeps only the named suite.
    pub fn only(name: &str) -> Result<Suites> {
        let mut s = Suites { positivity: false, ..Suites::default() };
        match name {
            "positivity" => s.positivity = true,
            "identities" => s.identities = true,
            "sharpness" => s.sharpness = true,
            "conservation" => s.conservation = true,
            other => return Err(Error::config("suite", format!("unknown suite `{other}`"))),
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Bound on `−min λ_min(Q)`; defaults to `1e-8·(1 + 1/t)`.
    #[serde(default)]
    pub positivity: Option<f64>,
    #[serde(default = "default_y")]
    pub y: f64,
    /// Relative residual bound for the identity checks.
    #[serde(default = "default_identity")]
    pub identity: f64,
    /// `C` in the identity bound `max(identity, C·Δt²)`.
    #[serde(default = "default_identity_dt2")]
    pub identity_dt2: f64,
    /// Bound on `−λ_min(D)` for the Q inequality.
    #[serde(default = "default_q_inequality")]
    pub q_inequality: f64,
    /// Bound on `|min λ_min(Q)|·t` for the sharp case.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    /// Relative mass drift; defaults to 1e-8 on the torus and 1e-6 on CP¹.
    #[serde(default)]
    pub mass: Option<f64>,
    /// Smallest allowed ratio of the ordering margin to its initial value.
    #[serde(default = "default_margin_fraction")]
    pub margin_fraction: f64,
}

fn default_y() -> f64 {
    1e-6
}
fn default_identity() -> f64 {
    1e-5
}
fn default_identity_dt2() -> f64 {
    1e3
}
fn default_q_inequality() -> f64 {
    1e-4
}
fn default_sharpness() -> f64 {
    1e-6
}
fn default_margin_fraction() -> f64 {
    0.5
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            positivity: None,
            y: default_y(),
            identity: default_identity(),
            identity_dt2: default_identity_dt2(),
            q_inequality: default_q_inequality(),
            sharpness: default_sharpness(),
            mass: None,
            margin_fraction: default_margin_fraction(),
        }
    }
}

impl Tolerances {
    /// Relative residual bound for identity checks probed with spacing `dt`.
    pub fn identity_at(&self, dt: f64) -> f64 {
        self.identity.max(self.identity_dt2 * dt * dt)
    }

    pub fn mass_for(&self, model: &ManifoldModel) -> f64 {
        self.mass.unwrap_or(match model.kind() {
            ModelKind::FlatTorus => 1e-8,
            ModelKind::FubiniStudyCp1 => 1e-6,
        })
    }
}

/// Values for `lyhlab sweep`, one list per axis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub resolution: Vec<usize>,
    #[serde(default)]
    pub seed: Vec<u64>,
    #[serde(default)]
    pub dt: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default = "unit")]
    pub a0: f64,
    #[serde(default = "zero_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub u: Generator,
    pub v: Generator,
    pub schedule: Schedule,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub suites: Suites,
    /// Times at which the identity suite probes the trajectory; defaults to
    /// the midpoint of the schedule.
    #[serde(default)]
    pub identity_times: Vec<f64>,
    /// Write per-snapshot field dumps under `fields/`.
    #[serde(default)]
    pub dump_fields: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn unit() -> f64 {
    1.0
}

fn zero_epsilon() -> Vec<f64> {
    vec![0.0]
}

fn default_output() -> PathBuf {
    PathBuf::from("lyhlab-out")
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        Ok(config)
    }

    pub fn is_sharpness_preset(&self) -> bool {
        matches!(self.u, Generator::Gaussian)
    }

    /// Identity probe times, filled in from the schedule when empty.
    pub fn resolved_identity_times(&self) -> Vec<f64> {
        if self.identity_times.is_empty() {
            vec![0.5 * (self.schedule.t_start + self.schedule.t_end)]
        } else {
            self.identity_times.clone()
        }
    }

    /// Structural validation plus the initial ordering margin; no flow is run.
    pub fn validate(&self) -> Result<ManifoldModel> {
        let model = self.model.build()?;
        if !(self.a0.is_finite() && self.a0 > 0.0) {
            return Err(Error::config("a0", "must be positive"));
        }
        if self.epsilon.is_empty() {
            return Err(Error::config("epsilon", "at least one value is required"));
        }
        self.schedule.validate()?;
        for &eps in &self.epsilon {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(Error::config("epsilon", format!("values must be ≥ 0, got {eps}")));
            }
            if let Some(t_ext) = model.extinction_time(self.a0, eps) {
                if self.schedule.t_end + self.schedule.fd_dt >= t_ext {
                    return Err(Error::config(
                        "schedule.t_end",
                        format!("must stay below the extinction time {t_ext} for ε = {eps}"),
                    ));
                }
            }
        }
        for &t in &self.resolved_identity_times() {
            if !(t - self.schedule.fd_dt >= self.schedule.t_initial && t + self.schedule.fd_dt <= self.schedule.t_end)
            {
                return Err(Error::config(
                    "identity_times",
                    format!("probe window around {t} leaves the schedule"),
                ));
            }
        }
        let tol = &self.tolerances;
        let positive = [tol.y, tol.identity, tol.identity_dt2, tol.q_inequality, tol.sharpness]
            .into_iter()
            .chain(tol.positivity)
            .chain(tol.mass)
            .all(|x| x.is_finite() && x >= 0.0);
        if !positive {
            return Err(Error::config("tolerances", "tolerances must be finite and non-negative"));
        }
        self.u.validate("u")?;
        self.v.validate("v")?;
        if self.is_sharpness_preset() {
            if model.kind() != ModelKind::FlatTorus {
                return Err(Error::config("u", "the gaussian generator needs a flat torus"));
            }
            self.heat_kernel_factor()?;
        } else {
            let grid = Grid::new(&model)?;
            let (u, v) = self.initial_pair(&grid, self.seed)?;
            let margin = ordering_margin(&u, &v)?;
            if !(margin > 0.0) {
                return Err(Error::config(
                    "v",
                    format!("initial data violate |v| < u (margin {margin:.3e})"),
                ));
            }
        }
        Ok(model)
    }

    /// `v = factor·u` for the heat-kernel pair.
    pub fn heat_kernel_factor(&self) -> Result<f64> {
        match &self.v {
            Generator::ScaledU { factor } if factor.abs() < 1.0 => Ok(*factor),
            Generator::Constant { value } if *value == 0.0 => Ok(0.0),
            _ => Err(Error::config("v", "with a gaussian u, v must be scaled_u with |factor| < 1")),
        }
    }

    pub fn initial_pair(&self, grid: &Arc<Grid>, seed: u64) -> Result<(ScalarField, ScalarField)> {
        let u = self.u.sample(grid, seed, 0)?;
        let v = match &self.v {
            Generator::ScaledU { factor } => u.scale(*factor),
            other => other.sample(grid, seed, 1)?,
        };
        Ok((u, v))
    }
}
