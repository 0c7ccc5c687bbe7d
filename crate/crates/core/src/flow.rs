//! Positive solution pairs of `∂_t u = Δu + εR·u` along the ε-flow.
//!
//! On the model metrics the flow is a homothety, so the linear equation
//! diagonalises in the eigenbasis of the reference Laplacian and is
//! integrated exactly: per Fourier mode on the torus, per spherical harmonic
//! on `CP¹` with time reparametrised by `τ = ∫ ds/a(s)` and the spatially
//! constant `εR(t)` handled by the integrating factor `a(t₀)/a(t₁)`.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{integrate, Grid, ScalarField};
use crate::geom::{krf_scale, ManifoldModel, MetricState, ModelKind};

/// Time sampling of a trajectory.
///
/// Initial data are given at `t_initial`; snapshots are stored at
/// `t_initial` and on the uniform grid `t_start + k·(t_end − t_start)/steps`,
/// keeping every `stride`-th point and always the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default)]
    pub t_initial: f64,
    #[serde(default = "default_t_start")]
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Spacing of the time probes used by identity checks.
    #[serde(default = "default_fd_dt")]
    pub fd_dt: f64,
    /// Length of an optional heat step applied to the initial data.
    #[serde(default)]
    pub smoothing: Option<f64>,
}

fn default_t_start() -> f64 {
    0.01
}

fn default_stride() -> usize {
    1
}

fn default_fd_dt() -> f64 {
    1e-4
}

impl Schedule {
    pub fn new(t_start: f64, t_end: f64, steps: usize) -> Self {
        Schedule {
            t_initial: 0.0,
            t_start,
            t_end,
            steps,
            stride: 1,
            fd_dt: default_fd_dt(),
            smoothing: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.t_initial, self.t_start, self.t_end, self.fd_dt]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::config("schedule", "times must be finite"));
        }
        if self.t_initial < 0.0 {
            return Err(Error::config("schedule.t_initial", "must be non-negative"));
        }
        if self.t_start < self.t_initial {
            return Err(Error::config("schedule.t_start", "must not precede t_initial"));
        }
        if self.t_end <= self.t_start {
            return Err(Error::config("schedule.t_end", "must exceed t_start"));
        }
        if self.steps == 0 {
            return Err(Error::config("schedule.steps", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::config("schedule.stride", "must be at least 1"));
        }
        if self.fd_dt <= 0.0 {
            return Err(Error::config("schedule.fd_dt", "must be positive"));
        }
        if let Some(s) = self.smoothing {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::config("schedule.smoothing", "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Snapshot times after `t_initial`.
    pub fn output_times(&self) -> Vec<f64> {
        let h = (self.t_end - self.t_start) / self.steps as f64;
        let mut out: Vec<f64> = (0..=self.steps)
            .step_by(self.stride)
            .map(|k| if k == self.steps { self.t_end } else { self.t_start + k as f64 * h })
            .collect();
        if out.last() != Some(&self.t_end) {
            out.push(self.t_end);
        }
        out.retain(|&t| t > self.t_initial);
        out
    }
}

/// One stored time of a trajectory.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub state: MetricState,
    pub u: ScalarField,
    pub v: ScalarField,
}

#[derive(Clone, Debug)]
enum Source {
    /// Initial samples propagated exactly.
    Spectral { t0: f64, u0: ScalarField, v0: ScalarField },
    /// Periodized flat heat kernel centred at the origin, `v = factor·u`.
    HeatKernel { v_factor: f64 },
}

/// Solution pair sampled along the flow. Keeps its source so that the pair
/// can be re-evaluated at arbitrary times (used for time probes).
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    grid: Arc<Grid>,
    a0: f64,
    epsilon: f64,
    source: Source,
    snapshots: Vec<Snapshot>,
}

impl FlowTrajectory {
    pub fn model(&self) -> &ManifoldModel {
        self.grid.model()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Earliest time at which the pair is defined.
    pub fn earliest_time(&self) -> f64 {
        match &self.source {
            Source::Spectral { t0, .. } => *t0,
            Source::HeatKernel { .. } => 0.0,
        }
    }

    /// The pair re-evaluated at time `t`.
    pub fn sample_at(&self, t: f64) -> Result<Snapshot> {
        let state = MetricState::along_flow(self.model().clone(), self.a0, self.epsilon, t)?;
        match &self.source {
            Source::Spectral { t0, u0, v0 } => {
                if t < *t0 {
                    return Err(Error::Input(format!(
                        "time {t} precedes the initial time {t0}"
                    )));
                }
                let u = propagate(&self.grid, self.a0, self.epsilon, *t0, t, u0)?;
                let v = propagate(&self.grid, self.a0, self.epsilon, *t0, t, v0)?;
                Ok(Snapshot { t, state, u, v })
            }
            Source::HeatKernel { v_factor } => {
                if t <= 0.0 {
                    return Err(Error::Input("the heat kernel is singular at t ≤ 0".into()));
                }
                let u = heat_kernel(&self.grid, self.a0, t);
                let v = u.scale(*v_factor);
                Ok(Snapshot { t, state, u, v })
            }
        }
    }

    /// `∫ u dμ_{g(t)}` at a stored index.
    pub fn mass(&self, index: usize) -> Result<f64> {
        let s = self.snapshots.get(index).ok_or_else(|| {
            Error::Input(format!("snapshot index {index} out of range ({})", self.len()))
        })?;
        integrate(&s.u, &s.state)
    }

    /// Writes one CSV per snapshot (coordinates, u, v) and a JSON manifest.
    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let axes = match self.model().kind() {
            ModelKind::FlatTorus => {
                let n = self.model().complex_dimension();
                (1..=n).flat_map(|c| [format!("x{c}"), format!("y{c}")]).collect()
            }
            ModelKind::FubiniStudyCp1 => vec!["theta".to_string(), "phi".to_string()],
        };
        let mut files = Vec::new();
        for (i, s) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{i:04}.csv");
            let mut w = csv::Writer::from_path(dir.join(&name))?;
            let mut header = axes.clone();
            header.extend(["u".to_string(), "v".to_string()]);
            w.write_record(&header)?;
            for p in 0..self.grid.len() {
                let mut row: Vec<String> =
                    self.grid.real_coordinates(p).iter().map(|x| x.to_string()).collect();
                row.push(s.u.re(p).to_string());
                row.push(s.v.re(p).to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
            files.push(serde_json::json!({ "file": name, "t": s.t, "scale": s.state.a }));
        }
        let manifest = serde_json::json!({
            "model": self.model(),
            "epsilon": self.epsilon,
            "a0": self.a0,
            "snapshots": files,
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// `min (u − |v|)` over the grid.
pub fn ordering_margin(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    let d = u.zip_with(v, |a, b| Complex64::new(a.re - b.re.abs(), 0.0))?;
    Ok(d.min_re())
}

fn check_pair(u: &ScalarField, v: &ScalarField) -> Result<()> {
    for p in 0..u.grid().len() {
        let (a, b) = (u.re(p), v.re(p));
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain { node: p, message: "non-finite initial sample".into() });
        }
        if a <= 0.0 {
            return Err(Error::Domain { node: p, message: format!("u = {a} is not positive") });
        }
        if b.abs() >= a {
            return Err(Error::Domain {
                node: p,
                message: format!("ordering |v| < u violated (u = {a}, v = {b})"),
            });
        }
    }
    Ok(())
}

fn realify(f: &ScalarField) -> ScalarField {
    f.map(|z| Complex64::new(z.re, 0.0))
}

/// Exact solution operator of `∂_t f = Δf + εR·f` from `t0` to `t1`.
pub fn propagate(
    grid: &Arc<Grid>,
    a0: f64,
    epsilon: f64,
    t0: f64,
    t1: f64,
    f: &ScalarField,
) -> Result<ScalarField> {
    let model = grid.model();
    let a_start = krf_scale(model, a0, epsilon, t0)?;
    let a_end = krf_scale(model, a0, epsilon, t1)?;
    if t1 == t0 {
        return Ok(f.clone());
    }
    match model.kind() {
        ModelKind::FlatTorus => {
            let dt = t1 - t0;
            let values = grid
                .torus_multiplier(f.values(), |k| {
                    (-0.25 * k.iter().map(|x| x * x).sum::<f64>() * dt / a0).exp()
                })
                .expect("torus grid");
            Ok(realify(&ScalarField::new(grid.clone(), values)?))
        }
        ModelKind::FubiniStudyCp1 => {
            let rate = epsilon * model.einstein_constant();
            let tau = if rate > 0.0 {
                (a_start / a_end).ln() / rate
            } else {
                (t1 - t0) / a0
            };
            // exp(∫ εR ds) with R = nλ/a
            let growth = if rate > 0.0 { a_start / a_end } else { 1.0 };
            let plan = grid.sht().expect("sphere grid");
            let mut coeffs = plan.forward(f.values());
            for l in 0..=plan.lmax() {
                let decay = (-((l * (l + 1)) as f64) * tau).exp() * growth;
                for m in -(l as i64)..=(l as i64) {
                    coeffs[crate::fields::sht::coeff_index(l, m)] *= decay;
                }
            }
            let values = plan.inverse(&coeffs);
            Ok(realify(&ScalarField::new(grid.clone(), values)?))
        }
    }
}

/// Evolves `(u0, v0)` given at `schedule.t_initial`.
///
/// On `CP¹` the initial data are first projected onto the harmonics the
/// grid resolves; the stored initial snapshot is the projected pair.
pub fn evolve_pair(
    model: &ManifoldModel,
    a0: f64,
    epsilon: f64,
    u0: &ScalarField,
    v0: &ScalarField,
    schedule: &Schedule,
) -> Result<FlowTrajectory> {
    schedule.validate()?;
    let grid = u0.grid().clone();
    if grid.model() != model || !v0.grid().same_as(&grid) {
        return Err(Error::GridMismatch(format!(
            "initial data do not live on the {} grid",
            model.label()
        )));
    }
    krf_scale(model, a0, epsilon, schedule.t_end)?;
    if !(u0.is_real(1e-12) && v0.is_real(1e-12)) {
        return Err(Error::Input("initial data must be real".into()));
    }
    check_pair(u0, v0)?;
    let t0 = schedule.t_initial;
    let (mut u, mut v) = (realify(u0), realify(v0));
    if model.kind() == ModelKind::FubiniStudyCp1 {
        let plan = grid.sht().expect("sphere grid");
        let project = |f: &ScalarField| {
            ScalarField::new(grid.clone(), plan.inverse(&plan.forward(f.values()))).map(|g| realify(&g))
        };
        u = project(&u)?;
        v = project(&v)?;
    }
    if let Some(s) = schedule.smoothing.filter(|s| *s > 0.0) {
        // pure heat step with the initial metric
        u = propagate(&grid, a0, 0.0, 0.0, s, &u)?;
        v = propagate(&grid, a0, 0.0, 0.0, s, &v)?;
    }
    check_pair(&u, &v)?;
    let traj = FlowTrajectory {
        grid,
        a0,
        epsilon,
        source: Source::Spectral { t0, u0: u.clone(), v0: v.clone() },
        snapshots: Vec::new(),
    };
    let initial = Snapshot {
        t: t0,
        state: MetricState::along_flow(model.clone(), a0, epsilon, t0)?,
        u,
        v,
    };
    fill(traj, Some(initial), schedule)
}

/// The periodized flat heat kernel `t^{-n} Σ_images exp(−a|z − m|²/t)`
/// started from a point mass at `t = 0`, with `v = v_factor·u`.
pub fn heat_kernel_pair(
    model: &ManifoldModel,
    a0: f64,
    v_factor: f64,
    schedule: &Schedule,
) -> Result<FlowTrajectory> {
    schedule.validate()?;
    if model.kind() != ModelKind::FlatTorus {
        return Err(Error::Unsupported("the heat-kernel pair is defined on the flat torus".into()));
    }
    if !(v_factor.abs() < 1.0) {
        return Err(Error::config("v.factor", "|factor| must be below 1"));
    }
    if schedule.t_initial != 0.0 || schedule.t_start <= 0.0 {
        return Err(Error::config(
            "schedule.t_start",
            "the heat-kernel pair starts at t = 0 and is reported from t_start > 0",
        ));
    }
    let traj = FlowTrajectory {
        grid: Grid::new(model)?,
        a0,
        // the torus is Ricci-flat, so ε does not enter
        epsilon: 0.0,
        source: Source::HeatKernel { v_factor },
        snapshots: Vec::new(),
    };
    fill(traj, None, schedule)
}

fn fill(mut traj: FlowTrajectory, initial: Option<Snapshot>, schedule: &Schedule) -> Result<FlowTrajectory> {
    traj.snapshots.extend(initial);
    for t in schedule.output_times() {
        let snap = traj.sample_at(t)?;
        check_pair(&snap.u, &snap.v)?;
        traj.snapshots.push(snap);
    }
    Ok(traj)
}

fn heat_kernel(grid: &Arc<Grid>, a: f64, t: f64) -> ScalarField {
    let model = grid.model();
    let n = model.complex_dimension();
    let periods = model.periods().to_vec();
    let images = |x: f64, p: f64| -> f64 {
        (-2..=2).map(|m| (-a * (x - m as f64 * p).powi(2) / t).exp()).sum()
    };
    let norm = t.powi(-(n as i32));
    let values = (0..grid.len())
        .map(|node| {
            let x = grid.real_coordinates(node);
            let prod: f64 = x.iter().zip(&periods).map(|(&xi, &p)| images(xi, p)).product();
            Complex64::new(norm * prod, 0.0)
        })
        .collect();
    ScalarField::new(grid.clone(), values).expect("sized to grid")
}
