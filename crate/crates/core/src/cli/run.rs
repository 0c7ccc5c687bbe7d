//! Experiment execution and artifact writing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Suites};
use crate::checks::{check_lemma2, check_ricci_formula, fit_order, run_identity_suite, IdentityResidual};
use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::flow::{evolve_pair, heat_kernel_pair, ordering_margin, FlowTrajectory};
use crate::geom::{krf_scale, ManifoldModel, ModelKind};
use crate::lyh::{report, LyhReport, ReportOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// One failed check at a node and time.
#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub suite: &'static str,
    pub quantity: String,
    pub epsilon: f64,
    pub node: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub passed: bool,
}

/// Outcome for one value of ε.
#[derive(Clone, Debug, Serialize)]
pub struct EpsilonOutcome {
    pub epsilon: f64,
    pub suites: Vec<SuiteResult>,
    pub min_q: f64,
    pub min_y: Option<f64>,
    pub max_sharpness: f64,
    pub mass_drift: f64,
    pub margin_ratio: f64,
    pub max_identity_rel: Option<f64>,
    pub min_q_inequality: Option<f64>,
    #[serde(skip)]
    pub report: LyhReport,
    #[serde(skip)]
    pub residuals: Vec<IdentityResidual>,
    #[serde(skip)]
    pub failures: Vec<Failure>,
}

impl EpsilonOutcome {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub outcomes: Vec<EpsilonOutcome>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(EpsilonOutcome::passed)
    }

    /// The first `limit` failures across all ε values.
    pub fn failures(&self, limit: usize) -> Vec<&Failure> {
        self.outcomes.iter().flat_map(|o| &o.failures).take(limit).collect()
    }
}

fn trajectory(config: &ExperimentConfig, model: &ManifoldModel, eps: f64) -> Result<FlowTrajectory> {
    if config.is_sharpness_preset() {
        heat_kernel_pair(model, config.a0, config.heat_kernel_factor()?, &config.schedule)
    } else {
        let grid = Grid::new(model)?;
        let (u, v) = config.initial_pair(&grid, config.seed)?;
        evolve_pair(model, config.a0, eps, &u, &v, &config.schedule)
    }
}

fn run_epsilon(config: &ExperimentConfig, model: &ManifoldModel, eps: f64) -> Result<(EpsilonOutcome, FlowTrajectory)> {
    let traj = trajectory(config, model, eps)?;
    let tol = &config.tolerances;
    let options = ReportOptions {
        report_start: config.schedule.t_start,
        positivity_tol: tol.positivity,
        y_tol: tol.y,
        max_violations: 10,
    };
    let rep = report(&traj, &options)?;
    let mut failures: Vec<Failure> = rep
        .violations
        .iter()
        .map(|v| Failure {
            suite: "positivity",
            quantity: v.quantity.to_string(),
            epsilon: eps,
            node: v.node,
            t: v.t,
            value: v.value,
        })
        .collect();
    let suites_on: &Suites = &config.suites;
    let mut suites = Vec::new();
    if suites_on.positivity {
        suites.push(SuiteResult { suite: "positivity", passed: rep.verdict && rep.y_verdict });
    } else {
        failures.clear();
    }

    let min_q = rep.rows.iter().map(|r| r.min_q).fold(f64::INFINITY, f64::min);
    let min_y = rep.rows.iter().filter_map(|r| r.min_y).reduce(f64::min);

    let mut max_sharpness = 0.0f64;
    let mut sharp_ok = true;
    for row in &rep.rows {
        let s = row.min_q.abs() * row.t;
        max_sharpness = max_sharpness.max(s);
        if s > tol.sharpness {
            sharp_ok = false;
            if suites_on.sharpness {
                failures.push(Failure {
                    suite: "sharpness",
                    quantity: "|minQ|·t".into(),
                    epsilon: eps,
                    node: row.min_q_node,
                    t: row.t,
                    value: s,
                });
            }
        }
    }
    if suites_on.sharpness {
        suites.push(SuiteResult { suite: "sharpness", passed: sharp_ok });
    }

    let m0 = traj.mass(0)?;
    let first = &traj.snapshots()[0];
    let margin0 = ordering_margin(&first.u, &first.v)?;
    let mut mass_drift = 0.0f64;
    let mut margin_ratio = f64::INFINITY;
    let mut conserve_ok = true;
    let mass_tol = tol.mass_for(model);
    for (i, s) in traj.snapshots().iter().enumerate() {
        let drift = (traj.mass(i)? / m0 - 1.0).abs();
        mass_drift = mass_drift.max(drift);
        let margin = ordering_margin(&s.u, &s.v)?;
        if margin0 > 0.0 {
            margin_ratio = margin_ratio.min(margin / margin0);
        }
        let scale_err = (s.state.a - krf_scale(model, config.a0, eps, s.t)?).abs();
        let mut fail = |quantity: &str, value: f64| {
            conserve_ok = false;
            if suites_on.conservation {
                failures.push(Failure {
                    suite: "conservation",
                    quantity: quantity.into(),
                    epsilon: eps,
                    node: 0,
                    t: s.t,
                    value,
                });
            }
        };
        if drift > mass_tol {
            fail("mass drift", drift);
        }
        if margin0 > 0.0 && margin < tol.margin_fraction * margin0 {
            fail("ordering margin", margin);
        }
        if scale_err > 1e-12 {
            fail("scale", scale_err);
        }
    }
    if suites_on.conservation {
        suites.push(SuiteResult { suite: "conservation", passed: conserve_ok });
    }

    let mut residuals = Vec::new();
    let mut max_identity_rel = None;
    let mut min_q_inequality = None;
    if suites_on.identities {
        let times = config.resolved_identity_times();
        let dt = config.schedule.fd_dt;
        residuals = run_identity_suite(&traj, &times, dt)?;
        if model.kind() == ModelKind::FubiniStudyCp1 {
            for &t in &times {
                residuals.push(check_lemma2(model, config.a0, eps, t, dt)?);
                let mut r = check_ricci_formula(model, krf_scale(model, config.a0, eps, t)?)?;
                r.t = t;
                residuals.push(r);
            }
        }
        let mut ok = true;
        for r in &residuals {
            let (passed, value) = match r.min_eigenvalue {
                Some(lam) => {
                    min_q_inequality = Some(min_q_inequality.map_or(lam, |m: f64| m.min(lam)));
                    (lam >= -tol.q_inequality, lam)
                }
                None => {
                    max_identity_rel = Some(max_identity_rel.map_or(r.rel_residual, |m: f64| m.max(r.rel_residual)));
                    (r.passes(tol.identity_at(dt)), r.rel_residual)
                }
            };
            if !passed {
                ok = false;
                failures.push(Failure {
                    suite: "identities",
                    quantity: r.identity.clone(),
                    epsilon: eps,
                    node: r.worst_node,
                    t: r.t,
                    value,
                });
            }
        }
        suites.push(SuiteResult { suite: "identities", passed: ok });
    }

    let outcome = EpsilonOutcome {
        epsilon: eps,
        suites,
        min_q,
        min_y,
        max_sharpness,
        mass_drift,
        margin_ratio,
        max_identity_rel,
        min_q_inequality,
        report: rep,
        residuals,
        failures,
    };
    Ok((outcome, traj))
}

/// Runs every ε of the configuration and writes the artifacts to `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let model = config.validate()?;
    let mut outcomes = Vec::with_capacity(config.epsilon.len());
    for &eps in &config.epsilon {
        let (outcome, traj) = run_epsilon(config, &model, eps)?;
        if config.dump_fields {
            traj.write_snapshots(&out.join("fields").join(format!("eps_{eps}")))?;
        }
        outcomes.push(outcome);
    }
    let outcome = RunOutcome { outcomes };
    write_artifacts(config, &model, &outcome, out)?;
    Ok(outcome)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn write_artifacts(config: &ExperimentConfig, model: &ManifoldModel, outcome: &RunOutcome, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let report_rows = outcome.outcomes.iter().flat_map(|o| {
        o.report.rows.iter().map(move |r| {
            vec![
                r.t.to_string(),
                r.min_q.to_string(),
                r.min_q_unconstrained.to_string(),
                opt(r.min_y),
                r.margin.to_string(),
                r.mass.to_string(),
                r.constraint_gap_max.to_string(),
                r.constraint_gap_mean.to_string(),
                o.epsilon.to_string(),
            ]
        })
    });
    let header = [
        "t",
        "minQ",
        "minQ_unconstrained",
        "minY",
        "margin",
        "mass",
        "constraint_gap_max",
        "constraint_gap_mean",
        "epsilon",
    ];
    write_atomic(&out.join("report.csv"), &csv_bytes(&header, report_rows)?)?;

    let residual_rows = outcome.outcomes.iter().flat_map(|o| {
        o.residuals.iter().map(move |r| {
            vec![
                r.identity.clone(),
                r.t.to_string(),
                r.abs_residual.to_string(),
                r.rel_residual.to_string(),
                r.grid.clone(),
                r.dt.to_string(),
                opt(r.min_eigenvalue),
                o.epsilon.to_string(),
            ]
        })
    });
    let header = ["identity_id", "t", "abs_residual", "rel_residual", "grid", "dt", "min_eigenvalue", "epsilon"];
    write_atomic(&out.join("residuals.csv"), &csv_bytes(&header, residual_rows)?)?;

    let summary_rows = outcome.outcomes.iter().map(summary_row);
    write_atomic(&out.join("summary.csv"), &csv_bytes(&SUMMARY_HEADER, summary_rows)?)?;

    let manifest = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "library_version": env!("CARGO_PKG_VERSION"),
        "model": model,
        "grid": model.label(),
        "config": config,
        "passed": outcome.passed(),
        "outcomes": outcome.outcomes,
        "failures": outcome.failures(10),
    });
    write_atomic(&out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

const SUMMARY_HEADER: [&str; 10] = [
    "epsilon",
    "passed",
    "suites",
    "minQ",
    "minY",
    "max_sharpness",
    "mass_drift",
    "margin_ratio",
    "max_identity_rel",
    "min_q_inequality",
];

fn summary_row(o: &EpsilonOutcome) -> Vec<String> {
    let suites: Vec<String> = o
        .suites
        .iter()
        .map(|s| format!("{}={}", s.suite, if s.passed { "pass" } else { "fail" }))
        .collect();
    vec![
        o.epsilon.to_string(),
        o.passed().to_string(),
        suites.join(";"),
        o.min_q.to_string(),
        opt(o.min_y),
        o.max_sharpness.to_string(),
        o.mass_drift.to_string(),
        o.margin_ratio.to_string(),
        opt(o.max_identity_rel),
        opt(o.min_q_inequality),
    ]
}

/// Parameter swept by `lyhlab sweep`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Epsilon,
    Resolution,
    Seed,
    /// Time-probe spacing of the identity checks; enables the identity suite.
    Dt,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Epsilon => "epsilon",
            Axis::Resolution => "resolution",
            Axis::Seed => "seed",
            Axis::Dt => "dt",
        }
    }
}

/// One configuration per sweep value, labelled by the value.
pub fn sweep_points(config: &ExperimentConfig, axis: Axis) -> Result<Vec<(String, ExperimentConfig)>> {
    let s = &config.sweep;
    let empty = || Error::config(format!("sweep.{}", axis.name()), "no values to sweep");
    let points: Vec<(String, ExperimentConfig)> = match axis {
        Axis::Epsilon => s
            .epsilon
            .iter()
            .map(|&e| (e.to_string(), ExperimentConfig { epsilon: vec![e], ..config.clone() }))
            .collect(),
        Axis::Resolution => s
            .resolution
            .iter()
            .map(|&r| {
                let mut c = config.clone();
                c.model.resolution = r;
                (r.to_string(), c)
            })
            .collect(),
        Axis::Seed => s
            .seed
            .iter()
            .map(|&seed| (seed.to_string(), ExperimentConfig { seed, ..config.clone() }))
            .collect(),
        Axis::Dt => s
            .dt
            .iter()
            .map(|&dt| {
                let mut c = config.clone();
                c.schedule.fd_dt = dt;
                c.suites.identities = true;
                (dt.to_string(), c)
            })
            .collect(),
    };
    if points.is_empty() {
        return Err(empty());
    }
    Ok(points)
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub axis: Axis,
    pub points: Vec<(String, RunOutcome)>,
}

impl SweepOutcome {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|(_, o)| o.passed())
    }
}

/// Size of the sweep worker pool: `LYHLAB_THREADS` or rayon's default.
pub fn worker_threads() -> Result<Option<usize>> {
    match std::env::var("LYHLAB_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::config("LYHLAB_THREADS", format!("expected a positive integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

/// Runs every sweep point in its own subdirectory of `out` and writes a
/// combined `summary.csv` led by the swept value.
pub fn sweep(config: &ExperimentConfig, axis: Axis, out: &Path) -> Result<SweepOutcome> {
    let points = sweep_points(config, axis)?;
    for (_, c) in &points {
        c.validate()?;
    }
    std::fs::create_dir_all(out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Input(format!("worker pool: {e}")))?;
    let results: Vec<Result<(String, RunOutcome)>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, (label, c))| {
                let dir: PathBuf = out.join(format!("{}_{i:03}", axis.name()));
                run(c, &dir).map(|o| (label.clone(), o))
            })
            .collect()
    });
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut header = vec![axis.name()];
    header.extend(SUMMARY_HEADER);
    let rows = points.iter().flat_map(|(label, o)| {
        o.outcomes.iter().map(move |e| {
            let mut row = vec![label.clone()];
            row.extend(summary_row(e));
            row
        })
    });
    write_atomic(&out.join("summary.csv"), &csv_bytes(&header, rows)?)?;

    if axis == Axis::Dt {
        write_atomic(&out.join("convergence.csv"), &convergence_table(&points)?)?;
    }
    Ok(SweepOutcome { axis, points })
}

/// Fitted order of each identity residual across the swept `Δt` values.
fn convergence_table(points: &[(String, RunOutcome)]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    let Some((_, first)) = points.first() else {
        return csv_bytes(&["identity_id", "t", "epsilon", "order"], rows);
    };
    for (e, eps_outcome) in first.outcomes.iter().enumerate() {
        for (k, r) in eps_outcome.residuals.iter().enumerate() {
            let mut dts = Vec::new();
            let mut res = Vec::new();
            for (_, o) in points {
                let other = &o.outcomes[e].residuals[k];
                dts.push(other.dt);
                res.push(other.abs_residual);
            }
            rows.push(vec![
                r.identity.clone(),
                r.t.to_string(),
                eps_outcome.epsilon.to_string(),
                opt(fit_order(&dts, &res)),
            ]);
        }
    }
    csv_bytes(&["identity_id", "t", "epsilon", "order"], rows)
}

/// Human-readable plan; performs no computation beyond validation.
pub fn describe(config: &ExperimentConfig) -> Result<String> {
    let model = config.validate()?;
    let mut s = String::new();
    let res = model.grid_resolution();
    match model.kind() {
        ModelKind::FlatTorus => {
            let _ = writeln!(s, "model: flat torus, n = {}, periods {:?}", model.complex_dimension(), model.periods());
            let _ = writeln!(s, "grid: {res} nodes per real axis, Nyquist wavenumber {}", res / 2);
        }
        ModelKind::FubiniStudyCp1 => {
            let _ = writeln!(s, "model: CP1 with the Fubini-Study metric, R = 2/a");
            let _ = writeln!(s, "grid: {res} x {res} (theta, phi), harmonic degree up to {}", res / 2 - 1);
        }
    }
    let _ = writeln!(s, "a0 = {}, Einstein constant {}", config.a0, model.einstein_constant());
    for &eps in &config.epsilon {
        match model.extinction_time(config.a0, eps) {
            Some(t) => {
                let _ = writeln!(s, "epsilon = {eps}: extinction at t={t}");
            }
            None if model.kind() == ModelKind::FlatTorus => {
                let _ = writeln!(s, "epsilon = {eps}: flow static (Ricci-flat)");
            }
            None => {
                let _ = writeln!(s, "epsilon = {eps}: flow static (epsilon = 0)");
            }
        }
    }
    let sched = &config.schedule;
    let times = sched.output_times();
    let _ = writeln!(
        s,
        "schedule: t in [{}, {}], {} snapshots, probe spacing {}",
        sched.t_start,
        sched.t_end,
        times.len(),
        sched.fd_dt
    );
    let suites = config.suites.names();
    let _ = writeln!(s, "suites: {}", if suites.is_empty() { "none".into() } else { suites.join(", ") });
    let nodes = res.pow(2 * model.complex_dimension() as u32);
    let work = nodes * times.len() * config.epsilon.len();
    let _ = writeln!(s, "estimated work: {work} node evaluations ({nodes} nodes per snapshot)");
    Ok(s)
}
