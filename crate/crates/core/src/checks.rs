//! Numerical verification of the evolution identities behind the estimate.
//!
//! Each check re-evaluates the trajectory at `t − Δt`, `t`, `t + Δt`,
//! differences the quantity of interest in time and compares with the
//! right-hand side assembled at `t` from spectral derivatives, chart
//! Christoffel corrections and closed-form curvature.
//!
//! Tensor residuals are measured relative to the metric: the norm of
//! `M_{i j̄}` at a node is `max |M_{i j̄}| / c` where `g = c·I`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{
    fd_time_derivative, holomorphic_hessian, laplacian, mixed_hessian, partials, tensor_gradient_with,
    tensor_laplacian_with, Grid, MatrixField, NodeGeometry, Partials, ScalarField, TensorGradient,
};
use crate::flow::{FlowTrajectory, Snapshot};
use crate::geom::{ManifoldModel, MetricState};
use crate::linalg::Mat;
use crate::lyh::{log_density, quotient};

/// Outcome of one identity (or inequality) check.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityResidual {
    pub identity: String,
    pub t: f64,
    /// Maximum over nodes and components of `|LHS − RHS|`.
    pub abs_residual: f64,
    /// `abs_residual / max |RHS|`, or relative to the cancelling curvature
    /// terms for the model-level Ricci identities; the absolute value when
    /// every term vanishes.
    pub rel_residual: f64,
    pub grid: String,
    pub dt: f64,
    /// Node attaining `abs_residual`.
    pub worst_node: usize,
    /// For inequalities: smallest metric-relative eigenvalue of `LHS − RHS`.
    pub min_eigenvalue: Option<f64>,
}

impl IdentityResidual {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.rel_residual.is_finite() && self.rel_residual <= rel_tol
    }
}

fn probes(traj: &FlowTrajectory, t: f64, dt: f64) -> Result<[Snapshot; 3]> {
    if !(dt > 0.0) {
        return Err(Error::Input(format!("time probe spacing must be positive, got {dt}")));
    }
    let earliest = traj.earliest_time();
    if t - dt < earliest {
        return Err(Error::Input(format!(
            "probe window [{}, {}] starts before the trajectory ({earliest})",
            t - dt,
            t + dt
        )));
    }
    Ok([traj.sample_at(t - dt)?, traj.sample_at(t)?, traj.sample_at(t + dt)?])
}

fn build(id: &str, t: f64, dt: f64, grid: &Grid, abs: (f64, usize), rhs_norm: f64) -> IdentityResidual {
    IdentityResidual {
        identity: id.to_string(),
        t,
        abs_residual: abs.0,
        rel_residual: if rhs_norm > 0.0 { abs.0 / rhs_norm } else { abs.0 },
        grid: grid.plan_label(),
        dt,
        worst_node: abs.1,
        min_eigenvalue: None,
    }
}

fn scalar_residual(id: &str, t: f64, dt: f64, lhs: &ScalarField, rhs: &ScalarField) -> IdentityResidual {
    let mut worst = (0.0, 0);
    for (p, (a, b)) in lhs.values().iter().zip(rhs.values()).enumerate() {
        let d = (a - b).norm();
        if d > worst.0 {
            worst = (d, p);
        }
    }
    build(id, t, dt, lhs.grid(), worst, rhs.max_abs())
}

fn tensor_norm(field: &MatrixField, geo: &NodeGeometry) -> (f64, usize) {
    let mut worst = (0.0, 0);
    for (p, m) in field.values().iter().enumerate() {
        let v = m.max_abs() / geo.c[p];
        if v > worst.0 {
            worst = (v, p);
        }
    }
    worst
}

fn tensor_residual(
    id: &str,
    t: f64,
    dt: f64,
    lhs: &MatrixField,
    rhs: &MatrixField,
    geo: &NodeGeometry,
) -> Result<IdentityResidual> {
    let diff = lhs.sub(rhs)?;
    Ok(build(id, t, dt, lhs.grid(), tensor_norm(&diff, geo), tensor_norm(rhs, geo).0))
}

/// `g^{k l̄}(∇_k f ∇_l̄ T + ∇_l̄ f ∇_k T)` for real `f`.
fn transport_at(df: &Partials, grad: &TensorGradient, c: f64, p: usize) -> Mat {
    let n = grad.holo.len();
    let d = df.holo_at(p);
    let db = df.anti_at(p);
    let mut acc = Mat::zeros(n);
    for k in 0..n {
        acc += grad.anti[k].at(p).scale_c(d[k]) + grad.holo[k].at(p).scale_c(db[k]);
    }
    acc.scale(1.0 / c)
}

/// Curvature acting on a tensor through both slots.
fn curvature_act(geo: &NodeGeometry, p: usize, a: &Mat) -> Mat {
    let n = a.dim();
    let ginv = Mat::scaled_identity(n, 1.0 / geo.c[p]);
    geo.curvature[p].riemann.act(&ginv, a)
}

fn ricci_field(grid: &Arc<Grid>, geo: &NodeGeometry) -> MatrixField {
    MatrixField::from_fn(grid, |p| geo.curvature[p].ricci)
}

/// Largest metric-relative size of the `Ric∘Ric` term. Identities whose two
/// sides cancel on the models are measured relative to it.
fn ricci_term_scale(geo: &NodeGeometry) -> f64 {
    geo.curvature
        .iter()
        .zip(&geo.c)
        .map(|(k, c)| (k.ricci * k.ricci).max_abs() / (c * c))
        .fold(0.0, f64::max)
}

/// `ΔRic + R·Ric − Ric∘Ric` at every node, with `ΔRic` computed numerically.
fn ricci_reaction(grid: &Arc<Grid>, geo: &NodeGeometry) -> MatrixField {
    let ric = ricci_field(grid, geo);
    let lap = tensor_laplacian_with(&ric, geo);
    lap.map(|p, l| {
        let r = ric.at(p);
        l + curvature_act(geo, p, &r) - (r * r).scale(1.0 / geo.c[p])
    })
}

/// `∂_t L = ΔL + |∇L|² + εR`.
pub fn check_l_evolution(traj: &FlowTrajectory, t: f64, dt: f64) -> Result<IdentityResidual> {
    let [lo, mid, hi] = probes(traj, t, dt)?;
    let (l0, l1, l2) = (log_density(&lo.u)?, log_density(&mid.u)?, log_density(&hi.u)?);
    let lhs = fd_time_derivative([(lo.t, &l0), (mid.t, &l1), (hi.t, &l2)])?;
    let state = &mid.state;
    let grid = l1.grid().clone();
    let lap = laplacian(&l1, state)?;
    let d = partials(&l1)?;
    let n = grid.n();
    let er = state.epsilon * state.scalar_curvature();
    let values = (0..grid.len())
        .map(|p| {
            let c = state.conformal_factor(grid.point(p));
            let (dl, db) = (d.holo_at(p), d.anti_at(p));
            let grad2: Complex64 = (0..n).map(|k| dl[k] * db[k]).sum::<Complex64>() / c;
            lap.values()[p] + grad2 + er
        })
        .collect();
    let rhs = ScalarField::new(grid, values)?;
    Ok(scalar_residual("L_evolution", t, dt, &lhs, &rhs))
}

/// Right-hand side of the evolution of `A = ∇∇̄L`:
///
/// `ΔA + R_{i j̄ l k̄}A_{k l̄} + R_{i j̄ k l̄}∇_lL∇_k̄L + ∇L·∇̄A + ∇̄L·∇A
///  + A∘A + ∇∇L∘∇̄∇̄L − ½(Ric∘A + A∘Ric) + ε(ΔRic + R·Ric − Ric∘Ric)`.
fn lemma1_rhs(l: &ScalarField, state: &MetricState, geo: &NodeGeometry) -> Result<MatrixField> {
    let grid = l.grid().clone();
    let n = grid.n();
    let a = mixed_hessian(l)?;
    let hl = holomorphic_hessian(l, state)?;
    let dl = partials(l)?;
    let grad_a = tensor_gradient_with(&a, geo);
    let lap_a = tensor_laplacian_with(&a, geo);
    let ric_terms = ricci_reaction(&grid, geo);
    let eps = state.epsilon;
    Ok(MatrixField::from_fn(&grid, |p| {
        let c = geo.c[p];
        let ap = a.at(p);
        let ric = geo.curvature[p].ricci;
        let d = dl.holo_at(p);
        let grad_grad = Mat::from_fn(n, |i, j| d[i] * d[j].conj());
        let h = hl.at(p);
        lap_a.at(p)
            + curvature_act(geo, p, &ap)
            + curvature_act(geo, p, &grad_grad)
            + transport_at(&dl, &grad_a, c, p)
            + (ap * ap).scale(1.0 / c)
            + (h * h.adjoint()).scale(1.0 / c)
            - (ric * ap + ap * ric).scale(0.5 / c)
            + ric_terms.at(p).scale(eps)
    }))
}

/// Evolution of the complex Hessian of `L = ln u`.
pub fn check_lemma1(traj: &FlowTrajectory, t: f64, dt: f64) -> Result<IdentityResidual> {
    let [lo, mid, hi] = probes(traj, t, dt)?;
    let mut hess = Vec::with_capacity(3);
    for s in [&lo, &mid, &hi] {
        hess.push(mixed_hessian(&log_density(&s.u)?)?);
    }
    let lhs = fd_time_derivative([(lo.t, &hess[0]), (mid.t, &hess[1]), (hi.t, &hess[2])])?;
    let l = log_density(&mid.u)?;
    let geo = NodeGeometry::sample(l.grid(), &mid.state);
    let rhs = lemma1_rhs(&l, &mid.state, &geo)?;
    tensor_residual("lemma1", t, dt, &lhs, &rhs, &geo)
}

/// `∂_t(εRic) = ε²(ΔRic + R·Ric − Ric∘Ric)` on the model grid.
pub fn check_lemma2(model: &ManifoldModel, a0: f64, epsilon: f64, t: f64, dt: f64) -> Result<IdentityResidual> {
    if !(dt > 0.0 && t - dt >= 0.0) {
        return Err(Error::Input(format!("probe window around t = {t} with Δt = {dt} is invalid")));
    }
    let grid = Grid::new(model)?;
    let states = [t - dt, t, t + dt]
        .map(|s| MetricState::along_flow(model.clone(), a0, epsilon, s));
    let [s0, s1, s2] = states;
    let (s0, s1, s2) = (s0?, s1?, s2?);
    let eric = |s: &MetricState| MatrixField::ricci(&grid, s).scale(epsilon);
    let (r0, r1, r2) = (eric(&s0), eric(&s1), eric(&s2));
    let lhs = fd_time_derivative([(s0.t, &r0), (s1.t, &r1), (s2.t, &r2)])?;
    let geo = NodeGeometry::sample(&grid, &s1);
    let rhs = ricci_reaction(&grid, &geo).scale(epsilon * epsilon);
    let diff = lhs.sub(&rhs)?;
    let scale = tensor_norm(&rhs, &geo).0.max(epsilon * epsilon * ricci_term_scale(&geo));
    Ok(build("lemma2", t, dt, &grid, tensor_norm(&diff, &geo), scale))
}

/// `∇_i∇_j̄R = ΔRic + R·Ric − Ric∘Ric` at scale `a`.
pub fn check_ricci_formula(model: &ManifoldModel, a: f64) -> Result<IdentityResidual> {
    let grid = Grid::new(model)?;
    let state = MetricState::new(model.clone(), a, 0.0, 0.0)?;
    let geo = NodeGeometry::sample(&grid, &state);
    let scalar = ScalarField::from_fn(&grid, |_| Complex64::new(geo.curvature[0].scalar, 0.0));
    let lhs = mixed_hessian(&scalar)?;
    let rhs = ricci_reaction(&grid, &geo);
    let diff = lhs.sub(&rhs)?;
    let scale = tensor_norm(&rhs, &geo).0.max(ricci_term_scale(&geo));
    Ok(build("ricci_formula", 0.0, 0.0, &grid, tensor_norm(&diff, &geo), scale))
}

fn constraint(h: &ScalarField) -> Result<MatrixField> {
    let d = partials(h)?;
    let n = h.grid().n();
    Ok(MatrixField::from_fn(h.grid(), |p| {
        let dh = d.holo_at(p);
        let dd = 1.0 - h.re(p).powi(2);
        Mat::from_fn(n, |i, j| dh[i] * dh[j].conj() / dd)
    }))
}

/// Right-hand side of the evolution of `C = ∇h∇̄h/(1 − h²)`.
fn lemma3_rhs(l: &ScalarField, h: &ScalarField, state: &MetricState, geo: &NodeGeometry) -> Result<MatrixField> {
    let grid = l.grid().clone();
    let n = grid.n();
    let a = mixed_hessian(l)?;
    let hl = holomorphic_hessian(l, state)?;
    let dl = partials(l)?;
    let dh = partials(h)?;
    let mh = mixed_hessian(h)?;
    let hh = holomorphic_hessian(h, state)?;
    let c_field = constraint(h)?;
    let grad_c = tensor_gradient_with(&c_field, geo);
    let lap_c = tensor_laplacian_with(&c_field, geo);
    Ok(MatrixField::from_fn(&grid, |p| {
        let c = geo.c[p];
        let hv = h.re(p);
        let dd = 1.0 - hv * hv;
        let d = dh.holo_at(p);
        let b = Mat::from_fn(n, |i, j| d[i] * d[j].conj());
        let grad_h2: f64 = (0..n).map(|k| d[k].norm_sqr()).sum::<f64>() / c;
        let x = hh.at(p) + Mat::from_fn(n, |i, k| d[i] * d[k]).scale(2.0 * hv / dd);
        let z = mh.at(p) + b.scale(2.0 * hv / dd);
        let (ap, hlp) = (a.at(p), hl.at(p));
        let coupling = Mat::from_fn(n, |i, j| {
            (0..n)
                .map(|k| {
                    hlp.get(i, k) * d[j].conj() * d[k].conj()
                        + ap.get(i, k) * d[j].conj() * d[k]
                        + ap.get(k, j) * d[i] * d[k].conj()
                        + hlp.get(j, k).conj() * d[i] * d[k]
                })
                .sum()
        });
        let ric = geo.curvature[p].ricci;
        lap_c.at(p) + transport_at(&dl, &grad_c, c, p)
            - (x * x.adjoint()).scale(1.0 / (dd * c))
            - (z * z).scale(1.0 / (dd * c))
            + coupling.scale(1.0 / (dd * c))
            - (ric * b + b * ric).scale(0.5 / (c * dd))
            - b.scale(2.0 * grad_h2 / (dd * dd))
    }))
}

/// Evolution of the constraint tensor `∇h∇̄h/(1 − h²)`.
pub fn check_lemma3(traj: &FlowTrajectory, t: f64, dt: f64) -> Result<IdentityResidual> {
    let [lo, mid, hi] = probes(traj, t, dt)?;
    let mut cs = Vec::with_capacity(3);
    for s in [&lo, &mid, &hi] {
        cs.push(constraint(&quotient(&s.u, &s.v)?)?);
    }
    let lhs = fd_time_derivative([(lo.t, &cs[0]), (mid.t, &cs[1]), (hi.t, &cs[2])])?;
    let l = log_density(&mid.u)?;
    let h = quotient(&mid.u, &mid.v)?;
    let geo = NodeGeometry::sample(l.grid(), &mid.state);
    let rhs = lemma3_rhs(&l, &h, &mid.state, &geo)?;
    tensor_residual("lemma3", t, dt, &lhs, &rhs, &geo)
}

fn p_tensor(s: &Snapshot) -> Result<MatrixField> {
    let l = log_density(&s.u)?;
    let h = quotient(&s.u, &s.v)?;
    let a = mixed_hessian(&l)?;
    let ric = MatrixField::ricci(l.grid(), &s.state);
    a.add(&ric.scale(s.state.epsilon))?.sub(&constraint(&h)?)
}

/// `D = ∂_tQ − [ΔQ + ∇L·∇̄Q + ∇̄L·∇Q + R·Q − (½ + ε)(Ric∘Q + Q∘Ric) + (Q − 2g/t)∘Q]`
/// must be nonnegative; the discarded terms are positive semidefinite.
///
/// `∂_tQ` differences `P` in time and adds `∂_t(g/t) = −εRic/t − g/t²`
/// analytically.
pub fn check_q_evolution_inequality(traj: &FlowTrajectory, t: f64, dt: f64) -> Result<IdentityResidual> {
    if !(t > 0.0) {
        return Err(Error::Input("the Q inequality is stated for t > 0".into()));
    }
    let [lo, mid, hi] = probes(traj, t, dt)?;
    let ps = [p_tensor(&lo)?, p_tensor(&mid)?, p_tensor(&hi)?];
    let dp = fd_time_derivative([(lo.t, &ps[0]), (mid.t, &ps[1]), (hi.t, &ps[2])])?;
    let state = &mid.state;
    let grid = ps[1].grid().clone();
    let n = grid.n();
    let eps = state.epsilon;
    let geo = NodeGeometry::sample(&grid, state);
    let q = ps[1].map(|p, m| m + Mat::scaled_identity(n, geo.c[p] / t));
    let l = log_density(&mid.u)?;
    let dl = partials(&l)?;
    let grad_q = tensor_gradient_with(&q, &geo);
    let lap_q = tensor_laplacian_with(&q, &geo);
    let mut worst = (f64::INFINITY, 0usize);
    let mut rhs_norm = 0.0f64;
    for p in 0..grid.len() {
        let c = geo.c[p];
        let g = Mat::scaled_identity(n, c);
        let ric = geo.curvature[p].ricci;
        let qp = q.at(p);
        let dqdt = dp.at(p) - ric.scale(eps / t) - g.scale(1.0 / (t * t));
        let rhs = lap_q.at(p)
            + transport_at(&dl, &grad_q, c, p)
            + curvature_act(&geo, p, &qp)
            - (ric * qp + qp * ric).scale((0.5 + eps) / c)
            + ((qp - g.scale(2.0 / t)) * qp).scale(1.0 / c);
        rhs_norm = rhs_norm.max(rhs.max_abs() / c);
        let d = dqdt - rhs;
        // the defect is Hermitian up to discretisation error
        let lam = (d + d.adjoint()).scale(0.5).hermitian_eigenvalues().0 / c;
        if lam < worst.0 {
            worst = (lam, p);
        }
    }
    let violation = (-worst.0).max(0.0);
    let mut r = build("q_inequality", t, dt, &grid, (violation, worst.1), rhs_norm);
    r.min_eigenvalue = Some(worst.0);
    Ok(r)
}

/// Runs the trajectory-based checks at every requested time.
pub fn run_identity_suite(traj: &FlowTrajectory, times: &[f64], dt: f64) -> Result<Vec<IdentityResidual>> {
    type Check = fn(&FlowTrajectory, f64, f64) -> Result<IdentityResidual>;
    let checks: [(&str, Check); 4] = [
        ("L_evolution", check_l_evolution),
        ("lemma1", check_lemma1),
        ("lemma3", check_lemma3),
        ("q_inequality", check_q_evolution_inequality),
    ];
    let mut out = Vec::new();
    for &t in times {
        for (name, check) in checks {
            let r = check(traj, t, dt).map_err(|e| {
                Error::Consistency(format!("{name} at t = {t} on {}: {e}", traj.model().label()))
            })?;
            out.push(r);
        }
    }
    Ok(out)
}

/// Least-squares slope of `log residual` against `log Δt`.
pub fn fit_order(dts: &[f64], residuals: &[f64]) -> Option<f64> {
    if dts.len() != residuals.len() || dts.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .zip(residuals)
        .filter(|(d, r)| **d > 0.0 && **r > 0.0)
        .map(|(d, r)| (d.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
