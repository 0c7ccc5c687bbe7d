//! Harnack quantities of a solution pair and their positivity certification.
//!
//! For `u > 0`, `|v| < u`, `L = ln u`, `h = v/u`:
//!
//! * `C_{i j̄} = ∇_i h ∇_j̄ h / (1 − h²)` (constraint tensor),
//! * `P = ∇_i∇_j̄ L + ε R_{i j̄} − C`,
//! * `Q = P + g/t`, and `Q_unconstrained = Q + C`.
//!
//! Eigenvalues in reports are taken relative to the metric, i.e. of
//! `g^{-1}Q`; on the models `g = c·I` so this is `λ_min(Q)/c`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{mixed_hessian, partials, Grid, HermitianField, MatrixField, Partials, ScalarField};
use crate::flow::{ordering_margin, FlowTrajectory, Snapshot};
use crate::geom::{self, MetricState};
use crate::linalg::Mat;

/// `L = ln u`.
pub fn log_density(u: &ScalarField) -> Result<ScalarField> {
    for p in 0..u.grid().len() {
        let x = u.re(p);
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::Domain { node: p, message: format!("u = {x} is not positive") });
        }
    }
    Ok(u.map(|z| Complex64::new(z.re.ln(), 0.0)))
}

/// `h = v/u`, requiring `|h| < 1`.
pub fn quotient(u: &ScalarField, v: &ScalarField) -> Result<ScalarField> {
    let h = u.zip_with(v, |a, b| Complex64::new(b.re / a.re, 0.0))?;
    for p in 0..h.grid().len() {
        let x = h.re(p);
        if !(u.re(p) > 0.0 && x.abs() < 1.0) {
            return Err(Error::Domain {
                node: p,
                message: format!("ordering |v| < u violated (h = {x})"),
            });
        }
    }
    Ok(h)
}

/// `∂_i h ∂_j̄ h / (1 − h²)` from the gradient at one node.
pub fn constraint_at(h: f64, dh: &[Complex64], dh_bar: &[Complex64]) -> Mat {
    let n = dh.len();
    let d = 1.0 - h * h;
    Mat::from_fn(n, |i, j| dh[i] * dh_bar[j] / d)
}

pub fn constraint_tensor(h: &ScalarField) -> Result<HermitianField> {
    if let Some(p) = (0..h.grid().len()).find(|&p| !(h.re(p).abs() < 1.0)) {
        return Err(Error::Domain { node: p, message: format!("|h| = {} ≥ 1", h.re(p).abs()) });
    }
    let d = partials(h)?;
    let n = h.grid().n();
    Ok(MatrixField::from_fn(h.grid(), |p| {
        constraint_at(h.re(p), &d.holo_at(p)[..n], &d.anti_at(p)[..n])
    }))
}

/// `P = hess_L + ε·ricci − constraint`.
pub fn compute_p(
    hess_l: &HermitianField,
    ricci: &HermitianField,
    constraint: &HermitianField,
    epsilon: f64,
) -> Result<HermitianField> {
    hess_l.add(&ricci.scale(epsilon))?.sub(constraint)
}

/// `Q = P + g/t`.
pub fn compute_q(p: &HermitianField, state: &MetricState, t: f64) -> Result<HermitianField> {
    if !(t > 0.0) {
        return Err(Error::Input(format!("Q is defined for t > 0, got {t}")));
    }
    let g = MatrixField::metric(p.grid(), state);
    p.add(&g.scale(1.0 / t))
}

/// Nodewise smallest eigenvalue of a Hermitian field.
pub fn min_eigenvalue(field: &HermitianField) -> Result<ScalarField> {
    let vals = field
        .values()
        .iter()
        .enumerate()
        .map(|(p, m)| {
            m.min_eigenvalue().map_err(|e| match e {
                Error::Consistency(msg) => Error::Consistency(format!("node {p}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    ScalarField::from_real(field.grid().clone(), vals)
}

/// All quantities of the estimate at one time.
///
/// Fields that are cheap closed forms (metric, Ricci, curvature) or
/// algebraic combinations (`C`, `P`, `Q`, `Y`) are evaluated per node on
/// demand; the `*_field` methods materialise them.
#[derive(Clone, Debug)]
pub struct LyhSnapshot {
    pub t: f64,
    pub state: MetricState,
    pub epsilon: f64,
    pub l: ScalarField,
    pub h: ScalarField,
    pub grad_l: Partials,
    pub grad_h: Partials,
    pub hess_l: HermitianField,
}

impl LyhSnapshot {
    pub fn assemble(snapshot: &Snapshot) -> Result<Self> {
        let l = log_density(&snapshot.u)?;
        let h = quotient(&snapshot.u, &snapshot.v)?;
        let grad_l = partials(&l)?;
        let grad_h = partials(&h)?;
        let hess_l = mixed_hessian(&l)?;
        Ok(LyhSnapshot {
            t: snapshot.t,
            epsilon: snapshot.state.epsilon,
            state: snapshot.state.clone(),
            l,
            h,
            grad_l,
            grad_h,
            hess_l,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.l.grid()
    }

    fn n(&self) -> usize {
        self.state.n()
    }

    /// Conformal factor `c` with `g = c·I` at a node.
    pub fn conformal(&self, node: usize) -> f64 {
        self.state.conformal_factor(self.grid().point(node))
    }

    pub fn metric_at(&self, node: usize) -> Mat {
        Mat::scaled_identity(self.n(), self.conformal(node))
    }

    pub fn ricci_at(&self, node: usize) -> Mat {
        geom::curvature_unchecked(&self.state, self.grid().point(node)).ricci
    }

    pub fn constraint_at(&self, node: usize) -> Mat {
        let n = self.n();
        constraint_at(
            self.h.re(node),
            &self.grad_h.holo_at(node)[..n],
            &self.grad_h.anti_at(node)[..n],
        )
    }

    pub fn p_at(&self, node: usize) -> Mat {
        self.hess_l.at(node) + self.ricci_at(node).scale(self.epsilon) - self.constraint_at(node)
    }

    pub fn q_at(&self, node: usize) -> Mat {
        self.p_at(node) + self.metric_at(node).scale(1.0 / self.t)
    }

    pub fn q_unconstrained_at(&self, node: usize) -> Mat {
        self.q_at(node) + self.constraint_at(node)
    }

    /// `Y_{i j̄} = ΔR_{i j̄} + R_{i j̄ k l̄}R_{l k̄} − (∇_kL ∇_k̄R_{i j̄} + ∇_k̄L ∇_kR_{i j̄})/ε
    ///  + R_{i j̄ l k̄}∇_kL∇_l̄L/ε² + R_{i j̄}/(εt)`.
    ///
    /// The models have parallel Ricci form, so the derivative terms vanish
    /// identically and are omitted.
    pub fn y_at(&self, node: usize) -> Result<Mat> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Unsupported("Y is defined only for ε > 0".into()));
        }
        let n = self.n();
        let z = self.grid().point(node);
        let curv = geom::curvature_unchecked(&self.state, z);
        let ginv = Mat::scaled_identity(n, 1.0 / self.state.conformal_factor(z));
        let dl = self.grad_l.holo_at(node);
        let grad_grad = Mat::from_fn(n, |p, q| dl[p] * dl[q].conj());
        let eps = self.epsilon;
        Ok(curv.riemann.act(&ginv, &curv.ricci)
            + curv.riemann.act(&ginv, &grad_grad).scale(1.0 / (eps * eps))
            + curv.ricci.scale(1.0 / (eps * self.t)))
    }

    fn field(&self, f: impl Fn(usize) -> Mat) -> HermitianField {
        MatrixField::from_fn(self.grid(), f)
    }

    pub fn ricci_field(&self) -> HermitianField {
        self.field(|p| self.ricci_at(p))
    }

    pub fn constraint_field(&self) -> HermitianField {
        self.field(|p| self.constraint_at(p))
    }

    pub fn p_field(&self) -> HermitianField {
        self.field(|p| self.p_at(p))
    }

    pub fn q_field(&self) -> HermitianField {
        self.field(|p| self.q_at(p))
    }

    pub fn q_unconstrained_field(&self) -> HermitianField {
        self.field(|p| self.q_unconstrained_at(p))
    }

    pub fn y_field(&self) -> Result<HermitianField> {
        let vals = (0..self.grid().len()).map(|p| self.y_at(p)).collect::<Result<Vec<_>>>()?;
        MatrixField::new(self.grid().clone(), vals)
    }

    /// Metric-relative smallest eigenvalue `λ_min(g^{-1}M)` at a node.
    pub fn relative_min_eigenvalue(&self, node: usize, m: &Mat) -> Result<f64> {
        Ok(m.min_eigenvalue()? / self.conformal(node))
    }
}

/// Options for [`report`].
#[derive(Clone, Debug)]
pub struct ReportOptions {
    /// Only times `≥ report_start` (and `> 0`) are reported.
    pub report_start: f64,
    /// Absolute tolerance on `min λ_min(Q)`; `None` uses `1e-8·(1 + 1/t)`.
    pub positivity_tol: Option<f64>,
    /// Absolute tolerance on `min λ_min(Y)`.
    pub y_tol: f64,
    /// Number of violating `(node, t)` pairs to keep.
    pub max_violations: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            report_start: 0.0,
            positivity_tol: None,
            y_tol: 1e-6,
            max_violations: 10,
        }
    }
}

impl ReportOptions {
    pub fn tolerance_at(&self, t: f64) -> f64 {
        self.positivity_tol.unwrap_or(1e-8 * (1.0 + 1.0 / t))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub t: f64,
    pub min_q: f64,
    pub min_q_unconstrained: f64,
    pub min_y: Option<f64>,
    pub margin: f64,
    pub mass: f64,
    /// Largest and mean metric trace of the constraint tensor.
    pub constraint_gap_max: f64,
    pub constraint_gap_mean: f64,
    /// Node attaining `min_q`.
    pub min_q_node: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub quantity: &'static str,
    pub node: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyhReport {
    pub rows: Vec<ReportRow>,
    /// All `min_q ≥ −tol`.
    pub verdict: bool,
    /// All `min_y ≥ −y_tol` (true when `Y` is not defined).
    pub y_verdict: bool,
    pub violations: Vec<Violation>,
}

/// Evaluates the estimate at every stored time `≥ options.report_start`.
pub fn report(traj: &FlowTrajectory, options: &ReportOptions) -> Result<LyhReport> {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let (mut verdict, mut y_verdict) = (true, true);
    for (i, snap) in traj.snapshots().iter().enumerate() {
        if snap.t < options.report_start || snap.t <= 0.0 {
            continue;
        }
        let lyh = LyhSnapshot::assemble(snap)?;
        let tol = options.tolerance_at(snap.t);
        let with_y = lyh.epsilon > 0.0;
        let mut row = ReportRow {
            t: snap.t,
            min_q: f64::INFINITY,
            min_q_unconstrained: f64::INFINITY,
            min_y: with_y.then_some(f64::INFINITY),
            margin: ordering_margin(&snap.u, &snap.v)?,
            mass: traj.mass(i)?,
            constraint_gap_max: 0.0,
            constraint_gap_mean: 0.0,
            min_q_node: 0,
        };
        let len = lyh.grid().len();
        for p in 0..len {
            let q = lyh.q_at(p);
            let c = lyh.constraint_at(p);
            let lam = lyh.relative_min_eigenvalue(p, &q)?;
            if lam < row.min_q {
                row.min_q = lam;
                row.min_q_node = p;
            }
            if lam < -tol {
                verdict = false;
                if violations.len() < options.max_violations {
                    violations.push(Violation { quantity: "Q", node: p, t: snap.t, value: lam });
                }
            }
            let lam_u = lyh.relative_min_eigenvalue(p, &(q + c))?;
            row.min_q_unconstrained = row.min_q_unconstrained.min(lam_u);
            let gap = c.trace().re / lyh.conformal(p);
            row.constraint_gap_max = row.constraint_gap_max.max(gap);
            row.constraint_gap_mean += gap / len as f64;
            if let Some(min_y) = row.min_y.as_mut() {
                let y = lyh.y_at(p)?;
                let ly = lyh.relative_min_eigenvalue(p, &y)?;
                *min_y = min_y.min(ly);
                if ly < -options.y_tol {
                    y_verdict = false;
                    if violations.len() < options.max_violations {
                        violations.push(Violation { quantity: "Y", node: p, t: snap.t, value: ly });
                    }
                }
            }
        }
        rows.push(row);
    }
    Ok(LyhReport { rows, verdict, y_verdict, violations })
}
