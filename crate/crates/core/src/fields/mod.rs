//! Grid-sampled scalar and tensor fields with spectral differentiation.
//!
//! Torus grids are uniform and periodic on every real axis and differentiate
//! with multidimensional Fourier symbols. `CP¹` grids are latitude–longitude
//! grids in `(θ, φ)` offset by half a cell from both poles; they
//! differentiate with Fourier series in `φ` and a double-Fourier extension
//! in `θ` (the sphere is covered twice by `θ ∈ (0, 2π)`), and convert to the
//! stereographic chart `z = tan(θ/2)·e^{iφ}` pointwise.
//!
//! Complex derivatives follow `∂_z = ½(∂_x − i∂_y)`; all tensors are chart
//! components `T_{i j̄}`.

mod spectral;
pub mod sht;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geom::{self, Christoffel, CurvatureData, ManifoldModel, MetricState, ModelKind};
use crate::linalg::Mat;

use self::sht::{fejer_weights, ShtPlan};
use self::spectral::{derivative_frequency, frequency, LinePlan};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug)]
enum Backend {
    Torus(TorusPlan),
    Sphere(SpherePlan),
}

#[derive(Debug)]
struct TorusPlan {
    n: usize,
    /// `2π k / P` per real axis, Nyquist bin zeroed.
    kappa: Vec<Vec<f64>>,
    /// `2π k / P` per real axis including the Nyquist bin.
    kappa_full: Vec<Vec<f64>>,
    line: LinePlan,
    cell_volume: f64,
}

#[derive(Debug)]
struct SpherePlan {
    n_theta: usize,
    n_phi: usize,
    theta_line: LinePlan,
    phi_line: LinePlan,
    /// `∂_z = coeff_theta·∂_θ + coeff_phi·∂_φ`
    coeff_theta: Vec<Complex64>,
    coeff_phi: Vec<Complex64>,
    weights: Vec<f64>,
    sht: ShtPlan,
}

/// Sampling nodes and the transform plan for one model.
#[derive(Debug)]
pub struct Grid {
    model: ManifoldModel,
    shape: Vec<usize>,
    /// Chart coordinates, `n` per node.
    chart: Vec<Complex64>,
    backend: Backend,
}

impl Grid {
    pub fn new(model: &ManifoldModel) -> Result<Arc<Grid>> {
        let res = model.grid_resolution();
        if res < 8 || res % 2 != 0 {
            return Err(Error::config("resolution", "grid resolution must be even and at least 8"));
        }
        let grid = match model.kind() {
            ModelKind::FlatTorus => Self::torus(model),
            ModelKind::FubiniStudyCp1 => Self::sphere(model),
        };
        Ok(Arc::new(grid))
    }

    fn torus(model: &ManifoldModel) -> Grid {
        let n = model.complex_dimension();
        let res = model.grid_resolution();
        let periods = model.periods();
        let shape = vec![res; 2 * n];
        let total = res.pow(2 * n as u32);
        let mut chart = Vec::with_capacity(total * n);
        let mut idx = vec![0usize; 2 * n];
        for flat in 0..total {
            unravel(flat, &shape, &mut idx);
            for c in 0..n {
                let x = idx[2 * c] as f64 * periods[2 * c] / res as f64;
                let y = idx[2 * c + 1] as f64 * periods[2 * c + 1] / res as f64;
                chart.push(Complex64::new(x, y));
            }
        }
        let kappa = periods
            .iter()
            .map(|p| (0..res).map(|k| 2.0 * PI * derivative_frequency(k, res) / p).collect())
            .collect();
        let kappa_full = periods
            .iter()
            .map(|p| (0..res).map(|k| 2.0 * PI * frequency(k, res) / p).collect())
            .collect();
        let cell_volume = periods.iter().map(|p| p / res as f64).product();
        Grid {
            model: model.clone(),
            shape,
            chart,
            backend: Backend::Torus(TorusPlan {
                n,
                kappa,
                kappa_full,
                line: LinePlan::new(res),
                cell_volume,
            }),
        }
    }

    fn sphere(model: &ManifoldModel) -> Grid {
        let res = model.grid_resolution();
        let (nt, np) = (res, res);
        let mut chart = Vec::with_capacity(nt * np);
        let mut coeff_theta = Vec::with_capacity(nt * np);
        let mut coeff_phi = Vec::with_capacity(nt * np);
        for j in 0..nt {
            let theta = (j as f64 + 0.5) * PI / nt as f64;
            let r = (0.5 * theta).tan();
            let cos2 = (0.5 * theta).cos().powi(2);
            for k in 0..np {
                let phi = 2.0 * PI * k as f64 / np as f64;
                let e = Complex64::from_polar(1.0, -phi);
                chart.push(Complex64::from_polar(r, phi));
                // ∂_z = ½e^{-iφ}(∂_r − (i/r)∂_φ), ∂_r = 2cos²(θ/2)∂_θ
                coeff_theta.push(e * cos2);
                coeff_phi.push(e * Complex64::new(0.0, -0.5 / r));
            }
        }
        Grid {
            model: model.clone(),
            shape: vec![nt, np],
            chart,
            backend: Backend::Sphere(SpherePlan {
                n_theta: nt,
                n_phi: np,
                theta_line: LinePlan::new(2 * nt),
                phi_line: LinePlan::new(np),
                coeff_theta,
                coeff_phi,
                weights: fejer_weights(nt),
                sht: ShtPlan::new(nt, np, nt / 2 - 1),
            }),
        }
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.model.complex_dimension()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Chart coordinates of a node.
    #[inline]
    pub fn point(&self, node: usize) -> &[Complex64] {
        let n = self.n();
        &self.chart[node * n..(node + 1) * n]
    }

    /// Transform plan identifier, recorded in residual tables.
    pub fn plan_label(&self) -> String {
        match &self.backend {
            Backend::Torus(_) => format!("fourier{}x{}", 2 * self.n(), self.model.grid_resolution()),
            Backend::Sphere(s) => format!("dfs{}x{}", s.n_theta, s.n_phi),
        }
    }

    /// Real axis coordinates of a node: `(x₁, y₁, …)` on the torus,
    /// `(θ, φ)` on `CP¹`.
    pub fn real_coordinates(&self, node: usize) -> Vec<f64> {
        match &self.backend {
            Backend::Torus(_) => self.point(node).iter().flat_map(|z| [z.re, z.im]).collect(),
            Backend::Sphere(s) => {
                let j = node / s.n_phi;
                let k = node % s.n_phi;
                vec![
                    (j as f64 + 0.5) * PI / s.n_theta as f64,
                    2.0 * PI * k as f64 / s.n_phi as f64,
                ]
            }
        }
    }

    pub(crate) fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.model == other.model
    }

    /// Truncation degree of the spherical-harmonic plan (`CP¹` only).
    pub fn sht(&self) -> Option<&ShtPlan> {
        match &self.backend {
            Backend::Sphere(s) => Some(&s.sht),
            Backend::Torus(_) => None,
        }
    }

    /// Multiplies the torus spectrum by `symbol(|κ|²_axes)`; `None` on `CP¹`.
    pub(crate) fn torus_multiplier(
        &self,
        values: &[Complex64],
        symbol: impl Fn(&[f64]) -> f64,
    ) -> Option<Vec<Complex64>> {
        let Backend::Torus(t) = &self.backend else { return None };
        let mut spec = values.to_vec();
        t.forward(&mut spec, &self.shape);
        let mut idx = vec![0usize; self.shape.len()];
        let mut kap = vec![0.0; self.shape.len()];
        for (flat, v) in spec.iter_mut().enumerate() {
            unravel(flat, &self.shape, &mut idx);
            for (d, &i) in idx.iter().enumerate() {
                kap[d] = t.kappa_full[d][i];
            }
            *v *= symbol(&kap);
        }
        t.inverse(&mut spec, &self.shape);
        Some(spec)
    }

    /// `(∂_{z^k} f, ∂_{z̄^k} f)` for every `k`, sharing transforms.
    pub(crate) fn partials_raw(&self, f: &[Complex64]) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
        match &self.backend {
            Backend::Torus(t) => {
                let mut spec = f.to_vec();
                t.forward(&mut spec, &self.shape);
                let mut holo = Vec::with_capacity(t.n);
                let mut anti = Vec::with_capacity(t.n);
                for c in 0..t.n {
                    holo.push(t.apply(&spec, &self.shape, |k| {
                        0.5 * Complex64::new(k[2 * c + 1], k[2 * c])
                    }));
                    anti.push(t.apply(&spec, &self.shape, |k| {
                        0.5 * Complex64::new(-k[2 * c + 1], k[2 * c])
                    }));
                }
                (holo, anti)
            }
            Backend::Sphere(s) => {
                let dth = s.d_theta(f);
                let dph = s.d_phi(f);
                let mut holo = Vec::with_capacity(f.len());
                let mut anti = Vec::with_capacity(f.len());
                for p in 0..f.len() {
                    holo.push(s.coeff_theta[p] * dth[p] + s.coeff_phi[p] * dph[p]);
                    anti.push(s.coeff_theta[p].conj() * dth[p] + s.coeff_phi[p].conj() * dph[p]);
                }
                (vec![holo], vec![anti])
            }
        }
    }

    /// Second chart derivatives as `[i][j]` arrays: `∂_i∂_j f` when
    /// `holomorphic`, otherwise `∂_i∂_j̄ f`.
    pub(crate) fn second_partials_raw(&self, f: &[Complex64], holomorphic: bool) -> Vec<Vec<Vec<Complex64>>> {
        let n = self.n();
        match &self.backend {
            Backend::Torus(t) => {
                let mut spec = f.to_vec();
                t.forward(&mut spec, &self.shape);
                let dz = |k: &[f64], c: usize| 0.5 * Complex64::new(k[2 * c + 1], k[2 * c]);
                let second = |k: &[f64], c: usize| {
                    if holomorphic {
                        dz(k, c)
                    } else {
                        0.5 * Complex64::new(-k[2 * c + 1], k[2 * c])
                    }
                };
                (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| t.apply(&spec, &self.shape, |k| dz(k, i) * second(k, j)))
                            .collect()
                    })
                    .collect()
            }
            Backend::Sphere(_) => {
                let (h1, a1) = self.partials_raw(f);
                let first = if holomorphic { &h1[0] } else { &a1[0] };
                let (mut out, _) = self.partials_raw(first);
                vec![vec![out.remove(0)]]
            }
        }
    }

    /// `Σ_k ∂_k∂_k̄ f / c` at every node, for a conformal factor `c` sampled
    /// on the grid.
    ///
    /// On the sphere this is the Laplace–Beltrami operator applied in
    /// spherical-harmonic space, `−l(l+1)/a` per degree. Composing chart
    /// derivatives instead amplifies rounding near both poles.
    pub(crate) fn laplacian_raw(&self, f: &[Complex64], c: &[f64]) -> Vec<Complex64> {
        let trace = |vals: &[Complex64]| -> Vec<Complex64> {
            let mixed = self.second_partials_raw(vals, false);
            let mut acc = vec![ZERO; vals.len()];
            for (k, row) in mixed.iter().enumerate() {
                for (a, v) in acc.iter_mut().zip(&row[k]) {
                    *a += v;
                }
            }
            acc.iter().zip(c).map(|(a, c)| a / c).collect()
        };
        match &self.backend {
            Backend::Torus(_) => trace(f),
            Backend::Sphere(s) => {
                // c = a/(1+|z|²)²
                let a = c[0] * (1.0 + self.chart[0].norm_sqr()).powi(2);
                let mut coeffs = s.sht.forward(f);
                for l in 0..=s.sht.lmax() {
                    let factor = -((l * (l + 1)) as f64) / a;
                    for m in -(l as i64)..=(l as i64) {
                        coeffs[sht::coeff_index(l, m)] *= factor;
                    }
                }
                s.sht.inverse(&coeffs)
            }
        }
    }

    fn quadrature_sum(&self, values: &[Complex64], state: &MetricState) -> Complex64 {
        match &self.backend {
            Backend::Torus(t) => {
                let s: Complex64 = values.iter().sum();
                s * t.cell_volume * state.a.powi(t.n as i32)
            }
            Backend::Sphere(s) => {
                // det g · dx dy = (a/4) sin θ dθ dφ
                let mut acc = ZERO;
                for j in 0..s.n_theta {
                    let row: Complex64 = values[j * s.n_phi..(j + 1) * s.n_phi].iter().sum();
                    acc += row * s.weights[j];
                }
                acc * (state.a / 4.0) * (2.0 * PI / s.n_phi as f64)
            }
        }
    }
}

impl TorusPlan {
    fn forward(&self, data: &mut [Complex64], shape: &[usize]) {
        for axis in 0..shape.len() {
            self.line.transform_axis(data, shape, axis, false);
        }
    }

    fn inverse(&self, data: &mut [Complex64], shape: &[usize]) {
        for axis in 0..shape.len() {
            self.line.transform_axis(data, shape, axis, true);
        }
    }

    /// Inverse transform of `spec · symbol(κ)`.
    fn apply(
        &self,
        spec: &[Complex64],
        shape: &[usize],
        symbol: impl Fn(&[f64]) -> Complex64,
    ) -> Vec<Complex64> {
        let mut out = spec.to_vec();
        let mut idx = vec![0usize; shape.len()];
        let mut kap = vec![0.0; shape.len()];
        for (flat, v) in out.iter_mut().enumerate() {
            unravel(flat, shape, &mut idx);
            for (d, &i) in idx.iter().enumerate() {
                kap[d] = self.kappa[d][i];
            }
            *v *= symbol(&kap);
        }
        self.inverse(&mut out, shape);
        out
    }
}

impl SpherePlan {
    /// `∂_θ` via the double-Fourier extension `f(2π−θ, φ) = f(θ, φ+π)`.
    fn d_theta(&self, f: &[Complex64]) -> Vec<Complex64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let half = np / 2;
        let mut ext = vec![ZERO; 2 * nt * np];
        ext[..nt * np].copy_from_slice(f);
        for j in nt..2 * nt {
            let src = 2 * nt - 1 - j;
            for k in 0..np {
                ext[j * np + k] = f[src * np + (k + half) % np];
            }
        }
        let shape = [2 * nt, np];
        self.theta_line.transform_axis(&mut ext, &shape, 0, false);
        for j in 0..2 * nt {
            let ik = Complex64::new(0.0, derivative_frequency(j, 2 * nt));
            for v in &mut ext[j * np..(j + 1) * np] {
                *v *= ik;
            }
        }
        self.theta_line.transform_axis(&mut ext, &shape, 0, true);
        ext.truncate(nt * np);
        ext
    }

    fn d_phi(&self, f: &[Complex64]) -> Vec<Complex64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let mut d = f.to_vec();
        let shape = [nt, np];
        self.phi_line.transform_axis(&mut d, &shape, 1, false);
        for row in d.chunks_mut(np) {
            for (k, v) in row.iter_mut().enumerate() {
                *v *= Complex64::new(0.0, derivative_frequency(k, np));
            }
        }
        self.phi_line.transform_axis(&mut d, &shape, 1, true);
        d
    }
}

fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for d in (0..shape.len()).rev() {
        out[d] = flat % shape[d];
        flat /= shape[d];
    }
}

/// Per-node samples of a complex scalar.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "field has {} samples, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_real(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[Complex64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|p| f(grid.point(p))).collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn constant(grid: &Arc<Grid>, v: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![Complex64::new(v, 0.0); grid.len()] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn re(&self, node: usize) -> f64 {
        self.values[node].re
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&z| f(z)).collect() }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        check_same(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    /// Largest imaginary part.
    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    /// True when every imaginary part is below `tol·max(1, max|f|)`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.max_imag() <= tol * self.max_abs().max(1.0)
    }
}

/// Per-node `n × n` complex matrices: Hermitian tensors `T_{i j̄}`,
/// symmetric tensors `T_{ij}`, or intermediate products.
#[derive(Clone, Debug)]
pub struct MatrixField {
    grid: Arc<Grid>,
    values: Vec<Mat>,
}

/// A field of Hermitian matrices `T_{i j̄}`.
pub type HermitianField = MatrixField;
/// A field of complex symmetric matrices `T_{ij}`.
pub type SymmetricField = MatrixField;

impl MatrixField {
    pub fn new(grid: Arc<Grid>, values: Vec<Mat>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "tensor field has {} samples, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|m| m.dim() != grid.n()) {
            return Err(Error::Input("tensor dimension does not match the model".into()));
        }
        Ok(MatrixField { grid, values })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(usize) -> Mat) -> Self {
        MatrixField { grid: grid.clone(), values: (0..grid.len()).map(f).collect() }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n = grid.n();
        Self::from_fn(grid, |_| Mat::zeros(n))
    }

    /// The metric `g_{i j̄}` sampled on the grid.
    pub fn metric(grid: &Arc<Grid>, state: &MetricState) -> Self {
        let n = grid.n();
        Self::from_fn(grid, |p| Mat::scaled_identity(n, state.conformal_factor(grid.point(p))))
    }

    /// The Ricci form sampled on the grid.
    pub fn ricci(grid: &Arc<Grid>, state: &MetricState) -> Self {
        Self::from_fn(grid, |p| geom::curvature_unchecked(state, grid.point(p)).ricci)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    #[inline]
    pub fn at(&self, node: usize) -> Mat {
        self.values[node]
    }

    pub fn map(&self, f: impl Fn(usize, Mat) -> Mat) -> Self {
        MatrixField {
            grid: self.grid.clone(),
            values: self.values.iter().enumerate().map(|(p, &m)| f(p, m)).collect(),
        }
    }

    pub fn zip_with(&self, other: &MatrixField, f: impl Fn(Mat, Mat) -> Mat) -> Result<Self> {
        check_same(&self.grid, &other.grid)?;
        Ok(MatrixField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &MatrixField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &MatrixField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|_, m| m.scale(s))
    }

    pub fn component(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.values.iter().map(|m| m.get(i, j)).collect()
    }

    fn from_components(grid: &Arc<Grid>, comps: &[Vec<Vec<Complex64>>]) -> Self {
        let n = grid.n();
        Self::from_fn(grid, |p| Mat::from_fn(n, |i, j| comps[i][j][p]))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|m| m.max_abs()).fold(0.0, f64::max)
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.values.iter().map(|m| m.hermitian_defect()).fold(0.0, f64::max)
    }

    pub fn symmetric_defect(&self) -> f64 {
        self.values.iter().map(|m| m.symmetric_defect()).fold(0.0, f64::max)
    }
}

fn check_same(a: &Grid, b: &Grid) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("{} vs {}", a.model.label(), b.model.label())))
    }
}

fn check_state(grid: &Grid, state: &MetricState) -> Result<()> {
    if grid.model.kind() != state.model.kind()
        || grid.model.complex_dimension() != state.model.complex_dimension()
        || grid.model.periods() != state.model.periods()
    {
        return Err(Error::GridMismatch(format!(
            "field lives on {} but metric describes {}",
            grid.model.label(),
            state.model.label()
        )));
    }
    Ok(())
}

/// First derivatives `∂_i f` and `∂_ī f`, one field per index.
#[derive(Clone, Debug)]
pub struct Partials {
    pub holo: Vec<ScalarField>,
    pub anti: Vec<ScalarField>,
}

impl Partials {
    /// `(∂_1 f, …, ∂_n f)` at a node.
    pub fn holo_at(&self, node: usize) -> [Complex64; 2] {
        let mut out = [ZERO; 2];
        for (k, f) in self.holo.iter().enumerate() {
            out[k] = f.values[node];
        }
        out
    }

    pub fn anti_at(&self, node: usize) -> [Complex64; 2] {
        let mut out = [ZERO; 2];
        for (k, f) in self.anti.iter().enumerate() {
            out[k] = f.values[node];
        }
        out
    }
}

pub fn partials(f: &ScalarField) -> Result<Partials> {
    let (holo, anti) = f.grid.partials_raw(&f.values);
    let wrap = |v: Vec<Vec<Complex64>>| {
        v.into_iter().map(|values| ScalarField { grid: f.grid.clone(), values }).collect()
    };
    Ok(Partials { holo: wrap(holo), anti: wrap(anti) })
}

/// `∇_i∇_j̄ f = ∂_i∂_j̄ f`.
///
/// For real `f` the result is replaced by its Hermitian part, which removes
/// the (purely truncation-error) anti-Hermitian remainder.
pub fn mixed_hessian(f: &ScalarField) -> Result<HermitianField> {
    let grid = &f.grid;
    let raw = if grid.model.kind() == ModelKind::FubiniStudyCp1 {
        // n = 1: ∂∂̄f = c·Δf for any conformal factor; use the unit scale.
        let c: Vec<f64> = (0..grid.len())
            .map(|p| (1.0 + grid.point(p)[0].norm_sqr()).powi(-2))
            .collect();
        let lap = grid.laplacian_raw(&f.values, &c);
        MatrixField::from_fn(grid, |p| Mat::from_fn(1, |_, _| lap[p] * c[p]))
    } else {
        let mixed = grid.second_partials_raw(&f.values, false);
        MatrixField::from_components(grid, &mixed)
    };
    if f.is_real(1e-12) {
        Ok(raw.map(|_, m| (m + m.adjoint()).scale(0.5)))
    } else {
        Ok(raw)
    }
}

/// `∇_i∇_j f = ∂_i∂_j f − Γ^k_{ij} ∂_k f`.
pub fn holomorphic_hessian(f: &ScalarField, state: &MetricState) -> Result<SymmetricField> {
    check_state(&f.grid, state)?;
    let grid = &f.grid;
    let holo = grid.second_partials_raw(&f.values, true);
    let raw = MatrixField::from_components(grid, &holo);
    if state.model.kind() == ModelKind::FlatTorus {
        return Ok(raw);
    }
    let d = partials(f)?;
    let n = grid.n();
    Ok(raw.map(|p, m| {
        let gamma = geom::christoffel_unchecked(state, grid.point(p));
        let df = d.holo_at(p);
        m - Mat::from_fn(n, |i, j| (0..n).map(|k| gamma.get(k, i, j) * df[k]).sum())
    }))
}

/// `Δf = g^{i j̄} ∂_i∂_j̄ f`.
pub fn laplacian(f: &ScalarField, state: &MetricState) -> Result<ScalarField> {
    check_state(&f.grid, state)?;
    let grid = &f.grid;
    let c: Vec<f64> = (0..grid.len()).map(|p| state.conformal_factor(grid.point(p))).collect();
    ScalarField::new(grid.clone(), grid.laplacian_raw(&f.values, &c))
}

/// Covariant derivatives `∇_k T_{i j̄}` and `∇_k̄ T_{i j̄}` of a (1,1)-tensor.
#[derive(Clone, Debug)]
pub struct TensorGradient {
    pub holo: Vec<MatrixField>,
    pub anti: Vec<MatrixField>,
}

/// Per-node metric data needed for covariant corrections.
pub struct NodeGeometry {
    pub c: Vec<f64>,
    pub gamma: Option<Vec<Christoffel>>,
    pub curvature: Vec<CurvatureData>,
}

impl NodeGeometry {
    pub fn sample(grid: &Grid, state: &MetricState) -> Self {
        let flat = state.model.kind() == ModelKind::FlatTorus;
        let c = (0..grid.len()).map(|p| state.conformal_factor(grid.point(p))).collect();
        let gamma = (!flat).then(|| {
            (0..grid.len()).map(|p| geom::christoffel_unchecked(state, grid.point(p))).collect()
        });
        let curvature = (0..grid.len())
            .map(|p| geom::curvature_unchecked(state, grid.point(p)))
            .collect();
        NodeGeometry { c, gamma, curvature }
    }
}

fn component_partials(t: &MatrixField) -> Vec<Vec<(Vec<Complex64>, Vec<Complex64>)>> {
    let n = t.grid.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let (h, a) = t.grid.partials_raw(&t.component(i, j));
                    (h.into_iter().flatten().collect(), a.into_iter().flatten().collect())
                })
                .collect()
        })
        .collect()
}

/// Gradient of a (1,1)-tensor.
///
/// Both models have `g = c·I` with `n = 1` or `c` constant, so `∇g = 0` gives
/// `∇_k T = c ∂_k(T/c)`. Differentiating the bounded frame components `T/c`
/// keeps full relative accuracy where `c` is tiny (near the south pole of
/// CP¹); [`tensor_gradient_chart`] is the equivalent chart form.
pub fn tensor_gradient(t: &MatrixField, state: &MetricState) -> Result<TensorGradient> {
    check_state(&t.grid, state)?;
    let geo = NodeGeometry::sample(&t.grid, state);
    Ok(tensor_gradient_with(t, &geo))
}

pub fn tensor_gradient_with(t: &MatrixField, geo: &NodeGeometry) -> TensorGradient {
    let grid = &t.grid;
    let n = grid.n();
    let len = grid.len();
    let tau = t.map(|p, m| m.scale(1.0 / geo.c[p]));
    let parts = component_partials(&tau);
    let pick = |k: usize, holo: bool| {
        MatrixField::from_fn(grid, |p| {
            Mat::from_fn(n, |i, j| {
                let d = if holo { &parts[i][j].0 } else { &parts[i][j].1 };
                d[k * len + p] * geo.c[p]
            })
        })
    };
    TensorGradient {
        holo: (0..n).map(|k| pick(k, true)).collect(),
        anti: (0..n).map(|k| pick(k, false)).collect(),
    }
}

/// Chart form of the gradient:
/// `∇_k T_{i j̄} = ∂_k T_{i j̄} − Γ^p_{ki} T_{p j̄}`,
/// `∇_k̄ T_{i j̄} = ∂_k̄ T_{i j̄} − conj(Γ^p_{kj}) T_{i p̄}`.
pub fn tensor_gradient_chart(t: &MatrixField, geo: &NodeGeometry) -> TensorGradient {
    let grid = &t.grid;
    let n = grid.n();
    let len = grid.len();
    let parts = component_partials(t);
    let mut holo = Vec::with_capacity(n);
    let mut anti = Vec::with_capacity(n);
    for k in 0..n {
        let mut hk = MatrixField::from_fn(grid, |p| {
            Mat::from_fn(n, |i, j| parts[i][j].0[k * len + p])
        });
        let mut ak = MatrixField::from_fn(grid, |p| {
            Mat::from_fn(n, |i, j| parts[i][j].1[k * len + p])
        });
        if let Some(gamma) = &geo.gamma {
            hk = hk.map(|p, m| {
                let tp = t.values[p];
                let g = &gamma[p];
                m - Mat::from_fn(n, |i, j| (0..n).map(|q| g.get(q, k, i) * tp.get(q, j)).sum())
            });
            ak = ak.map(|p, m| {
                let tp = t.values[p];
                let g = &gamma[p];
                m - Mat::from_fn(n, |i, j| {
                    (0..n).map(|q| g.get(q, k, j).conj() * tp.get(i, q)).sum()
                })
            });
        }
        holo.push(hk);
        anti.push(ak);
    }
    TensorGradient { holo, anti }
}

/// Rough Laplacian `½ g^{k l̄}(∇_k∇_l̄ + ∇_l̄∇_k) T_{i j̄}` of a (1,1)-tensor.
pub fn tensor_laplacian(t: &MatrixField, state: &MetricState) -> Result<HermitianField> {
    check_state(&t.grid, state)?;
    let geo = NodeGeometry::sample(&t.grid, state);
    Ok(tensor_laplacian_with(t, &geo))
}

/// Frame form: `ΔT = c·Δ(T/c)` componentwise, using `∇g = 0` as in
/// [`tensor_gradient`].
pub fn tensor_laplacian_with(t: &MatrixField, geo: &NodeGeometry) -> MatrixField {
    let grid = &t.grid;
    let n = grid.n();
    let tau = t.map(|p, m| m.scale(1.0 / geo.c[p]));
    let lap: Vec<Vec<Vec<Complex64>>> = (0..n)
        .map(|i| (0..n).map(|j| grid.laplacian_raw(&tau.component(i, j), &geo.c)).collect())
        .collect();
    MatrixField::from_fn(grid, |p| Mat::from_fn(n, |i, j| lap[i][j][p] * geo.c[p]))
}

/// Chart form of the rough Laplacian with explicit Christoffel corrections.
/// Pass a gradient from [`tensor_gradient_chart`].
pub fn tensor_laplacian_chart(
    t: &MatrixField,
    geo: &NodeGeometry,
    gradient: Option<&TensorGradient>,
) -> MatrixField {
    let grid = &t.grid;
    let n = grid.n();
    let len = grid.len();
    let owned;
    let grad = match gradient {
        Some(g) => g,
        None => {
            owned = tensor_gradient_chart(t, geo);
            &owned
        }
    };
    let mut acc = vec![Mat::zeros(n); len];
    for k in 0..n {
        // ∇_k (∇_k̄ T): third slot pattern (k̄, i, j̄); correct the holomorphic i.
        let s = &grad.anti[k];
        let ds = component_partials(s);
        // ∇_k̄ (∇_k T): pattern (k, i, j̄); correct the antiholomorphic j̄.
        let s2 = &grad.holo[k];
        let ds2 = component_partials(s2);
        for p in 0..len {
            let mut part1 = Mat::from_fn(n, |i, j| ds[i][j].0[k * len + p]);
            let mut part2 = Mat::from_fn(n, |i, j| ds2[i][j].1[k * len + p]);
            if let Some(gamma) = &geo.gamma {
                let g = &gamma[p];
                let sp = s.values[p];
                let sp2 = s2.values[p];
                part1 -= Mat::from_fn(n, |i, j| (0..n).map(|q| g.get(q, k, i) * sp.get(q, j)).sum());
                part2 -= Mat::from_fn(n, |i, j| {
                    (0..n).map(|q| g.get(q, k, j).conj() * sp2.get(i, q)).sum()
                });
            }
            acc[p] += (part1 + part2).scale(0.5 / geo.c[p]);
        }
    }
    MatrixField { grid: grid.clone(), values: acc }
}

/// `∫ f dμ_g` with `dμ = det g × chart Lebesgue measure`.
pub fn integrate(f: &ScalarField, state: &MetricState) -> Result<f64> {
    check_state(&f.grid, state)?;
    Ok(f.grid.quadrature_sum(&f.values, state).re)
}

/// Field types that can be differenced in time.
pub trait TimeSampled: Sized {
    fn grid_ref(&self) -> &Arc<Grid>;
    fn combine(&self, other: &Self, scale: f64) -> Result<Self>;
}

impl TimeSampled for ScalarField {
    fn grid_ref(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn combine(&self, other: &Self, scale: f64) -> Result<Self> {
        self.zip_with(other, |a, b| (a - b) * scale)
    }
}

impl TimeSampled for MatrixField {
    fn grid_ref(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn combine(&self, other: &Self, scale: f64) -> Result<Self> {
        self.zip_with(other, |a, b| (a - b).scale(scale))
    }
}

/// Central difference `(f(t+Δt) − f(t−Δt)) / 2Δt` from three equally spaced
/// snapshots `(t−Δt, t, t+Δt)`.
pub fn fd_time_derivative<F: TimeSampled>(snapshots: [(f64, &F); 3]) -> Result<F> {
    let [(t0, f0), (t1, f1), (t2, f2)] = snapshots;
    for f in [f1, f2] {
        check_same(f0.grid_ref(), f.grid_ref())?;
    }
    let (h0, h1) = (t1 - t0, t2 - t1);
    if !(h0 > 0.0 && h1 > 0.0) || (h0 - h1).abs() > 1e-9 * h0.max(h1) {
        return Err(Error::Input(format!(
            "snapshots must be increasing and equally spaced (steps {h0:e}, {h1:e})"
        )));
    }
    f2.combine(f0, 1.0 / (t2 - t0))
}
