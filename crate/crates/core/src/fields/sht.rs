//! Spherical-harmonic transform on the half-offset latitude–longitude grid.
//!
//! Nodes sit at `θ_j = (j + ½)π/N_θ`, `φ_k = 2πk/N_φ`. Latitude integrals use
//! Fejér's first quadrature rule, exact for polynomials in `cos θ` of degree
//! below `N_θ`, so functions of degree `≤ N_θ/2` round-trip exactly when the
//! transform is truncated at `l_max = N_θ/2 − 1`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::spectral::LinePlan;

/// Fejér type-1 weights for `∫_0^π F(θ) sin θ dθ` on `θ_j = (j+½)π/n`.
pub fn fejer_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let theta = (j as f64 + 0.5) * PI / n as f64;
            let mut s = 0.0;
            for k in 1..=n / 2 {
                let k = k as f64;
                s += (2.0 * k * theta).cos() / (4.0 * k * k - 1.0);
            }
            2.0 / n as f64 * (1.0 - 2.0 * s)
        })
        .collect()
}

/// Associated Legendre functions normalised so that
/// `∫_{-1}^{1} P̄_l^m(x)² dx = 1` (no Condon–Shortley phase).
/// Returns values indexed `[m][l - m]` for `0 ≤ m ≤ l ≤ lmax`.
pub fn normalized_legendre(lmax: usize, theta: f64) -> Vec<Vec<f64>> {
    let x = theta.cos();
    let s = theta.sin();
    let mut out = Vec::with_capacity(lmax + 1);
    let mut pmm = (0.5f64).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        let mut col = Vec::with_capacity(lmax + 1 - m);
        col.push(pmm);
        if m < lmax {
            col.push((2.0 * m as f64 + 3.0).sqrt() * x * pmm);
        }
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            let next = a * (x * col[l - m - 1] - b * col[l - m - 2]);
            col.push(next);
        }
        out.push(col);
    }
    out
}

/// Index of `(l, m)` in a packed coefficient vector, `-l ≤ m ≤ l`.
#[inline]
pub fn coeff_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

/// Truncated orthonormal spherical-harmonic transform
/// `f = Σ c_{lm} P̄_l^{|m|}(cos θ) e^{imφ}/√(2π)`.
#[derive(Debug, Clone)]
pub struct ShtPlan {
    lmax: usize,
    n_theta: usize,
    n_phi: usize,
    weights: Vec<f64>,
    /// `[j][m][l - m]`
    legendre: Vec<Vec<Vec<f64>>>,
    phi_plan: LinePlan,
}

impl ShtPlan {
    pub fn new(n_theta: usize, n_phi: usize, lmax: usize) -> Self {
        assert!(2 * lmax < n_phi, "longitudinal grid too coarse for lmax");
        let legendre = (0..n_theta)
            .map(|j| normalized_legendre(lmax, (j as f64 + 0.5) * PI / n_theta as f64))
            .collect();
        ShtPlan {
            lmax,
            n_theta,
            n_phi,
            weights: fejer_weights(n_theta),
            legendre,
            phi_plan: LinePlan::new(n_phi),
        }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn coeff_len(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }

    #[inline]
    fn m_bin(&self, m: i64) -> usize {
        m.rem_euclid(self.n_phi as i64) as usize
    }

    /// Grid samples → coefficients.
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        assert_eq!(values.len(), nt * np);
        let mut rows = values.to_vec();
        self.phi_plan.transform_axis(&mut rows, &[nt, np], 1, false);
        // rows[j][bin] ≈ (N_φ/2π) ∫ f e^{-imφ} dφ
        let phi_scale = 2.0 * PI / np as f64 / (2.0 * PI).sqrt();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.coeff_len()];
        for j in 0..nt {
            let w = self.weights[j] * phi_scale;
            for m in -(self.lmax as i64)..=(self.lmax as i64) {
                let fm = rows[j * np + self.m_bin(m)] * w;
                let col = &self.legendre[j][m.unsigned_abs() as usize];
                for l in m.unsigned_abs() as usize..=self.lmax {
                    coeffs[coeff_index(l, m)] += fm * col[l - m.unsigned_abs() as usize];
                }
            }
        }
        coeffs
    }

    /// Coefficients → grid samples.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        assert_eq!(coeffs.len(), self.coeff_len());
        let mut rows = vec![Complex64::new(0.0, 0.0); nt * np];
        let norm = 1.0 / (2.0 * PI).sqrt();
        for j in 0..nt {
            for m in -(self.lmax as i64)..=(self.lmax as i64) {
                let mu = m.unsigned_abs() as usize;
                let col = &self.legendre[j][mu];
                let mut acc = Complex64::new(0.0, 0.0);
                for l in mu..=self.lmax {
                    acc += coeffs[coeff_index(l, m)] * col[l - mu];
                }
                // The inverse FFT divides by N_φ; compensate.
                rows[j * np + self.m_bin(m)] = acc * norm * np as f64;
            }
        }
        self.phi_plan.transform_axis(&mut rows, &[nt, np], 1, true);
        rows
    }
}
