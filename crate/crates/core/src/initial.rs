//! Named generators for initial data.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::sht::{coeff_index, normalized_legendre};
use crate::fields::{Grid, ScalarField};
use crate::geom::ModelKind;

/// Initial data for one of `u`, `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Constant {
        value: f64,
    },
    /// `offset + amplitude·cos(2π k·x/P)` on the torus (`mode` holds one
    /// integer per real axis), or `offset + amplitude·P_l^m(cos θ)cos(mφ)/max`
    /// on `CP¹` (`mode = [l, m]`).
    SingleMode {
        offset: f64,
        amplitude: f64,
        mode: Vec<i64>,
    },
    /// Periodized heat kernel started at `t = 0`; flat torus only, `u` only.
    Gaussian,
    /// `offset + amplitude·s/max|s|` for a random real field `s` built from
    /// modes of wavenumber `1..=max_mode` (torus: `|k|₂ ≤ max_mode`; `CP¹`:
    /// degree `l ≤ max_mode`).
    RandomBandlimited {
        offset: f64,
        amplitude: f64,
        #[serde(default = "default_max_mode")]
        max_mode: usize,
    },
    /// `v = factor·u`; valid for `v` only.
    ScaledU {
        factor: f64,
    },
}

fn default_max_mode() -> usize {
    2
}

impl Generator {
    pub fn validate(&self, field: &str) -> Result<()> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{field}.{what}"), "must be finite"))
            }
        };
        match self {
            Generator::Constant { value } => finite(*value, "value"),
            Generator::SingleMode { offset, amplitude, .. } => {
                finite(*offset, "offset")?;
                finite(*amplitude, "amplitude")
            }
            Generator::RandomBandlimited { offset, amplitude, max_mode } => {
                finite(*offset, "offset")?;
                finite(*amplitude, "amplitude")?;
                if *max_mode == 0 {
                    return Err(Error::config(format!("{field}.max_mode"), "must be at least 1"));
                }
                Ok(())
            }
            Generator::ScaledU { factor } => finite(*factor, "factor"),
            Generator::Gaussian => Ok(()),
        }
    }

    /// Samples the generator on `grid`. `stream` separates the random
    /// streams of `u` and `v` under one seed.
    pub fn sample(&self, grid: &Arc<Grid>, seed: u64, stream: u64) -> Result<ScalarField> {
        match self {
            Generator::Constant { value } => Ok(ScalarField::constant(grid, *value)),
            Generator::SingleMode { offset, amplitude, mode } => {
                let s = single_mode(grid, mode)?;
                Ok(s.map(|z| Complex64::new(offset + amplitude * z.re, 0.0)))
            }
            Generator::RandomBandlimited { offset, amplitude, max_mode } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let s = random_field(grid, *max_mode, &mut rng)?;
                let peak = s.max_abs();
                if peak == 0.0 {
                    return Err(Error::Input("random field vanished on the grid".into()));
                }
                Ok(s.map(|z| Complex64::new(offset + amplitude * z.re / peak, 0.0)))
            }
            Generator::Gaussian | Generator::ScaledU { .. } => Err(Error::Unsupported(
                "this generator is not sampled directly; it is resolved by the trajectory builder"
                    .into(),
            )),
        }
    }
}

fn single_mode(grid: &Arc<Grid>, mode: &[i64]) -> Result<ScalarField> {
    let model = grid.model();
    match model.kind() {
        ModelKind::FlatTorus => {
            let axes = 2 * model.complex_dimension();
            if mode.len() != axes {
                return Err(Error::config("mode", format!("expected {axes} integers")));
            }
            let periods = model.periods().to_vec();
            let vals = (0..grid.len())
                .map(|p| {
                    let x = grid.real_coordinates(p);
                    let phase: f64 = (0..axes)
                        .map(|d| 2.0 * PI * mode[d] as f64 * x[d] / periods[d])
                        .sum();
                    phase.cos()
                })
                .collect();
            ScalarField::from_real(grid.clone(), vals)
        }
        ModelKind::FubiniStudyCp1 => {
            let (l, m) = match mode {
                [l, m] if *l >= 0 && m.abs() <= *l => (*l as usize, m.unsigned_abs() as usize),
                _ => return Err(Error::config("mode", "expected [l, m] with |m| ≤ l")),
            };
            let vals: Vec<f64> = (0..grid.len())
                .map(|p| {
                    let x = grid.real_coordinates(p);
                    normalized_legendre(l, x[0])[m][l - m] * (m as f64 * x[1]).cos()
                })
                .collect();
            let peak = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            ScalarField::from_real(grid.clone(), vals.into_iter().map(|v| v / peak).collect())
        }
    }
}

fn random_field(grid: &Arc<Grid>, max_mode: usize, rng: &mut ChaCha8Rng) -> Result<ScalarField> {
    let model = grid.model();
    match model.kind() {
        ModelKind::FlatTorus => {
            let axes = 2 * model.complex_dimension();
            let k = max_mode as i64;
            let mut modes = Vec::new();
            let mut idx = vec![-k; axes];
            loop {
                let norm2: i64 = idx.iter().map(|x| x * x).sum();
                // one representative of each ±k pair
                let first = idx.iter().find(|&&x| x != 0).copied().unwrap_or(0);
                if norm2 > 0 && norm2 <= k * k && first > 0 {
                    let a: f64 = rng.gen_range(-1.0..=1.0);
                    let b: f64 = rng.gen_range(-1.0..=1.0);
                    modes.push((idx.clone(), a, b));
                }
                let mut d = 0;
                while d < axes {
                    idx[d] += 1;
                    if idx[d] <= k {
                        break;
                    }
                    idx[d] = -k;
                    d += 1;
                }
                if d == axes {
                    break;
                }
            }
            let periods = model.periods().to_vec();
            let vals = (0..grid.len())
                .map(|p| {
                    let x = grid.real_coordinates(p);
                    modes
                        .iter()
                        .map(|(m, a, b)| {
                            let phase: f64 = (0..axes)
                                .map(|d| 2.0 * PI * m[d] as f64 * x[d] / periods[d])
                                .sum();
                            a * phase.cos() + b * phase.sin()
                        })
                        .sum()
                })
                .collect();
            ScalarField::from_real(grid.clone(), vals)
        }
        ModelKind::FubiniStudyCp1 => {
            let plan = grid.sht().expect("sphere grid carries a harmonic plan");
            if max_mode > plan.lmax() {
                return Err(Error::config(
                    "max_mode",
                    format!("degree {max_mode} exceeds grid truncation {}", plan.lmax()),
                ));
            }
            let mut coeffs = vec![Complex64::new(0.0, 0.0); plan.coeff_len()];
            for l in 1..=max_mode {
                coeffs[coeff_index(l, 0)] = Complex64::new(rng.gen_range(-1.0..=1.0), 0.0);
                for m in 1..=l as i64 {
                    let c = Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                    coeffs[coeff_index(l, m)] = c;
                    coeffs[coeff_index(l, -m)] = c.conj();
                }
            }
            let vals = plan.inverse(&coeffs).into_iter().map(|z| Complex64::new(z.re, 0.0)).collect();
            ScalarField::new(grid.clone(), vals)
        }
    }
}
