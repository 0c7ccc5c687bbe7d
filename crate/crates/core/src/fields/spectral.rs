//! Line-by-line FFTs over one axis of a row-major array.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse FFT pair for one line length.
#[derive(Clone)]
pub(crate) struct LinePlan {
    pub len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LinePlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LinePlan({})", self.len)
    }
}

impl LinePlan {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        LinePlan {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    /// Transforms every line along `axis` in place. The inverse is
    /// normalised by `1/len`.
    pub fn transform_axis(&self, data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) {
        debug_assert_eq!(shape[axis], self.len);
        let fft = if inverse { &self.inverse } else { &self.forward };
        let len = self.len;
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        if stride == 1 {
            fft.process(data);
        } else {
            let mut line = vec![Complex64::new(0.0, 0.0); len];
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for o in 0..outer {
                let base = o * len * stride;
                for i in 0..stride {
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + k * stride + i];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride + i] = *v;
                    }
                }
            }
        }
        if inverse {
            let s = 1.0 / len as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Signed integer frequency of FFT bin `k` on `n` points.
#[inline]
pub(crate) fn frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Frequency used for derivatives: the unpaired Nyquist bin is dropped.
#[inline]
pub(crate) fn derivative_frequency(k: usize, n: usize) -> f64 {
    if n % 2 == 0 && k == n / 2 {
        0.0
    } else {
        frequency(k, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_along_each_axis() {
        let shape = [4usize, 6, 8];
        let total: usize = shape.iter().product();
        let orig: Vec<Complex64> = (0..total)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        for axis in 0..3 {
            let plan = LinePlan::new(shape[axis]);
            let mut d = orig.clone();
            plan.transform_axis(&mut d, &shape, axis, false);
            plan.transform_axis(&mut d, &shape, axis, true);
            for (a, b) in d.iter().zip(&orig) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn frequencies() {
        let f: Vec<f64> = (0..6).map(|k| frequency(k, 6)).collect();
        assert_eq!(f, vec![0.0, 1.0, 2.0, 3.0, -2.0, -1.0]);
        assert_eq!(derivative_frequency(3, 6), 0.0);
        assert_eq!(derivative_frequency(2, 5), 2.0);
    }
}
