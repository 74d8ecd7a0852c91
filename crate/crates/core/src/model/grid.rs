use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform grid on `[-d, 0]` with `K` subintervals and trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentGrid {
    d: f64,
    k: usize,
    h: f64,
    weights: Vec<f64>,
}

impl SegmentGrid {
    pub fn new(d: f64, k: usize) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() || k < 2 {
            return Err(Error::NonPositiveDelay { d, k });
        }
        let h = d / k as f64;
        let mut weights = vec![h; k + 1];
        weights[0] = 0.5 * h;
        weights[k] = 0.5 * h;
        Ok(Self { d, k, h, weights })
    }

    pub fn delay(&self) -> f64 {
        self.d
    }

    /// Number of subintervals.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of nodes (`K + 1`).
    pub fn len(&self) -> usize {
        self.k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `xi_j = -d + j h`; the last node is exactly 0.
    pub fn node(&self, j: usize) -> f64 {
        if j == self.k {
            0.0
        } else {
            -self.d + j as f64 * self.h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.k).map(|j| self.node(j)).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    /// Trapezoid quadrature of a scalar grid function.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Trapezoid quadrature of an `R^n`-valued grid function stored node-major.
    pub fn integrate_vec(&self, f: &[f64], n: usize, out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.len() * n);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, w) in self.weights.iter().enumerate() {
            for i in 0..n {
                out[i] += w * f[j * n + i];
            }
        }
    }

    /// Trapezoid quadrature on the sub-interval `[xi_lo, xi_hi]` (node indices).
    pub fn integrate_range(&self, f: &[f64], lo: usize, hi: usize) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mut s = 0.5 * (f[lo] + f[hi]);
        for v in &f[lo + 1..hi] {
            s += v;
        }
        s * self.h
    }

    /// Whether `t` is a nonnegative integer multiple of `h`; returns the multiple.
    pub fn steps_of(&self, t: f64) -> Option<usize> {
        if !(t >= 0.0) || !t.is_finite() {
            return None;
        }
        let r = t / self.h;
        let n = r.round();
        if (r - n).abs() <= 1e-9 * r.max(1.0) {
            Some(n as usize)
        } else {
            None
        }
    }

    /// Squared trapezoid L2 norm of an `R^n`-valued grid function.
    pub fn norm_sq(&self, f: &[f64], n: usize) -> f64 {
        let mut s = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let mut e = 0.0;
            for i in 0..n {
                e += f[j * n + i] * f[j * n + i];
            }
            s += w * e;
        }
        s
    }

    /// Trapezoid inner product of two `R^n`-valued grid functions.
    pub fn inner(&self, f: &[f64], g: &[f64], n: usize) -> f64 {
        let mut s = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let mut e = 0.0;
            for i in 0..n {
                e += f[j * n + i] * g[j * n + i];
            }
            s += w * e;
        }
        s
    }

    /// Linear interpolation of a scalar grid function at `xi in [-d, 0]`.
    pub fn interpolate(&self, f: &[f64], xi: f64) -> f64 {
        let s = ((xi + self.d) / self.h).clamp(0.0, self.k as f64);
        let j = (s.floor() as usize).min(self.k - 1);
        let t = s - j as f64;
        f[j] * (1.0 - t) + f[j + 1] * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_node_is_zero_and_constant_integrates_to_d() {
        let g = SegmentGrid::new(1.7, 13).unwrap();
        assert_eq!(g.node(13), 0.0);
        assert!((g.node(0) + 1.7).abs() < 1e-15);
        let ones = vec![1.0; g.len()];
        assert!((g.integrate(&ones) - 1.7).abs() < 1e-14);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(matches!(
            SegmentGrid::new(1.0, 1),
            Err(Error::NonPositiveDelay { .. })
        ));
        assert!(SegmentGrid::new(0.0, 8).is_err());
        assert!(SegmentGrid::new(-1.0, 8).is_err());
    }

    #[test]
    fn affine_integrand_is_exact() {
        let g = SegmentGrid::new(2.0, 7).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| 3.0 * x + 0.5).collect();
        // int_{-2}^0 (3x + 1/2) dx = -6 + 1
        assert!((g.integrate(&f) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn steps_of_detects_alignment() {
        let g = SegmentGrid::new(1.0, 32).unwrap();
        assert_eq!(g.steps_of(2.0), Some(64));
        assert_eq!(g.steps_of(0.0), Some(0));
        assert_eq!(g.steps_of(0.01), None);
    }
}
