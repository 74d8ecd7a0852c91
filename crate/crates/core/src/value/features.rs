use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::lift::LiftedState;
use crate::model::SegmentGrid;

/// `x -> (x0, <x1_i, P_k>/d)` with shifted Legendre polynomials `P_k` on `[-d, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub n: usize,
    pub moments: usize,
}

/// `P_k(s)` on `[-1, 1]` by the three-term recurrence.
pub(crate) fn legendre(k: usize, s: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => s,
        _ => {
            let (mut a, mut b) = (1.0, s);
            for j in 2..=k {
                let jf = j as f64;
                let c = ((2.0 * jf - 1.0) * s * b - (jf - 1.0) * a) / jf;
                a = b;
                b = c;
            }
            b
        }
    }
}

impl FeatureMap {
    pub fn new(n: usize, moments: usize) -> Self {
        Self { n, moments }
    }

    pub fn dim(&self) -> usize {
        self.n * (1 + self.moments)
    }

    fn profile(grid: &SegmentGrid, k: usize) -> Vec<f64> {
        let d = grid.delay();
        (0..grid.len())
            .map(|j| legendre(k, 2.0 * (grid.node(j) + d) / d - 1.0) / d)
            .collect()
    }

    pub fn eval(&self, grid: &SegmentGrid, x: &LiftedState) -> Vec<f64> {
        let n = self.n;
        let mut z = x.x0.clone();
        for i in 0..n {
            let comp: Vec<f64> = (0..grid.len()).map(|j| x.x1[j * n + i]).collect();
            for k in 0..self.moments {
                let p = Self::profile(grid, k);
                let prod: Vec<f64> = comp.iter().zip(&p).map(|(a, b)| a * b).collect();
                z.push(grid.integrate(&prod));
            }
        }
        z
    }

    /// Element `e_f` of `X` with `<x, e_f>_X = z_f(x)`.
    pub fn representer(&self, grid: &SegmentGrid, f: usize) -> LiftedState {
        let n = self.n;
        let mut r = LiftedState::zeros(n, grid.len());
        if f < n {
            r.x0[f] = 1.0;
        } else {
            let i = (f - n) / self.moments;
            let k = (f - n) % self.moments;
            for (j, v) in Self::profile(grid, k).into_iter().enumerate() {
                r.x1[j * n + i] = v;
            }
        }
        r
    }
}

/// Monomials of total degree `<= degree` in the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    pub dim_in: usize,
    pub degree: u32,
    pub exponents: Vec<Vec<u32>>,
}

impl Basis {
    pub fn new(dim_in: usize, degree: u32) -> Self {
        let mut exponents = Vec::new();
        for total in 0..=degree {
            let mut cur = vec![0u32; dim_in];
            Self::fill(&mut exponents, &mut cur, 0, total);
        }
        Self {
            dim_in,
            degree,
            exponents,
        }
    }

    fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e;
            Self::fill(out, cur, pos + 1, left - e);
        }
        cur[pos] = 0;
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.exponents
            .iter()
            .map(|e| e.iter().zip(z).map(|(k, v)| v.powi(*k as i32)).product())
            .collect()
    }

    /// `d/dz_f sum_b c_b phi_b(z)`.
    pub fn gradient(&self, z: &[f64], coef: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim_in];
        for (e, c) in self.exponents.iter().zip(coef) {
            for f in 0..self.dim_in {
                if e[f] == 0 {
                    continue;
                }
                let mut t = c * e[f] as f64;
                for (a, k) in e.iter().enumerate() {
                    let pw = if a == f { *k as i32 - 1 } else { *k as i32 };
                    t *= z[a].powi(pw);
                }
                g[f] += t;
            }
        }
        g
    }

    /// Second derivatives in the features.
    pub fn hessian(&self, z: &[f64], coef: &[f64]) -> DMatrix<f64> {
        let d = self.dim_in;
        let mut hm = DMatrix::zeros(d, d);
        for (e, c) in self.exponents.iter().zip(coef) {
            for f in 0..d {
                for g in 0..d {
                    let mut ex: Vec<i32> = e.iter().map(|k| *k as i32).collect();
                    let mut t = *c;
                    t *= ex[f] as f64;
                    ex[f] -= 1;
                    t *= ex[g] as f64;
                    ex[g] -= 1;
                    if t == 0.0 {
                        continue;
                    }
                    for (a, k) in ex.iter().enumerate() {
                        t *= z[a].powi(*k);
                    }
                    hm[(f, g)] += t;
                }
            }
        }
        hm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_counts() {
        assert_eq!(Basis::new(3, 2).len(), 10);
        assert_eq!(Basis::new(1, 3).len(), 4);
        assert_eq!(Basis::new(2, 0).len(), 1);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = Basis::new(3, 2);
        let coef: Vec<f64> = (0..b.len()).map(|i| 0.3 * i as f64 - 1.0).collect();
        let z = [0.4, -0.7, 1.1];
        let v = |z: &[f64]| -> f64 { b.eval(z).iter().zip(&coef).map(|(a, c)| a * c).sum() };
        let g = b.gradient(&z, &coef);
        let hm = b.hessian(&z, &coef);
        let eps = 1e-5;
        for f in 0..3 {
            let mut zp = z;
            zp[f] += eps;
            let mut zm = z;
            zm[f] -= eps;
            assert!(((v(&zp) - v(&zm)) / (2.0 * eps) - g[f]).abs() < 1e-8);
            let gp = b.gradient(&zp, &coef);
            let gm = b.gradient(&zm, &coef);
            for k in 0..3 {
                assert!(((gp[k] - gm[k]) / (2.0 * eps) - hm[(k, f)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn representer_reproduces_features() {
        let grid = SegmentGrid::new(2.0, 16).unwrap();
        let fm = FeatureMap::new(1, 3);
        let x = LiftedState {
            x0: vec![0.5],
            x1: grid.nodes().iter().map(|s| s.sin()).collect(),
        };
        let z = fm.eval(&grid, &x);
        for f in 0..fm.dim() {
            let r = fm.representer(&grid, f);
            assert!((x.inner(&r, &grid) - z[f]).abs() < 1e-14);
        }
    }

    #[test]
    fn legendre_values() {
        assert!((legendre(2, 0.5) - (-0.125)).abs() < 1e-15);
        assert!((legendre(3, 1.0) - 1.0).abs() < 1e-15);
    }
}
