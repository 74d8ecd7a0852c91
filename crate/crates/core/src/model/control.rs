use serde::Serialize;

use crate::error::{Error, Result};

/// Finite lattice of admissible controls inside a bounded box of `R^p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSet {
    p: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<f64>,
}

impl ControlSet {
    /// Tensor lattice with `counts[i]` equispaced points on `[lower[i], upper[i]]`.
    pub fn tensor(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        let p = lower.len();
        if p == 0 || upper.len() != p || counts.len() != p || counts.contains(&0) {
            return Err(Error::EmptyControlLattice);
        }
        for i in 0..p {
            if !(upper[i] >= lower[i]) {
                return Err(Error::Config(format!(
                    "control bound {i}: upper {} below lower {}",
                    upper[i], lower[i]
                )));
            }
        }
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total * p);
        let mut idx = vec![0usize; p];
        for _ in 0..total {
            for i in 0..p {
                let v = if counts[i] == 1 {
                    lower[i]
                } else {
                    lower[i] + (upper[i] - lower[i]) * idx[i] as f64 / (counts[i] - 1) as f64
                };
                points.push(v);
            }
            for i in (0..p).rev() {
                idx[i] += 1;
                if idx[i] < counts[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        Ok(Self {
            p,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            points,
        })
    }

    /// Explicit list of points; the bounding box is taken from `lower`/`upper`.
    pub fn from_points(lower: &[f64], upper: &[f64], points: Vec<Vec<f64>>) -> Result<Self> {
        let p = lower.len();
        if points.is_empty() || p == 0 || upper.len() != p {
            return Err(Error::EmptyControlLattice);
        }
        let mut flat = Vec::with_capacity(points.len() * p);
        for pt in &points {
            if pt.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "control point",
                    expected: p,
                    got: pt.len(),
                });
            }
            for i in 0..p {
                if pt[i] < lower[i] - 1e-12 || pt[i] > upper[i] + 1e-12 {
                    return Err(Error::Config(format!(
                        "control point {pt:?} outside the declared bounds"
                    )));
                }
            }
            flat.extend_from_slice(pt);
        }
        Ok(Self {
            p,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            points: flat,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.p
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.p..(i + 1) * self.p]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `sup_{u in box} |u|`.
    pub fn bound(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.p
            && u.iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lower[i] - 1e-12 && *v <= self.upper[i] + 1e-12)
    }

    /// Index of the lattice point nearest to `u` (lowest index on ties).
    pub fn nearest(&self, u: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.len() {
            let d: f64 = self
                .point(i)
                .iter()
                .zip(u)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Same box, a subset of the points.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let pts = indices.iter().map(|i| self.point(*i).to_vec()).collect();
        Self::from_points(&self.lower, &self.upper, pts)
    }
}
