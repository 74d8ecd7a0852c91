use serde::Serialize;

use super::control::ControlSet;
use super::grid::SegmentGrid;
use crate::error::{Error, Result};

/// Initial datum `(eta0, eta1, delta)`.
///
/// `eta1` holds `K + 1` node values on `[-d, 0]`; `delta` holds the `K` node
/// values on `[-d, 0)`. Both are node-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryPair {
    pub eta0: Vec<f64>,
    pub eta1: Vec<f64>,
    pub delta: Vec<f64>,
}

impl HistoryPair {
    pub fn constant(grid: &SegmentGrid, eta0: &[f64], eta1: &[f64], delta: &[f64]) -> Self {
        Self {
            eta0: eta0.to_vec(),
            eta1: eta1.repeat(grid.len()),
            delta: delta.repeat(grid.k()),
        }
    }

    pub fn from_fns(
        grid: &SegmentGrid,
        eta0: &[f64],
        eta1: impl Fn(f64) -> Vec<f64>,
        delta: impl Fn(f64) -> Vec<f64>,
    ) -> Self {
        let mut e1 = Vec::new();
        for j in 0..grid.len() {
            e1.extend(eta1(grid.node(j)));
        }
        let mut dl = Vec::new();
        for j in 0..grid.k() {
            dl.extend(delta(grid.node(j)));
        }
        Self {
            eta0: eta0.to_vec(),
            eta1: e1,
            delta: dl,
        }
    }

    pub fn check(&self, grid: &SegmentGrid, n: usize, controls: &ControlSet) -> Result<()> {
        let p = controls.dim();
        if self.eta0.len() != n {
            return Err(Error::DimensionMismatch {
                what: "eta0",
                expected: n,
                got: self.eta0.len(),
            });
        }
        if self.eta1.len() != grid.len() * n {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                got: self.eta1.len() / n.max(1),
            });
        }
        if self.delta.len() != grid.k() * p {
            return Err(Error::GridMismatch {
                expected: grid.k(),
                got: self.delta.len() / p.max(1),
            });
        }
        for (j, u) in self.delta.chunks(p).enumerate() {
            if !controls.contains(u) {
                return Err(Error::ControlOutOfSet { index: j });
            }
        }
        Ok(())
    }

    /// The state segment seen at time 0: `eta1` on `[-d, 0)` closed by `eta0` at 0.
    pub fn state_segment(&self, n: usize) -> Vec<f64> {
        let mut s = self.eta1.clone();
        let k = s.len() / n - 1;
        s[k * n..].copy_from_slice(&self.eta0);
        s
    }

    /// The control segment on the `K + 1` nodes, closed by the left limit `delta(-h)`.
    pub fn control_segment(&self, p: usize) -> Vec<f64> {
        let mut s = self.delta.clone();
        let k = s.len() / p;
        let last = self.delta[(k - 1) * p..].to_vec();
        s.extend(last);
        s
    }
}
