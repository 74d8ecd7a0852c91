//! Euler–Maruyama for the controlled SDDE with distributed delays.
//!
//! The time step equals the grid spacing `h`, so every lag node of the
//! segment `y(t + xi_j)` is a past grid value and no interpolation is needed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{HistoryPair, SddeModel};
use crate::rng::BrownianPath;

/// Coordinates beyond this magnitude abort the run.
pub const BLOWUP: f64 = 1e12;

/// Piecewise-constant control on the time grid, `steps * p` values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPath {
    pub p: usize,
    pub values: Vec<f64>,
}

impl ControlPath {
    pub fn constant(u: &[f64], steps: usize) -> Self {
        Self {
            p: u.len(),
            values: u.repeat(steps),
        }
    }

    /// Sequence held for `every` steps each.
    pub fn from_blocks(blocks: &[Vec<f64>], every: usize) -> Self {
        let p = blocks.first().map(|b| b.len()).unwrap_or(0);
        let mut values = Vec::with_capacity(blocks.len() * every * p);
        for b in blocks {
            for _ in 0..every {
                values.extend_from_slice(b);
            }
        }
        Self { p, values }
    }

    pub fn steps(&self) -> usize {
        self.values.len().checked_div(self.p).unwrap_or(0)
    }

    #[inline]
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.p..(k + 1) * self.p]
    }

    /// Each value repeated `factor` times (same path on a finer grid).
    pub fn refine(&self, factor: usize) -> Self {
        let mut values = Vec::with_capacity(self.values.len() * factor);
        for k in 0..self.steps() {
            for _ in 0..factor {
                values.extend_from_slice(self.at(k));
            }
        }
        Self { p: self.p, values }
    }
}

/// Trapezoid delay integral `sum_j w_j K(xi_j) s_j` added into `out`.
///
/// `segment` holds `K + 1` node values of width `kernel.cols()`.
pub fn delay_integral_into(
    model_grid: &crate::model::SegmentGrid,
    kernel: &crate::model::DelayKernelGrid,
    segment: &[f64],
    out: &mut [f64],
) {
    if kernel.is_zero() {
        return;
    }
    let c = kernel.cols();
    for (j, w) in model_grid.weights().iter().enumerate() {
        kernel.apply_add(j, &segment[j * c..(j + 1) * c], *w, out);
    }
}

/// `int_{-d}^0 kernel(xi) segment(xi) dxi` by trapezoid quadrature.
pub fn delay_integral(
    grid: &crate::model::SegmentGrid,
    kernel: &crate::model::DelayKernelGrid,
    segment: &[f64],
) -> Result<Vec<f64>> {
    if kernel.nodes() != grid.len() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            got: kernel.nodes(),
        });
    }
    if segment.len() != grid.len() * kernel.cols() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            got: segment.len() / kernel.cols().max(1),
        });
    }
    let mut out = vec![0.0; kernel.rows()];
    delay_integral_into(grid, kernel, segment, &mut out);
    Ok(out)
}

/// Running SDDE state with append-only extended histories.
///
/// `ys` holds `y(t_k)` for `k = -K ..= current`, `us` holds `u(t_k)` for
/// `k = -K .. current`; the segment at time `t_k` is a contiguous slice.
#[derive(Clone)]
pub struct SddeState<'m> {
    model: &'m SddeModel,
    ys: Vec<f64>,
    us: Vec<f64>,
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

impl<'m> SddeState<'m> {
    pub fn new(model: &'m SddeModel, history: &HistoryPair) -> Result<Self> {
        history.check(&model.grid, model.n(), &model.controls)?;
        let n = model.n();
        let mut ys = history.state_segment(n);
        ys.reserve(64 * n);
        let mut us = history.delta.clone();
        us.reserve(64 * model.p());
        Ok(Self {
            model,
            ys,
            us,
            drift: vec![0.0; n],
            sigma: vec![0.0; n * model.q()],
        })
    }

    pub fn model(&self) -> &'m SddeModel {
        self.model
    }

    /// Number of steps taken.
    pub fn steps(&self) -> usize {
        self.ys.len() / self.model.n() - self.model.grid.len()
    }

    pub fn time(&self) -> f64 {
        self.steps() as f64 * self.model.grid.h()
    }

    pub fn current(&self) -> &[f64] {
        let n = self.model.n();
        &self.ys[self.ys.len() - n..]
    }

    /// `y(t + xi_j)`, `j = 0..=K`.
    pub fn y_segment(&self) -> &[f64] {
        let n = self.model.n();
        &self.ys[self.ys.len() - self.model.grid.len() * n..]
    }

    /// `u(t + xi_j)` for `j = 0..K` (the past, excluding the current control).
    pub fn u_past(&self) -> &[f64] {
        let p = self.model.p();
        &self.us[self.us.len() - self.model.grid.k() * p..]
    }

    /// Most recent control (left limit at the current time).
    pub fn last_control(&self) -> &[f64] {
        let p = self.model.p();
        &self.us[self.us.len() - p..]
    }

    /// Control segment closed by `u_now` at node `K`.
    pub fn u_segment_with(&self, u_now: &[f64]) -> Vec<f64> {
        let mut s = self.u_past().to_vec();
        s.extend_from_slice(u_now);
        s
    }

    pub fn extended_y(&self) -> &[f64] {
        &self.ys
    }

    pub fn extended_u(&self) -> &[f64] {
        &self.us
    }

    /// One Euler–Maruyama step with control `u` on `[t_k, t_{k+1})`.
    pub fn step(&mut self, u: &[f64], dw: &[f64]) -> Result<()> {
        let m = self.model;
        let n = m.n();
        let q = m.q();
        let h = m.grid.h();
        let k = self.steps();
        self.us.extend_from_slice(u);
        let y_start = self.ys.len() - m.grid.len() * n;
        let u_start = self.us.len() - m.grid.len() * m.p();
        let y = &self.ys[self.ys.len() - n..];
        m.drift.eval(y, u, &mut self.drift);
        delay_integral_into(&m.grid, &m.a1, &self.ys[y_start..], &mut self.drift);
        delay_integral_into(&m.grid, &m.p1, &self.us[u_start..], &mut self.drift);
        m.diffusion.eval(y, u, &mut self.sigma);
        let mut next = [0.0f64; 8];
        let mut heap;
        let next: &mut [f64] = if n <= 8 {
            &mut next[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for i in 0..n {
            let mut v = y[i] + self.drift[i] * h;
            for j in 0..q {
                v += self.sigma[i * q + j] * dw[j];
            }
            if !v.is_finite() || v.abs() > BLOWUP {
                self.us.truncate(self.us.len() - u.len());
                return Err(Error::NonFinite { step: k });
            }
            next[i] = v;
        }
        self.ys.extend_from_slice(next);
        Ok(())
    }

    /// Rewind to `steps` steps (used for depth-first enumeration).
    pub fn truncate(&mut self, steps: usize) {
        let n = self.model.n();
        let p = self.model.p();
        self.ys.truncate((self.model.grid.len() + steps) * n);
        self.us.truncate((self.model.grid.k() + steps) * p);
    }
}

/// Sampled SDDE path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub h: f64,
    /// `y(t_k)` for `k = -K ..= steps`, node-major.
    pub ys: Vec<f64>,
    /// `u(t_k)` for `k = -K .. steps`.
    pub us: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.ys.len() / self.n - self.k - 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|k| k as f64 * self.h).collect()
    }

    /// `y(t_k)` for `k >= 0`.
    pub fn y(&self, k: usize) -> &[f64] {
        let i = (self.k + k) * self.n;
        &self.ys[i..i + self.n]
    }

    /// `u(t_k)` for `k >= 0`.
    pub fn u(&self, k: usize) -> &[f64] {
        let i = (self.k + k) * self.p;
        &self.us[i..i + self.p]
    }

    /// `y(t_k + xi_j)`, `j = 0..=K`.
    pub fn y_segment(&self, k: usize) -> &[f64] {
        &self.ys[k * self.n..(k + self.k + 1) * self.n]
    }

    /// `u(t_k + xi_j)`, `j = 0..=K`, node `K` being the control applied at `t_k`.
    pub fn u_segment(&self, k: usize) -> &[f64] {
        &self.us[k * self.p..(k + self.k + 1) * self.p]
    }
}

/// Euler–Maruyama path of the SDDE under an open-loop control.
pub fn simulate_sdde(
    model: &SddeModel,
    history: &HistoryPair,
    control: &ControlPath,
    noise: &BrownianPath,
    horizon: f64,
) -> Result<Trajectory> {
    let h = model.grid.h();
    let steps = model
        .grid
        .steps_of(horizon)
        .filter(|s| *s > 0)
        .ok_or(Error::HorizonNotAligned { horizon, dt: h })?;
    if (noise.dt - h).abs() > 1e-12 * h || noise.steps < steps || noise.q != model.q() {
        return Err(Error::HorizonNotAligned {
            horizon,
            dt: noise.dt,
        });
    }
    if control.steps() < steps || control.p != model.p() {
        return Err(Error::DimensionMismatch {
            what: "control path steps",
            expected: steps,
            got: control.steps(),
        });
    }
    let mut st = SddeState::new(model, history)?;
    for k in 0..steps {
        let u = control.at(k);
        if !model.controls.contains(u) {
            return Err(Error::ControlOutOfSet { index: k });
        }
        st.step(u, noise.increment(k))?;
    }
    Ok(Trajectory {
        n: model.n(),
        p: model.p(),
        k: model.grid.k(),
        h,
        ys: st.ys,
        us: st.us,
    })
}
