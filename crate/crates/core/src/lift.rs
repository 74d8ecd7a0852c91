//! Hilbert-space lift `X = R^n x L^2([-d,0]; R^n)`: structural state, delay
//! semigroup, Markov integrator in `X`, and the pathwise equivalence study.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{HistoryPair, SddeModel, SegmentGrid};
use crate::rng::{sample_brownian, BrownianPath};
use crate::sim::{simulate_sdde, ControlPath};

/// Element `(x0, x1)` of `X`, with `x1` sampled on the `K + 1` grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftedState {
    pub x0: Vec<f64>,
    /// Node-major, `(K + 1) * n` values.
    pub x1: Vec<f64>,
}

impl LiftedState {
    pub fn zeros(n: usize, nodes: usize) -> Self {
        Self {
            x0: vec![0.0; n],
            x1: vec![0.0; nodes * n],
        }
    }

    pub fn n(&self) -> usize {
        self.x0.len()
    }

    pub fn nodes(&self) -> usize {
        self.x1.len() / self.x0.len().max(1)
    }

    /// `|x|_X^2 = |x0|^2 + int |x1|^2` (trapezoid).
    pub fn norm_sq(&self, grid: &SegmentGrid) -> f64 {
        self.x0.iter().map(|v| v * v).sum::<f64>() + grid.norm_sq(&self.x1, self.n())
    }

    pub fn norm(&self, grid: &SegmentGrid) -> f64 {
        self.norm_sq(grid).sqrt()
    }

    pub fn inner(&self, other: &Self, grid: &SegmentGrid) -> f64 {
        self.x0.iter().zip(&other.x0).map(|(a, b)| a * b).sum::<f64>()
            + grid.inner(&self.x1, &other.x1, self.n())
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (s, o) in self.x0.iter_mut().zip(&other.x0) {
            *s += a * o;
        }
        for (s, o) in self.x1.iter_mut().zip(&other.x1) {
            *s += a * o;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            x0: self.x0.iter().map(|v| a * v).collect(),
            x1: self.x1.iter().map(|v| a * v).collect(),
        }
    }

    /// Value of `x1` at the left end `-d`.
    pub fn left_value(&self) -> &[f64] {
        &self.x1[..self.n()]
    }

    /// Value of `x1` at `0`.
    pub fn right_value(&self) -> &[f64] {
        &self.x1[self.x1.len() - self.n()..]
    }
}

/// `m(alpha1, beta)` at every node, by trapezoid quadrature on `[-d, xi_j]`.
///
/// The shifted arguments `zeta - xi` land on grid nodes, so no interpolation
/// is involved. Both segments carry `K + 1` nodes.
pub fn structural_second(model: &SddeModel, alpha1: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let g = &model.grid;
    let n = model.n();
    let p = model.p();
    let kk = g.k();
    if alpha1.len() != g.len() * n {
        return Err(Error::GridMismatch {
            expected: g.len(),
            got: alpha1.len() / n,
        });
    }
    if beta.len() != g.len() * p {
        return Err(Error::GridMismatch {
            expected: g.len(),
            got: beta.len() / p,
        });
    }
    let h = g.h();
    let mut out = vec![0.0; g.len() * n];
    for j in 1..=kk {
        let o = &mut out[j * n..(j + 1) * n];
        for l in 0..=j {
            let w = if l == 0 || l == j { 0.5 * h } else { h };
            let s = l + kk - j;
            if !model.a1.is_zero() {
                model.a1.apply_add(l, &alpha1[s * n..(s + 1) * n], w, o);
            }
            if !model.p1.is_zero() {
                model.p1.apply_add(l, &beta[s * p..(s + 1) * p], w, o);
            }
        }
    }
    Ok(out)
}

/// `M((alpha0, alpha1), beta) = (alpha0, m(alpha1, beta))`.
pub fn structural_state(
    model: &SddeModel,
    alpha0: &[f64],
    alpha1: &[f64],
    beta: &[f64],
) -> Result<LiftedState> {
    if alpha0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            what: "alpha0",
            expected: model.n(),
            got: alpha0.len(),
        });
    }
    Ok(LiftedState {
        x0: alpha0.to_vec(),
        x1: structural_second(model, alpha1, beta)?,
    })
}

/// `M(eta, delta)` for an initial datum.
pub fn lift_history(model: &SddeModel, history: &HistoryPair) -> Result<LiftedState> {
    history.check(&model.grid, model.n(), &model.controls)?;
    structural_state(
        model,
        &history.eta0,
        &history.state_segment(model.n()),
        &history.control_segment(model.p()),
    )
}

/// `e^{tA} x`: first component `x0 + int_{max(-t,-d)}^0 x1`, second the
/// truncated right shift by `t`, realized as an index shift.
pub fn semigroup_apply(grid: &SegmentGrid, t: f64, x: &LiftedState) -> Result<LiftedState> {
    let s = grid
        .steps_of(t)
        .ok_or(Error::TimeNotAligned { t, h: grid.h() })?;
    let n = x.n();
    let kk = grid.k();
    let lo = kk.saturating_sub(s);
    let mut x0 = x.x0.clone();
    for i in 0..n {
        let comp: Vec<f64> = (0..grid.len()).map(|j| x.x1[j * n + i]).collect();
        x0[i] += grid.integrate_range(&comp, lo, kk);
    }
    let mut x1 = vec![0.0; x.x1.len()];
    for j in s..grid.len() {
        x1[j * n..(j + 1) * n].copy_from_slice(&x.x1[(j - s) * n..(j - s + 1) * n]);
    }
    Ok(LiftedState { x0, x1 })
}

/// Markov integrator for the lifted equation.
///
/// `Y0` follows the first-component identity with Euler drift
/// `b0(Y0, u) + Y1(0)`; `Y1` is transported by one node per step and receives
/// the source `h (a1(xi - h) Y0 + p1(xi - h) u)`, keeping `Y1(-d) = 0`.
#[derive(Debug, Clone)]
pub struct LiftStepper<'m> {
    model: &'m SddeModel,
    pub state: LiftedState,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    steps: usize,
}

impl<'m> LiftStepper<'m> {
    pub fn new(model: &'m SddeModel, x: LiftedState) -> Result<Self> {
        if x.x0.len() != model.n() || x.x1.len() != model.grid.len() * model.n() {
            return Err(Error::GridMismatch {
                expected: model.grid.len(),
                got: x.x1.len() / model.n(),
            });
        }
        Ok(Self {
            model,
            state: x,
            drift: vec![0.0; model.n()],
            sigma: vec![0.0; model.n() * model.q()],
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, u: &[f64], dw: &[f64]) -> Result<()> {
        let m = self.model;
        let n = m.n();
        let q = m.q();
        let h = m.grid.h();
        let kk = m.grid.k();
        let st = &mut self.state;
        m.drift.eval(&st.x0, u, &mut self.drift);
        m.diffusion.eval(&st.x0, u, &mut self.sigma);
        for i in 0..n {
            self.drift[i] += st.x1[kk * n + i];
        }
        for j in (1..=kk).rev() {
            let (lo, hi) = st.x1.split_at_mut(j * n);
            let dst = &mut hi[..n];
            dst.copy_from_slice(&lo[(j - 1) * n..j * n]);
            if !m.a1.is_zero() {
                m.a1.apply_add(j - 1, &st.x0, h, dst);
            }
            if !m.p1.is_zero() {
                m.p1.apply_add(j - 1, u, h, dst);
            }
        }
        st.x1[..n].iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let mut v = st.x0[i] + self.drift[i] * h;
            for j in 0..q {
                v += self.sigma[i * q + j] * dw[j];
            }
            if !v.is_finite() || v.abs() > crate::sim::BLOWUP {
                return Err(Error::NonFinite { step: self.steps });
            }
            st.x0[i] = v;
        }
        self.steps += 1;
        Ok(())
    }
}

/// Second component after a run of `K` or more steps, computed from the
/// realized `(Y0, u)` values only: `Y1(t)(xi_j) = sum_{i=1..j} h (a1(xi_{j-i}) Y0(t - i h) + p1(xi_{j-i}) u(t - i h))`.
///
/// `y0_past[i-1]` and `u_past[i-1]` hold `Y0(t - i h)` and `u(t - i h)`.
pub fn flushed_second(model: &SddeModel, y0_past: &[Vec<f64>], u_past: &[Vec<f64>]) -> Vec<f64> {
    let n = model.n();
    let kk = model.grid.k();
    let h = model.grid.h();
    let mut out = vec![0.0; model.grid.len() * n];
    for j in 1..=kk {
        let o = &mut out[j * n..(j + 1) * n];
        for i in 1..=j {
            model.a1.apply_add(j - i, &y0_past[i - 1], h, o);
            model.p1.apply_add(j - i, &u_past[i - 1], h, o);
        }
    }
    out
}

/// Sampled lifted path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstractTrajectory {
    pub n: usize,
    pub nodes: usize,
    pub h: f64,
    pub seed: u64,
    pub path_index: u64,
    /// `Y0(t_k)`, `(steps + 1) * n`.
    pub y0: Vec<f64>,
    /// `Y1(t_k)`, `(steps + 1) * nodes * n`.
    pub y1: Vec<f64>,
}

impl AbstractTrajectory {
    pub fn steps(&self) -> usize {
        self.y0.len() / self.n - 1
    }

    pub fn state(&self, k: usize) -> LiftedState {
        let w = self.nodes * self.n;
        LiftedState {
            x0: self.y0[k * self.n..(k + 1) * self.n].to_vec(),
            x1: self.y1[k * w..(k + 1) * w].to_vec(),
        }
    }

    /// `Y0` extended to `[-d, 0)` by `eta1`.
    pub fn extended_y0(&self, history: &HistoryPair) -> Vec<f64> {
        let mut v = history.eta1[..(self.nodes - 1) * self.n].to_vec();
        v.extend_from_slice(&self.y0);
        v
    }
}

/// Mild solution in `X` under an open-loop control.
pub fn integrate_mild(
    model: &SddeModel,
    x: &LiftedState,
    control: &ControlPath,
    noise: &BrownianPath,
    horizon: f64,
) -> Result<AbstractTrajectory> {
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
    if control.steps() < steps {
        return Err(Error::DimensionMismatch {
            what: "control path steps",
            expected: steps,
            got: control.steps(),
        });
    }
    let mut st = LiftStepper::new(model, x.clone())?;
    let mut y0 = Vec::with_capacity((steps + 1) * model.n());
    let mut y1 = Vec::with_capacity((steps + 1) * x.x1.len());
    y0.extend_from_slice(&x.x0);
    y1.extend_from_slice(&x.x1);
    for k in 0..steps {
        st.step(control.at(k), noise.increment(k))?;
        y0.extend_from_slice(&st.state.x0);
        y1.extend_from_slice(&st.state.x1);
    }
    Ok(AbstractTrajectory {
        n: model.n(),
        nodes: model.grid.len(),
        h,
        seed: noise.seed,
        path_index: noise.path_index,
        y0,
        y1,
    })
}

/// One refinement level of the equivalence study.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceLevel {
    pub k: usize,
    pub dt: f64,
    /// Path mean of `sup_t |y(t) - Y0(t)|`.
    pub sup_error_y: f64,
    /// Path mean of `sup_{t >= d} |Y1(t) - m(y(t+.), u(t+.))|_{L2}` over checkpoints.
    pub sup_error_segment: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub paths: usize,
    pub levels: Vec<EquivalenceLevel>,
    /// Least-squares slope of `log sup_error_y` against `log dt`.
    pub fitted_order: f64,
    pub fitted_order_segment: f64,
    pub monotone: bool,
}

/// Least-squares slope of `log e` against `log x`.
pub fn fitted_order(x: &[f64], e: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(e)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Pathwise comparison of the SDDE scheme and the lifted integrator.
///
/// `build(K)` returns the model and initial datum on a grid with `K`
/// subintervals; `ks` must be increasing multiples of `ks[0]`. `control` lives
/// on the coarsest grid and is refined by repetition. Every level reuses the
/// Brownian path generated on the finest grid.
pub fn verify_equivalence<F>(
    build: F,
    ks: &[usize],
    control: &ControlPath,
    seed: u64,
    horizon: f64,
    paths: usize,
) -> Result<EquivalenceReport>
where
    F: Fn(usize) -> Result<(SddeModel, HistoryPair)> + Sync,
{
    let kmax = *ks.iter().max().ok_or(Error::Config("empty K list".into()))?;
    let k0 = ks[0];
    if ks.iter().any(|k| k % k0 != 0 || kmax % k != 0) {
        return Err(Error::Config("grid sizes must be nested multiples".into()));
    }
    let levels: Vec<(SddeModel, HistoryPair, LiftedState, ControlPath)> = ks
        .iter()
        .map(|k| {
            let (m, hst) = build(*k)?;
            let x = lift_history(&m, &hst)?;
            let c = control.refine(k / k0);
            Ok((m, hst, x, c))
        })
        .collect::<Result<_>>()?;
    let fine = &levels[ks.iter().position(|k| *k == kmax).unwrap()].0;
    let q = fine.q();
    let deterministic = levels.iter().all(|l| l.0.is_deterministic());
    let per_path: Vec<Result<Vec<(f64, f64)>>> = (0..paths)
        .into_par_iter()
        .map(|pi| {
            let noise_f = if deterministic {
                BrownianPath::zero(fine.grid.h(), fine.grid.steps_of(horizon).unwrap_or(0), q)
            } else {
                sample_brownian(seed, pi as u64, fine.grid.h(), horizon, q)?
            };
            levels
                .iter()
                .map(|(m, hst, x, c)| {
                    let noise = noise_f.coarsen(kmax / m.grid.k())?;
                    path_errors(m, hst, x, c, &noise, horizon)
                })
                .collect()
        })
        .collect();
    let mut sums = vec![(0.0, 0.0); ks.len()];
    for r in per_path {
        for (s, e) in sums.iter_mut().zip(r?) {
            s.0 += e.0;
            s.1 += e.1;
        }
    }
    let levels_out: Vec<EquivalenceLevel> = ks
        .iter()
        .zip(&levels)
        .zip(&sums)
        .map(|((k, l), s)| EquivalenceLevel {
            k: *k,
            dt: l.0.grid.h(),
            sup_error_y: s.0 / paths as f64,
            sup_error_segment: s.1 / paths as f64,
        })
        .collect();
    let dts: Vec<f64> = levels_out.iter().map(|l| l.dt).collect();
    let ey: Vec<f64> = levels_out.iter().map(|l| l.sup_error_y).collect();
    let es: Vec<f64> = levels_out.iter().map(|l| l.sup_error_segment).collect();
    let monotone = ey.windows(2).all(|w| w[1] < w[0]);
    Ok(EquivalenceReport {
        paths,
        fitted_order: fitted_order(&dts, &ey),
        fitted_order_segment: fitted_order(&dts, &es),
        levels: levels_out,
        monotone,
    })
}

fn path_errors(
    model: &SddeModel,
    history: &HistoryPair,
    x: &LiftedState,
    control: &ControlPath,
    noise: &BrownianPath,
    horizon: f64,
) -> Result<(f64, f64)> {
    let traj = simulate_sdde(model, history, control, noise, horizon)?;
    let lift = integrate_mild(model, x, control, noise, horizon)?;
    let n = model.n();
    let mut sup_y: f64 = 0.0;
    for k in 0..=traj.steps() {
        let d: f64 = traj
            .y(k)
            .iter()
            .zip(&lift.y0[k * n..(k + 1) * n])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        sup_y = sup_y.max(d);
    }
    let kk = model.grid.k();
    let steps = traj.steps();
    let mut sup_s: f64 = 0.0;
    if steps > kk {
        let stride = (kk / 4).max(1);
        let mut k = kk;
        while k < steps {
            let m = structural_second(model, traj.y_segment(k), traj.u_segment(k))?;
            let y1 = lift.state(k).x1;
            let diff: Vec<f64> = m.iter().zip(&y1).map(|(a, b)| a - b).collect();
            sup_s = sup_s.max(model.grid.norm_sq(&diff, n).sqrt());
            k += stride;
        }
    }
    Ok((sup_y, sup_s))
}
