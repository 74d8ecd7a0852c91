//! Fitted value iteration with regression on state features.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{Basis, FeatureMap};
use super::{Discount, Noise, Route, Sim, Start};
use crate::error::{Error, Result};
use crate::lift::{lift_history, LiftedState};
use crate::model::{CostSpec, HistoryPair, SddeModel, SegmentGrid};
use crate::rng::derive_seed;
use crate::sim::SddeState;

/// Polynomial regression surrogate `V(x) = sum_b c_b phi_b(z(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    pub features: FeatureMap,
    pub basis: Basis,
    pub coef: Vec<f64>,
    /// Fitted `C` in `|V(x)| <= C (1 + |x|^m)` over the training states.
    pub c_hat: f64,
    pub m: f64,
    pub training_states: usize,
    pub decision_time: f64,
}

impl ValueModel {
    /// `V = 0` (the untrained starting point).
    pub fn zero(n: usize, moments: usize, degree: u32) -> Self {
        let features = FeatureMap::new(n, moments);
        let basis = Basis::new(features.dim(), degree);
        let coef = vec![0.0; basis.len()];
        Self {
            features,
            basis,
            coef,
            c_hat: 0.0,
            m: 1.0,
            training_states: 0,
            decision_time: 0.0,
        }
    }

    pub fn with_coefficients(&self, coef: Vec<f64>) -> Result<Self> {
        if coef.len() != self.basis.len() {
            return Err(Error::DimensionMismatch {
                what: "value model coefficients",
                expected: self.basis.len(),
                got: coef.len(),
            });
        }
        Ok(Self {
            coef,
            ..self.clone()
        })
    }

    pub fn predict_features(&self, z: &[f64]) -> f64 {
        self.basis
            .eval(z)
            .iter()
            .zip(&self.coef)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn predict(&self, grid: &SegmentGrid, x: &LiftedState) -> f64 {
        self.predict_features(&self.features.eval(grid, x))
    }

    /// `DV(x)` as an element of `X` and the block `D^2 V(x)_{00}`.
    pub fn derivatives(&self, grid: &SegmentGrid, x: &LiftedState) -> (LiftedState, DMatrix<f64>) {
        let z = self.features.eval(grid, x);
        let g = self.basis.gradient(&z, &self.coef);
        let n = self.features.n;
        let mut r = LiftedState::zeros(n, grid.len());
        for (f, gf) in g.iter().enumerate() {
            if *gf != 0.0 {
                r.axpy(*gf, &self.features.representer(grid, f));
            }
        }
        let hm = self.basis.hessian(&z, &self.coef);
        (r, hm.view((0, 0), (n, n)).into_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsmcMode {
    /// Exactly `horizon / decision time` backward steps from `V = 0`.
    Finite,
    /// Iterate until the change on the sample states drops below `tol`.
    Infinite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsmcOptions {
    /// Decision interval in grid steps.
    pub decision_steps: usize,
    /// Paths per (state, control) pair.
    pub paths: usize,
    pub mode: LsmcMode,
    /// Finite mode only.
    pub horizon: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub degree: u32,
    pub moments: usize,
    pub seed: u64,
    pub folds: usize,
    pub route: Route,
}

impl Default for LsmcOptions {
    fn default() -> Self {
        Self {
            decision_steps: 4,
            paths: 64,
            mode: LsmcMode::Infinite,
            horizon: 1.0,
            max_iter: 60,
            tol: 1e-4,
            degree: 2,
            moments: 2,
            seed: 0,
            folds: 5,
            route: Route::Lift,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LsmcResult {
    pub model: ValueModel,
    pub iterations: usize,
    /// Max change of the fitted values on the sample states per iteration.
    pub changes: Vec<f64>,
    pub converged: bool,
    /// Targets of the last iteration and their Monte Carlo standard errors.
    pub targets: Vec<f64>,
    pub target_se: Vec<f64>,
    pub fit_rmse: f64,
    pub cv_rmse: f64,
}

/// Least squares through SVD; rejects rank-deficient designs.
pub(crate) fn least_squares(phi: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    if phi.nrows() < phi.ncols() {
        return Err(Error::RegressionSingular);
    }
    // Column scaling keeps the rank test meaningful for mixed-degree monomials.
    let scale: Vec<f64> = (0..phi.ncols())
        .map(|c| phi.column(c).norm().max(1e-300))
        .collect();
    let scaled = DMatrix::from_fn(phi.nrows(), phi.ncols(), |r, c| phi[(r, c)] / scale[c]);
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < 1e-10 {
        return Err(Error::RegressionSingular);
    }
    let b = DVector::from_column_slice(y);
    let sol = svd.solve(&b, 0.0).map_err(|_| Error::RegressionSingular)?;
    Ok(sol.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

fn design(basis: &Basis, zs: &[Vec<f64>], rows: &[usize]) -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(rows.len(), basis.len());
    for (r, s) in rows.iter().enumerate() {
        for (c, v) in basis.eval(&zs[*s]).into_iter().enumerate() {
            phi[(r, c)] = v;
        }
    }
    phi
}

fn cross_validate(basis: &Basis, zs: &[Vec<f64>], y: &[f64], folds: usize) -> f64 {
    if folds < 2 || zs.len() < folds {
        return f64::NAN;
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for f in 0..folds {
        let train: Vec<usize> = (0..zs.len()).filter(|i| i % folds != f).collect();
        let test: Vec<usize> = (0..zs.len()).filter(|i| i % folds == f).collect();
        let yt: Vec<f64> = train.iter().map(|i| y[*i]).collect();
        let Ok(coef) = least_squares(&design(basis, zs, &train), &yt) else {
            return f64::NAN;
        };
        for i in test {
            let p: f64 = basis.eval(&zs[i]).iter().zip(&coef).map(|(a, b)| a * b).sum();
            sse += (p - y[i]) * (p - y[i]);
            count += 1;
        }
    }
    (sse / count as f64).sqrt()
}

/// One Monte Carlo estimate of `min_u E[C_Delta(x, u) + e^{-rho Delta} V(Y_Delta)]` per state.
///
/// All controls share the noise of a given `(state, path)` pair. Returns the
/// target, its standard error and the minimizing lattice index.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bellman_targets(
    model: &SddeModel,
    cost: &CostSpec,
    protos: &[Sim],
    vm: &ValueModel,
    decision_steps: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, usize)>> {
    let disc = Discount::new(cost.rho, model.grid.h());
    let tail = disc.decay.powi(decision_steps as i32);
    let nu = model.controls.len();
    let rows: Vec<Result<(f64, f64, usize)>> = protos
        .par_iter()
        .enumerate()
        .map(|(s, proto)| {
            let mut best = (f64::INFINITY, 0.0, 0usize);
            for ui in 0..nu {
                let u = model.controls.point(ui);
                let mut sum = 0.0;
                let mut sq = 0.0;
                for p in 0..paths {
                    let mut sim = proto.clone();
                    let mut noise = Noise::new(model, seed, (s * paths + p) as u64);
                    let mut acc = 0.0;
                    let mut f = 1.0;
                    for k in 0..decision_steps {
                        let l0 = cost.cost.eval(sim.y(), u);
                        sim.step(u, noise.at(k))?;
                        let l1 = cost.cost.eval(sim.y(), u);
                        acc += disc.step(f, l0, l1);
                        f *= disc.decay;
                    }
                    let v = acc + tail * vm.predict(&model.grid, &sim.lifted()?);
                    sum += v;
                    sq += v * v;
                }
                let np = paths as f64;
                let mean = sum / np;
                let se = if paths > 1 {
                    ((sq - np * mean * mean).max(0.0) / (np - 1.0) / np).sqrt()
                } else {
                    0.0
                };
                if mean < best.0 {
                    best = (mean, se, ui);
                }
            }
            Ok(best)
        })
        .collect();
    rows.into_iter().collect()
}

pub(crate) fn start_lifted(model: &SddeModel, s: &Start) -> Result<LiftedState> {
    match s {
        Start::History(h) => lift_history(model, h),
        Start::Lifted(x) => Ok(x.clone()),
    }
}

/// Regression Monte Carlo approximation of the value function on `states`.
///
/// Every iteration reuses the noise of `seed`, so the iteration map is a fixed
/// function of the coefficients and the infinite mode settles below `tol`.
pub fn lsmc_value(
    model: &SddeModel,
    cost: &CostSpec,
    states: &[Start],
    opts: &LsmcOptions,
) -> Result<LsmcResult> {
    cost.check_discount(model)?;
    if opts.decision_steps == 0 || opts.paths == 0 {
        return Err(Error::Config("decision steps and paths must be positive".into()));
    }
    let h = model.grid.h();
    let iterations = match opts.mode {
        LsmcMode::Finite => {
            let steps = super::estimate::horizon_steps(model, opts.horizon)?;
            if steps % opts.decision_steps != 0 {
                return Err(Error::HorizonNotAligned {
                    horizon: opts.horizon,
                    dt: h * opts.decision_steps as f64,
                });
            }
            steps / opts.decision_steps
        }
        LsmcMode::Infinite => opts.max_iter,
    };
    let protos: Vec<Sim> = states
        .iter()
        .map(|s| Sim::new(model, s, opts.route))
        .collect::<Result<_>>()?;
    let lifted: Vec<LiftedState> = states
        .iter()
        .map(|s| start_lifted(model, s))
        .collect::<Result<_>>()?;
    let mut vm = ValueModel::zero(model.n(), opts.moments, opts.degree);
    vm.m = cost.m;
    vm.training_states = states.len();
    vm.decision_time = h * opts.decision_steps as f64;
    let zs: Vec<Vec<f64>> = lifted
        .iter()
        .map(|x| vm.features.eval(&model.grid, x))
        .collect();
    let all: Vec<usize> = (0..states.len()).collect();
    let phi = design(&vm.basis, &zs, &all);

    let mut prev: Vec<f64> = vec![0.0; states.len()];
    let mut changes = Vec::new();
    let mut converged = false;
    let mut targets = Vec::new();
    let mut ses = Vec::new();
    let mut done = 0;
    for it in 0..iterations {
        let rows = bellman_targets(
            model,
            cost,
            &protos,
            &vm,
            opts.decision_steps,
            opts.paths,
            derive_seed(opts.seed, 0),
        )?;
        targets = rows.iter().map(|r| r.0).collect();
        ses = rows.iter().map(|r| r.1).collect();
        let coef = least_squares(&phi, &targets)?;
        vm.coef = coef;
        let fitted: Vec<f64> = zs.iter().map(|z| vm.predict_features(z)).collect();
        let change = fitted
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        changes.push(change);
        prev = fitted;
        done = it + 1;
        if opts.mode == LsmcMode::Infinite && change < opts.tol {
            converged = true;
            break;
        }
    }
    if opts.mode == LsmcMode::Finite {
        converged = true;
    }
    let fit_rmse = (prev
        .iter()
        .zip(&targets)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / states.len() as f64)
        .sqrt();
    let cv_rmse = cross_validate(&vm.basis, &zs, &targets, opts.folds);
    vm.c_hat = lifted
        .iter()
        .zip(&prev)
        .map(|(x, v)| v.abs() / (1.0 + x.norm(&model.grid).powf(cost.m)))
        .fold(0.0, f64::max);
    Ok(LsmcResult {
        model: vm,
        iterations: done,
        changes,
        converged,
        targets,
        target_se: ses,
        fit_rmse,
        cv_rmse,
    })
}

/// States reached from `start` under random lattice controls: path `i` runs
/// `(i % blocks + 1) * every` steps.
pub fn explore_states(
    model: &SddeModel,
    start: &Start,
    route: Route,
    count: usize,
    every: usize,
    blocks: usize,
    seed: u64,
) -> Result<Vec<Start>> {
    if every == 0 || blocks == 0 {
        return Err(Error::Config("exploration needs positive block length".into()));
    }
    let proto = Sim::new(model, start, route)?;
    let nu = model.controls.len() as u64;
    let out: Vec<Result<Start>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut sim = proto.clone();
            let mut noise = Noise::new(model, derive_seed(seed, 1), i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
            rng.set_stream(i as u64);
            let steps = (i % blocks + 1) * every;
            let mut ui = 0;
            for k in 0..steps {
                if k % every == 0 {
                    ui = (rng.next_u64() % nu) as usize;
                }
                sim.step(model.controls.point(ui), noise.at(k))?;
            }
            Ok(match sim {
                Sim::Sdde(st) => Start::History(history_of(&st)),
                Sim::Lift(st) => Start::Lifted(st.state),
            })
        })
        .collect();
    out.into_iter().collect()
}

/// Current segment pair of a running delay equation as a new initial datum.
pub(crate) fn history_of(st: &SddeState) -> HistoryPair {
    HistoryPair {
        eta0: st.current().to_vec(),
        eta1: st.y_segment().to_vec(),
        delta: st.u_past().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_polynomial() {
        let basis = Basis::new(2, 2);
        let zs: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()])
            .collect();
        let truth: Vec<f64> = (0..basis.len()).map(|i| i as f64 - 2.0).collect();
        let y: Vec<f64> = zs
            .iter()
            .map(|z| basis.eval(z).iter().zip(&truth).map(|(a, b)| a * b).sum())
            .collect();
        let all: Vec<usize> = (0..30).collect();
        let c = least_squares(&design(&basis, &zs, &all), &y).unwrap();
        for (a, b) in c.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(cross_validate(&basis, &zs, &y, 5) < 1e-9);
    }

    #[test]
    fn collinear_design_is_singular() {
        let basis = Basis::new(2, 1);
        let zs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let all: Vec<usize> = (0..10).collect();
        let y = vec![0.0; 10];
        assert!(matches!(
            least_squares(&design(&basis, &zs, &all), &y),
            Err(Error::RegressionSingular)
        ));
    }
}
