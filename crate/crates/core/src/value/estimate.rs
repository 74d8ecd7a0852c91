use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::FeedbackPolicy;
use super::{Discount, Noise, Route, Sim, Start};
use crate::error::{Error, Result};
use crate::lift::lift_history;
use crate::model::{CostSpec, SddeModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub route: Route,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            horizon: 2.0,
            paths: 1000,
            seed: 0,
            route: Route::Sdde,
        }
    }
}

/// Truncated Monte Carlo estimate of `J` with a bound on the neglected tail.
#[derive(Debug, Clone, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub horizon: f64,
    /// Bound on `|int_T^inf e^{-rho t} E L dt|`.
    pub tail_bound: f64,
    /// Fitted `C` in `E|Y(t)|^m <= C (1 + |x|^m) e^{lambda t}` over `[0, T]`.
    pub c_hat: f64,
    pub lambda: f64,
}

pub(crate) fn horizon_steps(model: &SddeModel, horizon: f64) -> Result<usize> {
    model
        .grid
        .steps_of(horizon)
        .filter(|s| *s > 0)
        .ok_or(Error::HorizonNotAligned {
            horizon,
            dt: model.grid.h(),
        })
}

pub(crate) fn start_norm(model: &SddeModel, start: &Start) -> Result<f64> {
    Ok(match start {
        Start::History(h) => lift_history(model, h)?.norm(&model.grid),
        Start::Lifted(x) => x.norm(&model.grid),
    })
}

/// Monte Carlo of `int_0^T e^{-rho t} l(y(t), u(t)) dt` under a feedback policy.
///
/// Path `i` draws its increments from `(seed, i)`, so both routes see the same
/// Brownian path for the same index.
pub fn evaluate_policy(
    model: &SddeModel,
    cost: &CostSpec,
    start: &Start,
    policy: &FeedbackPolicy,
    opts: &EvalOptions,
) -> Result<ValueEstimate> {
    cost.check_discount(model)?;
    policy.validate(model)?;
    let steps = horizon_steps(model, opts.horizon)?;
    if opts.paths == 0 {
        return Err(Error::Config("paths must be positive".into()));
    }
    let h = model.grid.h();
    let disc = Discount::new(cost.rho, h);
    let m = cost.m;
    let proto = Sim::new(model, start, opts.route)?;

    let runs: Vec<Result<(f64, Vec<f64>)>> = (0..opts.paths)
        .into_par_iter()
        .map(|path| {
            let mut sim = proto.clone();
            let mut noise = Noise::new(model, opts.seed, path as u64);
            let mut moments = Vec::with_capacity(steps + 1);
            moments.push(norm(sim.y()).powf(m));
            let mut total = 0.0;
            let mut factor = 1.0;
            for k in 0..steps {
                let ui = policy.decide(model, k, &sim)?;
                let u = model.controls.point(ui);
                let l0 = cost.cost.eval(sim.y(), u);
                sim.step(u, noise.at(k))?;
                let l1 = cost.cost.eval(sim.y(), u);
                total += disc.step(factor, l0, l1);
                factor *= disc.decay;
                moments.push(norm(sim.y()).powf(m));
            }
            Ok((total, moments))
        })
        .collect();

    let mut values = Vec::with_capacity(opts.paths);
    let mut msum = vec![0.0; steps + 1];
    for r in runs {
        let (v, mo) = r?;
        values.push(v);
        for (s, x) in msum.iter_mut().zip(mo) {
            *s += x;
        }
    }
    let np = opts.paths as f64;
    let mean = values.iter().sum::<f64>() / np;
    let std_error = if opts.paths > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (np - 1.0);
        (var / np).sqrt()
    } else {
        0.0
    };

    let lambda = cost.lambda(model);
    let xm = 1.0 + start_norm(model, start)?.powf(m);
    let c_hat = msum
        .iter()
        .enumerate()
        .map(|(k, s)| s / np / (xm * (lambda * k as f64 * h).exp()))
        .fold(0.0, f64::max);
    let t = steps as f64 * h;
    let rho = cost.rho;
    let tail_bound = cost.k_cost
        * ((-rho * t).exp() / rho + c_hat * xm * (-(rho - lambda) * t).exp() / (rho - lambda));
    Ok(ValueEstimate {
        mean,
        std_error,
        paths: opts.paths,
        horizon: t,
        tail_bound,
        c_hat,
        lambda,
    })
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RunningCost;
    use crate::scenarios::{advertising_model, default_history, AdvertisingParams};

    #[test]
    fn unit_cost_is_exact_annuity() {
        let (m, mut c) = advertising_model(&AdvertisingParams::default(), 8).unwrap();
        c.cost = RunningCost::constant(1.0);
        let start = Start::History(default_history(&m));
        let pol = FeedbackPolicy::Constant { index: 2 };
        let opts = EvalOptions {
            horizon: 2.0,
            paths: 16,
            seed: 1,
            route: Route::Sdde,
        };
        let e = evaluate_policy(&m, &c, &start, &pol, &opts).unwrap();
        let exact = (1.0 - (-4.0f64).exp()) / 2.0;
        assert!((e.mean - exact).abs() < 1e-13);
        assert!(e.std_error < 1e-14);
    }

    #[test]
    fn cost_shift_moves_estimate_by_annuity() {
        let (m, c) = advertising_model(&AdvertisingParams::default(), 8).unwrap();
        let start = Start::History(default_history(&m));
        let pol = FeedbackPolicy::Threshold {
            coord: 0,
            level: 1.0,
            below: 4,
            above: 1,
        };
        let opts = EvalOptions {
            horizon: 1.0,
            paths: 64,
            seed: 3,
            route: Route::Lift,
        };
        let a = evaluate_policy(&m, &c, &start, &pol, &opts).unwrap();
        let mut c2 = c.clone();
        c2.cost = c.cost.shifted(0.7);
        let b = evaluate_policy(&m, &c2, &start, &pol, &opts).unwrap();
        let ann = 0.7 * (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((b.mean - a.mean - ann).abs() < 1e-12);
    }

    #[test]
    fn lifted_start_rejected_on_sdde_route() {
        let (m, c) = advertising_model(&AdvertisingParams::default(), 8).unwrap();
        let x = crate::lift::lift_history(&m, &default_history(&m)).unwrap();
        let opts = EvalOptions {
            route: Route::Sdde,
            paths: 2,
            ..Default::default()
        };
        let r = evaluate_policy(&m, &c, &Start::Lifted(x), &FeedbackPolicy::Constant { index: 0 }, &opts);
        assert!(r.is_err());
    }
}
