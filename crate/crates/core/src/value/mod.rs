//! Value-function machinery: policy evaluation, a brute-force oracle for
//! deterministic instances, regression Monte Carlo and residual diagnostics.

mod brute;
mod diagnostics;
mod estimate;
mod features;
mod lsmc;
mod policy;

use serde::{Deserialize, Serialize};

pub use brute::{brute_force_value, BruteForceResult, SEARCH_LIMIT};
pub use diagnostics::{
    b_continuity_check, dpp_residual, hjb_residual, moment_bound_check, BContinuityReport,
    DppReport, DppRow, EnvelopeBin, HjbReport, HjbRow, MomentReport,
};
pub use estimate::{evaluate_policy, EvalOptions, ValueEstimate};
pub use features::{Basis, FeatureMap};
pub use lsmc::{explore_states, lsmc_value, LsmcMode, LsmcOptions, LsmcResult, ValueModel};
pub use policy::FeedbackPolicy;

use crate::error::{Error, Result};
use crate::lift::{structural_state, LiftStepper, LiftedState};
use crate::model::{HistoryPair, SddeModel};
use crate::operators::closed_form_e1 as e1;
use crate::rng::GaussianStream;
use crate::sim::SddeState;

/// Which integrator carries the paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Euler–Maruyama on the delay equation; features through the structural state.
    #[default]
    Sdde,
    /// Markov integrator in `X`.
    Lift,
}

/// Initial condition: a history pair or a point of `X`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Start {
    History(HistoryPair),
    Lifted(LiftedState),
}

/// Path state behind either route.
#[derive(Clone)]
pub(crate) enum Sim<'m> {
    Sdde(SddeState<'m>),
    Lift(LiftStepper<'m>),
}

impl<'m> Sim<'m> {
    pub(crate) fn new(model: &'m SddeModel, start: &Start, route: Route) -> Result<Self> {
        match (start, route) {
            (Start::History(h), Route::Sdde) => Ok(Sim::Sdde(SddeState::new(model, h)?)),
            (Start::History(h), Route::Lift) => Ok(Sim::Lift(LiftStepper::new(
                model,
                crate::lift::lift_history(model, h)?,
            )?)),
            (Start::Lifted(x), Route::Lift) => Ok(Sim::Lift(LiftStepper::new(model, x.clone())?)),
            (Start::Lifted(_), Route::Sdde) => Err(Error::Config(
                "a lifted initial state can only be run on the lift route".into(),
            )),
        }
    }

    #[inline]
    pub(crate) fn y(&self) -> &[f64] {
        match self {
            Sim::Sdde(s) => s.current(),
            Sim::Lift(s) => &s.state.x0,
        }
    }

    /// Current point of `X`.
    pub(crate) fn lifted(&self) -> Result<LiftedState> {
        match self {
            Sim::Sdde(s) => {
                let u = s.last_control().to_vec();
                structural_state(s.model(), s.current(), s.y_segment(), &s.u_segment_with(&u))
            }
            Sim::Lift(s) => Ok(s.state.clone()),
        }
    }

    #[inline]
    pub(crate) fn step(&mut self, u: &[f64], dw: &[f64]) -> Result<()> {
        match self {
            Sim::Sdde(s) => s.step(u, dw),
            Sim::Lift(s) => s.step(u, dw),
        }
    }
}

/// Brownian increments of one path, generated step by step.
pub(crate) struct Noise {
    stream: Option<GaussianStream>,
    sd: f64,
    pub(crate) buf: Vec<f64>,
}

impl Noise {
    pub(crate) fn new(model: &SddeModel, seed: u64, path: u64) -> Self {
        let q = model.q();
        let stream = if model.is_deterministic() {
            None
        } else {
            Some(GaussianStream::new(seed, path, q))
        };
        Self {
            stream,
            sd: model.grid.h().sqrt(),
            buf: vec![0.0; q],
        }
    }

    #[inline]
    pub(crate) fn at(&mut self, step: usize) -> &[f64] {
        if let Some(s) = &mut self.stream {
            s.fill_step(step as u64, &mut self.buf);
            let sd = self.sd;
            self.buf.iter_mut().for_each(|v| *v *= sd);
        }
        &self.buf
    }
}

/// Exact `int_{t_k}^{t_{k+1}} e^{-rho t} L(t) dt` for `L` linear between nodes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Discount {
    /// `e^{-rho h}`
    pub decay: f64,
    e1: f64,
    /// `int_0^h s e^{-rho s} ds / h`
    e2h: f64,
}

impl Discount {
    pub(crate) fn new(rho: f64, h: f64) -> Self {
        let x = rho * h;
        let e2 = if x < 1e-3 {
            h * h * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0)
        } else {
            (1.0 - (-x).exp() * (1.0 + x)) / (rho * rho)
        };
        Self {
            decay: (-x).exp(),
            e1: e1(rho, h),
            e2h: e2 / h,
        }
    }

    /// Contribution of one step given `e^{-rho t_k}` and the end values of `L`.
    #[inline]
    pub(crate) fn step(&self, factor: f64, l0: f64, l1: f64) -> f64 {
        factor * (l0 * self.e1 + (l1 - l0) * self.e2h)
    }
}

/// Median of a slice (mean of the two central values for even length).
pub(crate) fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discount_integrates_linear_functions_exactly() {
        let d = Discount::new(2.0, 0.1);
        // L(t) = 1 + 3t on [0, 0.1].
        let exact = {
            let r: f64 = 2.0;
            let h: f64 = 0.1;
            let i0 = (1.0 - (-r * h).exp()) / r;
            let i1 = (1.0 - (-r * h).exp() * (1.0 + r * h)) / (r * r);
            i0 + 3.0 * i1
        };
        assert!((d.step(1.0, 1.0, 1.3) - exact).abs() < 1e-15);
        let small = Discount::new(1e-6, 0.1);
        assert!((small.step(1.0, 0.0, 1.0) - 0.05).abs() < 1e-8);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
