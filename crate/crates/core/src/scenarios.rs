//! Preset models: advertising goodwill and time-to-build capital.
//!
//! Default numbers are illustrative choices of this crate, not calibrated data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ControlCost, ControlSet, CostSpec, DelayKernelGrid, Diffusion, Drift, HistoryPair,
    KernelShape, RunningCost, SddeModel, SegmentGrid, Utility,
};

/// Goodwill `y`: `dy = [a0 y + b0 u + int a1 y + int p1 u] dt + (sigma0 + gamma0 u) dW`,
/// cost `h(u) - g(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvertisingParams {
    pub delay: f64,
    /// Image deterioration, `<= 0`.
    pub a0: f64,
    /// Advertising effectiveness, `>= 0`.
    pub b0: f64,
    /// Forgetting distribution, `<= 0` on the grid.
    pub a1: KernelShape,
    /// Lag density of past spending, `>= 0` on the grid.
    pub p1: KernelShape,
    pub sigma0: f64,
    pub gamma0: f64,
    pub u_max: f64,
    /// Number of equispaced points in `[0, u_max]`.
    pub lattice: usize,
    pub rho: f64,
    pub control_cost: ControlCost,
    pub utility: Utility,
}

impl Default for AdvertisingParams {
    fn default() -> Self {
        Self {
            delay: 1.0,
            a0: -0.5,
            b0: 1.0,
            a1: KernelShape::Constant { value: -0.2 },
            p1: KernelShape::Triangular { mass: 0.5 },
            sigma0: 0.1,
            gamma0: 0.1,
            u_max: 1.0,
            lattice: 5,
            rho: 2.0,
            control_cost: ControlCost {
                quadratic: 1.0,
                ..Default::default()
            },
            utility: Utility::Linear { coef: vec![1.0] },
        }
    }
}

/// Capital `y`: `dy = [b(u) + int p1 u] dt + sigma(u) dW`, cost `C_inv(u) - F(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeToBuildParams {
    pub delay: f64,
    /// Instantaneous effect `b(u) = b0 u`, `b0 >= 0`.
    pub b0: f64,
    /// Time-to-build density, `>= 0` on the grid.
    pub p1: KernelShape,
    /// `sigma(u) = sigma0 + sigma_u u`, both `>= 0`.
    pub sigma0: f64,
    pub sigma_u: f64,
    pub u_max: f64,
    pub lattice: usize,
    pub rho: f64,
    pub investment_cost: ControlCost,
    pub production: Utility,
}

impl Default for TimeToBuildParams {
    fn default() -> Self {
        Self {
            delay: 1.0,
            b0: 0.2,
            p1: KernelShape::Triangular { mass: 0.8 },
            sigma0: 0.1,
            sigma_u: 0.05,
            u_max: 1.0,
            lattice: 5,
            rho: 2.0,
            investment_cost: ControlCost {
                quadratic: 0.5,
                ..Default::default()
            },
            production: Utility::Linear { coef: vec![1.0] },
        }
    }
}

fn sign_check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::SignConstraintViolated(what.to_string()))
    }
}

fn scalar_kernel(grid: &SegmentGrid, shape: &KernelShape) -> DelayKernelGrid {
    DelayKernelGrid::from_shape(grid, shape, &DMatrix::from_element(1, 1, 1.0))
}

pub(crate) fn concave_utility(u: &Utility) -> Result<()> {
    match u {
        Utility::Zero => Ok(()),
        Utility::Linear { coef } => sign_check(coef.len() == 1, "utility must be scalar"),
        Utility::Quadratic { linear, curvature } => {
            sign_check(linear.len() == 1, "utility must be scalar")?;
            sign_check(*curvature >= 0.0, "utility must be concave (curvature >= 0)")
        }
    }
}

/// `(K, m)` with `|h(u) - g(z)| <= K (1 + |z|^m)` on `[0, u_max]`.
pub(crate) fn cost_growth(h: &ControlCost, g: &Utility, u_max: f64) -> (f64, f64) {
    let hmax = h.constant.abs()
        + h.linear.iter().map(|c| c.abs()).sum::<f64>() * u_max
        + h.quadratic.abs() * u_max * u_max;
    match g {
        Utility::Zero => (hmax, 1.0),
        Utility::Linear { coef } => (hmax.max(coef.iter().map(|c| c.abs()).sum()), 1.0),
        Utility::Quadratic { linear, curvature } => {
            let lin: f64 = linear.iter().map(|c| c.abs()).sum();
            if *curvature == 0.0 {
                (hmax.max(lin), 1.0)
            } else {
                (hmax + lin + 0.5 * curvature, 2.0)
            }
        }
    }
}

pub(crate) fn convex_cost(h: &ControlCost) -> Result<()> {
    sign_check(h.quadratic >= 0.0, "control cost must be convex (quadratic >= 0)")?;
    sign_check(h.linear.len() <= 1, "control cost must be scalar")
}

/// Advertising model on a `K`-interval grid.
pub fn advertising_model(p: &AdvertisingParams, k: usize) -> Result<(SddeModel, CostSpec)> {
    sign_check(p.a0 <= 0.0, "a0 <= 0 (image deterioration)")?;
    sign_check(p.b0 >= 0.0, "b0 >= 0 (advertising effectiveness)")?;
    sign_check(p.sigma0 >= 0.0, "sigma0 >= 0")?;
    sign_check(p.gamma0 >= 0.0, "gamma0 >= 0")?;
    sign_check(p.u_max > 0.0, "u_max > 0")?;
    sign_check(p.lattice >= 1, "at least one control point")?;
    convex_cost(&p.control_cost)?;
    concave_utility(&p.utility)?;
    let grid = SegmentGrid::new(p.delay, k)?;
    let a1 = scalar_kernel(&grid, &p.a1);
    let p1 = scalar_kernel(&grid, &p.p1);
    sign_check(
        (0..grid.len()).all(|j| a1.at(j)[0] <= 0.0),
        "a1 <= 0 (forgetting distribution)",
    )?;
    sign_check((0..grid.len()).all(|j| p1.at(j)[0] >= 0.0), "p1 >= 0 (lag density)")?;
    let controls = ControlSet::tensor(&[0.0], &[p.u_max], &[p.lattice])?;
    let drift = Drift::Linear {
        a0: DMatrix::from_element(1, 1, p.a0),
        b_const: DVector::zeros(1),
        b_u: DMatrix::from_element(1, 1, p.b0),
    };
    let diffusion = Diffusion::Control {
        s0: DMatrix::from_element(1, 1, p.sigma0),
        s_u: vec![DMatrix::from_element(1, 1, p.gamma0)],
    };
    let growth = p
        .a0
        .abs()
        .max(p.b0 * p.u_max)
        .max(p.sigma0 + p.gamma0 * p.u_max);
    let model = SddeModel::new(1, 1, grid, a1, p1, drift, diffusion, controls, p.a0.abs(), growth)?;
    let (k_cost, m) = cost_growth(&p.control_cost, &p.utility, p.u_max);
    let cost = CostSpec {
        cost: RunningCost::Separable {
            control: p.control_cost.clone(),
            utility: p.utility.clone(),
        },
        k_cost,
        m,
        rho: p.rho,
        modulus: Vec::new(),
    };
    cost.check_discount(&model)?;
    Ok((model, cost))
}

/// Time-to-build model on a `K`-interval grid (`a1 = 0`).
pub fn time_to_build_model(p: &TimeToBuildParams, k: usize) -> Result<(SddeModel, CostSpec)> {
    sign_check(p.u_max > 0.0, "u_max > 0")?;
    sign_check(p.b0 >= 0.0, "b0 >= 0")?;
    sign_check(p.sigma0 >= 0.0 && p.sigma_u >= 0.0, "sigma(u) >= 0")?;
    sign_check(p.lattice >= 1, "at least one control point")?;
    convex_cost(&p.investment_cost)?;
    concave_utility(&p.production)?;
    let grid = SegmentGrid::new(p.delay, k)?;
    let p1 = scalar_kernel(&grid, &p.p1);
    sign_check((0..grid.len()).all(|j| p1.at(j)[0] >= 0.0), "p1 >= 0 (time-to-build density)")?;
    let a1 = DelayKernelGrid::zeros(&grid, 1, 1);
    let controls = ControlSet::tensor(&[0.0], &[p.u_max], &[p.lattice])?;
    let drift = Drift::Linear {
        a0: DMatrix::zeros(1, 1),
        b_const: DVector::zeros(1),
        b_u: DMatrix::from_element(1, 1, p.b0),
    };
    let diffusion = Diffusion::Control {
        s0: DMatrix::from_element(1, 1, p.sigma0),
        s_u: vec![DMatrix::from_element(1, 1, p.sigma_u)],
    };
    let growth = (p.b0 * p.u_max).max(p.sigma0 + p.sigma_u * p.u_max);
    let model = SddeModel::new(1, 1, grid, a1, p1, drift, diffusion, controls, 0.0, growth)?;
    let (k_cost, m) = cost_growth(&p.investment_cost, &p.production, p.u_max);
    let cost = CostSpec {
        cost: RunningCost::Separable {
            control: p.investment_cost.clone(),
            utility: p.production.clone(),
        },
        k_cost,
        m,
        rho: p.rho,
        modulus: Vec::new(),
    };
    cost.check_discount(&model)?;
    Ok((model, cost))
}

/// `eta0 = 1`, `eta1 = 1`, `delta` = lattice point nearest to the middle of the box.
pub fn default_history(model: &SddeModel) -> HistoryPair {
    let n = model.n();
    let mid: Vec<f64> = model
        .controls
        .lower()
        .iter()
        .zip(model.controls.upper())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let u = model.controls.point(model.controls.nearest(&mid)).to_vec();
    HistoryPair::constant(&model.grid, &vec![1.0; n], &vec![1.0; n], &u)
}

/// Registered preset names.
pub const SCENARIOS: [&str; 2] = ["advertising", "time-to-build"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, ValidationOptions};

    #[test]
    fn defaults_validate() {
        let (m, c) = advertising_model(&AdvertisingParams::default(), 16).unwrap();
        assert!(validate_model(&m, &c, ValidationOptions::default()).is_valid());
        assert!((c.rho0(&m) - 1.5).abs() < 1e-12);
        let (m, c) = time_to_build_model(&TimeToBuildParams::default(), 16).unwrap();
        assert!(validate_model(&m, &c, ValidationOptions::default()).is_valid());
        assert!(m.a1.is_zero());
    }

    #[test]
    fn sign_constraints() {
        let p = AdvertisingParams {
            a0: 1.0,
            ..Default::default()
        };
        assert!(matches!(advertising_model(&p, 8), Err(Error::SignConstraintViolated(_))));
        let p = AdvertisingParams {
            a1: KernelShape::Constant { value: 0.3 },
            ..Default::default()
        };
        assert!(matches!(advertising_model(&p, 8), Err(Error::SignConstraintViolated(_))));
        let p = TimeToBuildParams {
            u_max: -1.0,
            ..Default::default()
        };
        assert!(matches!(time_to_build_model(&p, 8), Err(Error::SignConstraintViolated(_))));
    }

    #[test]
    fn small_discount_rejected() {
        let p = AdvertisingParams {
            rho: 1.0,
            ..Default::default()
        };
        assert!(matches!(advertising_model(&p, 8), Err(Error::DiscountTooSmall { .. })));
    }

    #[test]
    fn default_history_uses_lattice_midpoint() {
        let (m, _) = advertising_model(&AdvertisingParams::default(), 8).unwrap();
        let h = default_history(&m);
        assert!(h.delta.iter().all(|v| *v == 0.5));
        assert!(h.check(&m.grid, 1, &m.controls).is_ok());
    }
}
