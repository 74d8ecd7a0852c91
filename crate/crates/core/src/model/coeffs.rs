use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `(y, u, out)`: writes `b0(y, u)` into `out` (length n).
pub type DriftFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(y, u, out)`: writes `sigma0(y, u)` row-major into `out` (length n*q).
pub type DiffusionFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(z, u) -> l(z, u)`.
pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Instantaneous drift `b0`.
#[derive(Clone)]
pub enum Drift {
    /// `b0(y, u) = a0 y + c + B u`
    Linear {
        a0: DMatrix<f64>,
        b_const: DVector<f64>,
        b_u: DMatrix<f64>,
    },
    General(DriftFn),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Linear { a0, b_const, b_u } => f
                .debug_struct("Linear")
                .field("a0", a0)
                .field("b_const", b_const)
                .field("b_u", b_u)
                .finish(),
            Drift::General(_) => f.write_str("General(<fn>)"),
        }
    }
}

impl Drift {
    #[inline]
    pub fn eval(&self, y: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            Drift::Linear { a0, b_const, b_u } => {
                let n = out.len();
                for i in 0..n {
                    let mut s = b_const[i];
                    for j in 0..n {
                        s += a0[(i, j)] * y[j];
                    }
                    for j in 0..u.len() {
                        s += b_u[(i, j)] * u[j];
                    }
                    out[i] = s;
                }
            }
            Drift::General(f) => f(y, u, out),
        }
    }

    /// Control part `c + B u` of the linear drift.
    pub fn control_part(&self, u: &[f64], out: &mut [f64]) -> bool {
        match self {
            Drift::Linear { b_const, b_u, .. } => {
                for i in 0..out.len() {
                    let mut s = b_const[i];
                    for j in 0..u.len() {
                        s += b_u[(i, j)] * u[j];
                    }
                    out[i] = s;
                }
                true
            }
            Drift::General(_) => false,
        }
    }
}

/// Diffusion `sigma0`.
#[derive(Clone)]
pub enum Diffusion {
    /// `sigma0(y, u) = S0 + sum_k u_k S_k`
    Control {
        s0: DMatrix<f64>,
        s_u: Vec<DMatrix<f64>>,
    },
    General(DiffusionFn),
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Control { s0, s_u } => f
                .debug_struct("Control")
                .field("s0", s0)
                .field("s_u", s_u)
                .finish(),
            Diffusion::General(_) => f.write_str("General(<fn>)"),
        }
    }
}

impl Diffusion {
    #[inline]
    pub fn eval(&self, y: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            Diffusion::Control { s0, s_u } => {
                let (n, q) = s0.shape();
                for i in 0..n {
                    for j in 0..q {
                        let mut s = s0[(i, j)];
                        for (k, sk) in s_u.iter().enumerate() {
                            s += u[k] * sk[(i, j)];
                        }
                        out[i * q + j] = s;
                    }
                }
            }
            Diffusion::General(f) => {
                let _ = y;
                f(y, u, out)
            }
        }
    }

    pub fn is_control_only(&self) -> bool {
        matches!(self, Diffusion::Control { .. })
    }
}

/// Control cost `h(u) = constant + linear . u + quadratic |u|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ControlCost {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub linear: Vec<f64>,
    #[serde(default)]
    pub quadratic: f64,
}

impl ControlCost {
    pub fn eval(&self, u: &[f64]) -> f64 {
        let mut s = self.constant;
        for (c, v) in self.linear.iter().zip(u) {
            s += c * v;
        }
        s + self.quadratic * u.iter().map(|v| v * v).sum::<f64>()
    }
}

/// State utility `g(z)`; the running cost is `h(u) - g(z)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Utility {
    #[default]
    Zero,
    /// `g(z) = coef . z`
    Linear { coef: Vec<f64> },
    /// `g(z) = linear . z - curvature/2 |z|^2`
    Quadratic { linear: Vec<f64>, curvature: f64 },
}

impl Utility {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Utility::Zero => 0.0,
            Utility::Linear { coef } => coef.iter().zip(z).map(|(c, v)| c * v).sum(),
            Utility::Quadratic { linear, curvature } => {
                let lin: f64 = linear.iter().zip(z).map(|(c, v)| c * v).sum();
                lin - 0.5 * curvature * z.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }
}

/// Running cost `l(z, u)`.
#[derive(Clone)]
pub enum RunningCost {
    Separable { control: ControlCost, utility: Utility },
    General(CostFn),
}

impl fmt::Debug for RunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunningCost::Separable { control, utility } => f
                .debug_struct("Separable")
                .field("control", control)
                .field("utility", utility)
                .finish(),
            RunningCost::General(_) => f.write_str("General(<fn>)"),
        }
    }
}

impl RunningCost {
    #[inline]
    pub fn eval(&self, z: &[f64], u: &[f64]) -> f64 {
        match self {
            RunningCost::Separable { control, utility } => control.eval(u) - utility.eval(z),
            RunningCost::General(f) => f(z, u),
        }
    }

    pub fn constant(c: f64) -> Self {
        RunningCost::Separable {
            control: ControlCost {
                constant: c,
                ..Default::default()
            },
            utility: Utility::Zero,
        }
    }

    /// Same cost shifted by a constant.
    pub fn shifted(&self, c: f64) -> Self {
        match self {
            RunningCost::Separable { control, utility } => {
                let mut control = control.clone();
                control.constant += c;
                RunningCost::Separable {
                    control,
                    utility: utility.clone(),
                }
            }
            RunningCost::General(f) => {
                let f = f.clone();
                RunningCost::General(Arc::new(move |z, u| f(z, u) + c))
            }
        }
    }

    /// Whether the cost is independent of the state.
    pub fn state_free(&self) -> bool {
        matches!(
            self,
            RunningCost::Separable {
                utility: Utility::Zero,
                ..
            }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_drift_evaluates_affine_map() {
        let d = Drift::Linear {
            a0: DMatrix::from_element(1, 1, -0.5),
            b_const: DVector::from_element(1, 0.1),
            b_u: DMatrix::from_element(1, 1, 2.0),
        };
        let mut out = [0.0];
        d.eval(&[2.0], &[0.5], &mut out);
        assert!((out[0] - (-1.0 + 0.1 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn control_diffusion_is_affine_in_u() {
        let s = Diffusion::Control {
            s0: DMatrix::from_element(1, 1, 0.1),
            s_u: vec![DMatrix::from_element(1, 1, 0.1)],
        };
        let mut out = [0.0];
        s.eval(&[5.0], &[1.0], &mut out);
        assert!((out[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn advertising_cost_value() {
        let l = RunningCost::Separable {
            control: ControlCost {
                quadratic: 1.0,
                ..Default::default()
            },
            utility: Utility::Linear { coef: vec![1.0] },
        };
        assert!((l.eval(&[2.0], &[1.0]) + 1.0).abs() < 1e-15);
        assert!((l.shifted(0.5).eval(&[2.0], &[1.0]) + 0.5).abs() < 1e-15);
    }
}
