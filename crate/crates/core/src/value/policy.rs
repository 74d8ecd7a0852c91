use serde::{Deserialize, Serialize};

use super::features::FeatureMap;
use super::Sim;
use crate::error::{Error, Result};
use crate::lift::LiftedState;
use crate::model::SddeModel;

/// Grid-adapted feedback returning a lattice index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeedbackPolicy {
    Constant {
        index: usize,
    },
    /// `below` while `x0[coord] < level`, `above` otherwise.
    Threshold {
        coord: usize,
        level: f64,
        below: usize,
        above: usize,
    },
    /// Index `indices[k / every]` at step `k` (last entry held afterwards).
    OpenLoop {
        indices: Vec<usize>,
        every: usize,
    },
    /// Lattice point nearest to `offset + W z(x)`, `W` row-major `p x dim(z)`.
    Affine {
        moments: usize,
        offset: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl FeedbackPolicy {
    pub fn validate(&self, model: &SddeModel) -> Result<()> {
        let len = model.controls.len();
        let bad = |i: usize| if i >= len { Err(Error::ControlOutOfSet { index: i }) } else { Ok(()) };
        match self {
            FeedbackPolicy::Constant { index } => bad(*index),
            FeedbackPolicy::Threshold {
                coord, below, above, ..
            } => {
                if *coord >= model.n() {
                    return Err(Error::DimensionMismatch {
                        what: "threshold coordinate",
                        expected: model.n(),
                        got: *coord,
                    });
                }
                bad(*below)?;
                bad(*above)
            }
            FeedbackPolicy::OpenLoop { indices, every } => {
                if indices.is_empty() || *every == 0 {
                    return Err(Error::Config("open-loop policy needs blocks".into()));
                }
                indices.iter().try_for_each(|i| bad(*i))
            }
            FeedbackPolicy::Affine {
                moments,
                offset,
                weights,
            } => {
                let p = model.p();
                let f = FeatureMap::new(model.n(), *moments).dim();
                if offset.len() != p || weights.len() != p * f {
                    return Err(Error::DimensionMismatch {
                        what: "affine policy weights",
                        expected: p * f,
                        got: weights.len(),
                    });
                }
                Ok(())
            }
        }
    }

    fn needs_lifted(&self) -> bool {
        matches!(self, FeedbackPolicy::Affine { .. })
    }

    /// Decision from a point of `X` at step `step`.
    pub fn decide_at(&self, model: &SddeModel, step: usize, x: &LiftedState) -> usize {
        self.decide_inner(model, step, &x.x0, Some(x))
    }

    fn decide_inner(&self, model: &SddeModel, step: usize, y: &[f64], x: Option<&LiftedState>) -> usize {
        match self {
            FeedbackPolicy::Constant { index } => *index,
            FeedbackPolicy::Threshold {
                coord,
                level,
                below,
                above,
            } => {
                if y[*coord] < *level {
                    *below
                } else {
                    *above
                }
            }
            FeedbackPolicy::OpenLoop { indices, every } => {
                indices[(step / every).min(indices.len() - 1)]
            }
            FeedbackPolicy::Affine {
                moments,
                offset,
                weights,
            } => {
                let x = x.expect("affine policy needs the lifted state");
                let z = FeatureMap::new(model.n(), *moments).eval(&model.grid, x);
                let f = z.len();
                let u: Vec<f64> = offset
                    .iter()
                    .enumerate()
                    .map(|(r, o)| o + (0..f).map(|c| weights[r * f + c] * z[c]).sum::<f64>())
                    .collect();
                model.controls.nearest(&u)
            }
        }
    }

    pub(crate) fn decide(&self, model: &SddeModel, step: usize, sim: &Sim) -> Result<usize> {
        if self.needs_lifted() {
            let x = sim.lifted()?;
            Ok(self.decide_inner(model, step, &x.x0, Some(&x)))
        } else {
            Ok(self.decide_inner(model, step, sim.y(), None))
        }
    }
}
