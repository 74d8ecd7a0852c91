//! TOML run configuration with sections `[scenario]`, `[grid]`, `[control]`,
//! `[model]` and `[cost]`. Unknown keys are rejected with their key path.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ControlCost, ControlSet, CostSpec, DelayKernelGrid, Diffusion, Drift, HistoryPair,
    KernelShape, RunningCost, SddeModel, SegmentGrid, Utility,
};
use crate::operators::spectral_norm;
use crate::scenarios::{
    advertising_model, cost_growth, default_history, time_to_build_model, AdvertisingParams,
    TimeToBuildParams,
};
use crate::value::Route;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub control: ControlSection,
    pub model: ModelSection,
    #[serde(default)]
    pub cost: CostSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub seed: Option<u64>,
    /// Monte Carlo paths for policy evaluation, equivalence and moment checks.
    pub paths: usize,
    /// Truncation horizon; defaults to `2d`.
    pub horizon: Option<f64>,
    /// Shift of the generator; defaults to `mu0 + 1`.
    pub mu: Option<f64>,
    /// Lattice index of the constant policy used by `simulate` and `value`.
    pub control_index: Option<usize>,
    pub history: HistorySection,
    pub value: ValueSection,
    pub checks: ChecksSection,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            seed: None,
            paths: 1000,
            horizon: None,
            mu: None,
            control_index: None,
            history: HistorySection::default(),
            value: ValueSection::default(),
            checks: ChecksSection::default(),
            tolerances: BTreeMap::new(),
        }
    }
}

/// Constant initial segments; omitted entries fall back to `eta0 = eta1 = 1`
/// and `delta` at the lattice point nearest the box midpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistorySection {
    pub eta0: Option<Vec<f64>>,
    pub eta1: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueSection {
    pub route: Route,
    pub decision_steps: usize,
    pub lsmc_paths: usize,
    pub training_states: usize,
    pub test_states: usize,
    pub basis_degree: u32,
    pub moments: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ValueSection {
    fn default() -> Self {
        Self {
            route: Route::Lift,
            decision_steps: 4,
            lsmc_paths: 32,
            training_states: 200,
            test_states: 40,
            basis_degree: 2,
            moments: 3,
            max_iter: 200,
            tol: 1e-4,
        }
    }
}

/// Sample counts of the randomized checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    pub operator_samples: usize,
    pub hamiltonian_samples: usize,
    pub radius: f64,
    pub moment_paths: usize,
    pub continuity_pairs: usize,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            operator_samples: 10_000,
            hamiltonian_samples: 1000,
            radius: 5.0,
            moment_paths: 10_000,
            continuity_pairs: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub delay: f64,
    pub k: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { delay: 1.0, k: 32 }
    }
}

/// Tensor lattice with `points[i]` equispaced values in `[lower[i], upper[i]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            lower: vec![0.0],
            upper: vec![1.0],
            points: vec![5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub rho: f64,
    pub control: ControlCost,
    pub utility: Utility,
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            rho: 2.0,
            control: ControlCost::default(),
            utility: Utility::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSection {
    Advertising(AdvertisingKeys),
    TimeToBuild(TimeToBuildKeys),
    Linear(LinearKeys),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvertisingKeys {
    pub a0: f64,
    pub b0: f64,
    pub a1: KernelShape,
    pub p1: KernelShape,
    pub sigma0: f64,
    pub gamma0: f64,
}

impl Default for AdvertisingKeys {
    fn default() -> Self {
        let p = AdvertisingParams::default();
        Self {
            a0: p.a0,
            b0: p.b0,
            a1: p.a1,
            p1: p.p1,
            sigma0: p.sigma0,
            gamma0: p.gamma0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeToBuildKeys {
    pub b0: f64,
    pub p1: KernelShape,
    pub sigma0: f64,
    pub sigma_u: f64,
}

impl Default for TimeToBuildKeys {
    fn default() -> Self {
        let p = TimeToBuildParams::default();
        Self {
            b0: p.b0,
            p1: p.p1,
            sigma0: p.sigma0,
            sigma_u: p.sigma_u,
        }
    }
}

/// `dy = [a0 y + b_const + b_u u + int a1 y + int p1 u] dt + (s0 + sum_i u_i s_u[i]) dW`.
///
/// Matrices are row-major. Kernels are `shape(xi) * coeff`. Empty entries
/// mean zero of the right size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearKeys {
    pub n: usize,
    pub q: usize,
    pub a0: Vec<f64>,
    pub b_const: Vec<f64>,
    pub b_u: Vec<f64>,
    pub a1: KernelShape,
    pub a1_coeff: Vec<f64>,
    pub p1: KernelShape,
    pub p1_coeff: Vec<f64>,
    pub s0: Vec<f64>,
    pub s_u: Vec<Vec<f64>>,
    /// Declared constants; computed from the coefficients when absent.
    pub lipschitz: Option<f64>,
    pub growth: Option<f64>,
}

impl Default for LinearKeys {
    fn default() -> Self {
        Self {
            n: 1,
            q: 1,
            a0: Vec::new(),
            b_const: Vec::new(),
            b_u: Vec::new(),
            a1: KernelShape::Zero,
            a1_coeff: Vec::new(),
            p1: KernelShape::Zero,
            p1_coeff: Vec::new(),
            s0: Vec::new(),
            s_u: Vec::new(),
            lipschitz: None,
            growth: None,
        }
    }
}

fn matrix(what: &'static str, v: &[f64], r: usize, c: usize) -> Result<DMatrix<f64>> {
    if v.is_empty() {
        return Ok(DMatrix::zeros(r, c));
    }
    if v.len() != r * c {
        return Err(Error::DimensionMismatch {
            what,
            expected: r * c,
            got: v.len(),
        });
    }
    Ok(DMatrix::from_row_slice(r, c, v))
}

impl LinearKeys {
    fn build(&self, grid: SegmentGrid, controls: ControlSet) -> Result<SddeModel> {
        let (n, q, p) = (self.n, self.q, controls.dim());
        let a0 = matrix("model.a0", &self.a0, n, n)?;
        let b_const = DVector::from_column_slice(matrix("model.b_const", &self.b_const, n, 1)?.as_slice());
        let b_u = matrix("model.b_u", &self.b_u, n, p)?;
        let a1c = if self.a1_coeff.is_empty() {
            DMatrix::identity(n, n)
        } else {
            matrix("model.a1_coeff", &self.a1_coeff, n, n)?
        };
        let p1c = if self.p1_coeff.is_empty() {
            DMatrix::from_element(n, p, 1.0)
        } else {
            matrix("model.p1_coeff", &self.p1_coeff, n, p)?
        };
        let s0 = matrix("model.s0", &self.s0, n, q)?;
        let s_u = if self.s_u.is_empty() {
            vec![DMatrix::zeros(n, q); p]
        } else {
            if self.s_u.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "model.s_u",
                    expected: p,
                    got: self.s_u.len(),
                });
            }
            self.s_u
                .iter()
                .map(|m| matrix("model.s_u", m, n, q))
                .collect::<Result<_>>()?
        };
        let a1 = DelayKernelGrid::from_shape(&grid, &self.a1, &a1c);
        let p1 = DelayKernelGrid::from_shape(&grid, &self.p1, &p1c);
        let lip = spectral_norm(&a0);
        let mut growth = lip;
        for i in 0..controls.len() {
            let u = controls.point(i);
            let b = &b_const + &b_u * DVector::from_column_slice(u);
            let mut s = s0.clone();
            for (ui, su) in u.iter().zip(&s_u) {
                s += su * *ui;
            }
            growth = growth.max(b.norm()).max(s.norm());
        }
        SddeModel::new(
            n,
            q,
            grid,
            a1,
            p1,
            Drift::Linear { a0, b_const, b_u },
            Diffusion::Control { s0, s_u },
            controls,
            self.lipschitz.unwrap_or(lip),
            self.growth.unwrap_or(growth),
        )
    }
}

/// Built problem ready for the pipelines.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: SddeModel,
    pub cost: CostSpec,
    pub history: HistoryPair,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.into_inner().message().trim()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Built-in template of a named scenario.
    pub fn template(name: &str) -> Result<Self> {
        let text = match name {
            "advertising" => include_str!("../templates/advertising.toml"),
            "time-to-build" | "time_to_build" => include_str!("../templates/time_to_build.toml"),
            "zero" => include_str!("../templates/zero.toml"),
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario `{other}` (advertising, time-to-build, zero)"
                )))
            }
        };
        Self::from_toml(text)
    }

    pub fn horizon(&self) -> f64 {
        self.scenario.horizon.unwrap_or(2.0 * self.grid.delay)
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.scenario.tolerances.get(name).copied().unwrap_or(default)
    }

    /// Model, cost and history on a grid with `k` subintervals.
    pub fn build(&self, k: usize) -> Result<Problem> {
        let c = &self.control;
        let scalar_box = || -> Result<(f64, usize)> {
            if c.lower.len() != 1 || c.upper.len() != 1 || c.points.len() != 1 {
                return Err(Error::Config("scenario controls must be scalar".into()));
            }
            if c.lower[0] != 0.0 {
                return Err(Error::SignConstraintViolated(
                    "control box must start at 0".into(),
                ));
            }
            Ok((c.upper[0], c.points[0]))
        };
        let (model, cost) = match &self.model {
            ModelSection::Advertising(m) => {
                let (u_max, lattice) = scalar_box()?;
                advertising_model(
                    &AdvertisingParams {
                        delay: self.grid.delay,
                        a0: m.a0,
                        b0: m.b0,
                        a1: m.a1.clone(),
                        p1: m.p1.clone(),
                        sigma0: m.sigma0,
                        gamma0: m.gamma0,
                        u_max,
                        lattice,
                        rho: self.cost.rho,
                        control_cost: self.cost.control.clone(),
                        utility: self.cost.utility.clone(),
                    },
                    k,
                )?
            }
            ModelSection::TimeToBuild(m) => {
                let (u_max, lattice) = scalar_box()?;
                time_to_build_model(
                    &TimeToBuildParams {
                        delay: self.grid.delay,
                        b0: m.b0,
                        p1: m.p1.clone(),
                        sigma0: m.sigma0,
                        sigma_u: m.sigma_u,
                        u_max,
                        lattice,
                        rho: self.cost.rho,
                        investment_cost: self.cost.control.clone(),
                        production: self.cost.utility.clone(),
                    },
                    k,
                )?
            }
            ModelSection::Linear(m) => {
                let grid = SegmentGrid::new(self.grid.delay, k)?;
                let controls = ControlSet::tensor(&c.lower, &c.upper, &c.points)?;
                let (k_cost, mexp) =
                    cost_growth(&self.cost.control, &self.cost.utility, controls.bound());
                let model = m.build(grid, controls)?;
                let cost = CostSpec {
                    cost: RunningCost::Separable {
                        control: self.cost.control.clone(),
                        utility: self.cost.utility.clone(),
                    },
                    k_cost,
                    m: mexp,
                    rho: self.cost.rho,
                    modulus: Vec::new(),
                };
                cost.check_discount(&model)?;
                (model, cost)
            }
        };
        let history = self.history(&model)?;
        Ok(Problem {
            model,
            cost,
            history,
        })
    }

    fn history(&self, model: &SddeModel) -> Result<HistoryPair> {
        let d = default_history(model);
        let h = &self.scenario.history;
        let n = model.n();
        let p = model.p();
        let eta0 = h.eta0.clone().unwrap_or(d.eta0.clone());
        let eta1 = h.eta1.clone().unwrap_or_else(|| d.eta1[..n].to_vec());
        let delta = h.delta.clone().unwrap_or_else(|| d.delta[..p].to_vec());
        if eta1.len() != n || delta.len() != p {
            return Err(Error::Config(
                "scenario.history.eta1 needs n entries and delta needs p entries".into(),
            ));
        }
        let hist = HistoryPair::constant(&model.grid, &eta0, &eta1, &delta);
        hist.check(&model.grid, n, &model.controls)?;
        Ok(hist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_build() {
        for name in ["advertising", "time-to-build", "zero"] {
            let c = Config::template(name).unwrap();
            let p = c.build(c.grid.k).unwrap();
            assert_eq!(p.model.grid.k(), c.grid.k);
        }
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = "[model]\nkind = \"advertising\"\nbogus = 1.0\n";
        let e = Config::from_toml(text).unwrap_err().to_string();
        assert!(e.contains("model"), "{e}");
        let text = "[model]\nkind = \"linear\"\n[grid]\nk = 8\nextra = 2\n";
        let e = Config::from_toml(text).unwrap_err().to_string();
        assert!(e.contains("grid"), "{e}");
    }

    #[test]
    fn wrong_matrix_size_rejected() {
        let text = "[model]\nkind = \"linear\"\na0 = [1.0, 2.0]\n";
        let c = Config::from_toml(text).unwrap();
        assert!(matches!(c.build(8), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn discount_at_rho0_rejected() {
        let mut c = Config::template("advertising").unwrap();
        c.cost.rho = 1.5;
        assert!(matches!(c.build(8), Err(Error::DiscountTooSmall { .. })));
    }
}
