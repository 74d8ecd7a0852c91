//! Problem data: delay grid, kernels, control lattice, coefficients, cost,
//! and sampling-based validation of the standing assumptions.

mod coeffs;
mod control;
mod grid;
mod growth;
mod history;
mod kernel;
mod validate;

use nalgebra::DMatrix;

pub use coeffs::{
    ControlCost, CostFn, Diffusion, DiffusionFn, Drift, DriftFn, RunningCost, Utility,
};
pub use control::ControlSet;
pub use grid::SegmentGrid;
pub use growth::{admissible_growth_k, rho_zero, GrowthBound};
pub use history::HistoryPair;
pub use kernel::{DelayKernelGrid, KernelShape};
pub use validate::{validate_model, ModulusSample, ValidationOptions, ValidationReport};

use crate::error::{Error, Result};

/// Controlled SDDE with distributed delays in state and control.
#[derive(Debug, Clone)]
pub struct SddeModel {
    n: usize,
    q: usize,
    pub grid: SegmentGrid,
    pub a1: DelayKernelGrid,
    pub p1: DelayKernelGrid,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub controls: ControlSet,
    /// Declared Lipschitz constant `L` of `b0`, `sigma0` in the state.
    pub lipschitz: f64,
    /// Declared linear-growth constant `C` of `b0`, `sigma0`.
    pub growth: f64,
}

impl SddeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        q: usize,
        grid: SegmentGrid,
        a1: DelayKernelGrid,
        p1: DelayKernelGrid,
        drift: Drift,
        diffusion: Diffusion,
        controls: ControlSet,
        lipschitz: f64,
        growth: f64,
    ) -> Result<Self> {
        let p = controls.dim();
        if controls.is_empty() {
            return Err(Error::EmptyControlLattice);
        }
        let dims = [
            ("a1 rows", a1.rows(), n),
            ("a1 cols", a1.cols(), n),
            ("p1 rows", p1.rows(), n),
            ("p1 cols", p1.cols(), p),
            ("a1 nodes", a1.nodes(), grid.len()),
            ("p1 nodes", p1.nodes(), grid.len()),
        ];
        for (what, got, expected) in dims {
            if got != expected {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    got,
                });
            }
        }
        if let Drift::Linear { a0, b_const, b_u } = &drift {
            if a0.shape() != (n, n) || b_const.len() != n || b_u.shape() != (n, p) {
                return Err(Error::DimensionMismatch {
                    what: "linear drift",
                    expected: n,
                    got: a0.nrows(),
                });
            }
        }
        if let Diffusion::Control { s0, s_u } = &diffusion {
            if s0.shape() != (n, q) || s_u.len() != p || s_u.iter().any(|s| s.shape() != (n, q))
            {
                return Err(Error::DimensionMismatch {
                    what: "control diffusion",
                    expected: n * q,
                    got: s0.len(),
                });
            }
        }
        Ok(Self {
            n,
            q,
            grid,
            a1,
            p1,
            drift,
            diffusion,
            controls,
            lipschitz,
            growth,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.controls.dim()
    }

    /// `b0(y,u) = a0 y + b(u)` and `sigma0(y,u) = sigma(u)`.
    pub fn is_linear(&self) -> bool {
        matches!(self.drift, Drift::Linear { .. }) && self.diffusion.is_control_only()
    }

    pub fn a0(&self) -> Option<&DMatrix<f64>> {
        match &self.drift {
            Drift::Linear { a0, .. } => Some(a0),
            Drift::General(_) => None,
        }
    }

    /// `sigma0(u)` at lattice point `i` for the linear model.
    pub fn sigma_at(&self, i: usize) -> DMatrix<f64> {
        let mut out = vec![0.0; self.n * self.q];
        let y = vec![0.0; self.n];
        self.diffusion.eval(&y, self.controls.point(i), &mut out);
        DMatrix::from_row_slice(self.n, self.q, &out)
    }

    /// Whether `sigma0` vanishes for every lattice control (checked at the origin
    /// for control-only diffusion, required structurally otherwise).
    pub fn is_deterministic(&self) -> bool {
        match &self.diffusion {
            Diffusion::Control { .. } => (0..self.controls.len())
                .all(|i| self.sigma_at(i).iter().all(|v| *v == 0.0)),
            Diffusion::General(_) => false,
        }
    }

    /// Same model with the diffusion removed.
    pub fn deterministic(&self) -> Self {
        let mut m = self.clone();
        m.diffusion = Diffusion::Control {
            s0: DMatrix::zeros(self.n, self.q),
            s_u: vec![DMatrix::zeros(self.n, self.q); self.p()],
        };
        m
    }

    /// Same model on a different control lattice.
    pub fn with_controls(&self, controls: ControlSet) -> Result<Self> {
        if controls.dim() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "control dimension",
                expected: self.p(),
                got: controls.dim(),
            });
        }
        let mut m = self.clone();
        m.controls = controls;
        Ok(m)
    }
}

/// Running cost with its declared growth data and discount.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub cost: RunningCost,
    /// `K` in `|l(z,u)| <= K (1 + |z|^m)`.
    pub k_cost: f64,
    pub m: f64,
    pub rho: f64,
    /// Optional declared local modulus: `(R, delta, omega_R(delta))` triples.
    pub modulus: Vec<(f64, f64, f64)>,
}

impl CostSpec {
    pub fn rho0(&self, model: &SddeModel) -> f64 {
        rho_zero(model.growth, self.m)
    }

    /// `lambda = (rho + rho0) / 2`.
    pub fn lambda(&self, model: &SddeModel) -> f64 {
        0.5 * (self.rho + self.rho0(model))
    }

    pub fn check_discount(&self, model: &SddeModel) -> Result<()> {
        let rho0 = self.rho0(model);
        if self.rho > rho0 {
            Ok(())
        } else {
            Err(Error::DiscountTooSmall {
                rho: self.rho,
                rho0,
            })
        }
    }
}
