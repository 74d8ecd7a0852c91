//! Running cost on `X` and the Hamiltonian with the supremum taken over the
//! control lattice.
//!
//! `H(x, r, Z00) = -mu <x, r> + max_u { -b0(u).r0 - <p1 u, r1> - Tr[s(u) s(u)^T Z00] / 2 - l(x0, u) }`

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lift::LiftedState;
use crate::model::{RunningCost, SddeModel};
use crate::operators::spectral_norm;
use crate::rng::{derive_seed, GaussianStream};

/// `L(x, u) = l(x0, u)`.
pub fn running_cost(model: &SddeModel, cost: &RunningCost, x: &LiftedState, u: &[f64]) -> Result<f64> {
    if !model.controls.contains(u) {
        return Err(Error::ControlOutOfSet { index: 0 });
    }
    Ok(cost.eval(&x.x0, u))
}

/// Arguments of `H`: state, first-order surrogate and the `Z00` block.
#[derive(Debug, Clone)]
pub struct HamiltonianQuery {
    pub x: LiftedState,
    pub r: LiftedState,
    pub z00: DMatrix<f64>,
}

impl HamiltonianQuery {
    pub fn new(x: LiftedState, r: LiftedState, z00: DMatrix<f64>) -> Result<Self> {
        let n = x.n();
        if z00.nrows() != n || z00.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "Z00 block",
                expected: n,
                got: z00.nrows().max(z00.ncols()),
            });
        }
        if r.n() != n || r.nodes() != x.nodes() {
            return Err(Error::DimensionMismatch {
                what: "gradient surrogate",
                expected: x.x1.len(),
                got: r.x1.len(),
            });
        }
        let scale = z00.amax().max(1.0);
        if (&z00 - z00.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Config("Z00 must be symmetric".into()));
        }
        Ok(Self { x, r, z00 })
    }
}

struct ControlTerms {
    /// `b0(u)` (control part of the drift).
    b: Vec<f64>,
    /// `p1(xi_j) u` on the grid.
    pu: LiftedState,
    /// `s(u) s(u)^T`.
    ss: DMatrix<f64>,
}

/// Hamiltonian with per-control terms precomputed.
pub struct Hamiltonian<'m> {
    model: &'m SddeModel,
    cost: &'m RunningCost,
    mu: f64,
    terms: Vec<ControlTerms>,
}

impl<'m> Hamiltonian<'m> {
    pub fn new(model: &'m SddeModel, cost: &'m RunningCost, mu: f64) -> Result<Self> {
        if !model.is_linear() {
            return Err(Error::NotLinearModel);
        }
        let n = model.n();
        let grid = &model.grid;
        let mut terms = Vec::with_capacity(model.controls.len());
        for i in 0..model.controls.len() {
            let u = model.controls.point(i);
            let mut b = vec![0.0; n];
            model.drift.control_part(u, &mut b);
            let mut pu = LiftedState::zeros(n, grid.len());
            for j in 0..grid.len() {
                model.p1.apply_add(j, u, 1.0, &mut pu.x1[j * n..(j + 1) * n]);
            }
            let s = model.sigma_at(i);
            let ss = &s * s.transpose();
            terms.push(ControlTerms { b, pu, ss });
        }
        Ok(Self {
            model,
            cost,
            mu,
            terms,
        })
    }

    fn bracket(&self, i: usize, q: &HamiltonianQuery) -> f64 {
        let t = &self.terms[i];
        let grid = &self.model.grid;
        let br: f64 = t.b.iter().zip(&q.r.x0).map(|(a, b)| a * b).sum();
        let pr = grid.inner(&t.pu.x1, &q.r.x1, q.x.n());
        let tr = (t.ss.transpose().component_mul(&q.z00)).sum();
        -br - pr - 0.5 * tr - self.cost.eval(&q.x.x0, self.model.controls.point(i))
    }

    /// `H` and the maximizing lattice index (lowest index on ties).
    pub fn eval_argmax(&self, q: &HamiltonianQuery) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for i in 0..self.terms.len() {
            let v = self.bracket(i, q);
            if v > best {
                best = v;
                arg = i;
            }
        }
        (best - self.mu * q.x.inner(&q.r, &self.model.grid), arg)
    }

    pub fn eval(&self, q: &HamiltonianQuery) -> f64 {
        self.eval_argmax(q).0
    }

    /// `C = max(mu, sup_u |(b0(u), p1 u)|_X, sup_u |s(u)|_HS)`.
    pub fn lipschitz_constant(&self) -> f64 {
        let grid = &self.model.grid;
        let mut c = self.mu;
        for t in &self.terms {
            let f = LiftedState {
                x0: t.b.clone(),
                x1: t.pu.x1.clone(),
            };
            c = c.max(f.norm(grid)).max(t.ss.trace().max(0.0).sqrt());
        }
        c
    }
}

/// One-shot evaluation of `H`.
pub fn hamiltonian(model: &SddeModel, cost: &RunningCost, mu: f64, q: &HamiltonianQuery) -> Result<f64> {
    Ok(Hamiltonian::new(model, cost, mu)?.eval(q))
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub samples: usize,
    pub constant: f64,
    /// Largest `|H(x,r+q,Y+Z) - H(x,r,Y)| / (C(1+|x|)|q| + C^2(1+|x|)^2 |Z| / 2)`.
    pub max_ratio: f64,
    pub pass: bool,
}

fn gaussian_state(n: usize, nodes: usize, seed: u64, idx: u64) -> LiftedState {
    let mut v = vec![0.0; n * (nodes + 1)];
    GaussianStream::new(seed, idx, v.len()).fill_step(0, &mut v);
    LiftedState {
        x0: v[..n].to_vec(),
        x1: v[n..].to_vec(),
    }
}

pub(crate) fn random_symmetric(n: usize, seed: u64, idx: u64) -> DMatrix<f64> {
    let mut v = vec![0.0; n * n];
    GaussianStream::new(seed, idx, v.len()).fill_step(0, &mut v);
    let m = DMatrix::from_vec(n, n, v);
    (&m + m.transpose()) * 0.5
}

/// Random sample `(x, r, q, Y, Z)` with `|x| <= radius`.
pub(crate) fn random_query(
    model: &SddeModel,
    seed: u64,
    idx: u64,
    radius: f64,
) -> (HamiltonianQuery, LiftedState, DMatrix<f64>) {
    let n = model.n();
    let nodes = model.grid.len();
    let base = idx * 8;
    let mut x = gaussian_state(n, nodes, seed, base);
    let mut s = [0.0; 1];
    GaussianStream::new(seed, base + 1, 1).fill_step(0, &mut s);
    let target = radius * (0.5 + 0.5 * s[0].tanh()).clamp(0.0, 1.0);
    let nx = x.norm(&model.grid).max(1e-300);
    x = x.scaled(target / nx);
    let r = gaussian_state(n, nodes, seed, base + 2);
    let q = gaussian_state(n, nodes, seed, base + 3).scaled(0.1);
    let y = random_symmetric(n, seed, base + 4);
    let z = random_symmetric(n, seed, base + 5) * 0.1;
    (HamiltonianQuery { x, r, z00: y }, q, z)
}

/// Checks the local Lipschitz bound of `H` in `(r, Z00)` on random samples.
pub fn lipschitz_diagnostic(
    model: &SddeModel,
    cost: &RunningCost,
    mu: f64,
    samples: usize,
    seed: u64,
    radius: f64,
) -> Result<LipschitzReport> {
    let h = Hamiltonian::new(model, cost, mu)?;
    let c = h.lipschitz_constant();
    let grid = &model.grid;
    let mut max_ratio: f64 = 0.0;
    for s in 0..samples {
        let (base, q, z) = random_query(model, seed, s as u64, radius);
        let mut r2 = base.r.clone();
        r2.axpy(1.0, &q);
        let moved = HamiltonianQuery {
            x: base.x.clone(),
            r: r2,
            z00: &base.z00 + &z,
        };
        let lhs = (h.eval(&moved) - h.eval(&base)).abs();
        let ax = 1.0 + base.x.norm(grid);
        let rhs = c * ax * q.norm(grid) + 0.5 * c * c * ax * ax * spectral_norm(&z);
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        } else if lhs > 0.0 {
            max_ratio = f64::INFINITY;
        }
    }
    Ok(LipschitzReport {
        samples,
        constant: c,
        max_ratio,
        pass: max_ratio <= 1.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub pairs: usize,
    pub violations: usize,
    /// Largest `H(x, r, Y) - H(x, r, X)` over pairs with `X <= Y`.
    pub max_excess: f64,
    pub pass: bool,
}

/// Degenerate ellipticity on random ordered pairs `Y = X + D D^T`.
pub fn monotonicity_check(
    model: &SddeModel,
    cost: &RunningCost,
    mu: f64,
    pairs: usize,
    seed: u64,
    radius: f64,
) -> Result<MonotonicityReport> {
    let h = Hamiltonian::new(model, cost, mu)?;
    let n = model.n();
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for s in 0..pairs {
        let (base, _, _) = random_query(model, seed, s as u64, radius);
        let d = random_symmetric(n, derive_seed(seed, 1), s as u64);
        let bigger = HamiltonianQuery {
            z00: &base.z00 + &d * &d,
            ..base.clone()
        };
        let excess = h.eval(&bigger) - h.eval(&base);
        max_excess = max_excess.max(excess);
        if excess > 1e-12 * (1.0 + h.eval(&base).abs()) {
            violations += 1;
        }
    }
    Ok(MonotonicityReport {
        pairs,
        violations,
        max_excess,
        pass: violations == 0,
    })
}
