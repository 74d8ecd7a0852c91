//! Discretized operator calculus on `X`: the generator, its dissipative shift,
//! closed-form inverse and resolvent, the compact operator `B`, the weak norm
//! `|.|_{-1}`, spectral projections and the weak-B certificate.
//!
//! Operators act on the vector space `R^n x (R^n)^K` holding `x0` and the
//! node values `x1(xi_1), ..., x1(xi_K)`; the left node is pinned to
//! `x1(-d) = 0`, which is the domain condition of `A`. The inner product uses
//! weight 1 on `x0` and `h` on each node. With the upwind difference this
//! makes `<A x, x>` satisfy the continuous integration-by-parts inequality
//! exactly, so dissipativity and the weak-B item (iv) hold to rounding.

mod certificate;
mod closed_form;
mod counterexample;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

pub use certificate::{
    dissipativity_check, random_domain_state, weak_b_certificate, CertificateItem,
    CertificateReport, DissipativityReport,
};
pub use closed_form::{a_tilde_inverse, resolvent, roundtrip_inverse, roundtrip_resolvent};
pub(crate) use closed_form::e1 as closed_form_e1;
pub use counterexample::{counterexample_sequence, counterexample_value, CounterexampleValue};

use crate::error::{Error, Result};
use crate::lift::LiftedState;
use crate::model::{DelayKernelGrid, SddeModel, SegmentGrid};

/// `mu0 = max{|a0| + 1, |a1|^2_{L2} / 2}` (spectral norm, trapezoid L2 norm).
pub fn mu_zero(model: &SddeModel) -> Result<f64> {
    let a0 = model.a0().ok_or(Error::NotLinearModel)?;
    if !model.is_linear() {
        return Err(Error::NotLinearModel);
    }
    let a0n = spectral_norm(a0);
    Ok((a0n + 1.0).max(0.5 * model.a1.l2_norm_sq(&model.grid)))
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Discretized `A`, `Ã = A + (a0 x0, a1 x0) - mu I`, `Ã^{-1}`, `B` and its
/// eigenpairs.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorPack {
    pub n: usize,
    pub grid: SegmentGrid,
    pub mu0: f64,
    pub mu: f64,
    #[serde(skip)]
    pub a0: DMatrix<f64>,
    #[serde(skip)]
    pub a1: DelayKernelGrid,
    /// Diagonal of the weight matrix `W`.
    #[serde(skip)]
    pub weights: DVector<f64>,
    #[serde(skip)]
    pub a_matrix: DMatrix<f64>,
    #[serde(skip)]
    pub cal_a: DMatrix<f64>,
    #[serde(skip)]
    pub a_tilde: DMatrix<f64>,
    /// `Ã^{-1}` in vector coordinates.
    #[serde(skip)]
    pub g: DMatrix<f64>,
    /// Gram matrix of `B`: `<B x, y>_W = y^T b x`, `b = G^T W G`.
    #[serde(skip)]
    pub b: DMatrix<f64>,
    /// Eigenvalues of `B`, decreasing.
    pub eigenvalues: Vec<f64>,
    /// `W`-orthonormal eigenvectors (columns) matching `eigenvalues`.
    #[serde(skip)]
    pub eigenvectors: DMatrix<f64>,
}

impl OperatorPack {
    /// Assembles the pack with `mu = mu0 + 1` unless `mu` is given.
    pub fn new(model: &SddeModel, mu: Option<f64>) -> Result<Self> {
        let mu0 = mu_zero(model)?;
        let mu = mu.unwrap_or(mu0 + 1.0);
        Self::assemble(model.n(), &model.grid, model.a0().unwrap(), &model.a1, mu0, mu)
    }

    pub fn assemble(
        n: usize,
        grid: &SegmentGrid,
        a0: &DMatrix<f64>,
        a1: &DelayKernelGrid,
        mu0: f64,
        mu: f64,
    ) -> Result<Self> {
        let kk = grid.k();
        let h = grid.h();
        let dim = n * (kk + 1);
        let mut weights = DVector::from_element(dim, h);
        for i in 0..n {
            weights[i] = 1.0;
        }
        let node = |j: usize| n + (j - 1) * n;
        let mut a_matrix = DMatrix::zeros(dim, dim);
        for i in 0..n {
            a_matrix[(i, node(kk) + i)] = 1.0;
        }
        for j in 1..=kk {
            for i in 0..n {
                a_matrix[(node(j) + i, node(j) + i)] = -1.0 / h;
                if j > 1 {
                    a_matrix[(node(j) + i, node(j - 1) + i)] = 1.0 / h;
                }
            }
        }
        let mut cal_a = a_matrix.clone();
        for r in 0..n {
            for c in 0..n {
                cal_a[(r, c)] += a0[(r, c)];
            }
        }
        for j in 1..=kk {
            let blk = a1.at(j);
            for r in 0..n {
                for c in 0..n {
                    cal_a[(node(j) + r, c)] += blk[r * n + c];
                }
            }
        }
        let a_tilde = &cal_a - DMatrix::identity(dim, dim) * mu;
        let g = a_tilde
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::SingularBlock)?;
        let wg = DMatrix::from_fn(dim, dim, |r, c| weights[r] * g[(r, c)]);
        let bm = g.transpose() * wg;
        let b = (&bm + bm.transpose()) * 0.5;
        let sw: DVector<f64> = weights.map(|w| w.sqrt());
        let scaled = DMatrix::from_fn(dim, dim, |r, c| b[(r, c)] / (sw[r] * sw[c]));
        let eig = SymmetricEigen::new(scaled);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|a, b| {
            eig.eigenvalues[*b]
                .partial_cmp(&eig.eigenvalues[*a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let eigenvalues: Vec<f64> = order.iter().map(|i| eig.eigenvalues[*i]).collect();
        let eigenvectors =
            DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])] / sw[r]);
        Ok(Self {
            n,
            grid: grid.clone(),
            mu0,
            mu,
            a0: a0.clone(),
            a1: a1.clone(),
            weights,
            a_matrix,
            cal_a,
            a_tilde,
            g,
            b,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Vector coordinates of a lifted state (the left node is dropped).
    pub fn to_vec(&self, x: &LiftedState) -> DVector<f64> {
        let n = self.n;
        let mut v = DVector::zeros(self.dim());
        for i in 0..n {
            v[i] = x.x0[i];
        }
        for j in 1..=self.grid.k() {
            for i in 0..n {
                v[n + (j - 1) * n + i] = x.x1[j * n + i];
            }
        }
        v
    }

    /// Lifted state with `x1(-d) = 0` from vector coordinates.
    pub fn from_vec(&self, v: &DVector<f64>) -> LiftedState {
        let n = self.n;
        let mut x = LiftedState::zeros(n, self.grid.len());
        for i in 0..n {
            x.x0[i] = v[i];
        }
        for j in 1..=self.grid.k() {
            for i in 0..n {
                x.x1[j * n + i] = v[n + (j - 1) * n + i];
            }
        }
        x
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.iter()
            .zip(y.iter())
            .zip(self.weights.iter())
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x).sqrt()
    }

    fn check_domain(&self, x: &LiftedState) -> Result<()> {
        let v = x.left_value().iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = 1.0 + x.x1.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if v > 1e-9 * scale {
            return Err(Error::DomainViolation { value: v });
        }
        Ok(())
    }

    /// `A x = (x1(0), -x1')` with the upwind difference (forward at the left node).
    pub fn apply_a(&self, x: &LiftedState) -> Result<LiftedState> {
        self.check_domain(x)?;
        let n = self.n;
        let kk = self.grid.k();
        let h = self.grid.h();
        let mut out = LiftedState::zeros(n, kk + 1);
        out.x0.copy_from_slice(x.right_value());
        for j in 0..=kk {
            for i in 0..n {
                let d = if j == 0 {
                    x.x1[n + i] - x.x1[i]
                } else {
                    x.x1[j * n + i] - x.x1[(j - 1) * n + i]
                };
                out.x1[j * n + i] = -d / h;
            }
        }
        Ok(out)
    }

    /// `𝒜 x = A x + (a0 x0, a1 x0)`.
    pub fn apply_cal_a(&self, x: &LiftedState) -> Result<LiftedState> {
        let mut out = self.apply_a(x)?;
        let n = self.n;
        for r in 0..n {
            for c in 0..n {
                out.x0[r] += self.a0[(r, c)] * x.x0[c];
            }
        }
        for j in 0..self.grid.len() {
            self.a1.apply_add(j, &x.x0, 1.0, &mut out.x1[j * n..(j + 1) * n]);
        }
        Ok(out)
    }

    /// `Ã x = 𝒜 x - mu x`.
    pub fn apply_a_tilde(&self, x: &LiftedState) -> Result<LiftedState> {
        let mut out = self.apply_cal_a(x)?;
        out.axpy(-self.mu, x);
        Ok(out)
    }

    /// `Ã^{-1} z` by the direct linear solve (vector coordinates).
    pub fn apply_g(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.g * z
    }

    /// `B x` as an operator in vector coordinates (`W^{-1} b x`).
    pub fn apply_b(&self, x: &DVector<f64>) -> DVector<f64> {
        let bx = &self.b * x;
        DVector::from_fn(bx.len(), |i, _| bx[i] / self.weights[i])
    }

    /// `|x|_{-1} = |Ã^{-1} x|_X`.
    pub fn minus_one_norm(&self, x: &LiftedState) -> f64 {
        self.norm(&self.apply_g(&self.to_vec(x)))
    }

    /// `<x, y>_{-1} = <B x, y>`.
    pub fn minus_one_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (y.transpose() * &self.b * x)[(0, 0)]
    }

    /// `|Ã^{-1}|_op = sqrt(lambda_1)`.
    pub fn inverse_norm(&self) -> f64 {
        self.eigenvalues[0].max(0.0).sqrt()
    }

    /// Orthogonal projections onto `span{f_1..f_N}` and its complement.
    pub fn projections(&self, big_n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let dim = self.dim();
        if big_n == 0 || big_n > dim {
            return Err(Error::NOutOfRange { n: big_n, max: dim });
        }
        let f = self.eigenvectors.columns(0, big_n);
        let fw = DMatrix::from_fn(dim, big_n, |r, c| f[(r, c)] * self.weights[r]);
        let p = f * fw.transpose();
        let q = DMatrix::identity(dim, dim) - &p;
        Ok((p, q))
    }

    /// `|B Q_N|_op = lambda_{N+1}` (zero for `N = dim`).
    pub fn bq_norm(&self, big_n: usize) -> Result<f64> {
        let dim = self.dim();
        if big_n == 0 || big_n > dim {
            return Err(Error::NOutOfRange { n: big_n, max: dim });
        }
        Ok(if big_n == dim {
            0.0
        } else {
            self.eigenvalues[big_n]
        })
    }

    /// `|B Q_N|_op` computed directly as a weighted spectral norm.
    pub fn bq_norm_direct(&self, big_n: usize) -> Result<f64> {
        let (_, q) = self.projections(big_n)?;
        let dim = self.dim();
        let bop = DMatrix::from_fn(dim, dim, |r, c| self.b[(r, c)] / self.weights[r]);
        let m = bop * q;
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let scaled = DMatrix::from_fn(dim, dim, |r, c| m[(r, c)] * sw[r] / sw[c]);
        Ok(spectral_norm(&scaled))
    }

    pub fn bq_norm_decay(&self, ns: &[usize]) -> Result<Vec<f64>> {
        ns.iter().map(|n| self.bq_norm(*n)).collect()
    }

    /// `sup_u Tr[sigma(u) sigma(u)^* B Q_N]` for each `N`.
    pub fn trace_decay(&self, model: &SddeModel, ns: &[usize]) -> Result<Vec<f64>> {
        if !model.is_linear() {
            return Err(Error::NotLinearModel);
        }
        let n = self.n;
        let dim = self.dim();
        let sigmas: Vec<DMatrix<f64>> =
            (0..model.controls.len()).map(|i| model.sigma_at(i)).collect();
        // c[i][k] = <f_i, sigma e_k>_W for each control.
        let coeffs: Vec<DMatrix<f64>> = sigmas
            .iter()
            .map(|s| {
                DMatrix::from_fn(dim, s.ncols(), |i, k| {
                    (0..n).map(|r| self.eigenvectors[(r, i)] * s[(r, k)]).sum()
                })
            })
            .collect();
        ns.iter()
            .map(|&big_n| {
                if big_n == 0 || big_n > dim {
                    return Err(Error::NOutOfRange { n: big_n, max: dim });
                }
                let mut best: f64 = 0.0;
                for c in &coeffs {
                    let mut t = 0.0;
                    for i in big_n..dim {
                        let row: f64 = c.row(i).iter().map(|v| v * v).sum();
                        t += self.eigenvalues[i] * row;
                    }
                    best = best.max(t);
                }
                Ok(best)
            })
            .collect()
    }

    /// `n * max_u |sigma0(u)|^2`, the constant in the trace bound.
    pub fn trace_constant(&self, model: &SddeModel) -> f64 {
        let m = (0..model.controls.len())
            .map(|i| spectral_norm(&model.sigma_at(i)).powi(2))
            .fold(0.0, f64::max);
        self.n as f64 * m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelShape;

    fn scalar_pack(a0: f64, a1: f64, d: f64, k: usize, mu: Option<f64>) -> OperatorPack {
        let g = SegmentGrid::new(d, k).unwrap();
        let ker = DelayKernelGrid::from_shape(
            &g,
            &KernelShape::Constant { value: a1 },
            &DMatrix::from_element(1, 1, 1.0),
        );
        let a0m = DMatrix::from_element(1, 1, a0);
        let mu0 = (a0.abs() + 1.0).max(0.5 * ker.l2_norm_sq(&g));
        OperatorPack::assemble(1, &g, &a0m, &ker, mu0, mu.unwrap_or(mu0 + 1.0)).unwrap()
    }

    #[test]
    fn apply_a_on_affine_profile() {
        let p = scalar_pack(0.0, 0.0, 1.0, 16, None);
        let x = LiftedState {
            x0: vec![0.3],
            x1: p.grid.nodes().iter().map(|xi| xi + 1.0).collect(),
        };
        let ax = p.apply_a(&x).unwrap();
        assert!((ax.x0[0] - 1.0).abs() < 1e-12);
        assert!(ax.x1.iter().all(|v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn apply_a_rejects_nonzero_left_value() {
        let p = scalar_pack(0.0, 0.0, 1.0, 8, None);
        let x = LiftedState {
            x0: vec![0.0],
            x1: vec![1.0; 9],
        };
        assert!(matches!(p.apply_a(&x), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn b_matches_composition() {
        let p = scalar_pack(-0.5, -0.2, 1.0, 12, None);
        let x = DVector::from_fn(p.dim(), |i, _| ((i * 7 % 5) as f64 - 2.0) * 0.3);
        let gx = p.apply_g(&x);
        // B x = G^# G x with G^# = W^{-1} G^T W.
        let wgx = DVector::from_fn(gx.len(), |i, _| gx[i] * p.weights[i]);
        let gt = p.g.transpose() * wgx;
        let direct = DVector::from_fn(gt.len(), |i, _| gt[i] / p.weights[i]);
        let bx = p.apply_b(&x);
        assert!((bx - direct).norm() < 1e-10 * x.norm());
    }

    #[test]
    fn eigenvalues_positive_and_sorted() {
        let p = scalar_pack(-1.0, -0.5, 1.0, 16, None);
        assert!(p.eigenvalues.iter().all(|v| *v > 0.0));
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projections_are_complementary() {
        let p = scalar_pack(-1.0, -0.5, 1.0, 8, None);
        let (pp, qq) = p.projections(4).unwrap();
        let dim = p.dim();
        assert!((&pp + &qq - DMatrix::<f64>::identity(dim, dim)).norm() < 1e-12);
        assert!((&pp * &qq).norm() < 1e-10);
        let (_, qfull) = p.projections(dim).unwrap();
        assert!(qfull.norm() < 1e-10);
        assert_eq!(p.bq_norm(dim).unwrap(), 0.0);
        assert!(p.projections(0).is_err());
    }
}
