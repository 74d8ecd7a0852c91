use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::OperatorPack;
use crate::error::{Error, Result};
use crate::rng::GaussianStream;

/// Gaussian vector in operator coordinates (so `x1(-d) = 0` by construction).
///
/// Odd indices get a smooth second component, even indices white noise.
pub fn random_domain_state(pack: &OperatorPack, seed: u64, index: u64) -> DVector<f64> {
    let dim = pack.dim();
    let mut v = vec![0.0; dim];
    GaussianStream::new(seed, index, dim).fill_step(0, &mut v);
    if index % 2 == 1 {
        let n = pack.n;
        let a: Vec<f64> = v[n..2 * n].to_vec();
        let b: Vec<f64> = v[2 * n..3 * n].to_vec();
        let d = pack.grid.delay();
        for j in 1..=pack.grid.k() {
            let s = (pack.grid.node(j) + d) / d;
            for i in 0..n {
                v[n + (j - 1) * n + i] = a[i] * s + b[i] * (std::f64::consts::PI * s).sin();
            }
        }
    }
    DVector::from_vec(v)
}

/// Top eigenpair of the `W`-symmetric part of `m`: the sup of `<m x, x>_W / |x|^2_W`.
pub(crate) fn numerical_range_top(pack: &OperatorPack, m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let dim = pack.dim();
    let sw: Vec<f64> = pack.weights.iter().map(|w| w.sqrt()).collect();
    let s = DMatrix::from_fn(dim, dim, |r, c| {
        0.5 * (m[(r, c)] * sw[r] / sw[c] + m[(c, r)] * sw[c] / sw[r])
    });
    let eig = SymmetricEigen::new(s);
    let (imax, vmax) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let x = DVector::from_fn(dim, |r, _| eig.eigenvectors[(r, imax)] / sw[r]);
    (vmax, x)
}

fn quad(pack: &OperatorPack, m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    pack.inner(&(m * x), x)
}

#[derive(Debug, Clone, Serialize)]
pub struct DissipativityReport {
    pub samples: usize,
    pub mu0: f64,
    /// `max (<𝒜x,x> - mu0 |x|^2) / |x|^2` over the samples.
    pub max_excess: f64,
    /// Exact sup of `<𝒜x,x> / |x|^2` on the grid.
    pub numerical_range_sup: f64,
    pub allowance: f64,
    pub pass: bool,
}

/// Samples `<𝒜x, x> <= mu0 |x|^2 + c h |x|^2`.
pub fn dissipativity_check(pack: &OperatorPack, samples: usize, seed: u64, c: f64) -> DissipativityReport {
    let mut max_excess = f64::NEG_INFINITY;
    for s in 0..samples {
        let x = random_domain_state(pack, seed, s as u64);
        let nx = pack.inner(&x, &x);
        let r = (quad(pack, &pack.cal_a, &x) - pack.mu0 * nx) / nx;
        max_excess = max_excess.max(r);
    }
    let (sup, _) = numerical_range_top(pack, &pack.cal_a);
    let allowance = c * pack.grid.h();
    DissipativityReport {
        samples,
        mu0: pack.mu0,
        max_excess,
        numerical_range_sup: sup,
        allowance,
        pass: max_excess <= allowance,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateItem {
    pub item: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub samples: usize,
    pub mu0: f64,
    pub mu: f64,
    pub items: Vec<CertificateItem>,
    /// Largest `<Ã^{-1}x, x> / |x|^2` over all `x` (attained direction is sampled).
    pub iv_sup: f64,
    pub pass: bool,
}

impl CertificateReport {
    pub fn into_result(self) -> Result<Self> {
        match self.items.iter().find(|i| !i.pass) {
            Some(i) => Err(Error::CertificateFailed {
                item: i.item.clone(),
                detail: format!("value {:e} against threshold {:e}", i.value, i.threshold),
            }),
            None => Ok(self),
        }
    }
}

/// Weak-B items with `c0 = 0`:
/// (i) `<Bx,x> > 0`, (ii) symmetry, (iii) `Ã^* B = Ã^{-1}` bounded,
/// (iv) `<Ã^* B x, x> <= tol |x|^2`.
pub fn weak_b_certificate(pack: &OperatorPack, samples: usize, seed: u64, iv_tol: f64) -> CertificateReport {
    let mut xs: Vec<DVector<f64>> = (0..samples)
        .map(|s| random_domain_state(pack, seed, s as u64))
        .collect();
    let (iv_sup, worst) = numerical_range_top(pack, &pack.g);
    xs.push(worst);
    let dim = pack.dim();
    xs.push(pack.eigenvectors.column(dim - 1).into_owned());

    let mut min_pos = f64::INFINITY;
    let mut max_sym: f64 = 0.0;
    let mut max_iv = f64::NEG_INFINITY;
    for (i, x) in xs.iter().enumerate() {
        let nx = pack.inner(x, x);
        let bx = pack.apply_b(x);
        min_pos = min_pos.min(pack.inner(&bx, x) / nx);
        let y = &xs[(i + 1) % xs.len()];
        let by = pack.apply_b(y);
        let asym = (pack.inner(&bx, y) - pack.inner(x, &by)).abs() / (nx.sqrt() * pack.norm(y));
        max_sym = max_sym.max(asym);
        max_iv = max_iv.max(quad(pack, &pack.g, x) / nx);
    }
    let g_norm = pack.inverse_norm();
    let items = vec![
        CertificateItem {
            item: "i".into(),
            value: min_pos,
            threshold: 0.0,
            pass: min_pos > 0.0,
        },
        CertificateItem {
            item: "ii".into(),
            value: max_sym,
            threshold: 1e-10,
            pass: max_sym <= 1e-10,
        },
        CertificateItem {
            item: "iii".into(),
            value: g_norm,
            threshold: f64::INFINITY,
            pass: g_norm.is_finite(),
        },
        CertificateItem {
            item: "iv".into(),
            value: max_iv,
            threshold: iv_tol,
            pass: max_iv <= iv_tol,
        },
    ];
    let pass = items.iter().all(|i| i.pass);
    CertificateReport {
        samples: xs.len(),
        mu0: pack.mu0,
        mu: pack.mu,
        items,
        iv_sup,
        pass,
    }
}
