use serde::Serialize;

use super::{admissible_growth_k, CostSpec, GrowthBound, SddeModel};
use crate::error::Error;

/// Sampling resolution for assumption checks.
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Lattice has `2^resolution + 1` points per axis on `[-radius, radius]`.
    pub resolution: u32,
    pub radius: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            resolution: 6,
            radius: 10.0,
        }
    }
}

/// Empirical modulus of continuity of `l(., u)` on `|z| <= R`.
#[derive(Debug, Clone, Serialize)]
pub struct ModulusSample {
    pub radius: f64,
    pub spacing: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub lattice_points: usize,
    pub rho0: f64,
    pub growth_k: GrowthBound,
    pub max_lipschitz_ratio: f64,
    pub max_growth_ratio: f64,
    pub max_cost_growth_ratio: f64,
    pub modulus: Vec<ModulusSample>,
    #[serde(serialize_with = "ser_errors")]
    pub violations: Vec<Error>,
}

fn ser_errors<S: serde::Serializer>(v: &[Error], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for e in v {
        seq.serialize_element(&e.to_string())?;
    }
    seq.end()
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> crate::Result<Self> {
        match self.violations.first() {
            Some(e) => Err(e.clone()),
            None => Ok(self),
        }
    }
}

fn lattice(n: usize, opts: ValidationOptions) -> (Vec<Vec<f64>>, usize, f64) {
    let per = (1usize << opts.resolution) + 1;
    let spacing = 2.0 * opts.radius / (per - 1) as f64;
    let total = per.pow(n as u32);
    let mut pts = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let y: Vec<f64> = idx
            .iter()
            .map(|i| -opts.radius + *i as f64 * spacing)
            .collect();
        pts.push(y);
        for a in (0..n).rev() {
            idx[a] += 1;
            if idx[a] < per {
                break;
            }
            idx[a] = 0;
        }
    }
    (pts, per, spacing)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Falsification of the declared constants on a dyadic state lattice.
///
/// States are lattice points with `|y| <= radius`; every control lattice point
/// is visited. Lipschitz ratios are taken over axis neighbours, which makes
/// acceptance monotone under coarsening of the lattice.
pub fn validate_model(
    model: &SddeModel,
    cost: &CostSpec,
    opts: ValidationOptions,
) -> ValidationReport {
    let n = model.n();
    let q = model.q();
    let mut violations = Vec::new();
    let tol = |bound: f64| bound * (1.0 + 1e-9) + 1e-12;

    for (name, k) in [("a1", &model.a1), ("p1", &model.p1)] {
        if k.row_l2_norms(&model.grid).iter().any(|v| !v.is_finite()) {
            violations.push(Error::GrowthViolated {
                field: name.into(),
                detail: "kernel row is not square integrable".into(),
            });
        }
    }

    let (pts, per, spacing) = lattice(n, opts);
    let inside: Vec<bool> = pts.iter().map(|y| norm(y) <= opts.radius + 1e-12).collect();
    let count = inside.iter().filter(|b| **b).count();

    let mut max_lip: f64 = 0.0;
    let mut max_growth: f64 = 0.0;
    let mut max_cost: f64 = 0.0;
    let mut lip_fail: Option<String> = None;
    let mut growth_fail: Option<String> = None;
    let mut cost_fail: Option<String> = None;

    let radii = [1.0, 5.0, opts.radius];
    let mut omega = vec![0.0f64; radii.len()];

    let mut b = vec![0.0; n];
    let mut bn = vec![0.0; n];
    let mut s = vec![0.0; n * q];
    let mut sn = vec![0.0; n * q];
    for ui in 0..model.controls.len() {
        let u = model.controls.point(ui);
        for (pi, y) in pts.iter().enumerate() {
            if !inside[pi] {
                continue;
            }
            let ny = norm(y);
            model.drift.eval(y, u, &mut b);
            model.diffusion.eval(y, u, &mut s);
            let gb = norm(&b) / (1.0 + ny);
            let gs = norm(&s) / (1.0 + ny);
            max_growth = max_growth.max(gb).max(gs);
            if (norm(&b) > tol(model.growth * (1.0 + ny))
                || norm(&s) > tol(model.growth * (1.0 + ny)))
                && growth_fail.is_none()
            {
                growth_fail = Some(format!("y = {y:?}, u = {u:?}"));
            }
            let l = cost.cost.eval(y, u);
            let bound = cost.k_cost * (1.0 + ny.powf(cost.m));
            max_cost = max_cost.max(l.abs() / (1.0 + ny.powf(cost.m)));
            if l.abs() > tol(bound) && cost_fail.is_none() {
                cost_fail = Some(format!("y = {y:?}, u = {u:?}, l = {l}"));
            }
            // Forward neighbours along each axis.
            let mut stride = 1;
            for _ in 0..n {
                let coord = (pi / stride) % per;
                if coord + 1 < per && inside[pi + stride] {
                    let yn = &pts[pi + stride];
                    model.drift.eval(yn, u, &mut bn);
                    model.diffusion.eval(yn, u, &mut sn);
                    let r = diff_norm(&b, &bn).max(diff_norm(&s, &sn)) / spacing;
                    max_lip = max_lip.max(r);
                    if r > tol(model.lipschitz) && lip_fail.is_none() {
                        lip_fail = Some(format!("between {y:?} and {yn:?}, u = {u:?}"));
                    }
                    let dl = (l - cost.cost.eval(yn, u)).abs();
                    for (ri, rad) in radii.iter().enumerate() {
                        if ny <= *rad && norm(yn) <= *rad {
                            omega[ri] = omega[ri].max(dl);
                        }
                    }
                }
                stride *= per;
            }
        }
    }
    if let Some(d) = growth_fail {
        violations.push(Error::GrowthViolated {
            field: "b0/sigma0 linear growth".into(),
            detail: d,
        });
    }
    if let Some(d) = lip_fail {
        violations.push(Error::GrowthViolated {
            field: "b0/sigma0 Lipschitz".into(),
            detail: d,
        });
    }
    if let Some(d) = cost_fail {
        violations.push(Error::GrowthViolated {
            field: "running cost growth".into(),
            detail: d,
        });
    }
    if let Err(e) = cost.check_discount(model) {
        violations.push(e);
    }
    ValidationReport {
        lattice_points: count,
        rho0: cost.rho0(model),
        growth_k: admissible_growth_k(model.growth, cost.rho),
        max_lipschitz_ratio: max_lip,
        max_growth_ratio: max_growth,
        max_cost_growth_ratio: max_cost,
        modulus: radii
            .iter()
            .zip(omega)
            .map(|(r, w)| ModulusSample {
                radius: *r,
                spacing,
                omega: w,
            })
            .collect(),
        violations,
    }
}
