//! Closed-form `Ã^{-1}` and resolvent evaluated by quadrature on the segment grid.

use nalgebra::{DMatrix, DVector};

use super::OperatorPack;
use crate::error::{Error, Result};
use crate::lift::LiftedState;

/// `int_0^s e^{-k r} dr`, stable for small `k s`.
pub(crate) fn e1(k: f64, s: f64) -> f64 {
    if (k * s).abs() < 1e-12 {
        s
    } else {
        -(-k * s).exp_m1() / k
    }
}

fn check_shape(pack: &OperatorPack, x: &LiftedState) -> Result<()> {
    if x.x0.len() != pack.n {
        return Err(Error::DimensionMismatch {
            what: "lifted state first component",
            expected: pack.n,
            got: x.x0.len(),
        });
    }
    if x.x1.len() != pack.n * pack.grid.len() {
        return Err(Error::GridMismatch {
            expected: pack.grid.len(),
            got: x.x1.len() / pack.n.max(1),
        });
    }
    Ok(())
}

/// Node weights of `int_{-d}^0 e^{k r} f(r) dr`.
fn exp_weights(pack: &OperatorPack, k: f64, exact: bool) -> Vec<f64> {
    let g = &pack.grid;
    (0..g.len())
        .map(|j| {
            let e = (k * g.node(j)).exp();
            if exact {
                // Piecewise constant with the right node value on each cell.
                if j == 0 {
                    0.0
                } else {
                    e * e1(k, g.h())
                }
            } else {
                e * g.weight(j)
            }
        })
        .collect()
}

/// Solves `(k I - 𝒜) x = y`.
fn shifted_solve(pack: &OperatorPack, k: f64, y: &LiftedState, exact: bool) -> Result<LiftedState> {
    check_shape(pack, y)?;
    let n = pack.n;
    let g = &pack.grid;
    let w = exp_weights(pack, k, exact);
    let mut m = DMatrix::identity(n, n) * k - &pack.a0;
    let mut rhs = DVector::from_column_slice(&y.x0);
    for (j, wj) in w.iter().enumerate() {
        if *wj == 0.0 {
            continue;
        }
        let blk = pack.a1.at(j);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] -= wj * blk[r * n + c];
            }
            rhs[r] += wj * y.x1[j * n + r];
        }
    }
    let scale = m.amax().max(1.0);
    let lu = m.lu();
    let x0 = lu.solve(&rhs).ok_or(Error::SingularBlock)?;
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-14 * scale.powi(n as i32) {
        return Err(Error::SingularBlock);
    }
    let x0: Vec<f64> = x0.iter().cloned().collect();

    // x1(xi) = int_{-d}^xi e^{-k(xi - r)} (y1(r) + a1(r) x0) dr.
    let mut gvals = y.x1.clone();
    for j in 0..g.len() {
        pack.a1.apply_add(j, &x0, 1.0, &mut gvals[j * n..(j + 1) * n]);
    }
    let h = g.h();
    let decay = (-k * h).exp();
    let cell = e1(k, h);
    let mut x1 = vec![0.0; n * g.len()];
    for j in 1..g.len() {
        for i in 0..n {
            let prev = x1[(j - 1) * n + i];
            let inc = if exact {
                cell * gvals[j * n + i]
            } else {
                0.5 * h * (decay * gvals[(j - 1) * n + i] + gvals[j * n + i])
            };
            x1[j * n + i] = decay * prev + inc;
        }
    }
    Ok(LiftedState { x0, x1 })
}

/// Closed-form `Ã^{-1} z` (trapezoid quadrature, or exact integration of a
/// piecewise-constant `z1` when `exact` is set).
pub fn a_tilde_inverse(pack: &OperatorPack, z: &LiftedState, exact: bool) -> Result<LiftedState> {
    // Ã^{-1} z = -(mu I - 𝒜)^{-1} z.
    Ok(shifted_solve(pack, pack.mu, z, exact)?.scaled(-1.0))
}

/// Closed-form `(lambda I - Ã)^{-1} y`.
pub fn resolvent(pack: &OperatorPack, lambda: f64, y: &LiftedState, exact: bool) -> Result<LiftedState> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("resolvent needs lambda >= 0, got {lambda}")));
    }
    shifted_solve(pack, lambda + pack.mu, y, exact)
}

fn relative_residual(pack: &OperatorPack, r: &LiftedState, y: &LiftedState) -> f64 {
    let num = pack.norm(&pack.to_vec(r));
    let den = pack.norm(&pack.to_vec(y));
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// `|Ã(Ã^{-1} z) - z| / |z|` with the discretized `Ã`.
pub fn roundtrip_inverse(pack: &OperatorPack, z: &LiftedState) -> Result<f64> {
    let x = a_tilde_inverse(pack, z, false)?;
    let mut r = pack.apply_a_tilde(&x)?;
    r.axpy(-1.0, z);
    Ok(relative_residual(pack, &r, z))
}

/// `|(lambda I - Ã) x - y| / |y|` for `x = (lambda I - Ã)^{-1} y`.
pub fn roundtrip_resolvent(pack: &OperatorPack, lambda: f64, y: &LiftedState) -> Result<f64> {
    let x = resolvent(pack, lambda, y, false)?;
    let mut r = pack.apply_a_tilde(&x)?.scaled(-1.0);
    r.axpy(lambda, &x);
    r.axpy(-1.0, y);
    Ok(relative_residual(pack, &r, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DelayKernelGrid, KernelShape, SegmentGrid};

    fn pack(a0: f64, a1: f64, mu: f64, k: usize) -> OperatorPack {
        let g = SegmentGrid::new(1.0, k).unwrap();
        let ker = DelayKernelGrid::from_shape(
            &g,
            &KernelShape::Constant { value: a1 },
            &DMatrix::from_element(1, 1, 1.0),
        );
        OperatorPack::assemble(1, &g, &DMatrix::from_element(1, 1, a0), &ker, 1.0, mu).unwrap()
    }

    fn smooth(p: &OperatorPack) -> LiftedState {
        LiftedState {
            x0: vec![0.7],
            x1: p.grid.nodes().iter().map(|x| (2.0 * x).sin() + 0.3).collect(),
        }
    }

    #[test]
    fn hand_value_zero_model() {
        let p = pack(0.0, 0.0, 1.0, 16);
        let mut z = LiftedState::zeros(1, 17);
        z.x0[0] = 1.0;
        let x = a_tilde_inverse(&p, &z, false).unwrap();
        assert!((x.x0[0] + 1.0).abs() < 1e-14);
        assert!(x.x1.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_in_zero_out() {
        let p = pack(-1.0, -0.5, 3.0, 8);
        let z = LiftedState::zeros(1, 9);
        let x = a_tilde_inverse(&p, &z, false).unwrap();
        assert!(x.x0[0] == 0.0 && x.x1.iter().all(|v| *v == 0.0));
        let y = resolvent(&p, 1.0, &z, false).unwrap();
        assert!(y.x0[0] == 0.0);
    }

    #[test]
    fn roundtrips_are_first_order() {
        let mut prev = f64::INFINITY;
        for k in [32, 64, 128] {
            let p = pack(-1.0, -0.5, 3.0, k);
            let z = smooth(&p);
            let r = roundtrip_inverse(&p, &z).unwrap();
            let s = roundtrip_resolvent(&p, 1.0, &z).unwrap();
            let h = p.grid.h();
            assert!(r <= 5.0 * h, "inverse roundtrip {r} at K={k}");
            assert!(s <= 5.0 * h, "resolvent roundtrip {s} at K={k}");
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn tiny_lambda_matches_negated_inverse() {
        let p = pack(-1.0, -0.5, 3.0, 64);
        let y = smooth(&p);
        let a = resolvent(&p, 1e-8, &y, false).unwrap();
        let b = a_tilde_inverse(&p, &y.scaled(-1.0), false).unwrap();
        let mut d = a.clone();
        d.axpy(-1.0, &b);
        assert!(p.norm(&p.to_vec(&d)) < 1e-4);
    }

    #[test]
    fn closed_form_close_to_direct_solve() {
        for k in [32, 128] {
            let p = pack(-1.0, -0.5, 3.0, k);
            let z = smooth(&p);
            let x = a_tilde_inverse(&p, &z, false).unwrap();
            let direct = p.apply_g(&p.to_vec(&z));
            let e = (p.to_vec(&x) - direct).norm();
            assert!(e < 2.0 * p.grid.h(), "K={k}: {e}");
        }
    }

    #[test]
    fn exact_path_is_exact_for_piecewise_constant_data() {
        let p = pack(0.0, 0.0, 1.0, 4);
        let z = LiftedState {
            x0: vec![1.0],
            x1: vec![0.0, 0.0, 0.0, -4.0, -4.0],
        };
        let ex = a_tilde_inverse(&p, &z, true).unwrap();
        // Cells (-1/2, -1/4] and (-1/4, 0] carry -4.
        let int = -4.0 * (1.0 - (-0.5f64).exp());
        assert!((ex.x0[0] + (1.0 + int)).abs() < 1e-14);
    }
}
