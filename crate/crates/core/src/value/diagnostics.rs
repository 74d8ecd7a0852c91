use rayon::prelude::*;
use serde::Serialize;

use super::lsmc::{bellman_targets, start_lifted, ValueModel};
use super::{median, Noise, Route, Sim, Start};
use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, HamiltonianQuery};
use crate::lift::LiftedState;
use crate::model::{CostSpec, SddeModel};
use crate::operators::{random_domain_state, OperatorPack};

#[derive(Debug, Clone, Serialize)]
pub struct DppRow {
    pub index: usize,
    pub value: f64,
    pub target: f64,
    pub std_error: f64,
    pub residual: f64,
    pub control: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DppReport {
    pub rows: Vec<DppRow>,
    pub median_abs: f64,
    pub median_se: f64,
}

/// `V(x) - min_u E[int_0^Delta e^{-rho t} L dt + e^{-rho Delta} V(Y(Delta))]` per state.
#[allow(clippy::too_many_arguments)]
pub fn dpp_residual(
    model: &SddeModel,
    cost: &CostSpec,
    vm: &ValueModel,
    states: &[Start],
    decision_steps: usize,
    paths: usize,
    seed: u64,
    route: Route,
) -> Result<DppReport> {
    if decision_steps == 0 || paths == 0 {
        return Err(Error::Config("decision steps and paths must be positive".into()));
    }
    let protos: Vec<Sim> = states
        .iter()
        .map(|s| Sim::new(model, s, route))
        .collect::<Result<_>>()?;
    let targets = bellman_targets(model, cost, &protos, vm, decision_steps, paths, seed)?;
    let mut rows = Vec::with_capacity(states.len());
    for (i, (s, t)) in states.iter().zip(targets).enumerate() {
        let value = vm.predict(&model.grid, &start_lifted(model, s)?);
        rows.push(DppRow {
            index: i,
            value,
            target: t.0,
            std_error: t.1,
            residual: value - t.0,
            control: t.2,
        });
    }
    let abs: Vec<f64> = rows.iter().map(|r| r.residual.abs()).collect();
    let se: Vec<f64> = rows.iter().map(|r| r.std_error).collect();
    Ok(DppReport {
        median_abs: median(&abs),
        median_se: median(&se),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HjbRow {
    pub index: usize,
    pub value: f64,
    /// `<Ã x, DV(x)>`
    pub drift_pairing: f64,
    pub hamiltonian: f64,
    pub residual: f64,
    pub control: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HjbReport {
    pub mu: f64,
    pub rows: Vec<HjbRow>,
    pub median_abs: f64,
}

/// `rho V(x) - <Ã x, DV(x)> + H(x, DV(x), D^2 V(x)_00)` at states of the discretized domain.
pub fn hjb_residual(
    model: &SddeModel,
    cost: &CostSpec,
    pack: &OperatorPack,
    vm: &ValueModel,
    states: &[LiftedState],
) -> Result<HjbReport> {
    let ham = Hamiltonian::new(model, &cost.cost, pack.mu)?;
    let grid = &model.grid;
    let mut rows = Vec::with_capacity(states.len());
    for (i, x) in states.iter().enumerate() {
        let ax = pack.apply_a_tilde(x)?;
        let value = vm.predict(grid, x);
        let (r, z00) = vm.derivatives(grid, x);
        let z00 = 0.5 * (&z00 + z00.transpose());
        let drift_pairing = ax.inner(&r, grid);
        let q = HamiltonianQuery::new(x.clone(), r, z00)?;
        let (hv, control) = ham.eval_argmax(&q);
        rows.push(HjbRow {
            index: i,
            value,
            drift_pairing,
            hamiltonian: hv,
            residual: cost.rho * value - drift_pairing + hv,
            control,
        });
    }
    let abs: Vec<f64> = rows.iter().map(|r| r.residual.abs()).collect();
    Ok(HjbReport {
        mu: pack.mu,
        median_abs: median(&abs),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub m: f64,
    pub paths: usize,
    pub times: Vec<f64>,
    /// `E|Y(t)|_X^m`
    pub moments: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// `exp(intercept) / (1 + |x|^m)`
    pub c_fit: f64,
    pub lambda: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Least-squares fit of `log E|Y(t)|^m = a + s t` under a fixed lattice control.
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_check(
    model: &SddeModel,
    cost: &CostSpec,
    start: &Start,
    control: usize,
    m: f64,
    paths: usize,
    horizon: f64,
    seed: u64,
    route: Route,
    margin: f64,
) -> Result<MomentReport> {
    if control >= model.controls.len() {
        return Err(Error::ControlOutOfSet { index: control });
    }
    if paths == 0 {
        return Err(Error::Config("paths must be positive".into()));
    }
    let steps = super::estimate::horizon_steps(model, horizon)?;
    let proto = Sim::new(model, start, route)?;
    let u = model.controls.point(control);
    let grid = &model.grid;
    let runs: Vec<Result<Vec<f64>>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut sim = proto.clone();
            let mut noise = Noise::new(model, seed, p as u64);
            let mut out = Vec::with_capacity(steps + 1);
            out.push(sim.lifted()?.norm(grid).powf(m));
            for k in 0..steps {
                sim.step(u, noise.at(k))?;
                out.push(sim.lifted()?.norm(grid).powf(m));
            }
            Ok(out)
        })
        .collect();
    let mut moments = vec![0.0; steps + 1];
    for r in runs {
        for (s, v) in moments.iter_mut().zip(r?) {
            *s += v;
        }
    }
    moments.iter_mut().for_each(|v| *v /= paths as f64);
    let h = grid.h();
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
    let logs: Vec<f64> = moments.iter().map(|v| v.max(1e-300).ln()).collect();
    let (slope, intercept) = linear_fit(&times, &logs);
    let lambda = cost.lambda(model);
    let xm = 1.0 + start_lifted(model, start)?.norm(grid).powf(m);
    Ok(MomentReport {
        m,
        paths,
        c_fit: intercept.exp() / xm,
        pass: intercept.is_finite() && slope <= lambda + margin,
        times,
        moments,
        slope,
        intercept,
        lambda,
        margin,
    })
}

pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Largest `|V(x) - V(y)|` in the bin.
    pub bin_max: f64,
    /// Largest `|V(x) - V(y)|` over all pairs with distance `<= hi`.
    pub envelope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BContinuityReport {
    pub pairs: usize,
    pub radius: f64,
    /// `(|x - y|_{-1}, |V(x) - V(y)|)` per pair.
    pub scatter: Vec<(f64, f64)>,
    pub bins: Vec<EnvelopeBin>,
    /// Largest value gap over pairs differing by an oscillating `x1` perturbation.
    pub oscillation_gap: f64,
    pub pass: bool,
}

/// Perturbation `sin(N pi (xi + d) / d)` in every component of `x1`.
fn oscillation(pack: &OperatorPack, freq: usize, amp: f64) -> LiftedState {
    let grid = &pack.grid;
    let n = pack.n;
    let d = grid.delay();
    let mut x = LiftedState::zeros(n, grid.len());
    for j in 0..grid.len() {
        let s = (freq as f64 * std::f64::consts::PI * (grid.node(j) + d) / d).sin();
        for i in 0..n {
            x.x1[j * n + i] = amp * s;
        }
    }
    x
}

/// Binned upper envelope of `|V(x) - V(y)|` against `|x - y|_{-1}` on `|x|, |y| <= radius`.
///
/// Half of the pairs move along a random direction with log-spaced step,
/// the other half along an oscillating `x1` profile of growing frequency.
/// The envelope is the empirical modulus `r -> max{gap : dist <= r}`.
/// Passes when the top-distance bin attains the overall largest gap and the
/// bottom bin is at most half of it.
pub fn b_continuity_check(
    pack: &OperatorPack,
    vm: &ValueModel,
    pairs: usize,
    radius: f64,
    bins: usize,
    seed: u64,
) -> Result<BContinuityReport> {
    if pairs < 2 || bins == 0 {
        return Err(Error::Config("need at least two pairs and one bin".into()));
    }
    let grid = &pack.grid;
    let mut scatter = Vec::with_capacity(pairs);
    let mut osc_gap = 0.0f64;
    let clip = |v: &mut LiftedState| {
        let nv = v.norm(grid);
        if nv > radius {
            *v = v.scaled(radius / nv);
        }
    };
    for i in 0..pairs {
        let mut x = pack.from_vec(&random_domain_state(pack, seed, 2 * i as u64));
        let nx = x.norm(grid).max(1e-300);
        x = x.scaled(0.5 * radius / nx);
        let frac = (i / 2) as f64 / ((pairs / 2).max(1)) as f64;
        let mut y;
        let osc = i % 2 == 1;
        if osc {
            let freq = 1 + (frac * (grid.k() as f64 - 1.0)) as usize;
            y = x.clone();
            y.axpy(1.0, &oscillation(pack, freq, 0.25 * radius));
        } else {
            let mut dir = pack.from_vec(&random_domain_state(pack, seed, 2 * i as u64 + 1));
            let nd = dir.norm(grid).max(1e-300);
            dir = dir.scaled(1.0 / nd);
            let t = 0.5 * radius * 10f64.powf(-4.0 * frac);
            y = x.clone();
            y.axpy(t, &dir);
        }
        clip(&mut y);
        let mut diff = y.clone();
        diff.axpy(-1.0, &x);
        let dist = pack.minus_one_norm(&diff);
        let gap = (vm.predict(grid, &x) - vm.predict(grid, &y)).abs();
        if osc {
            osc_gap = osc_gap.max(gap);
        }
        scatter.push((dist, gap));
    }
    let mut sorted = scatter.clone();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let per = sorted.len().div_ceil(bins);
    let mut running = 0.0f64;
    let out_bins: Vec<EnvelopeBin> = sorted
        .chunks(per)
        .map(|c| {
            let bin_max = c.iter().fold(0.0f64, |m, p| m.max(p.1));
            running = running.max(bin_max);
            EnvelopeBin {
                lo: c[0].0,
                hi: c[c.len() - 1].0,
                count: c.len(),
                bin_max,
                envelope: running,
            }
        })
        .collect();
    let top = out_bins.last().map(|b| b.envelope).unwrap_or(0.0);
    let largest = out_bins.iter().all(|b| b.bin_max <= top);
    let pass = largest && out_bins[0].envelope <= 0.5 * top;
    Ok(BContinuityReport {
        pairs,
        radius,
        scatter,
        bins: out_bins,
        oscillation_gap: osc_gap,
        pass,
    })
}
