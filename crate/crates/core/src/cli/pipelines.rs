use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::output::Out;
use crate::config::{Config, Problem};
use crate::error::{Error, Result};
use crate::hamiltonian::{lipschitz_diagnostic, monotonicity_check};
use crate::lift::{lift_history, verify_equivalence, LiftedState};
use crate::operators::{
    counterexample_sequence, counterexample_value, dissipativity_check, roundtrip_inverse,
    roundtrip_resolvent, weak_b_certificate, OperatorPack,
};
use crate::rng::{derive_seed, sample_brownian, BrownianPath};
use crate::sim::{simulate_sdde, ControlPath};
use crate::value::{
    b_continuity_check, dpp_residual, evaluate_policy, explore_states, hjb_residual, lsmc_value,
    moment_bound_check, EvalOptions, FeedbackPolicy, LsmcMode, LsmcOptions, LsmcResult, Route,
    Start, ValueModel,
};

/// One assertion with its owning module.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub module: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn check(name: &str, module: &'static str, value: f64, threshold: f64, pass: bool) -> Check {
    Check {
        name: name.to_string(),
        module,
        value,
        threshold,
        pass,
    }
}

/// Resolved run settings (flags over config over defaults).
#[derive(Debug, Clone)]
pub struct Settings {
    pub cfg: Config,
    pub seed: u64,
    pub k: usize,
    pub paths: usize,
    pub horizon: f64,
    pub mu: Option<f64>,
    pub degree: u32,
    pub overrides: BTreeMap<String, f64>,
}

impl Settings {
    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.overrides
            .get(name)
            .copied()
            .unwrap_or_else(|| self.cfg.tolerance(name, default))
    }
}

/// Default tolerances, listed by `--list-checks`.
pub const TOLERANCES: [(&str, f64); 10] = [
    ("lift_order_stochastic", 0.4),
    ("lift_order_deterministic", 0.9),
    ("dissipativity_h_factor", 10.0),
    ("roundtrip_h_factor", 5.0),
    ("weak_b_iv", 1e-8),
    ("counterexample_ratio_band", 0.1),
    ("lipschitz_ratio", 1.0),
    ("route_agreement_se", 3.0),
    ("dpp_se_factor", 3.0),
    ("moment_margin", 0.1),
];

fn default_tol(name: &str) -> f64 {
    TOLERANCES
        .iter()
        .find(|t| t.0 == name)
        .map(|t| t.1)
        .unwrap_or(f64::NAN)
}

struct Trained {
    result: LsmcResult,
    test: Vec<Start>,
    test_lifted: Vec<LiftedState>,
}

pub struct Session<'a> {
    s: &'a Settings,
    p: Problem,
    trained: Option<Trained>,
}

impl<'a> Session<'a> {
    pub fn new(s: &'a Settings) -> Result<Self> {
        let p = s.cfg.build(s.k)?;
        Ok(Self {
            s,
            p,
            trained: None,
        })
    }

    fn tol(&self, name: &str) -> f64 {
        self.s.tol(name, default_tol(name))
    }

    fn control_index(&self) -> Result<usize> {
        let len = self.p.model.controls.len();
        let i = self.s.cfg.scenario.control_index.unwrap_or(len / 2);
        if i >= len {
            return Err(Error::ControlOutOfSet { index: i });
        }
        Ok(i)
    }

    fn steps(&self) -> Result<usize> {
        self.p
            .model
            .grid
            .steps_of(self.s.horizon)
            .filter(|s| *s > 0)
            .ok_or(Error::HorizonNotAligned {
                horizon: self.s.horizon,
                dt: self.p.model.grid.h(),
            })
    }

    pub fn simulate(&mut self, out: &mut Out) -> Result<Vec<Check>> {
        let m = &self.p.model;
        let ui = self.control_index()?;
        let steps = self.steps()?;
        let control = ControlPath::constant(m.controls.point(ui), steps);
        let h = m.grid.h();
        let n = m.n();
        let runs: Vec<Result<Vec<f64>>> = (0..self.s.paths)
            .into_par_iter()
            .map(|i| {
                let noise = if m.is_deterministic() {
                    BrownianPath::zero(h, steps, m.q())
                } else {
                    sample_brownian(self.s.seed, i as u64, h, self.s.horizon, m.q())?
                };
                let tr = simulate_sdde(m, &self.p.history, &control, &noise, self.s.horizon)?;
                Ok((0..=steps).flat_map(|k| tr.y(k).to_vec()).collect())
            })
            .collect();
        let mut sum = vec![0.0; (steps + 1) * n];
        let mut sq = vec![0.0; (steps + 1) * n];
        for r in runs {
            for (i, v) in r?.into_iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        let np = self.s.paths as f64;
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("mean_y{i}")));
        header.extend((0..n).map(|i| format!("sd_y{i}")));
        let mut rows = Vec::with_capacity(steps + 1);
        let mut finite = true;
        for k in 0..=steps {
            let mut row = vec![k as f64 * h];
            let means: Vec<f64> = (0..n).map(|i| sum[k * n + i] / np).collect();
            let sds: Vec<f64> = (0..n)
                .map(|i| (sq[k * n + i] / np - means[i] * means[i]).max(0.0).sqrt())
                .collect();
            finite &= means.iter().chain(&sds).all(|v| v.is_finite());
            row.extend(means);
            row.extend(sds);
            rows.push(row);
        }
        let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        out.csv("simulate/trajectory.csv", &hdr, &rows)?;
        let checks = vec![check("simulate_finite", "sdde_sim", 0.0, 0.0, finite)];
        out.json(
            "simulate/summary.json",
            &json!({
                "paths": self.s.paths,
                "horizon": self.s.horizon,
                "control_index": ui,
                "final_mean": rows.last().map(|r| r[1..=n].to_vec()),
                "checks": checks,
            }),
        )?;
        Ok(checks)
    }

    pub fn lift_check(&mut self, out: &mut Out) -> Result<Vec<Check>> {
        let k = self.s.k;
        let ks = [k, 2 * k, 4 * k];
        let ui = self.control_index()?;
        let steps = self.steps()?;
        let control = ControlPath::constant(self.p.model.controls.point(ui), steps);
        let cfg = &self.s.cfg;
        let rep = verify_equivalence(
            |kk| {
                let p = cfg.build(kk)?;
                Ok((p.model, p.history))
            },
            &ks,
            &control,
            self.s.seed,
            self.s.horizon,
            self.s.paths,
        )?;
        let rows: Vec<Vec<f64>> = rep
            .levels
            .iter()
            .map(|l| vec![l.dt, l.sup_error_y, l.sup_error_segment, rep.fitted_order])
            .collect();
        out.csv(
            "lift_check/equivalence.csv",
            &["dt", "sup_error_y", "sup_error_segment", "fitted_order"],
            &rows,
        )?;
        let exact = rep
            .levels
            .iter()
            .all(|l| l.sup_error_y <= 1e-14 && l.sup_error_segment <= 1e-14);
        let name = if self.p.model.is_deterministic() {
            "lift_order_deterministic"
        } else {
            "lift_order_stochastic"
        };
        let thr = self.tol(name);
        let checks = vec![
            check("lift_monotone", "lift", rep.monotone as u8 as f64, 1.0, exact || rep.monotone),
            check(name, "lift", rep.fitted_order, thr, exact || rep.fitted_order >= thr),
        ];
        out.json(
            "lift_check/summary.json",
            &json!({ "report": rep, "exact": exact, "checks": checks }),
        )?;
        Ok(checks)
    }

    fn pack(&self, problem: &Problem) -> Result<OperatorPack> {
        OperatorPack::new(&problem.model, self.s.mu.or(self.s.cfg.scenario.mu))
    }

    pub fn operators(&mut self, out: &mut Out) -> Result<Vec<Check>> {
        let pack = self.pack(&self.p)?;
        let samples = self.s.cfg.scenario.checks.operator_samples;
        let seed = self.s.seed;
        let mut checks = Vec::new();

        let diss = dissipativity_check(&pack, samples, seed, self.tol("dissipativity_h_factor"));
        checks.push(check(
            "dissipativity",
            "operators",
            diss.max_excess,
            diss.allowance,
            diss.pass,
        ));
        let cert = weak_b_certificate(&pack, samples, derive_seed(seed, 1), self.tol("weak_b_iv"));
        for it in &cert.items {
            checks.push(check(
                &format!("weak_b_{}", it.item),
                "operators",
                it.value,
                it.threshold,
                it.pass,
            ));
        }

        let factor = self.tol("roundtrip_h_factor");
        let mut rt_rows = Vec::new();
        for kk in [self.s.k, 2 * self.s.k, 4 * self.s.k] {
            let pk = self.pack(&self.s.cfg.build(kk)?)?;
            let z = smooth_state(&pk);
            let a = roundtrip_inverse(&pk, &z)?;
            let b = roundtrip_resolvent(&pk, 1.0, &z)?;
            let h = pk.grid.h();
            checks.push(check(
                &format!("inverse_roundtrip_k{kk}"),
                "operators",
                a,
                factor * h,
                a <= factor * h,
            ));
            checks.push(check(
                &format!("resolvent_roundtrip_k{kk}"),
                "operators",
                b,
                factor * h,
                b <= factor * h,
            ));
            rt_rows.push(vec![kk as f64, h, a, b]);
        }
        let hs: Vec<f64> = rt_rows.iter().map(|r| r[1]).collect();
        let ra: Vec<f64> = rt_rows.iter().map(|r| r[2]).collect();
        let rb: Vec<f64> = rt_rows.iter().map(|r| r[3]).collect();
        let oa = crate::lift::fitted_order(&hs, &ra);
        let ob = crate::lift::fitted_order(&hs, &rb);
        checks.push(check("roundtrip_order", "operators", oa.min(ob), 0.8, oa.min(ob) >= 0.8));
        out.csv(
            "operators/roundtrip.csv",
            &["k", "h", "inverse_residual", "resolvent_residual"],
            &rt_rows,
        )?;

        let dim = pack.dim();
        let ns: Vec<usize> = (1..=dim).collect();
        let bq = pack.bq_norm_decay(&ns)?;
        let tr = pack.trace_decay(&self.p.model, &ns[..dim - 1])?;
        let tc = pack.trace_constant(&self.p.model);
        let strictly = bq[..dim - 1].windows(2).all(|w| w[1] < w[0]);
        let worst = tr
            .iter()
            .zip(&bq)
            .map(|(t, b)| if *b > 0.0 { t / (tc * b) } else { 0.0 })
            .fold(0.0f64, f64::max);
        checks.push(check("bq_strictly_decreasing", "operators", strictly as u8 as f64, 1.0, strictly));
        checks.push(check(
            "trace_bound",
            "operators",
            worst,
            1.0,
            tr.iter().zip(&bq).all(|(t, b)| *t <= tc * b * (1.0 + 1e-10) + 1e-300),
        ));
        let ev_rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                vec![
                    (i + 1) as f64,
                    pack.eigenvalues[i],
                    bq[i],
                    tr.get(i).copied().unwrap_or(0.0),
                    tc * bq[i],
                ]
            })
            .collect();
        out.csv(
            "operators/spectrum.csv",
            &["n", "lambda", "bq_norm", "trace_tail", "trace_bound"],
            &ev_rows,
        )?;

        let ce_ns = [100u64, 1000, 10_000, 1_000_000];
        let (ce, ce_mu) = match counterexample_sequence(&pack, &ce_ns) {
            Ok(v) => (v, pack.mu),
            Err(_) => (
                ce_ns
                    .iter()
                    .map(|n| counterexample_value(1.0, pack.grid.delay(), *n))
                    .collect::<Result<Vec<_>>>()?,
                1.0,
            ),
        };
        let band = self.tol("counterexample_ratio_band");
        let r1000 = ce[1].ratio;
        checks.push(check(
            "counterexample_ratio_1000",
            "operators",
            r1000,
            band,
            (r1000 - 1.0).abs() <= band,
        ));
        let trend = ce[..3].windows(2).all(|w| (w[1].ratio - 1.0).abs() < (w[0].ratio - 1.0).abs());
        checks.push(check("counterexample_trend", "operators", trend as u8 as f64, 1.0, trend));
        checks.push(check(
            "counterexample_x0_unit",
            "operators",
            ce.iter().map(|c| (c.x0_norm - 1.0).abs()).fold(0.0, f64::max),
            1e-12,
            ce.iter().all(|c| (c.x0_norm - 1.0).abs() <= 1e-12),
        ));
        let w = ce[3].witness;
        checks.push(check("global_x0_bound_fails", "operators", w, 1e3, w > 1e3));
        let ce_rows: Vec<Vec<f64>> = ce
            .iter()
            .map(|c| vec![c.n as f64, c.x0_norm, c.minus_one_sq, c.ratio, c.witness])
            .collect();
        out.csv(
            "operators/counterexample.csv",
            &["n", "x0_norm", "minus_one_sq", "ratio", "witness"],
            &ce_rows,
        )?;
        out.json(
            "operators/summary.json",
            &json!({
                "mu0": pack.mu0,
                "mu": pack.mu,
                "inverse_norm": pack.inverse_norm(),
                "dissipativity": diss,
                "certificate": cert,
                "counterexample_mu": ce_mu,
                "checks": checks,
            }),
        )?;
        Ok(checks)
    }

    pub fn hamiltonian_check(&mut self, out: &mut Out) -> Result<Vec<Check>> {
        let pack = self.pack(&self.p)?;
        let c = &self.s.cfg.scenario.checks;
        let m = &self.p.model;
        let mono = monotonicity_check(m, &self.p.cost.cost, pack.mu, c.hamiltonian_samples, self.s.seed, c.radius)?;
        let lip = lipschitz_diagnostic(
            m,
            &self.p.cost.cost,
            pack.mu,
            c.hamiltonian_samples,
            derive_seed(self.s.seed, 1),
            c.radius,
        )?;
        let thr = self.tol("lipschitz_ratio");
        let checks = vec![
            check("h_monotone", "hamiltonian", mono.violations as f64, 0.0, mono.pass),
            check("h_lipschitz", "hamiltonian", lip.max_ratio, thr, lip.max_ratio <= thr),
        ];
        out.json(
            "hamiltonian/summary.json",
            &json!({ "mu": pack.mu, "monotonicity": mono, "lipschitz": lip, "checks": checks }),
        )?;
        Ok(checks)
    }

    fn train(&mut self) -> Result<()> {
        if self.trained.is_none() {
            let v = &self.s.cfg.scenario.value;
            let m = &self.p.model;
            let start = Start::History(self.p.history.clone());
            let every = v.decision_steps.max(1);
            let train = explore_states(m, &start, v.route, v.training_states, every, 8, derive_seed(self.s.seed, 11))?;
            let test = explore_states(m, &start, v.route, v.test_states, every, 8, derive_seed(self.s.seed, 12))?;
            let opts = LsmcOptions {
                decision_steps: v.decision_steps,
                paths: v.lsmc_paths,
                mode: LsmcMode::Infinite,
                horizon: self.s.horizon,
                max_iter: v.max_iter,
                tol: v.tol,
                degree: self.s.degree,
                moments: v.moments,
                seed: derive_seed(self.s.seed, 13),
                folds: 5,
                route: v.route,
            };
            let result = lsmc_value(m, &self.p.cost, &train, &opts)?;
            let test_lifted = test
                .iter()
                .map(|s| match s {
                    Start::History(h) => lift_history(m, h),
                    Start::Lifted(x) => Ok(x.clone()),
                })
                .collect::<Result<_>>()?;
            self.trained = Some(Trained {
                result,
                test,
                test_lifted,
            });
        }
        Ok(())
    }

    pub fn value(&mut self, out: &mut Out) -> Result<Vec<Check>> {
        let ui = self.control_index()?;
        let start = Start::History(self.p.history.clone());
        let pol = FeedbackPolicy::Constant { index: ui };
        let mut est = Vec::new();
        for route in [Route::Sdde, Route::Lift] {
            let opts = EvalOptions {
                horizon: self.s.horizon,
                paths: self.s.paths,
                seed: self.s.seed,
                route,
            };
            est.push(evaluate_policy(&self.p.model, &self.p.cost, &start, &pol, &opts)?);
        }
        let rows: Vec<Vec<f64>> = est
            .iter()
            .enumerate()
            .map(|(i, e)| vec![i as f64, e.mean, e.std_error, e.tail_bound, e.c_hat, e.lambda])
            .collect();
        out.csv(
            "value/policy_value.csv",
            &["route", "mean", "std_error", "tail_bound", "c_hat", "lambda"],
            &rows,
        )?;
        let diff = (est[0].mean - est[1].mean).abs();
        let band = self.tol("route_agreement_se") * est[0].std_error.hypot(est[1].std_error) + 1e-12;
        let mut checks = vec![check("routes_agree", "value", diff, band, diff <= band)];

        let c = self.s.cfg.scenario.checks.clone();
        let mb = moment_bound_check(
            &self.p.model,
            &self.p.cost,
            &start,
            ui,
            2.0,
            c.moment_paths,
            2.0 * self.p.model.grid.delay(),
            derive_seed(self.s.seed, 2),
            Route::Lift,
            self.tol("moment_margin"),
        )?;
        checks.push(check("moment_slope", "value", mb.slope, mb.lambda + mb.margin, mb.pass));
        let mrows: Vec<Vec<f64>> = mb.times.iter().zip(&mb.moments).map(|(t, v)| vec![*t, *v]).collect();
        out.csv("value/moments.csv", &["t", "moment"], &mrows)?;

        let radius = c.radius;
        let seed = self.s.seed;
        let pack = self.pack(&self.p)?;
        self.train()?;
        let tr = self.trained.as_ref().unwrap();
        let vm = &tr.result.model;
        checks.push(check(
            "lsmc_converged",
            "value",
            tr.result.changes.last().copied().unwrap_or(f64::NAN),
            self.s.cfg.scenario.value.tol,
            tr.result.converged,
        ));
        checks.push(check("growth_constant_finite", "value", vm.c_hat, f64::INFINITY, vm.c_hat.is_finite()));
        let bc = b_continuity_check(&pack, vm, c.continuity_pairs, radius, 10, derive_seed(seed, 3))?;
        checks.push(check(
            "b_continuity_envelope",
            "value",
            bc.bins.first().map(|b| b.envelope).unwrap_or(0.0),
            bc.bins.last().map(|b| 0.5 * b.envelope).unwrap_or(0.0),
            bc.pass,
        ));
        let crow: Vec<Vec<f64>> = bc.scatter.iter().map(|p| vec![p.0, p.1]).collect();
        out.csv("value/continuity.csv", &["minus_one_distance", "value_gap"], &crow)?;
        let chrows: Vec<Vec<f64>> = tr
            .result
            .changes
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i + 1) as f64, *v])
            .collect();
        out.csv("value/lsmc_changes.csv", &["iteration", "max_change"], &chrows)?;
        out.json("value/value_model.json", vm)?;
        out.json(
            "value/summary.json",
            &json!({
                "estimates": est,
                "lsmc": {
                    "iterations": tr.result.iterations,
                    "converged": tr.result.converged,
                    "fit_rmse": tr.result.fit_rmse,
                    "cv_rmse": tr.result.cv_rmse,
                    "c_hat": vm.c_hat,
                },
                "moment_bound": {
                    "slope": mb.slope, "intercept": mb.intercept, "c_fit": mb.c_fit,
                    "lambda": mb.lambda, "margin": mb.margin,
                },
                "b_continuity": { "bins": bc.bins, "oscillation_gap": bc.oscillation_gap },
                "checks": checks,
            }),
        )?;
        Ok(checks)
    }

    pub fn dpp(&mut self, out: &mut Out) -> Result<Vec<Check>> {
        let seed = derive_seed(self.s.seed, 21);
        let factor = self.tol("dpp_se_factor");
        let v = self.s.cfg.scenario.value.clone();
        self.train()?;
        let tr = self.trained.as_ref().unwrap();
        let (m, c) = (&self.p.model, &self.p.cost);
        let run = |vm: &ValueModel| dpp_residual(m, c, vm, &tr.test, v.decision_steps, v.lsmc_paths, seed, v.route);
        let trained = run(&tr.result.model)?;
        let again = run(&tr.result.model)?;
        let zero = run(&ValueModel::zero(m.n(), v.moments, tr.result.model.basis.degree))?;
        let same = trained
            .rows
            .iter()
            .zip(&again.rows)
            .all(|(a, b)| a.residual.to_bits() == b.residual.to_bits());
        let checks = vec![
            check(
                "dpp_median_within_se",
                "value",
                trained.median_abs,
                factor * trained.median_se,
                trained.median_abs <= factor * trained.median_se,
            ),
            check(
                "dpp_negative_control",
                "value",
                zero.median_abs,
                factor * zero.median_se,
                zero.median_abs > factor * zero.median_se || exact_zero(&[zero.median_abs, trained.median_abs]),
            ),
            check("dpp_reproducible", "value", same as u8 as f64, 1.0, same),
        ];
        let rows: Vec<Vec<f64>> = trained
            .rows
            .iter()
            .zip(&zero.rows)
            .map(|(a, z)| vec![a.index as f64, a.value, a.target, a.std_error, a.residual, z.residual])
            .collect();
        out.csv(
            "dpp/residuals.csv",
            &["state", "value", "target", "std_error", "residual", "zero_model_residual"],
            &rows,
        )?;
        out.json(
            "dpp/summary.json",
            &json!({
                "median_abs": trained.median_abs,
                "median_se": trained.median_se,
                "zero_median_abs": zero.median_abs,
                "checks": checks,
            }),
        )?;
        Ok(checks)
    }

    pub fn hjb(&mut self, out: &mut Out) -> Result<Vec<Check>> {
        let pack = self.pack(&self.p)?;
        self.train()?;
        let tr = self.trained.as_ref().unwrap();
        let (m, c) = (&self.p.model, &self.p.cost);
        let vm = &tr.result.model;
        let trained = hjb_residual(m, c, &pack, vm, &tr.test_lifted)?;
        let zero = hjb_residual(
            m,
            c,
            &pack,
            &ValueModel::zero(m.n(), vm.features.moments, vm.basis.degree),
            &tr.test_lifted,
        )?;
        let checks = vec![check(
            "hjb_below_negative_control",
            "value",
            trained.median_abs,
            zero.median_abs,
            trained.median_abs < zero.median_abs || exact_zero(&[zero.median_abs, trained.median_abs]),
        )];
        let rows: Vec<Vec<f64>> = trained
            .rows
            .iter()
            .zip(&zero.rows)
            .map(|(a, z)| {
                vec![a.index as f64, a.value, a.drift_pairing, a.hamiltonian, a.residual, z.residual]
            })
            .collect();
        out.csv(
            "hjb/residuals.csv",
            &["state", "value", "drift_pairing", "hamiltonian", "residual", "zero_model_residual"],
            &rows,
        )?;
        out.json(
            "hjb/summary.json",
            &json!({
                "mu": trained.mu,
                "median_abs": trained.median_abs,
                "zero_median_abs": zero.median_abs,
                "checks": checks,
            }),
        )?;
        Ok(checks)
    }
}

/// `x0 = 1`, `x1(xi) = sin(pi (xi + d) / d)` in every component.
/// `V = 0` already solves the problem, so the negative control has nothing to reject.
fn exact_zero(v: &[f64]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

fn smooth_state(pack: &OperatorPack) -> LiftedState {
    let grid = &pack.grid;
    let d = grid.delay();
    let n = pack.n;
    let mut x = LiftedState::zeros(n, grid.len());
    x.x0.iter_mut().for_each(|v| *v = 1.0);
    for j in 0..grid.len() {
        let s = (std::f64::consts::PI * (grid.node(j) + d) / d).sin();
        for i in 0..n {
            x.x1[j * n + i] = s;
        }
    }
    x
}
