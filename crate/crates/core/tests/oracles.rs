//! Hand-derived values frozen against independent evaluations.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use sdde_lift::config::{Config, Problem};
use sdde_lift::hamiltonian::{Hamiltonian, HamiltonianQuery};
use sdde_lift::lift::{lift_history, semigroup_apply, structural_state, verify_equivalence, LiftedState};
use sdde_lift::model::{
    admissible_growth_k, rho_zero, DelayKernelGrid, GrowthBound, HistoryPair, KernelShape,
    RunningCost, SegmentGrid,
};
use sdde_lift::operators::{mu_zero, OperatorPack};
use sdde_lift::rng::{sample_brownian, BrownianPath};
use sdde_lift::scenarios::{advertising_model, default_history, AdvertisingParams};
use sdde_lift::sim::{delay_integral, simulate_sdde, ControlPath};
use sdde_lift::value::{
    evaluate_policy, lsmc_value, moment_bound_check, EvalOptions, FeedbackPolicy, LsmcMode,
    LsmcOptions, Route, Start,
};

fn linear(model: &str, extra: &str, k: usize) -> Problem {
    let text = format!(
        "[scenario]\nname = \"oracle\"\n{extra}\n[grid]\ndelay = 1.0\nk = {k}\n\n\
         [control]\nlower = [0.0]\nupper = [1.0]\npoints = [3]\n\n\
         [model]\nkind = \"linear\"\n{model}\n"
    );
    Config::from_toml(&text).unwrap().build(k).unwrap()
}

fn annuity(rho: f64, t: f64) -> f64 {
    (1.0 - (-rho * t).exp()) / rho
}

#[test]
fn rho_zero_hand_values() {
    assert_eq!(rho_zero(1.0, 1.0), 1.5);
    assert_eq!(rho_zero(2.0, 3.0), 18.0);
}

#[test]
fn growth_exponent_hand_values() {
    match admissible_growth_k(1.0, 1.0) {
        GrowthBound::Below(k) => assert_relative_eq!(k, 2.0 / 3.0, epsilon = 1e-12),
        other => panic!("{other:?}"),
    }
    // k + k(k-1)/2 = 10  <=>  k^2 + k - 20 = 0.
    assert_relative_eq!(admissible_growth_k(1.0, 10.0).value(), 4.0, epsilon = 1e-12);
}

#[test]
fn delay_integrals_by_hand() {
    let g = SegmentGrid::new(2.0, 10).unwrap();
    let one = DMatrix::from_element(1, 1, 1.0);
    let k = DelayKernelGrid::from_shape(&g, &KernelShape::Constant { value: 1.0 }, &one);
    assert_relative_eq!(delay_integral(&g, &k, &vec![3.0; g.len()]).unwrap()[0], 6.0, epsilon = 1e-12);
    let g = SegmentGrid::new(1.0, 7).unwrap();
    let k = DelayKernelGrid::from_shape(&g, &KernelShape::Linear { intercept: 0.0, slope: 1.0 }, &one);
    assert_relative_eq!(delay_integral(&g, &k, &vec![1.0; g.len()]).unwrap()[0], -0.5, epsilon = 1e-12);
}

#[test]
fn constant_lag_term_integrates_linearly() {
    let p = linear("p1 = { shape = \"constant\", value = 1.0 }\np1_coeff = [1.0]", "", 8);
    let u = [0.5];
    let h = HistoryPair::constant(&p.model.grid, &[2.0], &[0.0], &u);
    let steps = 16;
    let tr = simulate_sdde(
        &p.model,
        &h,
        &ControlPath::constant(&u, steps),
        &BrownianPath::zero(p.model.grid.h(), steps, 1),
        2.0,
    )
    .unwrap();
    for (k, t) in tr.times().iter().enumerate() {
        assert_relative_eq!(tr.y(k)[0], 2.0 + 0.5 * t, epsilon = 1e-12);
    }
}

#[test]
fn first_increment_variance_and_independence() {
    let dt = 0.01;
    let n = 100_000;
    let first: Vec<f64> = (0..n)
        .map(|i| sample_brownian(17, i, dt, dt, 1).unwrap().increments[0])
        .collect();
    let var = first.iter().map(|v| v * v).sum::<f64>() / n as f64;
    assert!((0.97 * dt..=1.03 * dt).contains(&var), "{var}");

    let a = sample_brownian(17, 0, dt, 100.0, 1).unwrap();
    let b = sample_brownian(17, 1, dt, 100.0, 1).unwrap();
    let dot: f64 = a.increments.iter().zip(&b.increments).map(|(x, y)| x * y).sum();
    let na: f64 = a.increments.iter().map(|x| x * x).sum();
    let nb: f64 = b.increments.iter().map(|x| x * x).sum();
    assert_eq!(a.increments.len(), 10_000);
    assert!((dot / (na * nb).sqrt()).abs() < 0.01);
}

#[test]
fn structural_second_component_by_hand() {
    let p = linear("p1 = { shape = \"constant\", value = 1.0 }\np1_coeff = [1.0]", "", 10);
    let g = &p.model.grid;
    let x = structural_state(&p.model, &[0.0], &vec![5.0; g.len()], &vec![0.3; g.len()]).unwrap();
    for j in 0..g.len() {
        assert_relative_eq!(x.x1[j], 0.3 * (g.node(j) + 1.0), epsilon = 1e-12);
    }
    let p = linear("a1 = { shape = \"constant\", value = 1.0 }\na1_coeff = [1.0]", "", 10);
    let x = structural_state(&p.model, &[0.0], &vec![2.0; g.len()], &vec![0.7; g.len()]).unwrap();
    for j in 0..g.len() {
        assert_relative_eq!(x.x1[j], 2.0 * (g.node(j) + 1.0), epsilon = 1e-12);
    }
}

#[test]
fn semigroup_composes() {
    let g = SegmentGrid::new(1.0, 16).unwrap();
    let mut x = LiftedState::zeros(1, g.len());
    x.x0[0] = 0.4;
    for j in 0..g.len() {
        x.x1[j] = (3.0 * g.node(j)).cos() * (g.node(j) + 1.0);
    }
    let h = g.h();
    for (s, t) in [(1, 2), (5, 7), (3, 20)] {
        let two = semigroup_apply(&g, s as f64 * h, &semigroup_apply(&g, t as f64 * h, &x).unwrap()).unwrap();
        let one = semigroup_apply(&g, (s + t) as f64 * h, &x).unwrap();
        assert!((two.x0[0] - one.x0[0]).abs() <= 1e-12);
        for (a, b) in two.x1.iter().zip(&one.x1) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn mu_zero_hand_values() {
    let zero = linear("", "", 16);
    assert_eq!(mu_zero(&zero.model).unwrap(), 1.0);
    let p = linear("a0 = [-1.0]\na1 = { shape = \"constant\", value = -0.5 }\na1_coeff = [1.0]", "", 16);
    assert_relative_eq!(mu_zero(&p.model).unwrap(), 2.0, epsilon = 1e-12);
    let p = linear("a1 = { shape = \"constant\", value = 3.0 }\na1_coeff = [1.0]", "", 16);
    assert_relative_eq!(mu_zero(&p.model).unwrap(), 4.5, epsilon = 1e-12);
}

#[test]
fn weak_inner_product_polarizes() {
    let (m, _) = advertising_model(&AdvertisingParams::default(), 16).unwrap();
    let pack = OperatorPack::new(&m, None).unwrap();
    let x = DVector::from_fn(pack.dim(), |i, _| (i as f64 * 0.37).sin());
    let y = DVector::from_fn(pack.dim(), |i, _| (i as f64 * 0.11).cos());
    let via_b = pack.inner(&pack.apply_b(&x), &y);
    let via_g = pack.inner(&pack.apply_g(&x), &pack.apply_g(&y));
    let direct = pack.minus_one_inner(&x, &y);
    assert!((via_b - via_g).abs() <= 1e-10 * (1.0 + via_g.abs()));
    assert!((direct - via_g).abs() <= 1e-10 * (1.0 + via_g.abs()));
}

#[test]
fn tail_norms_match_direct_computation() {
    let (m, _) = advertising_model(&AdvertisingParams::default(), 16).unwrap();
    let pack = OperatorPack::new(&m, None).unwrap();
    for n in [1, 4, 10, 16] {
        let a = pack.bq_norm(n).unwrap();
        let b = pack.bq_norm_direct(n).unwrap();
        assert!((a - b).abs() <= 1e-10 * pack.eigenvalues[0], "{n}: {a} {b}");
    }
}

#[test]
fn state_enters_the_hamiltonian_only_through_the_cost() {
    let (m, _) = advertising_model(&AdvertisingParams::default(), 8).unwrap();
    let cost = RunningCost::constant(0.0);
    let h = Hamiltonian::new(&m, &cost, 1.5).unwrap();
    let mut x = LiftedState::zeros(1, m.grid.len());
    let mut r = LiftedState::zeros(1, m.grid.len());
    for j in 0..m.grid.len() {
        x.x1[j] = (j as f64).sin();
        r.x1[j] = 0.2 * j as f64 - 1.0;
    }
    x.x0[0] = 0.8;
    r.x0[0] = -0.6;
    let z = DMatrix::from_element(1, 1, 0.3);
    let sup_part = |x: &LiftedState| {
        let q = HamiltonianQuery::new(x.clone(), r.clone(), z.clone()).unwrap();
        h.eval(&q) + 1.5 * x.inner(&r, &m.grid)
    };
    assert!((sup_part(&x) - sup_part(&x.scaled(2.0))).abs() <= 1e-12);
}

#[test]
fn mean_ode_oracle_for_additive_noise() {
    // dy = int p1 u dt + s0 dW with p1 = 1, d = 1, u = 1/2: E y(t) = eta0 + t / 2, l = y.
    let text = "[scenario]\nname = \"oracle\"\n[grid]\ndelay = 1.0\nk = 16\n[control]\nlower = [0.0]\n\
                upper = [1.0]\npoints = [3]\n[model]\nkind = \"linear\"\np1 = { shape = \"constant\", value = 1.0 }\n\
                p1_coeff = [1.0]\ns0 = [0.3]\n[cost]\nrho = 4.0\nutility = { kind = \"linear\", coef = [-1.0] }\n";
    let q = Config::from_toml(text).unwrap().build(16).unwrap();
    let hist = HistoryPair::constant(&q.model.grid, &[1.0], &[1.0], &[0.5]);
    let opts = EvalOptions {
        horizon: 2.0,
        paths: 10_000,
        seed: 3,
        route: Route::Sdde,
    };
    let est = evaluate_policy(&q.model, &q.cost, &Start::History(hist), &FeedbackPolicy::Constant { index: 1 }, &opts)
        .unwrap();
    let (rho, t) = (4.0f64, 2.0f64);
    let ramp = (1.0 - (-rho * t).exp() * (1.0 + rho * t)) / (rho * rho);
    let exact = annuity(rho, t) + 0.5 * ramp;
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{} +- {} vs {exact}", est.mean, est.std_error);
    assert_relative_eq!(exact, 0.281_071_785_5, epsilon = 1e-9);
}

#[test]
fn routes_agree_on_shared_noise() {
    let (m, c) = advertising_model(&AdvertisingParams::default(), 16).unwrap();
    let start = Start::History(default_history(&m));
    let pol = FeedbackPolicy::Constant { index: 2 };
    let run = |route| {
        let opts = EvalOptions {
            horizon: 2.0,
            paths: 200,
            seed: 5,
            route,
        };
        evaluate_policy(&m, &c, &start, &pol, &opts).unwrap().mean
    };
    let steps = m.grid.steps_of(2.0).unwrap();
    let eq = verify_equivalence(
        |k| {
            let (m, _) = advertising_model(&AdvertisingParams::default(), k)?;
            let h = default_history(&m);
            Ok((m, h))
        },
        &[16],
        &ControlPath::constant(m.controls.point(2), steps),
        5,
        2.0,
        200,
    )
    .unwrap();
    // l is 1-Lipschitz in y and the discount integrates to less than one.
    let gap = (run(Route::Sdde) - run(Route::Lift)).abs();
    assert!(gap <= 2.0 * eq.levels[0].sup_error_y, "{gap} vs {}", eq.levels[0].sup_error_y);
}

#[test]
fn state_free_cost_gives_a_flat_value() {
    let text = "[scenario]\nname = \"flat\"\n[grid]\ndelay = 1.0\nk = 8\n[control]\nlower = [0.0]\n\
                upper = [1.0]\npoints = [3]\n[model]\nkind = \"linear\"\na0 = [-0.5]\ns0 = [0.2]\n\
                [cost]\nrho = 2.0\ncontrol = { constant = 1.0, quadratic = 1.0 }\n";
    let p = Config::from_toml(text).unwrap().build(8).unwrap();
    let g = &p.model.grid;
    let states: Vec<Start> = [0.0, 1.0, -2.0, 3.0]
        .iter()
        .flat_map(|e| {
            [0.0, 0.5]
                .iter()
                .map(move |u| Start::History(HistoryPair::constant(g, &[*e], &[-e], &[*u])))
        })
        .collect();
    let opts = LsmcOptions {
        decision_steps: 4,
        paths: 8,
        mode: LsmcMode::Finite,
        horizon: 2.0,
        degree: 0,
        moments: 0,
        route: Route::Sdde,
        ..Default::default()
    };
    let r = lsmc_value(&p.model, &p.cost, &states, &opts).unwrap();
    let x = lift_history(&p.model, &HistoryPair::constant(g, &[7.0], &[1.0], &[0.0])).unwrap();
    assert_relative_eq!(r.model.predict(g, &x), annuity(2.0, 2.0), epsilon = 1e-10);
}

#[test]
fn initial_moment_scales_with_the_state() {
    let (m, c) = advertising_model(&AdvertisingParams::default(), 16).unwrap();
    let h = default_history(&m);
    let double = HistoryPair {
        eta0: h.eta0.iter().map(|v| 2.0 * v).collect(),
        eta1: h.eta1.iter().map(|v| 2.0 * v).collect(),
        delta: h.delta.clone(),
    };
    let zero_control = HistoryPair {
        delta: vec![0.0; h.delta.len()],
        ..h.clone()
    };
    let zero_double = HistoryPair {
        delta: vec![0.0; h.delta.len()],
        ..double
    };
    let mom = |h: &HistoryPair| {
        moment_bound_check(&m, &c, &Start::History(h.clone()), 0, 2.0, 4, 1.0, 0, Route::Lift, 0.1)
            .unwrap()
            .moments[0]
    };
    assert_relative_eq!(mom(&zero_double) / mom(&zero_control), 4.0, epsilon = 1e-12);
}

#[test]
fn frozen_capital_earns_the_annuity() {
    let text = "[scenario]\nname = \"ttb\"\n[scenario.history]\neta0 = [2.0]\neta1 = [2.0]\ndelta = [0.0]\n\
                [grid]\ndelay = 1.0\nk = 8\n[control]\nlower = [0.0]\nupper = [1.0]\npoints = [3]\n\
                [model]\nkind = \"time_to_build\"\nb0 = 0.0\nsigma0 = 0.0\nsigma_u = 0.0\np1 = { shape = \"zero\" }\n\
                [cost]\nrho = 2.0\ncontrol = { quadratic = 0.5 }\nutility = { kind = \"linear\", coef = [1.0] }\n";
    let p = Config::from_toml(text).unwrap().build(8).unwrap();
    let opts = EvalOptions {
        horizon: 2.0,
        paths: 1,
        seed: 0,
        route: Route::Sdde,
    };
    let v = evaluate_policy(&p.model, &p.cost, &Start::History(p.history.clone()), &FeedbackPolicy::Constant { index: 0 }, &opts)
        .unwrap();
    assert_relative_eq!(v.mean, -2.0 * annuity(2.0, 2.0), epsilon = 1e-12);
}

#[test]
fn filled_lag_builds_capital_linearly() {
    let text = "[scenario]\nname = \"ttb\"\n[grid]\ndelay = 1.0\nk = 8\n[control]\nlower = [0.0]\nupper = [1.0]\n\
                points = [3]\n[model]\nkind = \"time_to_build\"\nb0 = 1.0\nsigma0 = 0.0\nsigma_u = 0.0\n\
                p1 = { shape = \"constant\", value = 1.0 }\n[cost]\nrho = 2.0\n";
    let p = Config::from_toml(text).unwrap().build(8).unwrap();
    let u = [0.5];
    let h = HistoryPair::constant(&p.model.grid, &[1.0], &[1.0], &u);
    let steps = 24;
    let tr = simulate_sdde(
        &p.model,
        &h,
        &ControlPath::constant(&u, steps),
        &BrownianPath::zero(p.model.grid.h(), steps, 1),
        3.0,
    )
    .unwrap();
    for (k, t) in tr.times().iter().enumerate() {
        assert_relative_eq!(tr.y(k)[0], 1.0 + 0.5 * 2.0 * t, epsilon = 1e-12);
    }
}
