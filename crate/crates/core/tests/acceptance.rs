//! Acceptance criteria 1–10. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line; exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use voterlab::dynamics::{
    closed_form_bipartite, consensus_diameter, detect_consensus, limit_state, mean_value, solve_continuum,
    solve_finite, uniform_times, volterra_residual, InitialCondition, Method, SolverOptions, StateVector,
};
use voterlab::experiments::{
    consensus_proximity, convergence_study, random_consensus_mc, ExperimentConfig, ProximityStatus,
};
use voterlab::graph::{discretize_kernel, laplacian, pixel_kernel, sample_w_random, WeightedGraph};
use voterlab::kernel::{direct_sum, Kernel};
use voterlab::structure::{find_maximal_twin_sets, is_connected, necessary_condition, predict_limit, DEFAULT_PROP_TOL};

/// A trajectory some criterion relied on, replayed on fine grids for criterion 9.
struct Recipe {
    label: String,
    kernel: Kernel,
    g: Option<InitialCondition>,
    u0: Option<StateVector>,
    n: usize,
    horizon: f64,
}

impl Recipe {
    fn new(label: impl Into<String>, kernel: &Kernel, g: &InitialCondition, n: usize, horizon: f64) -> Self {
        Self { label: label.into(), kernel: kernel.clone(), g: Some(g.clone()), u0: None, n, horizon }
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn bipartite_g() -> InitialCondition {
    InitialCondition::step(vec![0.0, 1.0 / 6.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], vec![1.0, -1.0, 0.5, -0.5]).unwrap()
}

fn bipartite() -> Kernel {
    Kernel::bipartite(1.0 / 3.0).unwrap()
}

fn golden_matrices(_: &mut Vec<Recipe>) -> Outcome {
    let d6_printed = [
        [-3.0, -1.0, 1.0, 1.0, 1.0, 1.0],
        [-1.0, -3.0, 1.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, -5.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, 1.0, -5.0, 1.0, 1.0],
        [1.0, 1.0, 1.0, 1.0, -5.0, 1.0],
        [1.0, 1.0, 1.0, 1.0, 1.0, -5.0],
    ];
    let d5_printed = [
        [-2.0 / 3.0, -1.0 / 3.0, 1.0, 1.0, 1.0],
        [-1.0 / 3.0, -8.0 / 3.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, -4.0, 1.0, 1.0],
        [1.0, 1.0, 1.0, -4.0, 1.0],
        [1.0, 1.0, 1.0, 1.0, -4.0],
    ];
    let d6 = laplacian(&discretize_kernel(&bipartite(), 6).unwrap());
    let d5 = laplacian(&discretize_kernel(&bipartite(), 5).unwrap());
    let mut worst6: f64 = 0.0;
    for (i, row) in d6_printed.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst6 = worst6.max((d6.get(i, j) - v / 6.0).abs());
        }
    }
    let mut worst5: f64 = 0.0;
    for (i, row) in d5_printed.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if (i, j) != (0, 0) {
                worst5 = worst5.max((d5.get(i, j) - v / 5.0).abs());
            }
        }
    }
    let corner = (d5.get(0, 0) + 8.0 / 15.0).abs();
    outcome(
        worst6 <= 1e-12 && worst5 <= 1e-12 && corner <= 1e-12,
        format!("max |ΔD6|={worst6:.1e}, max |ΔD5| off (1,1)={worst5:.1e}, |D5(1,1)+8/15|={corner:.1e}"),
    )
}

fn closed_form_agreement(recipes: &mut Vec<Recipe>) -> Outcome {
    let (k, g, n) = (bipartite(), bipartite_g(), 300);
    let times = uniform_times(10.0, 20);
    let traj = solve_continuum(&k, &g, n, &times, &SolverOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for (t, s) in times.iter().zip(traj.states()) {
        for (i, v) in s.values().iter().enumerate() {
            let x = (i as f64 + 0.5) / n as f64;
            worst = worst.max((v - closed_form_bipartite(1.0 / 3.0, &g, x, *t).unwrap()).abs());
        }
    }
    recipes.push(Recipe::new("closed-form n=300", &k, &g, n, 10.0));
    outcome(worst <= 1e-6, format!("max midpoint error {worst:.2e} over t∈{{0,0.5,…,10}}"))
}

/// 24 random step kernels (every other one nonnegative) with random affine initial data.
fn random_suite() -> Vec<(Kernel, InitialCondition, usize, bool)> {
    let mut r = rng(2024);
    (0..24)
        .map(|i| {
            use rand::Rng;
            let graphon = i % 2 == 0;
            let m = r.gen_range(1..=8);
            let k = step(random_step(&mut r, m, None, if graphon { 0.0 } else { -1.0 }, 0.2));
            let pieces = r.gen_range(1..=6);
            let g = random_initial(&mut r, pieces, true);
            let n = r.gen_range(2..=64);
            (k, g, n, graphon)
        })
        .collect()
}

const SUITE_HORIZON: f64 = 3.0;

fn conservation(recipes: &mut Vec<Recipe>) -> Outcome {
    let mut worst: f64 = 0.0;
    let suite = random_suite();
    for (idx, (k, g, n, _)) in suite.iter().enumerate() {
        for method in [Method::Expm, Method::Rk] {
            let traj = solve_continuum(k, g, *n, &uniform_times(SUITE_HORIZON, 30), &SolverOptions::with_method(method)).unwrap();
            for s in traj.states() {
                worst = worst.max((mean_value(s) - g.mean()).abs());
            }
        }
        recipes.push(Recipe::new(format!("suite #{idx} n={n}"), k, g, *n, SUITE_HORIZON));
    }
    outcome(worst <= 1e-10, format!("{} kernels × 2 solvers, max mean drift {worst:.2e}", suite.len()))
}

fn boundedness(_: &mut Vec<Recipe>) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for (k, g, n, graphon) in random_suite() {
        if !graphon {
            continue;
        }
        count += 1;
        for method in [Method::Expm, Method::Rk] {
            let traj = solve_continuum(&k, &g, n, &uniform_times(SUITE_HORIZON, 30), &SolverOptions::with_method(method)).unwrap();
            for s in traj.states() {
                worst = worst.max(s.sup_norm() - g.sup_norm());
            }
        }
    }
    outcome(worst <= 1e-9, format!("{count} nonnegative kernels, max (‖u(t)‖∞ − ‖g‖∞) = {worst:.2e}"))
}

fn bipartite_config(extra: serde_json::Value) -> ExperimentConfig {
    let mut cfg = serde_json::json!({
        "kernel": {"type": "bipartite", "r": 1.0 / 3.0},
        "initial": bipartite_g().to_spec(),
    });
    for (key, v) in extra.as_object().unwrap() {
        cfg[key] = v.clone();
    }
    ExperimentConfig::from_json(&cfg.to_string()).unwrap()
}

fn convergence_ladder(_: &mut Vec<Recipe>) -> Outcome {
    let cfg = bipartite_config(serde_json::json!({"ladder": [8, 16, 32, 64, 128], "horizon": 10.0, "time_step": 0.5}));
    let table = convergence_study(&cfg).unwrap();
    let errs: Vec<f64> = table.rows.iter().map(|r| r.sup_l2_error).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    outcome(decreasing && table.reference.starts_with("closed_form"), format!("sup L2 errors [{}] vs {}", shown.join(", "), table.reference))
}

const PROXIMITY_HORIZON: f64 = 25.0;

fn key_theorem_proximity(recipes: &mut Vec<Recipe>) -> Outcome {
    let cfg = bipartite_config(serde_json::json!({
        "ladder": [16, 32, 64, 128, 256], "horizon": PROXIMITY_HORIZON, "time_step": 0.1,
        "eps": 0.01, "c": 0.1, "window": 1.0
    }));
    let report = consensus_proximity(&cfg).unwrap();
    recipes.push(Recipe::new("proximity n=256", &bipartite(), &bipartite_g(), 256, PROXIMITY_HORIZON));
    let top = report.rows.iter().find(|r| r.n == 256);
    let shown: Vec<String> = report.rows.iter().map(|r| format!("{}:{:.4}", r.n, r.max_exceptional_measure)).collect();
    outcome(
        report.status == ProximityStatus::Ok && top.is_some_and(|r| r.max_exceptional_measure < 0.01),
        format!("T(eps)={:?}, max exceptional measure per n [{}] (need < c² = 0.01 at n=256)", report.consensus_time, shown.join(", ")),
    )
}

fn four_cycle() -> Kernel {
    pixel_kernel(
        &WeightedGraph::from_rows(&[
            vec![0.0, 1.0, -1.0, 0.0],
            vec![1.0, 0.0, 0.0, -1.0],
            vec![-1.0, 0.0, 0.0, 1.0],
            vec![0.0, -1.0, 1.0, 0.0],
        ])
        .unwrap(),
    )
}

fn structure_suite(recipes: &mut Vec<Recipe>) -> Outcome {
    let k = four_cycle();
    let connected = is_connected(&k);
    let twin = find_maximal_twin_sets(&k, DEFAULT_PROP_TOL).is_twin_kernel();
    let tent = InitialCondition::affine(vec![0.0, 0.5, 1.0], vec![-1.0, 1.0], vec![4.0, -4.0]).unwrap();
    let mut drift: f64 = 0.0;
    let mut consensus = false;
    for n in [4, 40] {
        let traj = solve_continuum(&k, &tent, n, &uniform_times(20.0, 200), &SolverOptions::default()).unwrap();
        for s in traj.states() {
            drift = drift.max(max_abs_diff(s.values(), traj.initial().values()));
        }
        consensus |= detect_consensus(&traj, 1e-3).is_some();
        recipes.push(Recipe::new(format!("4-cycle tent n={n}"), &k, &tent, n, 20.0));
    }

    let one = Kernel::constant(1.0).unwrap();
    let halves = direct_sum(vec![(0.5, one.clone()), (0.5, one)]).unwrap();
    let g = InitialCondition::affine(vec![0.0, 0.5, 1.0], vec![0.0, 0.6], vec![0.4, 0.5]).unwrap();
    let nc = necessary_condition(&halves, &g);
    let gap = (nc.values[1] - nc.values[0]).abs();
    let traj = solve_continuum(&halves, &g, 64, &uniform_times(20.0, 40), &SolverOptions::default()).unwrap();
    let diam = consensus_diameter(traj.last());
    recipes.push(Recipe::new("two components n=64", &halves, &g, 64, 20.0));
    outcome(
        connected && twin && drift <= 1e-8 && !consensus && !nc.satisfied && diam > 0.5 * gap,
        format!(
            "4-cycle connected={connected} twin-kernel={twin} max drift {drift:.1e} consensus={consensus}; \
             two components satisfied={} gap {gap:.3} diameter(20) {diam:.3}",
            nc.satisfied
        ),
    )
}

fn twin_prediction(recipes: &mut Vec<Recipe>) -> Outcome {
    use rand::Rng;
    let mut r = rng(88);
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    let mut count = 0;
    let n = 32;
    while count < 12 {
        let m = r.gen_range(1..=8);
        let k = step(random_step(&mut r, m, None, 0.0, 0.3));
        if !is_connected(&k) {
            continue;
        }
        count += 1;
        let pieces = r.gen_range(1..=5);
        let g = random_initial(&mut r, pieces, true);
        let horizon = settle_time(&laplacian(&discretize_kernel(&k, n).unwrap()), 12.0);
        let traj = solve_continuum(&k, &g, n, &uniform_times(horizon, 40), &SolverOptions::default()).unwrap();
        let lim = limit_state(&traj, 0.25).unwrap();
        all_converged &= lim.converged;
        let pred = predict_limit(&k, &g).unwrap();
        let expected = pred.state(n).unwrap();
        worst = worst.max(max_abs_diff(lim.state.values(), expected.values()));
        worst = worst.max(expected.values().iter().fold(0.0, |m, v| m.max((v - g.mean()).abs())));
        recipes.push(Recipe::new(format!("twin graphon #{count} T={horizon:.1}"), &k, &g, n, horizon));
    }
    outcome(
        all_converged && worst <= 1e-4,
        format!("{count} connected graphons at n={n}: converged={all_converged}, max |u* − ∫g| {worst:.2e}"),
    )
}

const FINE_STEP: f64 = 0.01;
const ROUNDOFF_FLOOR: f64 = 1e-11;

fn volterra_oracle(recipes: &[Recipe]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_ratio = f64::INFINITY;
    let mut failures = Vec::new();
    for rec in recipes {
        let steps = (rec.horizon / FINE_STEP).ceil() as usize;
        let residual = |steps: usize| {
            let times = uniform_times(rec.horizon, steps);
            let traj = match (&rec.g, &rec.u0) {
                (Some(g), _) => solve_continuum(&rec.kernel, g, rec.n, &times, &SolverOptions::default()).unwrap(),
                (None, Some(u0)) => {
                    let graph = discretize_kernel(&rec.kernel, rec.n).unwrap();
                    solve_finite(&graph, u0, &times, &SolverOptions::default()).unwrap()
                }
                _ => unreachable!(),
            };
            volterra_residual(&rec.kernel, &traj).unwrap()
        };
        let (coarse, fine) = (residual(steps), residual(2 * steps));
        let ratio = if coarse <= ROUNDOFF_FLOOR { f64::INFINITY } else { coarse / fine };
        worst = worst.max(coarse);
        worst_ratio = worst_ratio.min(ratio);
        if coarse > 1e-4 || ratio < 3.0 {
            failures.push(format!("{} ({coarse:.2e}, ratio {ratio:.2})", rec.label));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} trajectories at Δt={FINE_STEP} and Δt/2: max residual {worst:.2e}, min halving ratio {worst_ratio:.2}{}",
            recipes.len(),
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

fn monte_carlo(recipes: &mut Vec<Recipe>) -> Outcome {
    let cfg = ExperimentConfig::from_json(
        &serde_json::json!({
            "kernel": {"type": "ws_mix", "p": 0.2, "base": {"type": "constant", "c": 1.0}},
            "initial": {"boundaries": [0.0, 0.5, 1.0], "values": [0.5, -0.5]},
            "ladder": [32, 64, 128, 256], "horizon": 10.0, "time_step": 0.1,
            "trials": 50, "seed": 1000, "eps": 0.01, "c": 0.1
        })
        .to_string(),
    )
    .unwrap();
    let report = random_consensus_mc(&cfg).unwrap();
    let fractions: Vec<f64> = report.summary.iter().map(|s| s.success_fraction).collect();
    let non_decreasing = fractions.windows(2).all(|w| w[1] >= w[0]);
    let top = *fractions.last().unwrap();
    let literal = report.chebyshev.iter().map(|c| c.randcond_literal.abs()).fold(0.0, f64::max);
    let violations: usize = report.summary.iter().map(|s| s.chebyshev_violations).sum();

    let k = cfg.kernel().unwrap();
    let g = cfg.initial_condition().unwrap();
    for trial in 0..3 {
        let graph = sample_w_random(&k, 64, cfg.seed + trial).unwrap();
        recipes.push(Recipe {
            label: format!("W-random n=64 seed {}", cfg.seed + trial),
            kernel: pixel_kernel(&graph),
            g: None,
            u0: Some(voterlab::dynamics::average_initial(&g, 64).unwrap()),
            n: 64,
            horizon: cfg.horizon,
        });
    }
    outcome(
        non_decreasing && top >= 0.9 && literal <= 1e-12 && violations == 0,
        format!(
            "success fractions {fractions:?} (n = 32..256, 50 trials), max |literal randcond| {literal:.1e}, \
             Chebyshev violations {violations}"
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, fn(&mut Vec<Recipe>) -> Outcome, Option<Duration>);
    let criteria: [Criterion; 9] = [
        (1, "golden matrices", golden_matrices, Some(Duration::from_secs(1))),
        (2, "closed-form agreement", closed_form_agreement, Some(Duration::from_secs(30))),
        (3, "conservation", conservation, Some(Duration::from_secs(60))),
        (4, "graphon boundedness", boundedness, None),
        (5, "convergence ladder", convergence_ladder, None),
        (6, "key-theorem proximity", key_theorem_proximity, Some(Duration::from_secs(120))),
        (7, "structure suite", structure_suite, None),
        (8, "twin prediction", twin_prediction, None),
        (10, "monte carlo", monte_carlo, Some(Duration::from_secs(300))),
    ];
    let mut recipes = Vec::new();
    let mut results = Vec::new();
    for (id, name, run, limit) in criteria {
        let start = Instant::now();
        let mut out = run(&mut recipes);
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                out.pass = false;
                out.detail.push_str(&format!("; over time budget {limit:?}"));
            }
        }
        results.push((id, name, out, elapsed));
    }
    let start = Instant::now();
    let oracle = volterra_oracle(&recipes);
    results.push((9, "solver oracle", oracle, start.elapsed()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, out, elapsed) in &results {
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {name:<22} {verdict}  {} [{:.2}s]", out.detail, elapsed.as_secs_f64());
        failed += usize::from(!out.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
