//! One pass/fail line per acceptance criterion. Run with `--nocapture` to
//! see the lines; the test fails if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refsafe::barrier::*;
use refsafe::filters::*;
use refsafe::models::*;
use refsafe::sim::*;
use refsafe::solvers::*;

const VARIANTS: usize = 20;
const ROBUST_RUNTIME_S: f64 = 60.0;
const LYAP_STEP_TOL: f64 = 1e-6;
const TERMINAL_E_X: f64 = 1e-2;
const TERMINAL_E_U: f64 = 1e-1;
const VDOT_GAP: f64 = 1e-4;
const VDOT_ORDER: f64 = 1.8;
const SOCP_GAP: f64 = 1e-4;
const SOCP_KKT: f64 = 1e-6;
const QP_TOL: f64 = 1e-10;
const SOLVER_RUNTIME_S: f64 = 10.0;
const ALGEBRA_TOL: f64 = 1e-10;
const RK4_ORDER: f64 = 3.9;
const LYAP_RESIDUAL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-5;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn line(id: usize, pass: bool, detail: String) -> Outcome {
    println!("criterion {id:>2}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass, detail }
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Benchmark geometry with the plant, prior, start and goal perturbed.
fn random_variant(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    let lambda: Vec<f64> = (0..3).map(|_| rng.gen_range(0.5..1.3)).collect();
    cfg.plant.mismatch = ScalarOrMatrix::Scalar(rng.gen_range(0.8..1.5));
    cfg.adaptation.lambda_prior = lambda.iter().map(|l| l * rng.gen_range(0.95..1.05)).collect();
    cfg.plant.lambda = lambda;
    for k in 0..3 {
        cfg.initial.position[k] += rng.gen_range(-1.0..1.0);
        cfg.policy.goal[k] += rng.gen_range(-1.0..1.0);
    }
    cfg
}

fn forward_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut scenarios = vec![("benchmark".to_string(), ScenarioConfig::default())];
    for i in 0..VARIANTS {
        scenarios.push((format!("variant {i}"), random_variant(&mut rng)));
    }
    let mut failures = Vec::new();
    let (mut worst_h, mut worst_t) = (f64::INFINITY, 0.0_f64);
    for (name, cfg) in &scenarios {
        let sphere = cfg.sphere().unwrap();
        assert!(sphere.evaluate(&cfg.initial_state()) > 0.0);
        let t0 = Instant::now();
        let res = run_scenario(&cfg.with_filter(FilterKind::RobustSocp));
        let secs = t0.elapsed().as_secs_f64();
        worst_t = worst_t.max(secs);
        match res {
            Ok(trace) => {
                let m = metrics(&trace);
                let consistent = trace.budget.as_ref().is_some_and(|b| b.consistent);
                worst_h = worst_h.min(m.min_h_plant);
                if m.min_h_plant < 0.0 || m.fault_count > 0 || !consistent || secs > ROBUST_RUNTIME_S {
                    failures.push(format!(
                        "{name}: min_h {:.4} faults {} consistent {consistent} {secs:.1}s",
                        m.min_h_plant, m.fault_count
                    ));
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    line(
        1,
        failures.is_empty(),
        format!(
            "{} scenarios, worst min_h {worst_h:.4}, slowest {worst_t:.1}s; failures: {}",
            scenarios.len(),
            if failures.is_empty() { "none".into() } else { failures.join("; ") }
        ),
    )
}

fn baseline_failure() -> Outcome {
    let cfg = ScenarioConfig::default();
    let pq = metrics(&run_scenario(&cfg.with_filter(FilterKind::PlantQp)).unwrap()).min_h_plant;
    let rq = metrics(&run_scenario(&cfg.with_filter(FilterKind::ReferenceQp)).unwrap()).min_h_plant;
    line(2, pq < 0.0 && rq < 0.0, format!("PlantQP min_h {pq:.4}, ReferenceQP min_h {rq:.4}"))
}

/// Unfiltered adaptive loop with random plant, reference and adaptation gains.
fn stability_scenario(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default().with_filter(FilterKind::None);
    cfg.plant.mismatch = ScalarOrMatrix::Scalar(rng.gen_range(0.8..1.5));
    cfg.plant.lambda = (0..3).map(|_| rng.gen_range(0.5..1.3)).collect();
    cfg.reference.kp = rng.gen_range(0.5..3.0);
    cfg.reference.kd = rng.gen_range(1.0..4.0);
    let g = 10f64.powf(rng.gen_range(-1.0..1.0));
    cfg.adaptation.gamma_x = ScalarOrMatrix::Scalar(g);
    cfg.adaptation.gamma_r = ScalarOrMatrix::Scalar(g);
    // estimates start from a prior that is off by up to 20% per axis
    cfg.adaptation.lambda_prior = cfg.plant.lambda.iter().map(|l| l * rng.gen_range(0.8..1.2)).collect();
    for k in 0..3 {
        cfg.initial.position[k] = rng.gen_range(-3.0..3.0);
        cfg.initial.velocity[k] = rng.gen_range(-1.0..1.0);
    }
    cfg
}

/// Largest `|central difference of V − V_rate|` along a trace.
fn vdot_gap(trace: &SimTrace) -> f64 {
    let dt = trace.dt;
    trace
        .rows
        .windows(3)
        .map(|w| ((w[2].v - w[0].v) / (2.0 * dt) - w[1].v_rate).abs())
        .fold(0.0, f64::max)
}

fn stability_suite() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut bad_v, mut worst_ex, mut worst_eu, mut worst_gap) = (0usize, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut worst_cfg = None;
    for _ in 0..20 {
        let cfg = stability_scenario(&mut rng);
        let trace = run_scenario(&cfg).unwrap();
        for w in trace.rows.windows(2) {
            if w[1].v > w[0].v + LYAP_STEP_TOL * (1.0 + w[0].v) {
                bad_v += 1;
            }
        }
        let gap = vdot_gap(&trace);
        if gap >= worst_gap {
            worst_gap = gap;
            worst_cfg = Some(cfg);
        }
        let last = trace.rows.last().unwrap();
        worst_ex = worst_ex.max(last.e_x_norm);
        worst_eu = worst_eu.max(last.e_u_norm);
    }
    // halving the step on the worst scenario must shrink the gap quadratically
    let mut half = worst_cfg.unwrap();
    half.time.dt /= 2.0;
    let order = (worst_gap / vdot_gap(&run_scenario(&half).unwrap())).log2();
    let c3 = line(
        3,
        bad_v == 0 && worst_ex <= TERMINAL_E_X && worst_eu <= TERMINAL_E_U,
        format!("20 scenarios, V increases {bad_v}, max |e_x(T)| {worst_ex:.2e}, max |e_u(T)| {worst_eu:.2e}"),
    );
    let c4 = line(
        4,
        worst_gap <= VDOT_GAP && order >= VDOT_ORDER,
        format!("max |dV/dt - V_rate| {worst_gap:.2e} at dt 0.002, observed order {order:.2}"),
    );
    (c3, c4)
}

fn solver_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let opts = SocpOptions::default();
    let (mut gap, mut kkt, mut not_opt) = (0.0_f64, 0.0_f64, 0usize);
    for _ in 0..500 {
        let prob = random_feasible_instance(&mut rng);
        let sol = socp_solve(&prob, &opts);
        if sol.status != SocpStatus::Optimal {
            not_opt += 1;
            continue;
        }
        let orc = socp_oracle(&prob, 201);
        let (fs, fo) = (sol.objective(&prob), orc.objective(&prob));
        gap = gap.max((fs - fo).abs() / (1.0 + fo.abs()));
        kkt = kkt.max(kkt_residual(&prob, &sol));
    }
    let mut qp_err = 0.0_f64;
    for _ in 0..500 {
        let k = rng.gen_range(1..=6);
        let u = DVector::from_fn(k, |_, _| rng.gen_range(-5.0..5.0));
        let a = DVector::from_fn(k, |_, _| rng.gen_range(-2.0..2.0));
        let b = rng.gen_range(-5.0..5.0);
        let got = qp_single_constraint(&u, &a, b).unwrap();
        // closed-form Euclidean projection onto the halfspace
        let want = if a.dot(&u) >= b { u.clone() } else { &u + &a * ((b - a.dot(&u)) / a.norm_squared()) };
        qp_err = qp_err.max((got - want).norm());
    }
    let secs = t0.elapsed().as_secs_f64();
    line(
        5,
        not_opt == 0 && gap <= SOCP_GAP && kkt <= SOCP_KKT && qp_err <= QP_TOL && secs <= SOLVER_RUNTIME_S,
        format!("SOCP gap {gap:.2e} kkt {kkt:.2e} non-optimal {not_opt}; QP err {qp_err:.2e}; {secs:.2}s"),
    )
}

fn constraint_algebra() -> Outcome {
    let plant = build_quadrotor_plant(&DriftMismatch::Scalar(1.3), &[0.6, 0.8, 1.1]).unwrap();
    let reference = quadrotor_reference(&plant, 1.04, 3.92).unwrap();
    let barrier = BrakingBarrier::quadrotor([0.0, 0.0, 0.0], 2.0, 3.0, 2.04).unwrap();
    let region = StateBox::new(
        dv(&[-10.0, -10.0, -10.0, -3.0, -3.0, -3.0]),
        dv(&[10.0, 10.0, 10.0, 3.0, 3.0, 3.0]),
    )
    .unwrap();
    let lip = estimate_lipschitz(&barrier, &region, 2048, 1.1).unwrap();
    let budget = UncertaintyBudget::new(0.3, 0.15, 1.1, lip, 4.5).unwrap();
    let b_p = plant.b().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_identity, mut implication_misses, mut negative_delta) = (0.0_f64, 0usize, 0usize);
    for _ in 0..10_000 {
        let u: Vec<f64> = (0..6).map(|_| rng.gen()).collect();
        let x_m = region.map_unit(&u);
        let x_p = &x_m + DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let con = assemble_robust_constraint(&barrier, &reference, &b_p, &budget, &x_m, &x_p).unwrap();
        if con.delta < 0.0 {
            negative_delta += 1;
        }
        let r = DVector::from_fn(3, |_, _| rng.gen_range(-5.0..5.0));
        let direct = robust_condition_slack(&barrier, &reference, &b_p, &budget, &x_m, &x_p, &r);
        let scale = 1.0 + con.beta.abs() + (con.a.norm() + con.c) * r.norm();
        worst_identity = worst_identity.max((direct - con.margin(&r)).abs() / scale);
        if con.margin(&r) >= 0.0 && direct < -ALGEBRA_TOL * scale {
            implication_misses += 1;
        }
    }
    // Δ with the plant at the origin and the reference shrinking onto it
    let x_dir = dv(&[3.0, 1.0, -1.0, 0.5, 0.0, 0.2]);
    let deltas: Vec<f64> = (0..12)
        .map(|k| {
            let x_m = &x_dir * 10f64.powi(-k);
            assemble_robust_constraint(&barrier, &reference, &b_p, &budget, &x_m, &DVector::zeros(6))
                .unwrap()
                .delta
        })
        .collect();
    // linear in the scale: eleven decades down, eleven decades smaller
    let vanishes = deltas.windows(2).all(|w| w[1] <= w[0]) && deltas[11] <= 1e-10 * deltas[0];
    line(
        6,
        worst_identity <= ALGEBRA_TOL && implication_misses == 0 && negative_delta == 0 && vanishes,
        format!(
            "10^4 states: identity err {worst_identity:.2e}, implication misses {implication_misses}, \
             negative delta {negative_delta}; delta {:.2e} -> {:.2e} over 11 decades",
            deltas[0],
            deltas[11]
        ),
    )
}

fn conservatism_and_smoothness() -> (Outcome, Outcome) {
    let cfg = ScenarioConfig::default();
    let robust = run_scenario(&cfg.with_filter(FilterKind::RobustSocp)).unwrap();
    let n = robust.rows.len();
    let q = n / 4;
    let mean = |rows: &[TraceRow]| rows.iter().map(|r| r.delta).sum::<f64>() / rows.len() as f64;
    let (early, late) = (mean(&robust.rows[..q]), mean(&robust.rows[n - q..]));
    let c7 = line(7, late < early, format!("mean delta first quarter {early:.4}, last quarter {late:.4}"));

    // Paired variant: no drift mismatch and Λ equal to the prior, so the
    // reference-level QP is exact.
    let mut paired = cfg.with_filter(FilterKind::ReferenceQp);
    paired.plant.mismatch = ScalarOrMatrix::Scalar(1.0);
    paired.plant.lambda = cfg.adaptation.lambda_prior.clone();
    let rq = metrics(&run_scenario(&paired).unwrap());
    let rb = metrics(&robust);
    let c8 = line(
        8,
        rq.min_h_plant >= 0.0 && rb.smoothness < rq.smoothness,
        format!(
            "RobustSOCP {:.3} vs ReferenceQP on paired variant {:.3} (variant min_h {:.4})",
            rb.smoothness, rq.smoothness, rq.min_h_plant
        ),
    );
    (c7, c8)
}

fn fd_gradient(b: &dyn BarrierFunction, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = 1e-6 * (1.0 + x[i].abs());
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        (b.evaluate(&xp) - b.evaluate(&xm)) / (2.0 * h)
    })
}

fn numerical_kernels() -> Outcome {
    // ẋ = −x on [0, 1]
    let err = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let mut x = dv(&[1.0]);
        for k in 0..steps {
            x = rk4_step(|_, x| Ok(-x), &x, k as f64 * dt, dt).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    let order = (err(0.1) / err(0.05)).log2();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_res, mut all_spd) = (0.0_f64, true);
    for trial in 0..100 {
        let n = 1 + trial % 12;
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let shift = refsafe::linalg::spectral_abscissa(&m) + rng.gen_range(0.2..2.0);
        let a = &m - DMatrix::identity(n, n) * shift;
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &l * l.transpose() + DMatrix::identity(n, n);
        let p = solve_lyapunov(&a, &q).unwrap();
        worst_res = worst_res.max(lyapunov_residual(&a, &p, &q) / (1.0 + q.norm()));
        all_spd &= refsafe::linalg::is_spd(&p);
    }

    let barriers: Vec<Box<dyn BarrierFunction>> = vec![
        Box::new(SphereBarrier::quadrotor([5.0, 5.0, 2.5], 2.0).unwrap()),
        Box::new(BrakingBarrier::quadrotor([5.0, 5.0, 2.5], 2.0, 3.0, 2.04).unwrap()),
    ];
    let mut worst_grad = 0.0_f64;
    for _ in 0..1000 {
        let x = DVector::from_fn(6, |_, _| rng.gen_range(-10.0..10.0));
        for b in &barriers {
            let g = b.gradient(&x);
            worst_grad = worst_grad.max((&g - fd_gradient(b.as_ref(), &x)).norm() / (1.0 + g.norm()));
        }
    }
    line(
        9,
        order >= RK4_ORDER && worst_res <= LYAP_RESIDUAL && all_spd && worst_grad <= GRAD_TOL,
        format!("RK4 order {order:.3}; Lyapunov residual {worst_res:.2e}, all SPD {all_spd}; gradient err {worst_grad:.2e}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/benchmark.toml");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_refsafe"))
            .args(["compare", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        let mut files = Vec::new();
        for f in ["PlantQP", "ReferenceQP", "RobustSOCP"] {
            files.push(std::fs::read(out.join(f).join("trace.csv")).unwrap());
            files.push(std::fs::read(out.join(f).join("summary.json")).unwrap());
        }
        files.push(std::fs::read(out.join("trajectories.csv")).unwrap());
        let mut report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("comparison.json")).unwrap()).unwrap();
        report.as_object_mut().unwrap().remove("generated_at");
        outputs.push((files, report));
    }
    let same = outputs[0] == outputs[1];
    line(10, same, format!("two compare runs identical apart from timestamp: {same}"))
}

#[test]
fn acceptance() {
    let mut outcomes = vec![forward_invariance(), baseline_failure()];
    let (c3, c4) = stability_suite();
    outcomes.extend([c3, c4, solver_correctness(), constraint_algebra()]);
    let (c7, c8) = conservatism_and_smoothness();
    outcomes.extend([c7, c8, numerical_kernels(), determinism()]);
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("{}: {}", o.id, o.detail))
        .collect();
    println!("acceptance: {}/{} passed", outcomes.len() - failed.len(), outcomes.len());
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
