//! Fixed-step closed-loop simulation of plant, reference model, adaptation
//! and safety filter.
//!
//! Internally, states are expressed relative to the goal (`x − (p_goal, 0)`),
//! so that the Hurwitz reference model and the goal-seeking policy share the
//! same equilibrium. The drift has no position columns, so the plant is
//! invariant under that translation. Trace rows report world coordinates.

pub mod config;
mod metrics;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{estimate_lipschitz_seeded, BarrierFunction, BrakingBarrier, SphereBarrier, StateBox};
use crate::error::{Error, Result};
use crate::filters::{
    assemble_robust_constraint, check_authority, nominal_reference_constraint, plant_qp_filter, reference_qp_filter,
    robust_socp_filter, AuthorityVerdict, UncertaintyBudget,
};
use crate::linalg::spectral_norm;
use crate::models::{
    build_quadrotor_plant, quadrotor_nominal_drift, quadrotor_reference, solve_matching_gains, DriftMismatch,
    MatchingGains, PlantModel, ReferenceModel,
};
use crate::mrac::{
    adaptation_derivatives, control_input, lyapunov_rate, lyapunov_value, output_error, AdaptiveGains, AdaptiveState,
};
use crate::solvers::{SocpOptions, SocpSolver};

pub use config::{
    parse_config, BudgetValue, FilterKind, InitialEstimate, ScalarOrMatrix, ScenarioConfig,
};
pub use metrics::{metrics, Metrics};

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(mut f: F, x: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidModel(format!("step {dt} must be positive")));
    }
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)))?;
    let k3 = f(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)))?;
    let k4 = f(t + dt, &(x + &k3 * dt))?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("integrated state"));
    }
    Ok(next)
}

/// Proportional goal seeking with a per-axis clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalPolicy {
    pub goal: DVector<f64>,
    pub gain: f64,
    pub r_max: f64,
}

/// `r* = clamp(K (p_goal − p_m), ±r_max)` on the leading position entries of `x_m`.
pub fn nominal_reference(policy: &NominalPolicy, x_m: &DVector<f64>) -> DVector<f64> {
    let k = policy.goal.len();
    DVector::from_fn(k, |i, _| {
        (policy.gain * (policy.goal[i] - x_m[i])).clamp(-policy.r_max, policy.r_max)
    })
}

/// Models and initial conditions derived from a validated config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub plant: PlantModel,
    pub nominal_a: DMatrix<f64>,
    pub reference: ReferenceModel,
    pub matching: MatchingGains,
    pub gains: AdaptiveGains,
    pub sphere: SphereBarrier,
    pub certificate: BrakingBarrier,
    pub policy: NominalPolicy,
    /// `world = internal + offset`
    pub offset: DVector<f64>,
    pub x0: DVector<f64>,
    pub theta0: AdaptiveState,
}

fn model_err(key: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::config(key, e.to_string())
}

impl Scenario {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let mismatch = match &cfg.plant.mismatch {
            ScalarOrMatrix::Scalar(s) => DriftMismatch::Scalar(*s),
            m => DriftMismatch::Premultiply(m.to_matrix(6, "plant.mismatch")?),
        };
        let plant = build_quadrotor_plant(&mismatch, &cfg.plant.lambda).map_err(model_err("plant"))?;
        let reference =
            quadrotor_reference(&plant, cfg.reference.kp, cfg.reference.kd).map_err(model_err("reference"))?;
        let tol = crate::models::default_matching_tol(&reference);
        let matching = solve_matching_gains(&plant, &reference, tol).map_err(model_err("plant.mismatch"))?;
        let gains = AdaptiveGains::new(
            &cfg.adaptation.gamma_x.to_gain(6, "adaptation.gamma_x")?,
            &cfg.adaptation.gamma_r.to_gain(3, "adaptation.gamma_r")?,
            reference.a(),
            cfg.adaptation.q.to_matrix(6, "adaptation.q")?,
            3,
        )
        .map_err(model_err("adaptation"))?;

        let goal = cfg.goal();
        let mut offset = DVector::zeros(6);
        offset.rows_mut(0, 3).copy_from(&goal);
        let c = &cfg.barrier.center;
        let center = [c[0] - goal[0], c[1] - goal[1], c[2] - goal[2]];
        let sphere = SphereBarrier::quadrotor(center, cfg.barrier.radius)?;
        let certificate =
            BrakingBarrier::quadrotor(center, cfg.barrier.radius, cfg.barrier.decay, cfg.barrier.smoothing)?;
        let policy = NominalPolicy {
            goal: DVector::zeros(3),
            gain: cfg.policy.gain,
            r_max: cfg.policy.r_max,
        };
        let x0 = cfg.initial_state() - &offset;

        let theta0 = match cfg.adaptation.init {
            InitialEstimate::Ideal => AdaptiveState::from_matching(&matching),
            InitialEstimate::Nominal => estimate_from_prior(&plant, &reference, &[1.0, 1.0, 1.0])?,
            InitialEstimate::Prior => estimate_from_prior(&plant, &reference, &cfg.adaptation.lambda_prior)?,
        };

        Ok(Self {
            cfg: cfg.clone(),
            nominal_a: quadrotor_nominal_drift(),
            plant,
            reference,
            matching,
            gains,
            sphere,
            certificate,
            policy,
            offset,
            x0,
            theta0,
        })
    }

    pub fn to_world(&self, x: &DVector<f64>) -> DVector<f64> {
        x + &self.offset
    }

    /// Position box around start, goal and obstacle, inflated about its
    /// midpoint, in internal coordinates.
    fn position_box(&self) -> (DVector<f64>, DVector<f64>) {
        let cfg = &self.cfg;
        let infl = cfg.budget.region_inflation;
        let (rad, goal) = (cfg.barrier.radius, cfg.policy.goal);
        let mut lower = DVector::zeros(3);
        let mut upper = DVector::zeros(3);
        for k in 0..3 {
            let pts = [cfg.initial.position[k], goal[k], cfg.barrier.center[k] - rad, cfg.barrier.center[k] + rad];
            let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo) * (1.0 + infl) + rad;
            lower[k] = mid - half - goal[k];
            upper[k] = mid + half - goal[k];
        }
        (lower, upper)
    }

    fn region(&self, speed: f64) -> Result<StateBox> {
        let (pl, pu) = self.position_box();
        let mut lower = DVector::zeros(6);
        let mut upper = DVector::zeros(6);
        lower.rows_mut(0, 3).copy_from(&pl);
        upper.rows_mut(0, 3).copy_from(&pu);
        for k in 3..6 {
            lower[k] = -speed;
            upper[k] = speed;
        }
        StateBox::new(lower, upper)
    }
}

/// Estimates built from `Λ̂` and the known matrices: `(B_p Λ̂)⁺ (A_m − A_nom)`
/// and `(B_p Λ̂)⁺ B_m`.
fn estimate_from_prior(plant: &PlantModel, reference: &ReferenceModel, lambda_hat: &[f64]) -> Result<AdaptiveState> {
    let bl = plant.b() * DMatrix::from_diagonal(&DVector::from_column_slice(lambda_hat));
    let pinv = bl
        .pseudo_inverse(1e-12)
        .map_err(|_| Error::Singular("prior input matrix"))?;
    let theta_x = &pinv * (reference.a() - quadrotor_nominal_drift());
    let theta_r = &pinv * reference.b();
    AdaptiveState::new(theta_x, theta_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    /// No filter configured.
    Unfiltered,
    Inactive,
    Active,
    Infeasible,
    MaxIters,
}

impl FilterStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterStatus::Unfiltered => "none",
            FilterStatus::Inactive => "inactive",
            FilterStatus::Active => "active",
            FilterStatus::Infeasible => "infeasible",
            FilterStatus::MaxIters => "max_iters",
        }
    }

    pub fn is_fault(&self) -> bool {
        matches!(self, FilterStatus::Infeasible | FilterStatus::MaxIters)
    }
}

/// Per-step budget and assumption monitors.
pub mod flags {
    pub const THETA_X: &str = "theta_x_bound";
    pub const THETA_R: &str = "theta_r_bound";
    pub const LAMBDA: &str = "lambda_bound";
    pub const ASSUMPTION5: &str = "assumption5";
    pub const L1_RATIO: &str = "l1_ratio";
    pub const L2_RATIO: &str = "l2_ratio";
    pub const REGION_EXIT: &str = "region_exit";

    /// Flags that count as faults for the robust filter.
    pub fn is_fault(flag: &str) -> bool {
        matches!(flag, THETA_X | THETA_R | LAMBDA | ASSUMPTION5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    /// World coordinates.
    pub x_p: Vec<f64>,
    pub x_m: Vec<f64>,
    pub r_star: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub e_x_norm: f64,
    /// Obstacle barrier `‖p − p_o‖² − r_o²`.
    pub h_plant: f64,
    pub h_ref: f64,
    pub e_h: f64,
    /// Braking certificate enforced by the filters.
    pub cert_plant: f64,
    pub cert_ref: f64,
    pub delta: f64,
    pub beta: f64,
    pub eta: f64,
    pub v: f64,
    /// `−½ eᵀQe`
    pub v_rate: f64,
    pub e_u_norm: f64,
    pub theta_x_err: f64,
    pub theta_r_err: f64,
    pub status: FilterStatus,
    pub authority: Option<AuthorityVerdict>,
    pub flags: Vec<String>,
    pub fault: bool,
}

impl TraceRow {
    pub fn authority_str(&self) -> &'static str {
        self.authority.map_or("n/a", |a| a.as_str())
    }

    pub fn flags_str(&self) -> String {
        if self.flags.is_empty() {
            "none".to_string()
        } else {
            self.flags.join("|")
        }
    }

    pub fn goal_distance(&self, goal: &[f64; 3]) -> f64 {
        (0..3).map(|k| (self.x_p[k] - goal[k]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Bounds used by a robust run and where they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub theta_x_bar: f64,
    pub theta_r_bar: f64,
    pub lambda_bar: f64,
    pub l1: f64,
    pub l2: f64,
    pub gamma: f64,
    pub speed_bound: f64,
    pub region_lower: Vec<f64>,
    pub region_upper: Vec<f64>,
    pub pilot_runs: usize,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub filter: FilterKind,
    pub dt: f64,
    pub goal: [f64; 3],
    pub rows: Vec<TraceRow>,
    pub budget: Option<BudgetReport>,
}

impl SimTrace {
    pub fn n(&self) -> usize {
        self.rows.first().map_or(0, |r| r.x_p.len())
    }

    pub fn p(&self) -> usize {
        self.rows.first().map_or(0, |r| r.r.len())
    }

    pub fn m(&self) -> usize {
        self.rows.first().map_or(0, |r| r.u.len())
    }
}

fn pack(xp: &DVector<f64>, xm: &DVector<f64>, th: &AdaptiveState) -> DVector<f64> {
    let n = xp.len();
    let (sx, sr) = (th.theta_x.len(), th.theta_r.len());
    let mut z = DVector::zeros(2 * n + sx + sr);
    z.rows_mut(0, n).copy_from(xp);
    z.rows_mut(n, n).copy_from(xm);
    z.rows_mut(2 * n, sx).copy_from_slice(th.theta_x.as_slice());
    z.rows_mut(2 * n + sx, sr).copy_from_slice(th.theta_r.as_slice());
    z
}

fn unpack(z: &DVector<f64>, n: usize, m: usize, p: usize) -> (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let xp = z.rows(0, n).into_owned();
    let xm = z.rows(n, n).into_owned();
    let tx = DMatrix::from_column_slice(m, n, z.rows(2 * n, m * n).as_slice());
    let tr = DMatrix::from_column_slice(m, p, z.rows(2 * n + m * n, m * p).as_slice());
    (xp, xm, tx, tr)
}

/// Held signal over one integration step.
enum Hold<'a> {
    /// Reference held, input recomputed from the adaptive law at each stage.
    Reference(&'a DVector<f64>),
    /// Both reference and plant input held.
    Input(&'a DVector<f64>, &'a DVector<f64>),
}

fn closed_loop_rhs(scn: &Scenario, z: &DVector<f64>, hold: &Hold) -> Result<DVector<f64>> {
    let (n, m, p) = (scn.plant.n(), scn.plant.m(), scn.reference.p());
    let (xp, xm, tx, tr) = unpack(z, n, m, p);
    let (r, u) = match hold {
        Hold::Reference(r) => (*r, &tx * &xp + &tr * *r),
        Hold::Input(r, u) => (*r, (*u).clone()),
    };
    let dxp = scn.plant.a() * &xp + scn.plant.effective_input() * &u;
    let dxm = scn.reference.a() * &xm + scn.reference.b() * r;
    let e = &xp - &xm;
    let (dtx, dtr) = adaptation_derivatives(&scn.gains, &xp, r, &e, scn.plant.b())?;
    let mut out = DVector::zeros(z.len());
    out.rows_mut(0, n).copy_from(&dxp);
    out.rows_mut(n, n).copy_from(&dxm);
    out.rows_mut(2 * n, m * n).copy_from_slice(dtx.as_slice());
    out.rows_mut(2 * n + m * n, m * p).copy_from_slice(dtr.as_slice());
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("closed-loop derivative"));
    }
    Ok(out)
}

/// Runs one closed loop with a fixed budget (required for the robust filter).
pub fn simulate(scn: &Scenario, kind: FilterKind, budget: Option<&UncertaintyBudget>) -> Result<SimTrace> {
    let cfg = &scn.cfg;
    let (n, m, p) = (scn.plant.n(), scn.plant.m(), scn.reference.p());
    let dt = cfg.time.dt;
    let steps = cfg.steps();
    let gamma = cfg.filter.gamma;
    let lambda = scn.plant.lambda();
    let lambda_norm = spectral_norm(&lambda);
    let solver = SocpSolver::new(SocpOptions::default());
    if kind == FilterKind::RobustSocp && budget.is_none() {
        return Err(Error::InvalidModel("robust filter needs an uncertainty budget".into()));
    }
    let cert: &dyn BarrierFunction = &scn.certificate;

    let mut xp = scn.x0.clone();
    let mut xm = scn.x0.clone();
    let mut th = scn.theta0.clone();
    let mut rows = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let t = k as f64 * dt;
        let r_star = nominal_reference(&scn.policy, &xm);
        let mut status = FilterStatus::Unfiltered;
        let mut authority = None;
        let mut flags: Vec<String> = Vec::new();
        let (mut delta, mut eta) = (0.0, f64::NAN);
        let beta;
        let mut held_u: Option<DVector<f64>> = None;

        let r = match kind {
            FilterKind::None => {
                beta = nominal_reference_constraint(cert, &scn.reference, gamma, &xm).beta;
                r_star.clone()
            }
            FilterKind::ReferenceQp => {
                beta = nominal_reference_constraint(cert, &scn.reference, gamma, &xm).beta;
                match reference_qp_filter(cert, &scn.reference, &xm, &r_star, gamma) {
                    Ok(r) => {
                        status = if r == r_star { FilterStatus::Inactive } else { FilterStatus::Active };
                        r
                    }
                    Err(Error::Infeasible(_)) => {
                        status = FilterStatus::Infeasible;
                        DVector::zeros(p)
                    }
                    Err(e) => return Err(e),
                }
            }
            FilterKind::PlantQp => {
                let u_star = control_input(&th, &xp, &r_star)?;
                let g = cert.gradient(&xp);
                beta = -gamma * cert.evaluate(&xp) - g.dot(&(&scn.nominal_a * &xp));
                match plant_qp_filter(cert, &scn.nominal_a, scn.plant.b(), &xp, &u_star, gamma) {
                    Ok(u) => {
                        status = if u == u_star { FilterStatus::Inactive } else { FilterStatus::Active };
                        held_u = Some(u);
                    }
                    Err(Error::Infeasible(_)) => {
                        status = FilterStatus::Infeasible;
                        held_u = Some(u_star);
                    }
                    Err(e) => return Err(e),
                }
                r_star.clone()
            }
            FilterKind::RobustSocp => {
                let budget = budget.expect("checked above");
                let con = assemble_robust_constraint(cert, &scn.reference, scn.plant.b(), budget, &xm, &xp)?;
                delta = con.delta;
                beta = con.beta;
                let verdict = check_authority(&con, cfg.budget.authority_margin);
                log::trace!(
                    "t={t:.3} |a|={:.3} c={:.3} beta={:.3} delta={:.3} |e|={:.3e} |xp|={:.3}",
                    con.a.norm(),
                    con.c,
                    con.beta,
                    con.delta,
                    (&xp - &xm).norm(),
                    xp.norm()
                );
                authority = Some(verdict);
                if verdict == AuthorityVerdict::Assumption5Violated {
                    flags.push(flags::ASSUMPTION5.into());
                }
                match robust_socp_filter(&con, &r_star, cfg.filter.rho, &solver) {
                    Ok(out) => {
                        status = if out.modified { FilterStatus::Active } else { FilterStatus::Inactive };
                        eta = out.eta;
                        out.r
                    }
                    Err(Error::Infeasible(_)) => {
                        status = FilterStatus::Infeasible;
                        DVector::zeros(p)
                    }
                    Err(Error::MaxIters(_)) => {
                        status = FilterStatus::MaxIters;
                        DVector::zeros(p)
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if eta.is_nan() {
            eta = r.norm();
        }
        let u = match &held_u {
            Some(u) => u.clone(),
            None => control_input(&th, &xp, &r)?,
        };

        let e = &xp - &xm;
        let (tx, tr) = th.estimation_error(&scn.matching);
        let theta_x_err = spectral_norm(&tx);
        let theta_r_err = spectral_norm(&tr);
        if let (Some(b), FilterKind::RobustSocp) = (budget, kind) {
            let slack = 1.0 + 1e-9;
            if theta_x_err > b.theta_x_bar * slack {
                flags.push(flags::THETA_X.into());
            }
            if theta_r_err > b.theta_r_bar * slack {
                flags.push(flags::THETA_R.into());
            }
            if lambda_norm > b.lambda_bar * slack {
                flags.push(flags::LAMBDA.into());
            }
            let region = &b.lipschitz.region;
            if !region.contains(&xp) || !region.contains(&xm) {
                flags.push(flags::REGION_EXIT.into());
            }
            let e_h_cert = cert.evaluate(&xp) - cert.evaluate(&xm);
            if e_h_cert.abs() > b.lipschitz.l1 * e.norm() + 1e-12 {
                flags.push(flags::L1_RATIO.into());
            }
            let dxp = scn.plant.a() * &xp + scn.plant.effective_input() * &u;
            let dxm = scn.reference.a() * &xm + scn.reference.b() * &r;
            let de_h = cert.gradient(&xp).dot(&dxp) - cert.gradient(&xm).dot(&dxm);
            if de_h.abs() > b.lipschitz.l2 * (&dxp - &dxm).norm() + 1e-12 {
                flags.push(flags::L2_RATIO.into());
            }
        }
        let fault = status.is_fault() || (kind == FilterKind::RobustSocp && flags.iter().any(|f| flags::is_fault(f)));

        let h_plant = scn.sphere.evaluate(&xp);
        let h_ref = scn.sphere.evaluate(&xm);
        rows.push(TraceRow {
            t,
            x_p: scn.to_world(&xp).as_slice().to_vec(),
            x_m: scn.to_world(&xm).as_slice().to_vec(),
            r_star: r_star.as_slice().to_vec(),
            r: r.as_slice().to_vec(),
            u: u.as_slice().to_vec(),
            e_x_norm: e.norm(),
            h_plant,
            h_ref,
            e_h: h_plant - h_ref,
            cert_plant: cert.evaluate(&xp),
            cert_ref: cert.evaluate(&xm),
            delta,
            beta,
            eta,
            v: lyapunov_value(&e, &th, &scn.matching, &scn.gains, &lambda),
            v_rate: lyapunov_rate(&e, &scn.gains),
            e_u_norm: output_error(&th, &scn.matching, &xp, &r).norm(),
            theta_x_err,
            theta_r_err,
            status,
            authority,
            flags,
            fault,
        });

        if k == steps {
            break;
        }
        let z = pack(&xp, &xm, &th);
        let hold = match &held_u {
            Some(u) => Hold::Input(&r, u),
            None => Hold::Reference(&r),
        };
        let z = rk4_step(|_, s| closed_loop_rhs(scn, s, &hold), &z, t, dt)?;
        let (nxp, nxm, ntx, ntr) = unpack(&z, n, m, p);
        xp = nxp;
        xm = nxm;
        th = AdaptiveState::new(ntx, ntr)?;
        if cfg.adaptation.projection > 0.0 {
            th.project(cfg.adaptation.projection);
        }
    }

    Ok(SimTrace {
        filter: kind,
        dt,
        goal: cfg.policy.goal,
        rows,
        budget: None,
    })
}

fn resolve(v: BudgetValue, auto: f64) -> f64 {
    match v {
        BudgetValue::Auto => auto,
        BudgetValue::Value(x) => x,
    }
}

/// Smallest positive value used for an `auto` bound that starts at zero.
const BUDGET_FLOOR: f64 = 1e-3;

/// Robust run with `auto` bounds resolved by iterated pilot runs.
///
/// Each pilot run uses the current bounds; observed sups of `‖Θ̃x‖`, `‖Θ̃r‖`
/// and the velocity components, times the headroom factor, raise any `auto`
/// bound they exceed. The first self-consistent run is returned.
pub fn run_robust(scn: &Scenario) -> Result<SimTrace> {
    let cfg = &scn.cfg;
    let b = &cfg.budget;
    let head = b.headroom;
    let (tx0, tr0) = scn.theta0.estimation_error(&scn.matching);
    let lambda_bar = resolve(b.lambda, scn.plant.lambda_diag().max());
    let mut theta_x = resolve(b.theta_x, (head * spectral_norm(&tx0)).max(BUDGET_FLOOR));
    let mut theta_r = resolve(b.theta_r, (head * spectral_norm(&tr0)).max(BUDGET_FLOOR));
    let v0 = scn.x0.rows(3, 3).amax();
    let mut speed = resolve(b.speed_bound, head * v0.max(cfg.policy.r_max / cfg.reference.kd));

    let mut last = None;
    for run in 1..=b.pilot_runs {
        let region = scn.region(speed)?;
        let lip = estimate_lipschitz_seeded(&scn.certificate, &region, b.samples, b.safety_factor, cfg.seed)?;
        let l1 = resolve(b.l1, lip.l1);
        let l2 = resolve(b.l2, l1);
        let lip = crate::barrier::LipschitzBudget::new(l1, l2, region.clone())?;
        let budget = UncertaintyBudget::new(theta_x, theta_r, lambda_bar, lip, cfg.filter.gamma)?;
        let mut trace = simulate(scn, FilterKind::RobustSocp, Some(&budget))?;

        let sup_tx = trace.rows.iter().map(|r| r.theta_x_err).fold(0.0, f64::max);
        let sup_tr = trace.rows.iter().map(|r| r.theta_r_err).fold(0.0, f64::max);
        let sup_v = trace
            .rows
            .iter()
            .flat_map(|r| r.x_p[3..6].iter().chain(r.x_m[3..6].iter()))
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut consistent = true;
        if b.theta_x == BudgetValue::Auto && sup_tx > theta_x {
            theta_x = head * sup_tx;
            consistent = false;
        }
        if b.theta_r == BudgetValue::Auto && sup_tr > theta_r {
            theta_r = head * sup_tr;
            consistent = false;
        }
        if b.speed_bound == BudgetValue::Auto && sup_v > speed {
            speed = head * sup_v;
            consistent = false;
        }
        trace.budget = Some(BudgetReport {
            theta_x_bar: budget.theta_x_bar,
            theta_r_bar: budget.theta_r_bar,
            lambda_bar,
            l1,
            l2,
            gamma: budget.gamma,
            speed_bound: region.upper[3],
            region_lower: region.lower.as_slice().to_vec(),
            region_upper: region.upper.as_slice().to_vec(),
            pilot_runs: run,
            consistent,
        });
        log::debug!(
            "pilot {run}: Θ̄x {:.4} Θ̄r {:.4} L1 {:.4} speed {:.3} -> consistent {consistent}",
            budget.theta_x_bar,
            budget.theta_r_bar,
            l1,
            region.upper[3]
        );
        if consistent {
            return Ok(trace);
        }
        last = Some(trace);
    }
    log::warn!("budgets did not settle within {} pilot runs", b.pilot_runs);
    Ok(last.expect("at least one pilot run"))
}

/// Builds the scenario and runs the configured filter.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimTrace> {
    let scn = Scenario::build(cfg)?;
    match cfg.filter.kind {
        FilterKind::RobustSocp => run_robust(&scn),
        kind => simulate(&scn, kind, None),
    }
}
