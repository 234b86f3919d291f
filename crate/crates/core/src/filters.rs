//! Reference-level robust constraint, the SOCP filter, and the two QP baselines.
//!
//! The robust condition on the reference input is
//!
//! ```text
//! ḣ(x_m) ≥ −γ h(x_m) + Δ + c ‖r‖
//! Δ = γ L1 ‖e_x‖ + L2 ‖A_m‖ ‖e_x‖ + L2 ‖B_p‖ Λ̄ Θ̄_x ‖x_p‖
//! c = L2 ‖B_p‖ Λ̄ Θ̄_r
//! ```
//!
//! With `ḣ(x_m) = ∇h(x_m)ᵀA_m x_m + aᵀr` it becomes `aᵀr − c‖r‖ ≥ β` where
//! `a = B_mᵀ∇h(x_m)` and `β = Δ − ∇h(x_m)ᵀA_m x_m − γ h(x_m)`. The SOCP
//! replaces `‖r‖` by an epigraph variable `η ≥ ‖r‖`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierFunction, LipschitzBudget};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::models::ReferenceModel;
use crate::solvers::{qp_single_constraint, SocpProblem, SocpSolver, SocpStatus};

/// Known bounds on the parameter errors and the barrier mismatch.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBudget {
    pub theta_x_bar: f64,
    pub theta_r_bar: f64,
    pub lambda_bar: f64,
    pub lipschitz: LipschitzBudget,
    pub gamma: f64,
}

impl UncertaintyBudget {
    pub fn new(theta_x_bar: f64, theta_r_bar: f64, lambda_bar: f64, lipschitz: LipschitzBudget, gamma: f64) -> Result<Self> {
        for (name, v) in [
            ("theta_x_bar", theta_x_bar),
            ("theta_r_bar", theta_r_bar),
            ("lambda_bar", lambda_bar),
            ("gamma", gamma),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidModel(format!("{name} = {v} must be positive and finite")));
            }
        }
        Ok(Self {
            theta_x_bar,
            theta_r_bar,
            lambda_bar,
            lipschitz,
            gamma,
        })
    }

    /// `c = L2 ‖B_p‖ Λ̄ Θ̄_r`
    pub fn conic_coefficient(&self, b_p_norm: f64) -> f64 {
        self.lipschitz.l2 * b_p_norm * self.lambda_bar * self.theta_r_bar
    }

    /// `Δ = γ L1 ‖e_x‖ + L2 ‖A_m‖ ‖e_x‖ + L2 ‖B_p‖ Λ̄ Θ̄_x ‖x_p‖`
    pub fn margin(&self, a_m_norm: f64, b_p_norm: f64, e_x_norm: f64, x_p_norm: f64) -> f64 {
        let l = &self.lipschitz;
        self.gamma * l.l1 * e_x_norm
            + l.l2 * a_m_norm * e_x_norm
            + l.l2 * b_p_norm * self.lambda_bar * self.theta_x_bar * x_p_norm
    }
}

/// `aᵀr − c‖r‖ ≥ β`, with the margin `Δ` folded into `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyConstraint {
    pub a: DVector<f64>,
    pub c: f64,
    pub beta: f64,
    pub delta: f64,
}

impl SafetyConstraint {
    /// `aᵀr − c‖r‖ − β`
    pub fn margin(&self, r: &DVector<f64>) -> f64 {
        self.a.dot(r) - self.c * r.norm() - self.beta
    }

    pub fn is_satisfied(&self, r: &DVector<f64>, tol: f64) -> bool {
        self.margin(r) >= -tol
    }
}

/// Robust constraint at the current reference and plant states.
pub fn assemble_robust_constraint(
    b: &dyn BarrierFunction,
    reference: &ReferenceModel,
    b_p: &DMatrix<f64>,
    budget: &UncertaintyBudget,
    x_m: &DVector<f64>,
    x_p: &DVector<f64>,
) -> Result<SafetyConstraint> {
    let n = reference.n();
    if x_m.len() != n || x_p.len() != n {
        return Err(Error::dim("assemble_robust_constraint", n, x_m.len().max(x_p.len())));
    }
    if b_p.nrows() != n {
        return Err(Error::dim("assemble_robust_constraint B_p rows", n, b_p.nrows()));
    }
    if x_m.iter().chain(x_p.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("constraint states"));
    }
    let b_norm = spectral_norm(b_p);
    let delta = budget.margin(spectral_norm(reference.a()), b_norm, (x_p - x_m).norm(), x_p.norm());
    let nominal = nominal_reference_constraint(b, reference, budget.gamma, x_m);
    Ok(SafetyConstraint {
        a: nominal.a,
        c: budget.conic_coefficient(b_norm),
        beta: nominal.beta + delta,
        delta,
    })
}

/// Non-robust reference-level condition `ḣ(x_m) ≥ −γh(x_m)`, as `(a, 0, β, 0)`.
pub fn nominal_reference_constraint(
    b: &dyn BarrierFunction,
    reference: &ReferenceModel,
    gamma: f64,
    x_m: &DVector<f64>,
) -> SafetyConstraint {
    let g = b.gradient(x_m);
    let drift = g.dot(&(reference.a() * x_m));
    SafetyConstraint {
        a: reference.b().transpose() * &g,
        c: 0.0,
        beta: -drift - gamma * b.evaluate(x_m),
        delta: 0.0,
    }
}

/// Slack of the robust condition evaluated term by term, without going
/// through `(a, c, β)`. Nonnegative iff the condition holds for `r`.
#[allow(clippy::too_many_arguments)]
pub fn robust_condition_slack(
    b: &dyn BarrierFunction,
    reference: &ReferenceModel,
    b_p: &DMatrix<f64>,
    budget: &UncertaintyBudget,
    x_m: &DVector<f64>,
    x_p: &DVector<f64>,
    r: &DVector<f64>,
) -> f64 {
    let h_dot = b.gradient(x_m).dot(&(reference.a() * x_m + reference.b() * r));
    let e = (x_p - x_m).norm();
    let l = &budget.lipschitz;
    let b_norm = spectral_norm(b_p);
    let rhs = -budget.gamma * b.evaluate(x_m)
        + budget.gamma * l.l1 * e
        + l.l2 * spectral_norm(reference.a()) * e
        + l.l2 * b_norm * budget.lambda_bar * (budget.theta_x_bar * x_p.norm() + budget.theta_r_bar * r.norm());
    h_dot - rhs
}

/// Output of [`robust_socp_filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub r: DVector<f64>,
    pub eta: f64,
    pub v: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// `aᵀr − c‖r‖ − β` at the returned point.
    pub margin: f64,
    /// `η − ‖r‖`; positive values mean the epigraph variable was not tight.
    pub eta_gap: f64,
    pub constraint_active: bool,
    pub modified: bool,
}

pub const DEFAULT_RHO: f64 = 0.1;

/// `min v + ρη  s.t.  ‖r − r*‖ ≤ v, ‖r‖ ≤ η, aᵀr − cη ≥ β`.
pub fn robust_socp_filter(
    constraint: &SafetyConstraint,
    r_star: &DVector<f64>,
    rho: f64,
    solver: &SocpSolver,
) -> Result<FilterOutput> {
    let prob = SocpProblem::new(r_star.clone(), rho, constraint.a.clone(), constraint.c, constraint.beta)?;
    let sol = solver.solve(&prob);
    match sol.status {
        SocpStatus::Optimal => {}
        SocpStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "‖a‖ = {:.4e} ≤ c = {:.4e} with β = {:.4e}",
                constraint.a.norm(),
                constraint.c,
                constraint.beta
            )))
        }
        SocpStatus::MaxIters => return Err(Error::MaxIters(sol.iterations)),
    }
    let margin = constraint.margin(&sol.r);
    let scale = 1.0 + constraint.beta.abs();
    if margin < -1e-6 * scale {
        log::warn!("SOCP solution violates the constraint by {:.3e}", -margin);
    }
    let eta_gap = sol.eta - sol.r.norm();
    if eta_gap > 1e-6 * (1.0 + sol.eta.abs()) {
        log::debug!("epigraph variable not tight: η − ‖r‖ = {eta_gap:.3e}");
    }
    Ok(FilterOutput {
        modified: (&sol.r - r_star).norm() > 1e-9 * (1.0 + r_star.norm()),
        constraint_active: margin <= 1e-6 * scale,
        r: sol.r,
        eta: sol.eta,
        v: sol.v,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        margin,
        eta_gap,
    })
}

/// Plant-level QP with the nominal drift and `Λ = I`:
/// `min ‖u − u*‖²  s.t.  ∇h(x_p)ᵀ(A_nom x_p + B_p u) ≥ −γ h(x_p)`.
pub fn plant_qp_filter(
    b: &dyn BarrierFunction,
    nominal_a: &DMatrix<f64>,
    b_p: &DMatrix<f64>,
    x_p: &DVector<f64>,
    u_star: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    if nominal_a.nrows() != x_p.len() || b_p.nrows() != x_p.len() || b_p.ncols() != u_star.len() {
        return Err(Error::dim("plant_qp_filter", x_p.len(), nominal_a.nrows()));
    }
    let g = b.gradient(x_p);
    let a_vec = b_p.transpose() * &g;
    let lower = -gamma * b.evaluate(x_p) - g.dot(&(nominal_a * x_p));
    qp_single_constraint(u_star, &a_vec, lower)
}

/// Reference-level QP: `min ‖r − r*‖²  s.t.  ∇h(x_m)ᵀ(A_m x_m + B_m r) ≥ −γ h(x_m)`.
pub fn reference_qp_filter(
    b: &dyn BarrierFunction,
    reference: &ReferenceModel,
    x_m: &DVector<f64>,
    r_star: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    if x_m.len() != reference.n() || r_star.len() != reference.p() {
        return Err(Error::dim("reference_qp_filter", reference.p(), r_star.len()));
    }
    let c = nominal_reference_constraint(b, reference, gamma, x_m);
    qp_single_constraint(r_star, &c.a, c.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorityVerdict {
    AuthorityOk,
    SafeWithoutInput,
    Assumption5Violated,
}

impl AuthorityVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuthorityVerdict::AuthorityOk => "authority_ok",
            AuthorityVerdict::SafeWithoutInput => "safe_without_input",
            AuthorityVerdict::Assumption5Violated => "assumption5_violated",
        }
    }
}

/// In the low-authority zone `‖a‖ ≤ c + d`, `r = 0` must already satisfy the
/// constraint, i.e. `β ≤ 0`.
pub fn check_authority(constraint: &SafetyConstraint, d: f64) -> AuthorityVerdict {
    if constraint.a.norm() > constraint.c + d {
        AuthorityVerdict::AuthorityOk
    } else if constraint.beta <= 0.0 {
        AuthorityVerdict::SafeWithoutInput
    } else {
        AuthorityVerdict::Assumption5Violated
    }
}
