//! Brute-force reference solver for [`SocpProblem`].
//!
//! The objective and the constraint see `r` only through `‖r − r*‖`, `‖r‖`
//! and `aᵀr`; a component orthogonal to `span{r*, a}` leaves `aᵀr` alone and
//! grows both norms. So the search runs over at most two coordinates in that
//! span, with `η = ‖r‖` and `v = ‖r − r*‖`.

use nalgebra::DVector;
use rand::Rng;

use super::socp::{SocpProblem, SocpSolution, SocpStatus};

const REFINE_PASSES: usize = 2;
const REFINE_HALF_WIDTH_CELLS: f64 = 6.0;

fn orthonormal_span(prob: &SocpProblem) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in [&prob.r_star, &prob.a] {
        let mut w = v.clone();
        for b in &basis {
            w -= b * b.dot(&w);
        }
        let n = w.norm();
        if n > 1e-12 * (1.0 + v.norm()) {
            basis.push(w / n);
        }
    }
    basis
}

/// A feasible point, used to bound the search box.
fn feasible_point(prob: &SocpProblem) -> Option<DVector<f64>> {
    if prob.constraint_margin(&prob.r_star) >= 0.0 {
        return Some(prob.r_star.clone());
    }
    let a_norm = prob.a.norm();
    if a_norm > prob.c {
        let t = prob.beta.max(0.0) / (a_norm - prob.c);
        return Some(&prob.a * (t / a_norm));
    }
    if prob.beta <= 0.0 {
        return Some(DVector::zeros(prob.dim_r()));
    }
    None
}

/// Moves an infeasible point along `â` onto the constraint boundary.
///
/// With `‖a‖ > c` the margin is strictly increasing along `â`, and the
/// crossing solves `A τ − β = c √(τ² + w²)` for the `â`-coordinate `τ`, where
/// `w` is the norm of the part of `r` orthogonal to `a`.
fn snap_to_feasible(prob: &SocpProblem, r: DVector<f64>) -> Option<DVector<f64>> {
    let margin = prob.constraint_margin(&r);
    if margin >= 0.0 {
        return Some(r);
    }
    let big_a = prob.a.norm();
    let c = prob.c;
    if big_a <= c {
        return None;
    }
    let a_hat = &prob.a / big_a;
    let u = a_hat.dot(&r);
    let w2 = (r.norm_squared() - u * u).max(0.0);
    let beta = prob.beta;
    let qa = big_a * big_a - c * c;
    let disc = (big_a * big_a * beta * beta - qa * (beta * beta - c * c * w2)).max(0.0);
    let tau = (big_a * beta + disc.sqrt()) / qa;
    let moved = r + &a_hat * (tau - u);
    let tol = 1e-12 * (1.0 + beta.abs() + moved.norm());
    (prob.constraint_margin(&moved) >= -tol).then_some(moved)
}

/// Grid search with `grid` points per axis and two local refinements.
pub fn socp_oracle(prob: &SocpProblem, grid: usize) -> SocpSolution {
    let p = prob.dim_r();
    let grid = grid.max(3);
    let Some(start) = feasible_point(prob) else {
        return SocpSolution {
            r: DVector::from_element(p, f64::NAN),
            eta: f64::NAN,
            v: f64::NAN,
            status: SocpStatus::Infeasible,
            kkt_residual: f64::NAN,
            iterations: 0,
            dual: DVector::zeros(2 * p + 3),
        };
    };
    let basis = orthonormal_span(prob);
    let to_r = |coords: &[f64; 2]| -> DVector<f64> {
        let mut r = DVector::zeros(p);
        for (b, c) in basis.iter().zip(coords) {
            r += b * *c;
        }
        r
    };

    let mut best_r = start.clone();
    let mut best_f = prob.reduced_objective(&start);
    let mut best_c = [0.0; 2];
    for (k, b) in basis.iter().enumerate() {
        best_c[k] = b.dot(&start);
    }
    let mut evaluations = 1;

    let radius = prob.r_star.norm() + best_f + 1e-9;
    let mut center = [0.0; 2];
    let mut half = radius;
    for pass in 0..=REFINE_PASSES {
        let h = 2.0 * half / (grid - 1) as f64;
        let n0 = if basis.is_empty() { 1 } else { grid };
        let n1 = if basis.len() < 2 { 1 } else { grid };
        for i in 0..n0 {
            for j in 0..n1 {
                let c0 = if basis.is_empty() { 0.0 } else { center[0] - half + h * i as f64 };
                let c1 = if basis.len() < 2 { 0.0 } else { center[1] - half + h * j as f64 };
                let coords = [c0, c1];
                let Some(r) = snap_to_feasible(prob, to_r(&coords)) else {
                    continue;
                };
                evaluations += 1;
                let f = prob.reduced_objective(&r);
                if f < best_f {
                    best_f = f;
                    for (k, b) in basis.iter().enumerate() {
                        best_c[k] = b.dot(&r);
                    }
                    best_r = r;
                }
            }
        }
        if pass < REFINE_PASSES {
            center = best_c;
            half = REFINE_HALF_WIDTH_CELLS * h;
        }
    }

    let eta = best_r.norm();
    let v = (&best_r - &prob.r_star).norm();
    SocpSolution {
        r: best_r,
        eta,
        v,
        status: SocpStatus::Optimal,
        kkt_residual: f64::NAN,
        iterations: evaluations,
        dual: DVector::zeros(2 * p + 3),
    }
}

/// Random feasible instance with `p ∈ {1, 2, 3}`.
///
/// Most draws have `‖a‖ > c`; about one in eight lands in the low-authority
/// regime with `β < 0`, where only the ball around the origin is feasible.
pub fn random_feasible_instance<R: Rng + ?Sized>(rng: &mut R) -> SocpProblem {
    let p = rng.gen_range(1..=3);
    let r_star = DVector::from_fn(p, |_, _| rng.gen_range(-3.0..3.0));
    let a = DVector::from_fn(p, |_, _| rng.gen_range(-2.0..2.0));
    let rho = 10f64.powf(rng.gen_range(-3.0..0.3));
    let low_authority = rng.gen_bool(0.125);
    let (c, beta) = if low_authority {
        (a.norm() * rng.gen_range(1.0..2.0), -rng.gen_range(0.1..3.0))
    } else {
        (a.norm() * rng.gen_range(0.0..0.8), rng.gen_range(-3.0..3.0))
    };
    SocpProblem::new(r_star, rho, a, c, beta).expect("generated instance is valid")
}
