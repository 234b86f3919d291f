use serde::{Deserialize, Serialize};

use super::SimTrace;

/// Scalar summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub min_h_plant: f64,
    pub min_h_ref: f64,
    pub terminal_goal_distance: f64,
    pub terminal_tracking_error: f64,
    /// `∫‖u‖² dt`, trapezoid rule.
    pub control_effort: f64,
    /// `∫‖dr/dt‖ dt` from first differences, i.e. `Σ‖r_{k+1} − r_k‖`.
    pub smoothness: f64,
    /// Steps carrying a fault (infeasible filter or violated assumption).
    pub fault_count: usize,
    /// Steps carrying any monitor flag that is not a fault.
    pub budget_violation_count: usize,
}

pub fn metrics(trace: &SimTrace) -> Metrics {
    let rows = &trace.rows;
    let min_h_plant = rows.iter().map(|r| r.h_plant).fold(f64::INFINITY, f64::min);
    let min_h_ref = rows.iter().map(|r| r.h_ref).fold(f64::INFINITY, f64::min);
    let (terminal_goal_distance, terminal_tracking_error) = rows
        .last()
        .map_or((f64::NAN, f64::NAN), |r| (r.goal_distance(&trace.goal), r.e_x_norm));
    let sq = |u: &[f64]| u.iter().map(|x| x * x).sum::<f64>();
    let control_effort = rows
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (sq(&w[0].u) + sq(&w[1].u)))
        .sum();
    let smoothness = rows
        .windows(2)
        .map(|w| {
            w[0].r
                .iter()
                .zip(&w[1].r)
                .map(|(a, b)| (b - a).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    let fault_count = rows.iter().filter(|r| r.fault).count();
    let budget_violation_count = rows
        .iter()
        .filter(|r| r.flags.iter().any(|f| !super::flags::is_fault(f)))
        .count();
    Metrics {
        min_h_plant,
        min_h_ref,
        terminal_goal_distance,
        terminal_tracking_error,
        control_effort,
        smoothness,
        fault_count,
        budget_violation_count,
    }
}
