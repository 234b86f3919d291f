use nalgebra::DVector;

use crate::error::{Error, Result};

/// `argmin ‖u − u*‖²  s.t.  aᵀu ≥ b`, by Euclidean projection onto the halfspace.
pub fn qp_single_constraint(u_star: &DVector<f64>, a: &DVector<f64>, b_lower: f64) -> Result<DVector<f64>> {
    if u_star.len() != a.len() {
        return Err(Error::dim("qp_single_constraint", u_star.len(), a.len()));
    }
    let slack = a.dot(u_star) - b_lower;
    if slack >= 0.0 {
        return Ok(u_star.clone());
    }
    let nrm2 = a.norm_squared();
    if nrm2 == 0.0 {
        return Err(Error::Infeasible(format!(
            "zero constraint normal with violation {:.3e}",
            -slack
        )));
    }
    Ok(u_star + a * (-slack / nrm2))
}
