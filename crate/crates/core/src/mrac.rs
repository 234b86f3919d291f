//! Direct model-reference adaptive control: control law, adaptation laws and
//! the Lyapunov diagnostic used to monitor the closed loop.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, check_len, check_shape};
use crate::models::{solve_lyapunov, MatchingGains};

/// Current parameter estimates `Θ̂x` (m×n) and `Θ̂r` (m×p).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    pub theta_x: DMatrix<f64>,
    pub theta_r: DMatrix<f64>,
}

impl AdaptiveState {
    pub fn new(theta_x: DMatrix<f64>, theta_r: DMatrix<f64>) -> Result<Self> {
        if theta_x.nrows() != theta_r.nrows() {
            return Err(Error::dim("AdaptiveState", theta_x.nrows(), theta_r.nrows()));
        }
        let s = Self { theta_x, theta_r };
        s.check_finite()?;
        Ok(s)
    }

    pub fn zeros(m: usize, n: usize, p: usize) -> Self {
        Self {
            theta_x: DMatrix::zeros(m, n),
            theta_r: DMatrix::zeros(m, p),
        }
    }

    pub fn from_matching(g: &MatchingGains) -> Self {
        Self {
            theta_x: g.theta_x.clone(),
            theta_r: g.theta_r.clone(),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        if linalg::all_finite_mat(&self.theta_x) && linalg::all_finite_mat(&self.theta_r) {
            Ok(())
        } else {
            Err(Error::NonFinite("adaptive parameters"))
        }
    }

    /// Clamp every entry into `[-bound, bound]`.
    pub fn project(&mut self, bound: f64) {
        for v in self.theta_x.iter_mut().chain(self.theta_r.iter_mut()) {
            *v = v.clamp(-bound, bound);
        }
    }

    /// `Θ̃ = Θ* − Θ̂` for both gains.
    pub fn estimation_error(&self, ideal: &MatchingGains) -> (DMatrix<f64>, DMatrix<f64>) {
        (&ideal.theta_x - &self.theta_x, &ideal.theta_r - &self.theta_r)
    }
}

/// Adaptation rate, either a positive scalar or an SPD matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Gain {
    fn to_matrix(&self, dim: usize, name: &'static str) -> Result<DMatrix<f64>> {
        match self {
            Gain::Scalar(g) if *g > 0.0 && g.is_finite() => Ok(DMatrix::identity(dim, dim) * *g),
            Gain::Scalar(_) => Err(Error::NotPositiveDefinite(name)),
            Gain::Matrix(m) => {
                check_shape(name, m, dim, dim)?;
                if linalg::is_spd(m) {
                    Ok(m.clone())
                } else {
                    Err(Error::NotPositiveDefinite(name))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveGains {
    gamma_x: DMatrix<f64>,
    gamma_r: DMatrix<f64>,
    gamma_x_inv: DMatrix<f64>,
    gamma_r_inv: DMatrix<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl AdaptiveGains {
    /// Builds the gains and solves the Lyapunov equation for `(A_m, Q)`.
    pub fn new(gamma_x: &Gain, gamma_r: &Gain, a_m: &DMatrix<f64>, q: DMatrix<f64>, p_dim: usize) -> Result<Self> {
        let n = a_m.nrows();
        let gx = gamma_x.to_matrix(n, "Gamma_x")?;
        let gr = gamma_r.to_matrix(p_dim, "Gamma_r")?;
        let p = solve_lyapunov(a_m, &q)?;
        let gamma_x_inv = gx.clone().try_inverse().ok_or(Error::Singular("Gamma_x"))?;
        let gamma_r_inv = gr.clone().try_inverse().ok_or(Error::Singular("Gamma_r"))?;
        Ok(Self {
            gamma_x: gx,
            gamma_r: gr,
            gamma_x_inv,
            gamma_r_inv,
            p,
            q,
        })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn gamma_x(&self) -> &DMatrix<f64> {
        &self.gamma_x
    }

    pub fn gamma_r(&self) -> &DMatrix<f64> {
        &self.gamma_r
    }
}

/// `u = Θ̂x x_p + Θ̂r r`
pub fn control_input(state: &AdaptiveState, x_p: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("control_input::x_p", x_p, state.theta_x.ncols())?;
    check_len("control_input::r", r, state.theta_r.ncols())?;
    Ok(&state.theta_x * x_p + &state.theta_r * r)
}

/// Time derivatives of `(Θ̂x, Θ̂r)`.
///
/// The printed laws `−Γ x eᵀ P B` are n×m while `Θ̂x` is m×n; this is the
/// transposed form `−B_pᵀ P e xᵀ Γ`, the one for which the Lyapunov
/// derivative collapses to the quadratic tracking term.
pub fn adaptation_derivatives(
    gains: &AdaptiveGains,
    x_p: &DVector<f64>,
    r: &DVector<f64>,
    e_x: &DVector<f64>,
    b_p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = gains.p.nrows();
    check_len("adaptation_derivatives::x_p", x_p, n)?;
    check_len("adaptation_derivatives::e_x", e_x, n)?;
    check_len("adaptation_derivatives::r", r, gains.gamma_r.nrows())?;
    check_shape("adaptation_derivatives::B_p", b_p, n, b_p.ncols())?;
    let s = -(b_p.transpose() * (&gains.p * e_x));
    let dx = &s * (x_p.transpose() * &gains.gamma_x);
    let dr = &s * (r.transpose() * &gains.gamma_r);
    Ok((dx, dr))
}

/// `e_x = x_p − x_m`
pub fn tracking_error(x_p: &DVector<f64>, x_m: &DVector<f64>) -> DVector<f64> {
    x_p - x_m
}

/// `e_u = u − u*` with the ideal input `u* = Θx* x_p + Θr* r`.
pub fn output_error(
    state: &AdaptiveState,
    matching: &MatchingGains,
    x_p: &DVector<f64>,
    r: &DVector<f64>,
) -> DVector<f64> {
    let u = &state.theta_x * x_p + &state.theta_r * r;
    let u_star = &matching.theta_x * x_p + &matching.theta_r * r;
    u - u_star
}

/// Lyapunov candidate
/// `½ eᵀPe + ½ Tr(Θ̃x Γx⁻¹ Θ̃xᵀ Λ) + ½ Tr(Θ̃r Γr⁻¹ Θ̃rᵀ Λ)`.
///
/// Along closed-loop solutions its derivative is `−½ eᵀQe`.
pub fn lyapunov_value(
    e_x: &DVector<f64>,
    state: &AdaptiveState,
    matching: &MatchingGains,
    gains: &AdaptiveGains,
    lambda: &DMatrix<f64>,
) -> f64 {
    let (tx, tr) = state.estimation_error(matching);
    let quad = e_x.dot(&(&gains.p * e_x));
    let px = (&tx * &gains.gamma_x_inv * tx.transpose() * lambda).trace();
    let pr = (&tr * &gains.gamma_r_inv * tr.transpose() * lambda).trace();
    0.5 * (quad + px + pr)
}

/// Analytic value of `dV/dt` along the closed loop.
pub fn lyapunov_rate(e_x: &DVector<f64>, gains: &AdaptiveGains) -> f64 {
    -0.5 * e_x.dot(&(&gains.q * e_x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_quadrotor_plant, quadrotor_reference, solve_matching_gains, DriftMismatch};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn zero_gains_give_zero_input() {
        let s = AdaptiveState::zeros(3, 6, 3);
        let u = control_input(&s, &DVector::from_element(6, 2.0), &dv(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(u, DVector::zeros(3));
    }

    #[test]
    fn identity_feedback() {
        let s = AdaptiveState::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let u = control_input(&s, &dv(&[1.0, 2.0]), &dv(&[5.0])).unwrap();
        assert_eq!(u, dv(&[1.0, 2.0]));
        assert!(control_input(&s, &dv(&[1.0]), &dv(&[5.0])).is_err());
    }

    #[test]
    fn adaptation_stops_at_zero_error() {
        let gains = AdaptiveGains::new(
            &Gain::Scalar(10.0),
            &Gain::Scalar(10.0),
            &(-DMatrix::identity(2, 2)),
            DMatrix::identity(2, 2),
            1,
        )
        .unwrap();
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (dx, dr) =
            adaptation_derivatives(&gains, &dv(&[3.0, -1.0]), &dv(&[2.0]), &DVector::zeros(2), &b).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        assert!(dr.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_adaptation_law() {
        // P = 1 needs a = -q/2: pick a = -1/2, q = 1
        let gains =
            AdaptiveGains::new(&Gain::Scalar(1.0), &Gain::Scalar(1.0), &scalar(-0.5), scalar(1.0), 1).unwrap();
        assert!((gains.p()[(0, 0)] - 1.0).abs() < 1e-14);
        let (dx, _) = adaptation_derivatives(&gains, &dv(&[2.0]), &dv(&[0.0]), &dv(&[3.0]), &scalar(1.0)).unwrap();
        assert!((dx[(0, 0)] + 6.0).abs() < 1e-14);
    }

    #[test]
    fn tracking_error_examples() {
        assert_eq!(tracking_error(&dv(&[1.0, 2.0]), &dv(&[1.0, 2.0])), DVector::zeros(2));
        assert_eq!(tracking_error(&dv(&[1.0, 0.0]), &dv(&[0.0, 1.0])), dv(&[1.0, -1.0]));
    }

    #[test]
    fn ideal_gains_reproduce_ideal_input() {
        let plant = build_quadrotor_plant(&DriftMismatch::Scalar(1.3), &[0.6, 0.8, 1.1]).unwrap();
        let reference = quadrotor_reference(&plant, 4.0, 4.0).unwrap();
        let g = solve_matching_gains(&plant, &reference, 1e-8).unwrap();
        let s = AdaptiveState::from_matching(&g);
        let x = dv(&[1.0, -2.0, 0.5, 0.3, 0.0, -1.0]);
        let r = dv(&[0.2, 0.1, -0.4]);
        assert!(output_error(&s, &g, &x, &r).norm() < 1e-14);
        assert!(output_error(&AdaptiveState::zeros(3, 6, 3), &g, &DVector::zeros(6), &DVector::zeros(3)).norm() == 0.0);
    }

    #[test]
    fn lyapunov_value_examples() {
        let gains =
            AdaptiveGains::new(&Gain::Scalar(1.0), &Gain::Scalar(1.0), &scalar(-1.0), scalar(4.0), 1).unwrap();
        assert!((gains.p()[(0, 0)] - 2.0).abs() < 1e-14);
        let g = MatchingGains {
            theta_x: scalar(0.7),
            theta_r: scalar(-0.2),
            residual: 0.0,
        };
        let s = AdaptiveState::from_matching(&g);
        let v = lyapunov_value(&dv(&[1.0]), &s, &g, &gains, &scalar(1.0));
        assert!((v - 1.0).abs() < 1e-14);
        assert_eq!(lyapunov_value(&dv(&[0.0]), &s, &g, &gains, &scalar(1.0)), 0.0);
    }

    #[test]
    fn projection_clamps_entries() {
        let mut s = AdaptiveState::new(scalar(5.0), scalar(-7.0)).unwrap();
        s.project(2.0);
        assert_eq!(s.theta_x[(0, 0)], 2.0);
        assert_eq!(s.theta_r[(0, 0)], -2.0);
    }

    #[test]
    fn non_finite_state_rejected() {
        assert!(AdaptiveState::new(scalar(f64::NAN), scalar(0.0)).is_err());
    }

    #[test]
    fn bad_gain_rejected() {
        let a = -DMatrix::identity(2, 2);
        assert!(AdaptiveGains::new(&Gain::Scalar(0.0), &Gain::Scalar(1.0), &a, DMatrix::identity(2, 2), 1).is_err());
        let not_spd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(AdaptiveGains::new(&Gain::Matrix(not_spd), &Gain::Scalar(1.0), &a, DMatrix::identity(2, 2), 1).is_err());
    }
}
