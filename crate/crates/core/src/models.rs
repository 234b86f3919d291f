//! Uncertain plant, reference model, matching gains and the Lyapunov solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, check_len, check_shape};

/// Linear plant `x' = A_p x + B_p Λ u` with diagonal positive `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl PlantModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, lambda_diag: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::InvalidModel("A_p must be square".into()));
        }
        check_shape("PlantModel::B_p", &b, n, b.ncols())?;
        let m = b.ncols();
        check_len("PlantModel::lambda", &lambda_diag, m)?;
        if let Some((i, l)) = lambda_diag.iter().enumerate().find(|(_, l)| !(**l > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "lambda[{i}] = {l} must be strictly positive"
            )));
        }
        if linalg::rank(&b) != m {
            return Err(Error::InvalidModel("B_p must have full column rank".into()));
        }
        if !linalg::all_finite_mat(&a) || !linalg::all_finite_mat(&b) {
            return Err(Error::NonFinite("plant matrices"));
        }
        Ok(Self {
            a,
            b,
            lambda: lambda_diag,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn lambda_diag(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn lambda(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.lambda)
    }

    /// `B_p Λ`
    pub fn effective_input(&self) -> DMatrix<f64> {
        let mut bl = self.b.clone();
        for (j, l) in self.lambda.iter().enumerate() {
            bl.column_mut(j).scale_mut(*l);
        }
        bl
    }

    /// Same structure with the input effectiveness replaced.
    pub fn with_lambda(&self, lambda_diag: DVector<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), lambda_diag)
    }
}

/// Known reference dynamics `x_m' = A_m x_m + B_m r` with Hurwitz `A_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl ReferenceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidModel("A_m must be square".into()));
        }
        check_shape("ReferenceModel::B_m", &b, a.nrows(), b.ncols())?;
        if !linalg::all_finite_mat(&a) || !linalg::all_finite_mat(&b) {
            return Err(Error::NonFinite("reference matrices"));
        }
        let max_real = linalg::spectral_abscissa(&a);
        if !(max_real < 0.0) {
            return Err(Error::NotHurwitz { max_real });
        }
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Ideal gains solving `A_m = A_p + B_p Λ Θx*` and `B_m = B_p Λ Θr*`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingGains {
    pub theta_x: DMatrix<f64>,
    pub theta_r: DMatrix<f64>,
    /// Frobenius norm of the stacked matching defect.
    pub residual: f64,
}

/// How the simulated drift deviates from the nominal double integrator.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftMismatch {
    /// `A_p = s · A_nom`
    Scalar(f64),
    /// `A_p = ΔA · A_nom` for a full 6×6 premultiplier.
    Premultiply(DMatrix<f64>),
}

pub const QUAD_STATES: usize = 6;
pub const QUAD_INPUTS: usize = 3;

/// Nominal translational model: positions integrate velocities, inputs are accelerations.
pub fn quadrotor_nominal_drift() -> DMatrix<f64> {
    let mut a = DMatrix::zeros(QUAD_STATES, QUAD_STATES);
    a.view_mut((0, 3), (3, 3)).fill_with_identity();
    a
}

pub fn quadrotor_input_matrix() -> DMatrix<f64> {
    let mut b = DMatrix::zeros(QUAD_STATES, QUAD_INPUTS);
    b.view_mut((3, 0), (3, 3)).fill_with_identity();
    b
}

pub fn build_quadrotor_plant(mismatch: &DriftMismatch, lambda_diag: &[f64]) -> Result<PlantModel> {
    if lambda_diag.len() != QUAD_INPUTS {
        return Err(Error::dim("build_quadrotor_plant::lambda", QUAD_INPUTS, lambda_diag.len()));
    }
    let nominal = quadrotor_nominal_drift();
    let a = match mismatch {
        DriftMismatch::Scalar(s) => nominal * *s,
        DriftMismatch::Premultiply(d) => {
            check_shape("build_quadrotor_plant::mismatch", d, QUAD_STATES, QUAD_STATES)?;
            d * nominal
        }
    };
    PlantModel::new(
        a,
        quadrotor_input_matrix(),
        DVector::from_column_slice(lambda_diag),
    )
}

/// Second-order reference model for the quadrotor.
///
/// The unactuated (position) rows of `A_m` must equal those of `A_p` for the
/// matching condition to be solvable, so they are copied from `plant`. The
/// actuated rows are `[-kp I, -kd I]`, and `B_m = B_p`.
pub fn quadrotor_reference(plant: &PlantModel, kp: f64, kd: f64) -> Result<ReferenceModel> {
    if plant.n() != QUAD_STATES || plant.m() != QUAD_INPUTS {
        return Err(Error::dim(
            "quadrotor_reference",
            "6x6 plant with 3 inputs",
            format!("{}x{} with {} inputs", plant.n(), plant.n(), plant.m()),
        ));
    }
    let mut a = DMatrix::zeros(QUAD_STATES, QUAD_STATES);
    a.view_mut((0, 0), (3, 6)).copy_from(&plant.a().view((0, 0), (3, 6)));
    for i in 0..3 {
        a[(3 + i, i)] = -kp;
        a[(3 + i, 3 + i)] = -kd;
    }
    ReferenceModel::new(a, quadrotor_input_matrix())
}

/// Relative matching tolerance applied by default.
pub const MATCHING_REL_TOL: f64 = 1e-8;

pub fn default_matching_tol(reference: &ReferenceModel) -> f64 {
    MATCHING_REL_TOL * reference.a().norm().max(1.0)
}

pub fn solve_matching_gains(
    plant: &PlantModel,
    reference: &ReferenceModel,
    tol: f64,
) -> Result<MatchingGains> {
    if plant.n() != reference.n() {
        return Err(Error::dim("solve_matching_gains", plant.n(), reference.n()));
    }
    let bl = plant.effective_input();
    let svd = bl.clone().svd(true, true);
    let lhs_x = reference.a() - plant.a();
    let theta_x = svd
        .solve(&lhs_x, f64::EPSILON)
        .map_err(|_| Error::Singular("matching least squares"))?;
    let theta_r = svd
        .solve(reference.b(), f64::EPSILON)
        .map_err(|_| Error::Singular("matching least squares"))?;
    let dx = (&bl * &theta_x - &lhs_x).norm();
    let dr = (&bl * &theta_r - reference.b()).norm();
    let residual = (dx * dx + dr * dr).sqrt();
    if !(residual <= tol) {
        return Err(Error::MatchingInfeasible { residual, tol });
    }
    Ok(MatchingGains {
        theta_x,
        theta_r,
        residual,
    })
}

pub fn plant_dynamics(plant: &PlantModel, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("plant_dynamics::x", x, plant.n())?;
    check_len("plant_dynamics::u", u, plant.m())?;
    let scaled = u.component_mul(plant.lambda_diag());
    Ok(plant.a() * x + plant.b() * scaled)
}

pub fn reference_dynamics(
    reference: &ReferenceModel,
    x_m: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("reference_dynamics::x_m", x_m, reference.n())?;
    check_len("reference_dynamics::r", r, reference.p())?;
    Ok(reference.a() * x_m + reference.b() * r)
}

/// Solves `A_mᵀ P + P A_m = -Q` by Kronecker vectorization.
///
/// `(I ⊗ A_mᵀ + A_mᵀ ⊗ I) vec(P) = -vec(Q)` is an `n² × n²` dense system,
/// which is fine for the state sizes used here (n ≤ 20).
pub fn solve_lyapunov(a_m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_m.nrows();
    if !a_m.is_square() {
        return Err(Error::dim("solve_lyapunov::A_m", "square", format!("{:?}", a_m.shape())));
    }
    check_shape("solve_lyapunov::Q", q, n, n)?;
    let max_real = linalg::spectral_abscissa(a_m);
    if !(max_real < 0.0) {
        return Err(Error::NotHurwitz { max_real });
    }
    if !linalg::is_spd(q) {
        return Err(Error::NotPositiveDefinite("Q"));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a_m.transpose();
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let vec_p = k
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Lyapunov Kronecker system"))?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = lyapunov_residual(a_m, &p, q);
    let bound = 1e-9 * q.norm();
    if !(residual <= bound) {
        return Err(Error::LyapunovResidual { residual, bound });
    }
    if p.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("P"));
    }
    Ok(p)
}

/// `‖A_mᵀ P + P A_m + Q‖_F`
pub fn lyapunov_residual(a_m: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a_m.transpose() * p + p * a_m + q).norm()
}
