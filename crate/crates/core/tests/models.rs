use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refsafe::linalg::{is_spd, spectral_abscissa};
use refsafe::models::*;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Double integrator written out by hand: `ṗ = s v`, `v̇ = Λ u`.
fn hand_expanded(s: f64, lambda: &[f64], x: &[f64], u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 6];
    for k in 0..3 {
        out[k] = s * x[3 + k];
        out[3 + k] = lambda[k] * u[k];
    }
    out
}

#[test]
fn scaled_drift_pushes_position_from_velocity() {
    let plant = build_quadrotor_plant(&DriftMismatch::Scalar(1.3), &[1.0, 1.0, 1.0]).unwrap();
    let mut e4 = DVector::zeros(6);
    e4[3] = 1.0;
    let xdot = plant_dynamics(&plant, &e4, &DVector::zeros(3)).unwrap();
    let mut expected = DVector::zeros(6);
    expected[0] = 1.3;
    assert!((xdot - expected).norm() < 1e-15);
}

#[test]
fn pure_position_state_is_an_equilibrium() {
    let plant = build_quadrotor_plant(&DriftMismatch::Scalar(1.0), &[1.0, 1.0, 1.0]).unwrap();
    let mut e1 = DVector::zeros(6);
    e1[0] = 1.0;
    assert_eq!(plant_dynamics(&plant, &e1, &DVector::zeros(3)).unwrap(), DVector::zeros(6));
}

proptest! {
    #[test]
    fn plant_matches_hand_expansion(
        s in 0.5f64..2.0,
        lambda in prop::array::uniform3(0.2f64..2.0),
        x in prop::array::uniform6(-10.0f64..10.0),
        u in prop::array::uniform3(-10.0f64..10.0),
    ) {
        let plant = build_quadrotor_plant(&DriftMismatch::Scalar(s), &lambda).unwrap();
        let got = plant_dynamics(&plant, &dv(&x), &dv(&u)).unwrap();
        let want = hand_expanded(s, &lambda, &x, &u);
        for k in 0..6 {
            prop_assert!((got[k] - want[k]).abs() <= 1e-12 * (1.0 + want[k].abs()));
        }
    }

    #[test]
    fn matching_gains_reproduce_the_reference(
        s in 0.8f64..1.5,
        lambda in prop::array::uniform3(0.5f64..1.3),
        kp in 0.5f64..5.0,
        kd in 0.5f64..5.0,
    ) {
        let plant = build_quadrotor_plant(&DriftMismatch::Scalar(s), &lambda).unwrap();
        let reference = quadrotor_reference(&plant, kp, kd).unwrap();
        let g = solve_matching_gains(&plant, &reference, default_matching_tol(&reference)).unwrap();
        let bl = plant.effective_input();
        let drift_gap = plant.a() + &bl * &g.theta_x - reference.a();
        let input_gap = &bl * &g.theta_r - reference.b();
        prop_assert!(drift_gap.norm() < 1e-10);
        prop_assert!(input_gap.norm() < 1e-10);
        // Θr* = Λ⁻¹ because B_m = B_p
        for k in 0..3 {
            prop_assert!((g.theta_r[(k, k)] - 1.0 / lambda[k]).abs() < 1e-10);
        }
    }
}

#[test]
fn quadrotor_matching_copies_bottom_rows() {
    let plant = build_quadrotor_plant(&DriftMismatch::Scalar(1.0), &[1.0, 1.0, 1.0]).unwrap();
    let reference = quadrotor_reference(&plant, 4.0, 4.0).unwrap();
    let g = solve_matching_gains(&plant, &reference, 1e-10).unwrap();
    let mut expected = DMatrix::zeros(3, 6);
    for k in 0..3 {
        expected[(k, k)] = -4.0;
        expected[(k, 3 + k)] = -4.0;
    }
    assert!((&g.theta_x - &expected).norm() < 1e-12);
    // B_p Λ Θx* reproduces A_m − A_p by direct multiplication
    let product = plant.effective_input() * &g.theta_x;
    assert!((product - (reference.a() - plant.a())).norm() < 1e-12);
}

#[test]
fn matching_fails_when_kinematics_differ() {
    let plant = build_quadrotor_plant(&DriftMismatch::Scalar(1.3), &[1.0, 1.0, 1.0]).unwrap();
    let nominal = build_quadrotor_plant(&DriftMismatch::Scalar(1.0), &[1.0, 1.0, 1.0]).unwrap();
    let reference = quadrotor_reference(&nominal, 1.0, 2.0).unwrap();
    assert!(solve_matching_gains(&plant, &reference, 1e-8).is_err());
}

#[test]
fn unstable_reference_rejected() {
    let n = 2;
    assert!(ReferenceModel::new(DMatrix::identity(n, n), DMatrix::identity(n, n)).is_err());
    assert!(ReferenceModel::new(-DMatrix::identity(n, n), DMatrix::identity(n, n)).is_ok());
}

/// Random Hurwitz matrix with known eigen-decomposition `S D S⁻¹`.
fn diagonalizable_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let d = DVector::from_fn(n, |_, _| -rng.gen_range(0.2..5.0));
    loop {
        let s = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.0 } + rng.gen_range(-0.5..0.5));
        if let Some(si) = s.clone().try_inverse() {
            let a = &s * DMatrix::from_diagonal(&d) * &si;
            return (a, s, d);
        }
    }
}

#[test]
fn lyapunov_matches_eigenbasis_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let n = 1 + trial % 12;
        let (a, s, d) = diagonalizable_hurwitz(&mut rng, n);
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &l * l.transpose() + DMatrix::identity(n, n);
        let p = solve_lyapunov(&a, &q).unwrap();

        // In the eigenbasis: dᵢ P̃ᵢⱼ + P̃ᵢⱼ dⱼ = −Q̃ᵢⱼ with Q̃ = Sᵀ Q S, P = S⁻ᵀ P̃ S⁻¹.
        let qt = s.transpose() * &q * &s;
        let pt = DMatrix::from_fn(n, n, |i, j| -qt[(i, j)] / (d[i] + d[j]));
        let si = s.clone().try_inverse().unwrap();
        let oracle = si.transpose() * pt * &si;
        let scale = 1.0 + oracle.norm();
        assert!((&p - &oracle).norm() <= 1e-8 * scale, "trial {trial}: {}", (&p - &oracle).norm());
        assert!(lyapunov_residual(&a, &p, &q) <= 1e-9 * (1.0 + q.norm()));
        assert!(is_spd(&p));
    }
}

#[test]
fn lyapunov_rejects_non_hurwitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
    let shift = spectral_abscissa(&m) + 0.5;
    let unstable = &m - DMatrix::identity(4, 4) * (shift - 1.0);
    assert!(spectral_abscissa(&unstable) > 0.0);
    assert!(solve_lyapunov(&unstable, &DMatrix::identity(4, 4)).is_err());
}
