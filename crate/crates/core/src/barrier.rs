//! Barrier functions, barrier-error quantities, and Lipschitz budgets.
//!
//! Two concrete barriers are provided. [`SphereBarrier`] is the obstacle
//! constraint itself, `‖p − p_o‖² − r_o²`. It depends on position only, so
//! its gradient is orthogonal to the range of any input matrix that acts on
//! the velocity rows. [`BrakingBarrier`] adds the radial velocity to a
//! smoothed distance margin; its superlevel set is contained in the sphere's
//! and the reference input reaches it with relative degree one.

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};
use crate::models::ReferenceModel;

/// A continuously differentiable scalar `h(x)` with safe set `{h ≥ 0}`.
pub trait BarrierFunction: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// Index triple selecting a 3-vector from the state.
pub type Selector = [usize; 3];

fn slice3(x: &DVector<f64>, idx: Selector) -> Vector3<f64> {
    Vector3::new(x[idx[0]], x[idx[1]], x[idx[2]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereBarrier {
    center: Vector3<f64>,
    radius: f64,
    positions: Selector,
}

impl SphereBarrier {
    pub fn new(center: [f64; 3], radius: f64, positions: Selector) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidModel(format!("sphere radius {radius} must be positive")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("sphere center"));
        }
        Ok(Self {
            center: Vector3::from(center),
            radius,
            positions,
        })
    }

    /// Quadrotor layout: positions in the first three states.
    pub fn quadrotor(center: [f64; 3], radius: f64) -> Result<Self> {
        Self::new(center, radius, [0, 1, 2])
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl BarrierFunction for SphereBarrier {
    fn name(&self) -> &'static str {
        "sphere"
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        let d = slice3(x, self.positions) - self.center;
        d.norm_squared() - self.radius * self.radius
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = slice3(x, self.positions) - self.center;
        let mut g = DVector::zeros(x.len());
        for (k, &i) in self.positions.iter().enumerate() {
            g[i] = 2.0 * d[k];
        }
        g
    }
}

/// `h(x) = (p − p_o)ᵀv / d_ε + k (d_ε − d_ε0)` with
/// `d_ε = sqrt(‖p − p_o‖² + ε²)` and `d_ε0 = sqrt(r_o² + ε²)`.
///
/// When `h ≥ 0` holds along a trajectory with `p' = s·v` (`s > 0`), the
/// smoothed distance obeys `d_ε' ≥ −s k (d_ε − d_ε0)`, so `‖p − p_o‖ ≥ r_o`
/// is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct BrakingBarrier {
    center: Vector3<f64>,
    radius: f64,
    decay: f64,
    smoothing: f64,
    positions: Selector,
    velocities: Selector,
}

impl BrakingBarrier {
    pub fn new(
        center: [f64; 3],
        radius: f64,
        decay: f64,
        smoothing: f64,
        positions: Selector,
        velocities: Selector,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidModel(format!("sphere radius {radius} must be positive")));
        }
        if !(decay > 0.0) {
            return Err(Error::InvalidModel(format!("braking decay {decay} must be positive")));
        }
        if !(smoothing > 0.0) {
            return Err(Error::InvalidModel(format!("smoothing {smoothing} must be positive")));
        }
        Ok(Self {
            center: Vector3::from(center),
            radius,
            decay,
            smoothing,
            positions,
            velocities,
        })
    }

    pub fn quadrotor(center: [f64; 3], radius: f64, decay: f64, smoothing: f64) -> Result<Self> {
        Self::new(center, radius, decay, smoothing, [0, 1, 2], [3, 4, 5])
    }

    fn smoothed(&self, dist_sq: f64) -> f64 {
        (dist_sq + self.smoothing * self.smoothing).sqrt()
    }
}

impl BarrierFunction for BrakingBarrier {
    fn name(&self) -> &'static str {
        "braking"
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        let d = slice3(x, self.positions) - self.center;
        let v = slice3(x, self.velocities);
        let de = self.smoothed(d.norm_squared());
        let de0 = self.smoothed(self.radius * self.radius);
        d.dot(&v) / de + self.decay * (de - de0)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = slice3(x, self.positions) - self.center;
        let v = slice3(x, self.velocities);
        let de = self.smoothed(d.norm_squared());
        let dv = d.dot(&v);
        let grad_p = v / de - d * (dv / (de * de * de)) + d * (self.decay / de);
        let grad_v = d / de;
        let mut g = DVector::zeros(x.len());
        for k in 0..3 {
            g[self.positions[k]] += grad_p[k];
            g[self.velocities[k]] += grad_v[k];
        }
        g
    }
}

/// `e_h = h(x_p) − h(x_m)`
pub fn barrier_error(b: &dyn BarrierFunction, x_p: &DVector<f64>, x_m: &DVector<f64>) -> f64 {
    b.evaluate(x_p) - b.evaluate(x_m)
}

/// `ḣ(x_m) = ∇h(x_m)ᵀ (A_m x_m + B_m r)`
pub fn reference_h_dot(
    b: &dyn BarrierFunction,
    reference: &ReferenceModel,
    x_m: &DVector<f64>,
    r: &DVector<f64>,
) -> f64 {
    let g = b.gradient(x_m);
    g.dot(&(reference.a() * x_m + reference.b() * r))
}

/// Axis-aligned box in state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl StateBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Lipschitz("region bounds must have equal, nonzero length".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Lipschitz("empty region".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Maps a point of the unit cube onto the box.
    pub fn map_unit(&self, unit: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            unit.iter()
                .enumerate()
                .map(|(i, t)| self.lower[i] + t * (self.upper[i] - self.lower[i])),
        )
    }
}

/// Lipschitz constants bounding the barrier mismatch over a region.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzBudget {
    pub l1: f64,
    pub l2: f64,
    pub region: StateBox,
}

impl LipschitzBudget {
    pub fn new(l1: f64, l2: f64, region: StateBox) -> Result<Self> {
        if !(l1 > 0.0) || !(l2 > 0.0) || !l1.is_finite() || !l2.is_finite() {
            return Err(Error::Lipschitz(format!("constants must be positive (L1 = {l1}, L2 = {l2})")));
        }
        Ok(Self { l1, l2, region })
    }
}

pub const MIN_LIPSCHITZ_SAMPLES: usize = 1000;
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.1;

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// `i`-th Halton point in `[0, 1)^dim` (index starts at 1 to skip the origin).
pub fn halton_point(i: u64, dim: usize) -> Vec<f64> {
    (0..dim).map(|k| radical_inverse(i + 1, PRIMES[k])).collect()
}

/// Sampled estimate of `sup ‖∇h‖` over `region`, scaled by `safety_factor`.
///
/// Samples are the box vertices (for dimension ≤ 16) followed by `samples`
/// Halton points, so the result is deterministic. `L2` defaults to `L1`.
pub fn estimate_lipschitz(
    b: &dyn BarrierFunction,
    region: &StateBox,
    samples: usize,
    safety_factor: f64,
) -> Result<LipschitzBudget> {
    estimate_lipschitz_seeded(b, region, samples, safety_factor, 0)
}

/// As [`estimate_lipschitz`], with the Halton sequence starting at index `seed`.
pub fn estimate_lipschitz_seeded(
    b: &dyn BarrierFunction,
    region: &StateBox,
    samples: usize,
    safety_factor: f64,
    seed: u64,
) -> Result<LipschitzBudget> {
    if samples < MIN_LIPSCHITZ_SAMPLES {
        return Err(Error::Lipschitz(format!(
            "need at least {MIN_LIPSCHITZ_SAMPLES} samples, got {samples}"
        )));
    }
    if region.dim() > PRIMES.len() {
        return Err(Error::Lipschitz(format!("region dimension {} too large", region.dim())));
    }
    let dim = region.dim();
    let mut sup = 0.0_f64;
    if dim <= 16 {
        for mask in 0u32..(1 << dim) {
            let unit: Vec<f64> = (0..dim).map(|k| ((mask >> k) & 1) as f64).collect();
            sup = sup.max(b.gradient(&region.map_unit(&unit)).norm());
        }
    }
    for i in 0..samples as u64 {
        let x = region.map_unit(&halton_point(seed.wrapping_add(i), dim));
        sup = sup.max(b.gradient(&x).norm());
    }
    if !sup.is_finite() {
        return Err(Error::NonFinite("barrier gradient"));
    }
    if sup <= 0.0 {
        return Err(Error::Lipschitz("barrier gradient vanishes on the region".into()));
    }
    let l1 = safety_factor * sup;
    LipschitzBudget::new(l1, l1, region.clone())
}

/// Relative mismatch between `∇hᵀd` and a central difference along `d`.
pub fn directional_gradient_error(b: &dyn BarrierFunction, x: &DVector<f64>, dir: &DVector<f64>, step: f64) -> f64 {
    let analytic = b.gradient(x).dot(dir);
    let fd = (b.evaluate(&(x + dir * step)) - b.evaluate(&(x - dir * step))) / (2.0 * step);
    (analytic - fd).abs() / (1.0 + analytic.abs().max(fd.abs()))
}
