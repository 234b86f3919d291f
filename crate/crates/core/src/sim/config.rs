//! Scenario configuration.
//!
//! The file format is TOML. Every key is optional; absent keys take the
//! benchmark defaults. The README lists every key.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::barrier::{BarrierFunction, BrakingBarrier, SphereBarrier};
use crate::error::{Error, Result};
use crate::mrac::Gain;

/// A number or a square matrix given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrMatrix {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl ScalarOrMatrix {
    pub fn to_matrix(&self, n: usize, key: &str) -> Result<DMatrix<f64>> {
        match self {
            ScalarOrMatrix::Scalar(s) => Ok(DMatrix::identity(n, n) * *s),
            ScalarOrMatrix::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::config(key, format!("must be a scalar or a {n}x{n} matrix")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    pub fn to_gain(&self, n: usize, key: &str) -> Result<Gain> {
        match self {
            ScalarOrMatrix::Scalar(s) => Ok(Gain::Scalar(*s)),
            ScalarOrMatrix::Matrix(_) => Ok(Gain::Matrix(self.to_matrix(n, key)?)),
        }
    }
}

/// A bound that is either given or computed from pilot runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BudgetValue {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for BudgetValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BudgetValue::Auto => s.serialize_str("auto"),
            BudgetValue::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for BudgetValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(BudgetValue::Value(v)),
            Raw::Int(v) => Ok(BudgetValue::Value(v as f64)),
            Raw::Word(w) if w == "auto" => Ok(BudgetValue::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected \"auto\" or a number, got {w:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    PlantQp,
    ReferenceQp,
    RobustSocp,
    None,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [
        FilterKind::PlantQp,
        FilterKind::ReferenceQp,
        FilterKind::RobustSocp,
        FilterKind::None,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::PlantQp => "PlantQP",
            FilterKind::ReferenceQp => "ReferenceQP",
            FilterKind::RobustSocp => "RobustSOCP",
            FilterKind::None => "None",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
        match key.as_str() {
            "plantqp" => Ok(FilterKind::PlantQp),
            "referenceqp" | "refqp" => Ok(FilterKind::ReferenceQp),
            "robustsocp" | "socp" => Ok(FilterKind::RobustSocp),
            "none" => Ok(FilterKind::None),
            _ => Err(Error::config("filter", format!("unknown filter name {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialEstimate {
    /// `Λ̂ = I`.
    Nominal,
    /// `Λ̂ = adaptation.lambda_prior`.
    Prior,
    /// The true matching gains.
    Ideal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    /// Premultiplier of the nominal drift: scalar or 6x6.
    pub mismatch: ScalarOrMatrix,
    pub lambda: Vec<f64>,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            mismatch: ScalarOrMatrix::Scalar(1.3),
            lambda: vec![0.6, 0.8, 1.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    pub kp: f64,
    pub kd: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self { kp: 1.04, kd: 3.92 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationSection {
    pub gamma_x: ScalarOrMatrix,
    pub gamma_r: ScalarOrMatrix,
    pub q: ScalarOrMatrix,
    pub init: InitialEstimate,
    pub lambda_prior: Vec<f64>,
    /// Entrywise clamp on the estimates after each step; 0 disables it.
    pub projection: f64,
}

impl Default for AdaptationSection {
    fn default() -> Self {
        Self {
            gamma_x: ScalarOrMatrix::Scalar(0.044),
            gamma_r: ScalarOrMatrix::Scalar(0.044),
            q: ScalarOrMatrix::Scalar(1.0),
            init: InitialEstimate::Prior,
            lambda_prior: vec![0.61, 0.80, 1.12],
            projection: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierSection {
    pub center: [f64; 3],
    pub radius: f64,
    /// Distance-margin rate `k` of the braking certificate.
    pub decay: f64,
    /// Smoothing length `ε` of the braking certificate.
    pub smoothing: f64,
}

impl Default for BarrierSection {
    fn default() -> Self {
        Self {
            center: [5.0, 5.0, 2.5],
            radius: 2.0,
            decay: 3.0,
            smoothing: 2.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub theta_x: BudgetValue,
    pub theta_r: BudgetValue,
    pub lambda: BudgetValue,
    pub l1: BudgetValue,
    pub l2: BudgetValue,
    /// Velocity half-width of the Lipschitz region.
    pub speed_bound: BudgetValue,
    pub samples: usize,
    pub safety_factor: f64,
    /// Multiplier applied to observed sups when a bound is `auto`.
    pub headroom: f64,
    pub pilot_runs: usize,
    /// Relative inflation of the position box around start, goal and obstacle.
    pub region_inflation: f64,
    /// `d` in the low-authority test `‖a‖ ≤ c + d`.
    pub authority_margin: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            theta_x: BudgetValue::Auto,
            theta_r: BudgetValue::Auto,
            lambda: BudgetValue::Auto,
            l1: BudgetValue::Auto,
            l2: BudgetValue::Auto,
            speed_bound: BudgetValue::Auto,
            samples: 4096,
            safety_factor: 1.1,
            headroom: 1.2,
            pilot_runs: 4,
            region_inflation: 0.5,
            authority_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub kind: FilterKind,
    pub gamma: f64,
    pub rho: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            kind: FilterKind::RobustSocp,
            gamma: 4.5,
            rho: 2.73,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub goal: [f64; 3],
    pub gain: f64,
    pub r_max: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            goal: [10.0, 10.0, 5.0],
            gain: 1.04,
            r_max: 0.79,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            velocity: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { dt: 0.002, horizon: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub plant: PlantSection,
    pub reference: ReferenceSection,
    pub adaptation: AdaptationSection,
    pub barrier: BarrierSection,
    pub budget: BudgetSection,
    pub filter: FilterSection,
    pub policy: PolicySection,
    pub initial: InitialSection,
    pub time: TimeSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            plant: PlantSection::default(),
            reference: ReferenceSection::default(),
            adaptation: AdaptationSection::default(),
            barrier: BarrierSection::default(),
            budget: BudgetSection::default(),
            filter: FilterSection::default(),
            policy: PolicySection::default(),
            initial: InitialSection::default(),
            time: TimeSection::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, "must be positive"))
    }
}

fn finite(key: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::config(key, "must be finite"))
    }
}

fn budget_positive(key: &str, v: BudgetValue) -> Result<()> {
    match v {
        BudgetValue::Auto => Ok(()),
        BudgetValue::Value(x) => positive(key, x),
    }
}

fn gain_valid(key: &str, g: &ScalarOrMatrix, n: usize) -> Result<()> {
    match g {
        ScalarOrMatrix::Scalar(s) => positive(key, *s),
        ScalarOrMatrix::Matrix(_) => {
            let m = g.to_matrix(n, key)?;
            if !crate::linalg::is_symmetric(&m, 1e-12) || !crate::linalg::is_spd(&m) {
                return Err(Error::config(key, "must be symmetric positive definite"));
            }
            Ok(())
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::config("config", format!("parse error: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn with_filter(&self, kind: FilterKind) -> Self {
        let mut c = self.clone();
        c.filter.kind = kind;
        c
    }

    pub fn goal(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.policy.goal)
    }

    /// Number of recorded steps after the initial one.
    pub fn steps(&self) -> usize {
        (self.time.horizon / self.time.dt + 1e-9).floor() as usize
    }

    pub fn sphere(&self) -> Result<SphereBarrier> {
        SphereBarrier::quadrotor(self.barrier.center, self.barrier.radius)
    }

    pub fn certificate(&self) -> Result<BrakingBarrier> {
        BrakingBarrier::quadrotor(self.barrier.center, self.barrier.radius, self.barrier.decay, self.barrier.smoothing)
    }

    pub fn initial_state(&self) -> DVector<f64> {
        let mut x = DVector::zeros(6);
        for k in 0..3 {
            x[k] = self.initial.position[k];
            x[3 + k] = self.initial.velocity[k];
        }
        x
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.time;
        positive("time.dt", t.dt)?;
        if !(t.horizon >= t.dt) || !t.horizon.is_finite() {
            return Err(Error::config("time.horizon", "must be at least time.dt"));
        }
        if self.plant.lambda.len() != 3 {
            return Err(Error::config("plant.lambda", "must have 3 entries"));
        }
        for (i, l) in self.plant.lambda.iter().enumerate() {
            positive(&format!("plant.lambda[{i}]"), *l)?;
        }
        match &self.plant.mismatch {
            ScalarOrMatrix::Scalar(s) => finite("plant.mismatch", &[*s])?,
            m => {
                let mm = m.to_matrix(6, "plant.mismatch")?;
                finite("plant.mismatch", mm.as_slice())?;
            }
        }
        positive("reference.kp", self.reference.kp)?;
        positive("reference.kd", self.reference.kd)?;
        gain_valid("adaptation.gamma_x", &self.adaptation.gamma_x, 6)?;
        gain_valid("adaptation.gamma_r", &self.adaptation.gamma_r, 3)?;
        gain_valid("adaptation.q", &self.adaptation.q, 6)?;
        if self.adaptation.init == InitialEstimate::Prior {
            if self.adaptation.lambda_prior.len() != 3 {
                return Err(Error::config("adaptation.lambda_prior", "must have 3 entries"));
            }
            for (i, l) in self.adaptation.lambda_prior.iter().enumerate() {
                positive(&format!("adaptation.lambda_prior[{i}]"), *l)?;
            }
        }
        if !(self.adaptation.projection >= 0.0) {
            return Err(Error::config("adaptation.projection", "must be nonnegative"));
        }
        finite("barrier.center", &self.barrier.center)?;
        positive("barrier.radius", self.barrier.radius)?;
        positive("barrier.decay", self.barrier.decay)?;
        positive("barrier.smoothing", self.barrier.smoothing)?;
        let b = &self.budget;
        budget_positive("budget.theta_x", b.theta_x)?;
        budget_positive("budget.theta_r", b.theta_r)?;
        budget_positive("budget.lambda", b.lambda)?;
        budget_positive("budget.l1", b.l1)?;
        budget_positive("budget.l2", b.l2)?;
        budget_positive("budget.speed_bound", b.speed_bound)?;
        if b.samples < crate::barrier::MIN_LIPSCHITZ_SAMPLES {
            return Err(Error::config(
                "budget.samples",
                format!("must be at least {}", crate::barrier::MIN_LIPSCHITZ_SAMPLES),
            ));
        }
        if !(b.safety_factor >= 1.0) {
            return Err(Error::config("budget.safety_factor", "must be at least 1"));
        }
        if !(b.headroom >= 1.0) {
            return Err(Error::config("budget.headroom", "must be at least 1"));
        }
        if b.pilot_runs == 0 {
            return Err(Error::config("budget.pilot_runs", "must be at least 1"));
        }
        if !(b.region_inflation >= 0.0) {
            return Err(Error::config("budget.region_inflation", "must be nonnegative"));
        }
        if !(b.authority_margin >= 0.0) {
            return Err(Error::config("budget.authority_margin", "must be nonnegative"));
        }
        positive("filter.gamma", self.filter.gamma)?;
        positive("filter.rho", self.filter.rho)?;
        finite("policy.goal", &self.policy.goal)?;
        positive("policy.gain", self.policy.gain)?;
        positive("policy.r_max", self.policy.r_max)?;
        finite("initial.position", &self.initial.position)?;
        finite("initial.velocity", &self.initial.velocity)?;

        let x0 = self.initial_state();
        if self.sphere()?.evaluate(&x0) < 0.0 {
            return Err(Error::config("initial.position", "must lie outside the obstacle"));
        }
        if self.certificate()?.evaluate(&x0) < 0.0 {
            return Err(Error::config("initial.velocity", "must not approach the obstacle faster than the braking margin allows"));
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn negative_radius_rejected() {
        let err = ScenarioConfig::from_toml_str("[barrier]\nradius = -1.0\n").unwrap_err();
        assert_eq!(err.to_string(), "config error: barrier.radius must be positive");
    }

    #[test]
    fn start_inside_obstacle_rejected() {
        let err = ScenarioConfig::from_toml_str("[initial]\nposition = [5.0, 5.0, 2.0]\n").unwrap_err();
        assert!(err.to_string().contains("initial.position"));
    }

    #[test]
    fn budget_values_parse() {
        let cfg = ScenarioConfig::from_toml_str("[budget]\ntheta_x = 0.5\ntheta_r = \"auto\"\nl1 = 3\n").unwrap();
        assert_eq!(cfg.budget.theta_x, BudgetValue::Value(0.5));
        assert_eq!(cfg.budget.theta_r, BudgetValue::Auto);
        assert_eq!(cfg.budget.l1, BudgetValue::Value(3.0));
        assert!(ScenarioConfig::from_toml_str("[budget]\ntheta_x = \"big\"\n").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml_str("[barrier]\nradiuss = 1.0\n").is_err());
    }

    #[test]
    fn matrix_mismatch_parses() {
        let mut rows = String::from("[plant]\nmismatch = [");
        for i in 0..6 {
            let row: Vec<String> = (0..6).map(|j| if i == j { "1.2".into() } else { "0.0".into() }).collect();
            rows.push_str(&format!("[{}],", row.join(",")));
        }
        rows.push_str("]\n");
        let cfg = ScenarioConfig::from_toml_str(&rows).unwrap();
        assert_eq!(cfg.plant.mismatch.to_matrix(6, "m").unwrap(), DMatrix::identity(6, 6) * 1.2);
        assert!(ScenarioConfig::from_toml_str("[plant]\nmismatch = [[1.0]]\n").is_err());
    }

    #[test]
    fn filter_names() {
        assert_eq!("RobustSOCP".parse::<FilterKind>().unwrap(), FilterKind::RobustSocp);
        assert_eq!("plant_qp".parse::<FilterKind>().unwrap(), FilterKind::PlantQp);
        assert!("Magic".parse::<FilterKind>().is_err());
    }

    #[test]
    fn round_trip_and_fingerprint() {
        let cfg = ScenarioConfig::default();
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.fingerprint(), again.fingerprint());
        assert_ne!(cfg.fingerprint(), cfg.with_filter(FilterKind::None).fingerprint());
    }
}
