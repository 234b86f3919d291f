//! `run`, `compare` and `oracle-check` commands and their file outputs.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{metrics, parse_config, run_scenario, BudgetReport, FilterKind, Metrics, ScenarioConfig, SimTrace};
use crate::solvers::{random_feasible_instance, socp_oracle, SocpOptions, SocpSolver, SocpStatus};

pub const SCHEMA_VERSION: &str = "1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAULT: i32 = 2;

/// Relative objective gap and KKT residual accepted by `oracle-check`.
pub const ORACLE_GAP_TOL: f64 = 1e-4;
pub const ORACLE_KKT_TOL: f64 = 1e-6;
pub const ORACLE_GRID: usize = 201;

/// Column names of `trace.csv`, in order.
pub fn trace_columns(n: usize, p: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    let mut vec_cols = |name: &str, k: usize| cols.extend((0..k).map(|i| format!("{name}_{i}")));
    vec_cols("x_p", n);
    vec_cols("x_m", n);
    vec_cols("r_star", p);
    vec_cols("r", p);
    vec_cols("u", m);
    for c in [
        "e_x_norm",
        "h_plant",
        "h_ref",
        "e_h",
        "delta",
        "beta",
        "eta",
        "V",
        "filter_status",
        "authority",
        "budget_flags",
    ] {
        cols.push(c.to_string());
    }
    cols
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_trace_csv(trace: &SimTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(trace_columns(trace.n(), trace.p(), trace.m())).map_err(csv_err)?;
    for row in &trace.rows {
        let mut rec: Vec<String> = vec![row.t.to_string()];
        for v in [&row.x_p, &row.x_m, &row.r_star, &row.r, &row.u] {
            rec.extend(v.iter().map(f64::to_string));
        }
        for v in [row.e_x_norm, row.h_plant, row.h_ref, row.e_h, row.delta, row.beta, row.eta, row.v] {
            rec.push(v.to_string());
        }
        rec.push(row.status.as_str().to_string());
        rec.push(row.authority_str().to_string());
        rec.push(row.flags_str());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub refsafe: String,
    pub schema: String,
}

impl Versions {
    fn current() -> Self {
        Self {
            refsafe: env!("CARGO_PKG_VERSION").to_string(),
            schema: SCHEMA_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: String,
    pub filter: String,
    pub config_fingerprint: String,
    pub steps: usize,
    pub metrics: Metrics,
    pub budget: Option<BudgetReport>,
    pub versions: Versions,
}

impl RunSummary {
    pub fn new(cfg: &ScenarioConfig, trace: &SimTrace) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            filter: trace.filter.name().to_string(),
            config_fingerprint: cfg.fingerprint(),
            steps: trace.rows.len(),
            metrics: metrics(trace),
            budget: trace.budget.clone(),
            versions: Versions::current(),
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn write_run(cfg: &ScenarioConfig, trace: &SimTrace, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_trace_csv(trace, &dir.join("trace.csv"))?;
    let summary = RunSummary::new(cfg, trace);
    write_json(&summary, &dir.join("summary.json"))?;
    Ok(summary)
}

fn report(result: Result<i32>) -> i32 {
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

/// Runs the configured scenario once. Exit code 2 when any step faulted.
pub fn cmd_run(config_path: &Path, out_dir: &Path) -> i32 {
    report(run_inner(config_path, out_dir))
}

fn run_inner(config_path: &Path, out_dir: &Path) -> Result<i32> {
    let cfg = parse_config(config_path)?;
    let trace = run_scenario(&cfg)?;
    let summary = write_run(&cfg, &trace, out_dir)?;
    let m = &summary.metrics;
    println!(
        "{}: min_h_plant {:.6} faults {} budget flags {} -> {}",
        summary.filter,
        m.min_h_plant,
        m.fault_count,
        m.budget_violation_count,
        out_dir.display()
    );
    Ok(if m.fault_count > 0 { EXIT_FAULT } else { EXIT_OK })
}

/// Whether a filter is expected to keep the plant outside the obstacle on
/// the benchmark.
pub fn expected_safe(kind: FilterKind) -> bool {
    kind == FilterKind::RobustSocp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub filter: String,
    pub metrics: Metrics,
    pub safe: bool,
    pub expected_safe: bool,
    pub matches_expectation: bool,
    pub budget: Option<BudgetReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: String,
    pub generated_at: String,
    pub config_fingerprint: String,
    pub filters: Vec<ComparisonRow>,
    /// `PASS` when the robust filter is safe and both QP baselines are not,
    /// `FAIL` otherwise, `INCOMPLETE` when one of the three was not run.
    pub verdict: String,
    pub versions: Versions,
}

pub fn parse_filter_list(list: &str) -> Result<Vec<FilterKind>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind: FilterKind = name.parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(Error::config("filters", "list is empty"));
    }
    Ok(out)
}

pub fn comparison_verdict(rows: &[ComparisonRow]) -> &'static str {
    let find = |k: FilterKind| rows.iter().find(|r| r.filter == k.name());
    match (
        find(FilterKind::RobustSocp),
        find(FilterKind::PlantQp),
        find(FilterKind::ReferenceQp),
    ) {
        (Some(rb), Some(pq), Some(rq)) => {
            if rb.safe && rb.metrics.fault_count == 0 && !pq.safe && !rq.safe {
                "PASS"
            } else {
                "FAIL"
            }
        }
        _ => "INCOMPLETE",
    }
}

fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    secs.to_string()
}

/// Runs every requested filter on the same scenario.
/// Exit code 2 when the verdict is `FAIL`.
pub fn cmd_compare(config_path: &Path, filters: &str, out_dir: &Path) -> i32 {
    report(compare_inner(config_path, filters, out_dir))
}

fn compare_inner(config_path: &Path, filters: &str, out_dir: &Path) -> Result<i32> {
    let kinds = parse_filter_list(filters)?;
    let cfg = parse_config(config_path)?;
    let traces: Vec<(FilterKind, SimTrace)> = kinds
        .par_iter()
        .map(|&k| run_scenario(&cfg.with_filter(k)).map(|t| (k, t)))
        .collect::<Result<_>>()?;

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut rows = Vec::with_capacity(traces.len());
    for (kind, trace) in &traces {
        let summary = write_run(&cfg.with_filter(*kind), trace, &out_dir.join(kind.name()))?;
        let safe = summary.metrics.min_h_plant >= 0.0;
        rows.push(ComparisonRow {
            filter: kind.name().to_string(),
            safe,
            expected_safe: expected_safe(*kind),
            matches_expectation: safe == expected_safe(*kind),
            metrics: summary.metrics,
            budget: summary.budget,
        });
    }
    write_trajectories(&traces, &out_dir.join("trajectories.csv"))?;
    let verdict = comparison_verdict(&rows);
    let report = ComparisonReport {
        schema_version: SCHEMA_VERSION.to_string(),
        generated_at: timestamp(),
        config_fingerprint: cfg.fingerprint(),
        filters: rows,
        verdict: verdict.to_string(),
        versions: Versions::current(),
    };
    write_json(&report, &out_dir.join("comparison.json"))?;
    for r in &report.filters {
        println!(
            "{:<12} min_h_plant {:>10.4} smoothness {:>8.3} faults {}",
            r.filter, r.metrics.min_h_plant, r.metrics.smoothness, r.metrics.fault_count
        );
    }
    println!("verdict: {verdict}");
    Ok(if verdict == "FAIL" { EXIT_FAULT } else { EXIT_OK })
}

/// Plant and reference positions of every filter in long format.
pub fn write_trajectories(traces: &[(FilterKind, SimTrace)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["filter", "t", "p_x", "p_y", "p_z", "m_x", "m_y", "m_z", "h_plant"])
        .map_err(csv_err)?;
    for (kind, trace) in traces {
        for row in &trace.rows {
            let mut rec = vec![kind.name().to_string(), row.t.to_string()];
            rec.extend(row.x_p[..3].iter().map(f64::to_string));
            rec.extend(row.x_m[..3].iter().map(f64::to_string));
            rec.push(row.h_plant.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub count: usize,
    pub seed: u64,
    pub max_rel_gap: f64,
    pub max_kkt_residual: f64,
    pub failures: usize,
    pub passed: bool,
}

/// Solver against grid oracle on `count` random instances; the gap is
/// `|f_solver − f_oracle| / (1 + |f_oracle|)`.
pub fn oracle_report(count: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solver = SocpSolver::new(SocpOptions::default());
    let (mut gap, mut kkt, mut failures) = (0.0_f64, 0.0_f64, 0);
    for _ in 0..count {
        let prob = random_feasible_instance(&mut rng);
        let sol = solver.solve(&prob);
        if sol.status != SocpStatus::Optimal {
            failures += 1;
            continue;
        }
        let oracle = socp_oracle(&prob, ORACLE_GRID);
        let (fs, fo) = (sol.objective(&prob), oracle.objective(&prob));
        gap = gap.max((fs - fo).abs() / (1.0 + fo.abs()));
        kkt = kkt.max(sol.kkt_residual);
    }
    OracleReport {
        count,
        seed,
        max_rel_gap: gap,
        max_kkt_residual: kkt,
        failures,
        passed: failures == 0 && gap <= ORACLE_GAP_TOL && kkt <= ORACLE_KKT_TOL,
    }
}

pub fn cmd_oracle_check(count: usize, seed: u64) -> i32 {
    if count == 0 {
        log::warn!("oracle-check with zero instances passes vacuously");
    }
    let rep = oracle_report(count, seed);
    println!(
        "instances {} seed {} max_rel_gap {:.3e} max_kkt {:.3e} failures {} -> {}",
        rep.count,
        rep.seed,
        rep.max_rel_gap,
        rep.max_kkt_residual,
        rep.failures,
        if rep.passed { "PASS" } else { "FAIL" }
    );
    if rep.passed {
        EXIT_OK
    } else {
        EXIT_FAULT
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_for_quadrotor() {
        let cols = trace_columns(6, 3, 3);
        assert_eq!(cols.len(), 1 + 6 + 6 + 3 + 3 + 3 + 11);
        assert_eq!(cols[0], "t");
        assert_eq!(cols[1], "x_p_0");
        assert_eq!(cols.last().unwrap(), "budget_flags");
    }

    #[test]
    fn filter_lists() {
        assert_eq!(
            parse_filter_list("PlantQP, referenceqp,RobustSOCP").unwrap(),
            vec![FilterKind::PlantQp, FilterKind::ReferenceQp, FilterKind::RobustSocp]
        );
        assert!(parse_filter_list("PlantQP,Bogus").is_err());
        assert!(parse_filter_list("").is_err());
    }

    #[test]
    fn empty_oracle_suite_passes() {
        let rep = oracle_report(0, 1);
        assert!(rep.passed);
        assert_eq!(rep.max_rel_gap, 0.0);
    }
}
