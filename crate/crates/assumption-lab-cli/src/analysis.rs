//! One function per analysis. Each writes its files into the output
//! directory and prints a few `key=value` lines to stdout.

use std::fs;

use assumption_lab::engine::{calibration_check, propensity_dynamics_report, summarize, Engine};
use assumption_lab::parallel::parallel_available;
use assumption_lab::stable::{
    certitude_report, simulate_convergence, solve_stable, ConvergenceRun, PriorScheme, StableOptions,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Analysis, Resolved};
use crate::error::CliError;
use crate::output::{write_json, write_trace, SCHEMA_VERSION};

/// Lines destined for stdout.
pub type Lines = Vec<String>;

/// Calibration acceptance thresholds reported alongside the raw numbers.
const CALIBRATION_MIN_VARIANCE: f64 = 0.01;
const CALIBRATION_BURN_IN: usize = 50;

fn envelope<T: Serialize>(run: &Resolved, key: &str, body: &T) -> Result<Value, CliError> {
    let body = serde_json::to_value(body).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "generator": concat!("assumption-lab ", env!("CARGO_PKG_VERSION")),
        "analysis": run.config.analysis.as_str(),
        "scenario": run.scenario.name(),
        key: body,
    }))
}

fn write_summary<T: Serialize>(run: &Resolved, metrics: &T) -> Result<(), CliError> {
    let mut doc = envelope(run, "metrics", metrics)?;
    let mut config = serde_json::to_value(&run.config).map_err(|e| CliError::Config(e.to_string()))?;
    // The output location is not part of the experiment; leaving it out keeps
    // summaries of identical runs byte-identical.
    if let Some(map) = config.as_object_mut() {
        map.remove("out");
    }
    doc["config"] = config;
    doc["parallel_available"] = json!(parallel_available());
    write_json(&run.config.out.join("summary.json"), &doc)
}

fn write_report<T: Serialize>(run: &Resolved, body: &T) -> Result<(), CliError> {
    write_json(&run.config.out.join("report.json"), &envelope(run, "report", body)?)
}

pub fn run(run: &Resolved) -> Result<Lines, CliError> {
    let out = &run.config.out;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    match run.config.analysis {
        Analysis::Simulate => simulate(run, false),
        Analysis::Dynamics => simulate(run, true),
        Analysis::Stable => stable(run),
        Analysis::GraphCheck => graph_check(run),
        Analysis::CalibrateOracle => calibrate(run),
    }
}

fn simulate(run: &Resolved, dynamics: bool) -> Result<Lines, CliError> {
    let track = if dynamics { Some(true) } else { None };
    let engine = Engine::new(&run.scenario, &run.omega_star, run.engine_config(track))?;
    let traces = engine.run()?;
    write_trace(&run.config.out.join("trace.csv"), &run.scenario, &traces)?;
    let summary = summarize(&traces, run.config.horizon);
    write_summary(run, &summary)?;
    let mut lines = vec![
        format!("rows={}", traces.iter().map(|t| t.rows.len()).sum::<usize>()),
        format!("research_frequency={}", summary.research_frequency),
        format!("terminal_mean={:?}", summary.terminal_mean),
    ];
    if dynamics {
        let report = propensity_dynamics_report(&traces);
        lines.push(format!("expansion_frequency={}", report.expansion_frequency));
        lines.push(format!("contraction_frequency={}", report.contraction_frequency));
        lines.push(format!("flagged_replications={}", report.flagged.len()));
        write_report(run, &report)?;
    }
    Ok(lines)
}

fn stable(run: &Resolved) -> Result<Lines, CliError> {
    let s = &run.config.stable;
    let options = StableOptions {
        starts: s.starts,
        seed: run.config.seed,
        check_regularity: s.check_regularity,
        certitude_tolerance: s.certitude_tolerance,
        divergence: run.divergence.clone(),
        execution: run.config.execution,
        ..StableOptions::default()
    };
    let mut report = solve_stable(&run.scenario, &run.omega_star, run.k, &options)?;
    let basins = if s.basins {
        let sim = ConvergenceRun {
            replications: s.basin_replications,
            horizon: s.basin_horizon,
            master_seed: run.config.seed,
            mode: run.config.mode,
            priors: if s.dispersed_priors { PriorScheme::Dispersed } else { PriorScheme::Default },
            execution: run.config.execution,
        };
        let b = simulate_convergence(&run.scenario, &run.omega_star, run.k, &report, &sim)?;
        report.apply_basins(&b);
        Some(b)
    } else {
        None
    };
    let certitude = certitude_report(&report, &run.omega_star, s.certitude_tolerance)?;
    let mut lines: Lines = report
        .candidates
        .iter()
        .map(|c| {
            let attracting = c.attracting.map_or("unknown".to_string(), |a| a.to_string());
            let slope = c.slope.map_or("none".to_string(), |v| format!("{v:.6}"));
            format!(
                "candidate omega_hat={:?} attracting={attracting} slope={slope} residual={:e} certitude={}",
                c.omega_hat, c.residual, c.certitude
            )
        })
        .collect();
    let attracting = report.attracting().count();
    lines.push(format!("attracting_candidates={attracting}"));
    lines.push(format!("incredible_certitude={}", certitude.all_attracting_biased));
    let failed = report.starts.iter().filter(|o| o.error.is_some()).count();
    if failed > 0 {
        lines.push(format!("failed_starts={failed}"));
    }
    let body = json!({ "stable": report, "certitude": certitude, "basins": basins });
    write_report(run, &body)?;
    write_summary(run, &json!({ "candidates": report.candidates.len(), "attracting": attracting, "failed_starts": failed }))?;
    Ok(lines)
}

fn graph_check(run: &Resolved) -> Result<Lines, CliError> {
    let sc = &run.scenario;
    let dag = sc.dag();
    let consistent = sc.validate_dag();
    let sep = sc.g_separability()?;
    let active = sc.active_parameters();
    let moral: Vec<(String, String)> = assumption_lab::graph::moralize(dag)
        .edges()
        .into_iter()
        .map(|(a, b)| (dag.name(a).to_string(), dag.name(b).to_string()))
        .collect();
    let active_names = active.as_ref().ok().map(|a| a.iter().map(|d| format!("omega{}", d + 1)).collect::<Vec<_>>());
    let body = json!({
        "dag": dag.to_text(),
        "dag_consistent": consistent.is_ok(),
        "dag_error": consistent.as_ref().err().map(|e| e.to_string()),
        "g_separable": sep.separable,
        "witness": sep.witness,
        "active_parameters": active_names,
        "active_parameters_error": active.as_ref().err().map(|e| e.to_string()),
        "moral_edges": moral,
    });
    write_report(run, &body)?;
    write_summary(run, &json!({ "g_separable": sep.separable, "dag_consistent": consistent.is_ok() }))?;
    Ok(vec![
        format!("g_separable={}", sep.separable),
        format!("witness={}", sep.witness.as_deref().unwrap_or("none")),
        format!("dag_consistent={}", consistent.is_ok()),
        format!("active_parameters={}", active_names.map_or("unavailable".into(), |v| v.join(","))),
    ])
}

fn calibrate(run: &Resolved) -> Result<Lines, CliError> {
    let r = calibration_check(&run.scenario, &run.omega_star, &run.engine_config(Some(false)))?;
    let within = (r.mean_sum - r.target_sum).abs() <= 3.0 * r.sum_se;
    let tail = r.block_variance_m1.iter().skip(CALIBRATION_BURN_IN - 1).copied();
    let min_tail = tail.fold(f64::INFINITY, f64::min);
    let monotone = r.variance_non_decreasing_after(CALIBRATION_BURN_IN);
    let body = json!({
        "calibration": r,
        "sum_within_3se": within,
        "min_block_variance_m1_after_burn_in": min_tail,
        "block_variance_non_decreasing_after_burn_in": monotone,
        "burn_in_blocks": CALIBRATION_BURN_IN,
        "variance_floor": CALIBRATION_MIN_VARIANCE,
    });
    write_report(run, &body)?;
    write_summary(run, &json!({ "alternation": r.alternation, "max_variance_error": r.max_variance_error, "sum_within_3se": within }))?;
    Ok(vec![
        format!("alternation={}", r.alternation),
        format!("max_variance_error={:e}", r.max_variance_error),
        format!("mean_sum={} target={} se={}", r.mean_sum, r.target_sum, r.sum_se),
        format!("sum_within_3se={within}"),
        format!("min_var_m1_after_burn_in={min_tail}"),
        format!("var_m1_non_decreasing_after_burn_in={monotone}"),
    ])
}
