//! chi-forge: simulate the two-step cavity-mediated protocol that prepares
//! a four-qubit chi-type entangled state, sweep its timing errors, and
//! audit the approximation chain behind it.

use chi_forge::analysis::{
    approximation_ladder, decoherence_impact, entanglement_diagnostics, feasibility_report,
    timing_error_sweep, write_sweep_csv, SweepGrid,
};
use chi_forge::config::RunConfig;
use chi_forge::error::{ChiError, Result};
use chi_forge::model::validate_regime;
use chi_forge::protocol::{
    chi_protocol, chi_target, permute_labels, run_protocol, Engine, ErrorModel, RunOptions,
    TimingError,
};
use chi_forge::statespace::{fidelity, HilbertSpace, StateVector};
use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "chi-forge", version, about = "four-qubit chi-state protocol simulator")]
struct Cli {
    /// Path to a JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the published reference parameter set instead of a config file.
    #[arg(long, global = true)]
    paper_defaults: bool,
    /// Override the engine: analytic | effective_numeric | reduced_numeric
    /// | ground_numeric | full_numeric.
    #[arg(long, global = true)]
    engine: Option<String>,
    /// Override the timing-error model: beta_only | full_phase.
    #[arg(long, global = true)]
    error_model: Option<String>,
    /// Sweep worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overridden by the CHI_FORGE_OUT env var).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute the protocol once and write the final state and diagnostics.
    Run,
    /// Fidelity sweep over the timing-error grid (CSV + JSON summary).
    Sweep,
    /// Check the separation-of-scales conditions; exit 1 on failure.
    Validate,
    /// Co-propagate one drive segment through the model hierarchy.
    Ladder,
    /// Feasibility and decoherence report in SI units.
    Report,
}

fn parse_engine(s: &str) -> Result<Engine> {
    Engine::ALL
        .into_iter()
        .find(|e| e.name() == s)
        .ok_or_else(|| ChiError::Config(format!("unknown engine `{s}`")))
}

fn parse_error_model(s: &str) -> Result<ErrorModel> {
    match s {
        "beta_only" => Ok(ErrorModel::BetaOnly),
        "full_phase" => Ok(ErrorModel::FullPhase),
        _ => Err(ChiError::Config(format!("unknown error model `{s}`"))),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, cli.paper_defaults) {
        (Some(path), false) => RunConfig::from_path(path)?,
        (None, _) => RunConfig::paper_defaults(),
        (Some(_), true) => {
            return Err(ChiError::Config(
                "--config and --paper-defaults are mutually exclusive".into(),
            ))
        }
    };
    if let Some(e) = &cli.engine {
        cfg.engine = parse_engine(e)?;
    }
    if let Some(m) = &cli.error_model {
        cfg.error_model = parse_error_model(m)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = std::env::var_os("CHI_FORGE_OUT")
        .map(PathBuf::from)
        .or_else(|| cli.out.clone())
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| ChiError::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| ChiError::Io(e))?;
    Ok(())
}

fn amplitudes_json(state: &StateVector) -> serde_json::Value {
    json!(state
        .amplitudes()
        .iter()
        .map(|z| json!([z.re, z.im]))
        .collect::<Vec<_>>())
}

fn cmd_run(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cli, cfg)?;
    let proto = chi_protocol(&cfg.params)?;
    let psi0 = StateVector::basis(&HilbertSpace::four_qubits(), &[0, 0, 0, 0])?;
    let opts = RunOptions { steps_per_period: cfg.steps_per_period };
    let out = run_protocol(
        &proto,
        &psi0,
        cfg.engine,
        TimingError::none(),
        cfg.error_model,
        &opts,
    )?;
    let target = chi_target();
    let f = fidelity(&out.state, &target)?;
    let permuted = permute_labels(&out.state, &proto.label_order)?;
    let doc = json!({
        "engine": cfg.engine.name(),
        "error_model": cfg.error_model.name(),
        "fidelity": f,
        "amplitudes_order_1234": amplitudes_json(&out.state),
        "amplitudes_order_3214": amplitudes_json(&permuted),
        "projection_weights": out.projection_weights,
        "max_r_leakage": out.max_r_leakage,
        "norm_drift": out.norm_drift,
        "entanglement": entanglement_diagnostics(&out.state)?,
        "regime": validate_regime(&cfg.params, cfg.regime_threshold)?,
        "schedule_warnings": proto.warnings,
    });
    write_json(&dir.join("run.json"), &doc)?;
    println!("fidelity to chi target: {f:.6} (engine {})", cfg.engine.name());
    println!("wrote {}", dir.join("run.json").display());
    Ok(())
}

fn sweep_one(cfg: &RunConfig, model: ErrorModel) -> Result<SweepGrid> {
    timing_error_sweep(
        &cfg.params,
        &cfg.sweep_n1.values()?,
        &cfg.sweep_n2.values()?,
        model,
        cfg.engine,
        &RunOptions { steps_per_period: cfg.steps_per_period },
    )
}

fn cmd_sweep(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cli, cfg)?;
    // both error models are emitted side by side: the published 0.96 at
    // (0.02, 0.02) comes without a stated error model
    let mut cells = serde_json::Map::new();
    for model in [ErrorModel::BetaOnly, ErrorModel::FullPhase] {
        let grid = sweep_one(cfg, model)?;
        let path = dir.join(format!("sweep_{}_{}.csv", model.name(), cfg.engine.name()));
        let mut buf = Vec::new();
        write_sweep_csv(&grid, &mut buf)?;
        std::fs::write(&path, buf).map_err(ChiError::Io)?;
        println!("wrote {}", path.display());
        cells.insert(
            model.name().to_string(),
            json!({
                "origin": grid.value_at(0.0, 0.0),
                "at_0p02_0p02": grid.value_at(0.02, 0.02),
            }),
        );
    }
    let doc = json!({
        "engine": cfg.engine.name(),
        "cells": cells,
        "reference_value_at_0p02_0p02": 0.96,
        "note": "the published 0.96 reference leaves the timing-error model and \
                 the drive lock unstated; computed values under both models are \
                 reported instead of being forced to agree",
    });
    write_json(&dir.join("sweep_summary.json"), &doc)?;
    println!("wrote {}", dir.join("sweep_summary.json").display());
    Ok(())
}

fn cmd_validate(cfg: &RunConfig) -> Result<bool> {
    let report = validate_regime(&cfg.params, cfg.regime_threshold)?;
    println!(
        "{:<28} {:>12} {:>12} {:>10}  result",
        "condition", "left", "right", "ratio"
    );
    for e in &report.entries {
        println!(
            "{:<28} {:>12.4} {:>12.4} {:>10.2}  {}",
            e.condition,
            e.left,
            e.right,
            e.ratio,
            if e.pass { "pass" } else { "FAIL" }
        );
    }
    println!(
        "threshold {}: {}",
        report.threshold,
        if report.all_pass() { "all conditions pass" } else { "some conditions FAIL" }
    );
    Ok(report.all_pass())
}

fn cmd_ladder(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cli, cfg)?;
    let duration = match cfg.ladder_duration {
        Some(t) => t,
        None => chi_protocol(&cfg.params)?.steps[0].duration,
    };
    let psi0 = StateVector::basis(&HilbertSpace::four_qubits(), &[0, 0, 0, 0])?;
    let report = approximation_ladder(
        &cfg.params,
        &psi0,
        duration,
        &RunOptions { steps_per_period: cfg.steps_per_period },
    )?;
    for p in &report.pairs {
        println!(
            "{:<18} vs {:<18} fidelity {:.6}",
            p.coarser.name(),
            p.finer.name(),
            p.fidelity
        );
    }
    write_json(&dir.join("ladder.json"), &serde_json::to_value(&report)?)?;
    println!("wrote {}", dir.join("ladder.json").display());
    Ok(())
}

fn cmd_report(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cli, cfg)?;
    let feas = feasibility_report(&cfg.params, cfg.g_si, cfg.tau_r, cfg.tau_d)?;
    let deco = decoherence_impact(
        &cfg.params,
        cfg.tau_r,
        cfg.tau_d,
        cfg.g_si,
        &RunOptions { steps_per_period: cfg.steps_per_period },
    )?;
    println!(
        "t1 = {:.4} us, total = {:.4} us, T/tau_r = {:.3} ({})",
        feas.t1_si * 1e6,
        feas.total_si * 1e6,
        feas.total_over_tau_r,
        if feas.pass { "pass" } else { "FAIL" }
    );
    println!(
        "open-system fidelity {:.4}, closed {:.4}, loss {:.4}",
        deco.fidelity_open, deco.fidelity_closed, deco.loss
    );
    let doc = json!({ "feasibility": feas, "decoherence": deco });
    write_json(&dir.join("report.json"), &doc)?;
    println!("wrote {}", dir.join("report.json").display());
    Ok(())
}

fn run(cli: &Cli) -> Result<i32> {
    if let Some(jobs) = cli.jobs {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let cfg = load_config(cli)?;
    match cli.cmd {
        Cmd::Run => cmd_run(cli, &cfg).map(|_| 0),
        Cmd::Sweep => cmd_sweep(cli, &cfg).map(|_| 0),
        Cmd::Validate => cmd_validate(&cfg).map(|ok| if ok { 0 } else { 1 }),
        Cmd::Ladder => cmd_ladder(cli, &cfg).map(|_| 0),
        Cmd::Report => cmd_report(cli, &cfg).map(|_| 0),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
