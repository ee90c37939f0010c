//! Command-line front end shared by the `rampflow` binary and the tests.
//!
//! Exit codes: 0 success, 1 solver failure or an LP without an optimal plan, 2 scenario,
//! model, input or output errors (and usage errors), 3 contract violations (states leaving
//! their boxes, empty rate intervals), 4 unsupported model (the LP with capacity drop),
//! 5 mismatched horizons across compared runs.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::controllers::{sample_controller_model, ControllerKind, ControllerSpec};
use crate::cumulative::{restrictiveness_report, tts_bounds, TtsBounds};
use crate::error::{Error, Result};
use crate::lp::{build_lp, certify_relaxation, export_lp, solution_json, solve_lp, LpStatus};
use crate::model::validate_model;
use crate::report::{
    bounds_json, fmt_g9, json_string, read_trajectory_csv, write_campaign_csv, write_heatmap_csv,
    write_restrictiveness_csv, write_savings_csv, write_trajectory_csv, DensityTable, RunReport, SavingsRow,
    Seeds,
};
use crate::scenarios::{load_scenario, uncertainty_campaign, CampaignConfig, Scenario};
use crate::simulator::{evaluate_metrics, simulate, DisturbanceSpec, ScheduledRates, SimOptions, Trajectory};

/// Environment variable capping the worker threads of parallel campaigns.
pub const THREADS_ENV: &str = "RAMPFLOW_THREADS";

/// `simulate` solves the LP on its own only below this many variables.
pub const AUTO_LP_MAX_VARS: usize = 20_000;

#[derive(Debug, Parser)]
#[command(name = "rampflow", version, about = "Ramp metering on the cell transmission model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one controller and write the trajectory and a run report.
    Simulate(SimulateArgs),
    /// Solve the min-TTS linear program and compare it with open loop.
    Optimize(OptimizeArgs),
    /// Bracket the optimal TTS between the relaxed and the plain best-effort runs.
    Bounds(BoundsArgs),
    /// Write plot-ready heatmap, savings and restrictiveness tables.
    Report(ReportArgs),
    /// Run the model-uncertainty and noise campaign.
    Campaign(CampaignArgs),
    /// Check a scenario without simulating it.
    Validate(ScenarioArg),
}

#[derive(Debug, Args)]
struct ScenarioArg {
    /// Scenario file, or `builtin:NAME` (example1, example2, grenoble).
    #[arg(long)]
    scenario: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// none, be, relaxed-be or alinea.
    #[arg(long, default_value = "be")]
    controller: String,
    /// Seed of the flow noise; the controller-model draw uses `seed ^ 0x5eed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative standard deviation of the multiplicative flow noise.
    #[arg(long)]
    sigma_phi: Option<f64>,
    /// Relative half-width of the controller's free-speed error.
    #[arg(long)]
    dv: Option<f64>,
    /// Relative half-width of the controller's jam-density error.
    #[arg(long)]
    drho: Option<f64>,
    /// Capacity drop applied to every cell of the plant.
    #[arg(long)]
    capacity_drop: Option<f64>,
    /// ALINEA integral gain in (cars/h)/(cars/km).
    #[arg(long)]
    ki: Option<f64>,
    /// Output directory for `trajectory.csv` and `report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Always solve the LP benchmark (monotone noiseless runs only).
    #[arg(long, conflicts_with = "no_lp")]
    with_lp: bool,
    /// Never solve the LP benchmark.
    #[arg(long)]
    no_lp: bool,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Output directory for `solution.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the program in CPLEX LP format.
    #[arg(long)]
    export_lp: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Output directory for `bounds.json` and `restrictiveness.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also solve the LP and print the three-way comparison.
    #[arg(long)]
    with_lp: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Controllers to compare, open loop first; `optimal` replays the LP plan.
    #[arg(long, value_delimiter = ',', default_value = "none,be,alinea")]
    controllers: Vec<String>,
    /// Extra trajectory CSV to turn into a heatmap; must match the scenario horizon.
    #[arg(long)]
    trajectory: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Noise levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05")]
    sigmas: Vec<f64>,
    /// Capacity drop of the non-monotonic variant.
    #[arg(long, default_value_t = 0.1)]
    capacity_drop: f64,
    /// Skip the LP row.
    #[arg(long)]
    no_lp: bool,
    /// Output directory for `campaign.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Solver(_) => 1,
        Error::InvalidGeometry(_)
        | Error::InvalidModel(_)
        | Error::Scenario(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::Contract(_) | Error::Domain { .. } | Error::InfeasibleRate { .. } => 3,
        Error::Unsupported(_) => 4,
        Error::Horizon(_) => 5,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
/// Results go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Optimize(a) => cmd_optimize(&a, out),
        Command::Bounds(a) => cmd_bounds(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::Campaign(a) => cmd_campaign(&a, out),
        Command::Validate(a) => cmd_validate(&a, out),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Scenario(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    // a second configuration in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Scenario(format!("cannot create `{}`: {e}", dir.display())))
}

fn write_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, buf).map_err(|e| Error::Scenario(format!("cannot write `{}`: {e}", path.display())))
}

fn percent(x: Option<f64>) -> String {
    match x {
        Some(v) if v.abs() < 1e-9 => "0%".into(),
        Some(v) => format!("{}%", fmt_g(100.0 * v)),
        None => "no congestion".into(),
    }
}

fn fmt_g(x: f64) -> String {
    crate::report::fmt_g(x, 6)
}

fn run_controller(scenario: &Scenario, kind: ControllerKind) -> Result<Trajectory> {
    let mut policy = ControllerSpec::new(kind, scenario.model.clone());
    simulate(&scenario.model, &scenario.demand, &mut policy, &scenario.sim_options())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut scenario = load_scenario(&a.scenario.scenario)?;
    let kind: ControllerKind = a.controller.parse()?;
    if let Some(alpha) = a.capacity_drop {
        let model = scenario.model.with_capacity_drop(alpha);
        let violations = validate_model(&model);
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        scenario.model = model;
    }
    let mut seeds = Seeds::default();
    let mut disturbance = scenario.disturbance;
    if let Some(sigma) = a.sigma_phi {
        disturbance = (sigma > 0.0).then(|| DisturbanceSpec {
            sigma_phi: sigma,
            seed: a.seed.unwrap_or(0),
        });
    } else if let (Some(d), Some(seed)) = (disturbance.as_mut(), a.seed) {
        d.seed = seed;
    }
    seeds.noise = disturbance.map(|d| d.seed);

    let nominal = scenario.model.with_capacity_drop(0.0);
    let (dv, drho) = match (a.dv, a.drho, scenario.mismatch) {
        (None, None, Some(m)) => (m.dv, m.drho),
        (dv, drho, _) => (dv.unwrap_or(0.0), drho.unwrap_or(0.0)),
    };
    let internal = if dv > 0.0 || drho > 0.0 {
        let seed = a.seed.or(scenario.mismatch.map(|m| m.seed)).unwrap_or(0) ^ 0x5eed;
        seeds.mismatch = Some(seed);
        sample_controller_model(&nominal, dv, drho, seed)?
    } else {
        scenario.model.clone()
    };

    let mut policy = ControllerSpec::new(kind, internal);
    if let Some(ki) = a.ki {
        policy = policy.with_gain(ki)?;
    }
    let options = SimOptions {
        initial: scenario.initial.clone(),
        disturbance,
    };
    let run = simulate(&scenario.model, &scenario.demand, &mut policy, &options)?;
    let metrics = evaluate_metrics(&scenario.model, &run);
    let restr = restrictiveness_report(&scenario.model, &run);
    let mut report = RunReport::new(&scenario.label, kind.label(), &metrics, &restr);
    report.horizon = run.horizon();
    report.seeds = seeds;

    let monotone = scenario.model.is_monotonic();
    if monotone {
        let b = tts_bounds(&scenario.model, &scenario.demand, scenario.initial.as_ref())?;
        report = report.with_bounds(&b);
    }
    let noiseless = disturbance.is_none();
    let lp_size = scenario.demand.horizon() * (4 * scenario.model.len() + 1);
    let want_lp = !a.no_lp && monotone && noiseless && (a.with_lp || lp_size <= AUTO_LP_MAX_VARS);
    if a.with_lp && !(monotone && noiseless) {
        return Err(Error::Unsupported("the LP benchmark needs a monotone, noiseless run".into()));
    }
    if want_lp {
        let instance = build_lp(&scenario.model, &scenario.demand, scenario.initial.as_ref())?;
        let sol = solve_lp(&instance)?;
        if sol.status == LpStatus::Optimal {
            report = report.with_lp_optimum(sol.objective);
        }
    }

    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_file(&dir.join("trajectory.csv"), |b| write_trajectory_csv(&run, b))?;
        write_file(&dir.join("report.json"), |b| {
            b.extend_from_slice(report.to_json()?.as_bytes());
            Ok(())
        })?;
    }
    writeln!(out, "scenario    {}", report.scenario)?;
    writeln!(out, "controller  {}", report.controller)?;
    writeln!(out, "TTS         {} car·h", fmt_g9(report.tts))?;
    writeln!(out, "TWT         {} car·h", fmt_g9(report.twt))?;
    writeln!(out, "TFT         {} car·h", fmt_g9(report.tft))?;
    writeln!(out, "restrictive {}", percent(Some(report.restrictive_fraction)))?;
    if let (Some(lb), Some(be), Some(cert)) = (report.tts_lb, report.tts_be, report.certificate) {
        writeln!(out, "TTS_LB      {}", fmt_g9(lb))?;
        writeln!(out, "TTS_BE      {}", fmt_g9(be))?;
        writeln!(out, "certificate {}", cert.label())?;
    }
    if let (Some(lp), Some(m)) = (report.lp_optimum, report.matches_lp_optimum) {
        writeln!(out, "TTS_LP      {}", fmt_g9(lp))?;
        writeln!(out, "equals LP   {m}")?;
    }
    if a.out.is_none() {
        write!(out, "{}", report.to_json()?)?;
    }
    Ok(())
}

fn write_three_way(out: &mut dyn Write, b: &TtsBounds, lp: f64) -> Result<()> {
    writeln!(out, "{:<8} {:>16}", "bound", "TTS (car·h)")?;
    writeln!(out, "{:<8} {:>16}", "TTS_LB", fmt_g9(b.tts_lb))?;
    writeln!(out, "{:<8} {:>16}", "TTS_LP", fmt_g9(lp))?;
    writeln!(out, "{:<8} {:>16}", "TTS_BE", fmt_g9(b.tts_be))?;
    let tol = 1e-6 * lp.abs().max(1.0);
    let ordered = b.tts_lb <= lp + tol && lp <= b.tts_be + tol;
    writeln!(out, "ordering TTS_LB <= TTS_LP <= TTS_BE: {}", if ordered { "holds" } else { "VIOLATED" })?;
    Ok(())
}

fn cmd_optimize(a: &OptimizeArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = load_scenario(&a.scenario.scenario)?;
    let initial = scenario.initial.as_ref();
    let instance = build_lp(&scenario.model, &scenario.demand, initial)?;
    if let Some(path) = &a.export_lp {
        write_file(path, |b| export_lp(&instance, b))?;
    }
    let sol = solve_lp(&instance)?;
    let status = serde_json::to_value(sol.status)?;
    writeln!(out, "status      {}", status.as_str().unwrap_or("unknown"))?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("the program has no optimal plan ({status})")));
    }
    let cert = certify_relaxation(&scenario.model, &scenario.demand, initial, &sol)?;
    let open = run_controller(&scenario, ControllerKind::None)?;
    let ol = evaluate_metrics(&scenario.model, &open);
    let twt_opt = sol.objective - ol.tft;
    let row = SavingsRow::new(&scenario.label, "optimal", sol.objective, twt_opt, ol.tts, ol.twt);
    let b = tts_bounds(&scenario.model, &scenario.demand, initial)?;

    writeln!(out, "objective   {} car·h", fmt_g9(sol.objective))?;
    writeln!(out, "iterations  {}", sol.iterations)?;
    writeln!(out, "residual    {}", fmt_g9(sol.residual))?;
    writeln!(
        out,
        "replay      {} car·h ({})",
        fmt_g9(cert.tts_sim),
        if cert.exact { "exact" } else { "relaxation not exact" }
    )?;
    if !cert.exact {
        writeln!(out, "holding back at {} boundaries", cert.holding_back.len())?;
        for h in cert.holding_back.iter().take(10) {
            writeln!(
                out,
                "  t={} cell={} planned={} ctm={}",
                h.t,
                h.cell,
                fmt_g9(h.planned),
                fmt_g9(h.ctm)
            )?;
        }
    }
    writeln!(out, "TTS savings {}", percent(row.tts_savings))?;
    writeln!(out, "TWT savings {}", percent(row.twt_savings))?;
    write_three_way(out, &b, sol.objective)?;

    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let mut v = solution_json(&sol);
        v["certification"] = crate::report::round_json(serde_json::to_value(&cert)?);
        v["savings"] = crate::report::round_json(serde_json::to_value(&row)?);
        write_file(&dir.join("solution.json"), |buf| {
            buf.extend_from_slice(json_string(&v)?.as_bytes());
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_bounds(a: &BoundsArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = load_scenario(&a.scenario.scenario)?;
    let initial = scenario.initial.as_ref();
    let b = tts_bounds(&scenario.model, &scenario.demand, initial)?;
    writeln!(out, "TTS_LB      {}", fmt_g9(b.tts_lb))?;
    writeln!(out, "TTS_BE      {}", fmt_g9(b.tts_be))?;
    writeln!(out, "gap         {} ({})", fmt_g9(b.gap_abs), percent(Some(b.gap_rel)))?;
    writeln!(out, "restrictive {}", percent(Some(b.restrictive_fraction)))?;
    writeln!(out, "certificate {}", b.certificate.label())?;
    if a.with_lp {
        let sol = solve_lp(&build_lp(&scenario.model, &scenario.demand, initial)?)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Solver("the program has no optimal plan".into()));
        }
        write_three_way(out, &b, sol.objective)?;
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_file(&dir.join("bounds.json"), |buf| {
            buf.extend_from_slice(bounds_json(&b)?.as_bytes());
            Ok(())
        })?;
        let be = run_controller(&scenario, ControllerKind::BestEffort)?;
        let restr = restrictiveness_report(&scenario.model, &be);
        write_file(&dir.join("restrictiveness.csv"), |buf| {
            write_restrictiveness_csv(&scenario.model, &restr, buf)
        })?;
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = load_scenario(&a.scenario.scenario)?;
    let horizon = scenario.demand.horizon();
    let imported = a
        .trajectory
        .iter()
        .map(|p| {
            let table = read_trajectory_csv(p)?;
            if table.horizon() != horizon {
                return Err(Error::Horizon(format!(
                    "`{}` has {} steps, scenario `{}` has {horizon}",
                    p.display(),
                    table.horizon(),
                    scenario.label
                )));
            }
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((stem, table))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::new();
    for name in &a.controllers {
        let run = if name == "optimal" {
            let sol = solve_lp(&build_lp(&scenario.model, &scenario.demand, scenario.initial.as_ref())?)?;
            if sol.status != LpStatus::Optimal {
                return Err(Error::Solver("the program has no optimal plan".into()));
            }
            let mut plan = ScheduledRates { rates: sol.rates };
            simulate(&scenario.model, &scenario.demand, &mut plan, &scenario.sim_options())?
        } else {
            run_controller(&scenario, name.parse()?)?
        };
        runs.push((name.clone(), run));
    }

    create_dir(&a.out)?;
    let mut savings = Vec::new();
    let open = runs
        .iter()
        .find(|(n, _)| n.parse::<ControllerKind>().ok() == Some(ControllerKind::None))
        .map(|(_, r)| evaluate_metrics(&scenario.model, r));
    for (name, run) in &runs {
        write_file(&a.out.join(format!("heatmap_{name}.csv")), |b| {
            write_heatmap_csv(&DensityTable::from_trajectory(run), b)
        })?;
        let restr = restrictiveness_report(&scenario.model, run);
        write_file(&a.out.join(format!("restrictiveness_{name}.csv")), |b| {
            write_restrictiveness_csv(&scenario.model, &restr, b)
        })?;
        let m = evaluate_metrics(&scenario.model, run);
        let (tts_ol, twt_ol) = open.as_ref().map(|o| (o.tts, o.twt)).unwrap_or((0.0, 0.0));
        savings.push(SavingsRow::new(&scenario.label, name, m.tts, m.twt, tts_ol, twt_ol));
    }
    for (stem, table) in &imported {
        write_file(&a.out.join(format!("heatmap_{stem}.csv")), |b| write_heatmap_csv(table, b))?;
    }
    write_file(&a.out.join("savings.csv"), |b| write_savings_csv(&savings, b))?;

    writeln!(out, "{:<12} {:>14} {:>14} {:>14}", "controller", "TTS", "TWT", "TWT savings")?;
    for r in &savings {
        writeln!(
            out,
            "{:<12} {:>14} {:>14} {:>14}",
            r.controller,
            fmt_g9(r.tts),
            fmt_g9(r.twt),
            percent(r.twt_savings)
        )?;
    }
    writeln!(out, "tables written to {}", a.out.display())?;
    Ok(())
}

fn cmd_campaign(a: &CampaignArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = load_scenario(&a.scenario.scenario)?;
    let mut config = CampaignConfig {
        runs: a.runs,
        seed: a.seed,
        sigmas: a.sigmas.clone(),
        include_lp: !a.no_lp,
        ..CampaignConfig::default()
    };
    for v in &mut config.variants {
        if v.capacity_drop > 0.0 {
            v.capacity_drop = a.capacity_drop;
        }
    }
    let rows = uncertainty_campaign(&scenario, &config)?;
    let mut buf = Vec::new();
    write_campaign_csv(&rows, &mut buf)?;
    if let Some(dir) = &a.out {
        write_file(&dir.join("campaign.csv"), |b| {
            b.extend_from_slice(&buf);
            Ok(())
        })?;
    }
    out.write_all(&buf)?;
    Ok(())
}

fn cmd_validate(a: &ScenarioArg, out: &mut dyn Write) -> Result<()> {
    let scenario = load_scenario(&a.scenario)?;
    let model = &scenario.model;
    let violations = validate_model(model);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    scenario.demand.validate(model)?;
    let metered: Vec<String> = model.metered_cells().iter().map(|k| (k + 1).to_string()).collect();
    writeln!(out, "scenario    {}", scenario.label)?;
    writeln!(out, "cells       {}", model.len())?;
    writeln!(out, "dt          {} h", fmt_g9(model.dt()))?;
    writeln!(out, "horizon     {} steps", scenario.demand.horizon())?;
    writeln!(out, "metered     {}", if metered.is_empty() { "none".into() } else { metered.join(",") })?;
    writeln!(out, "monotone    {}", model.is_monotonic())?;
    writeln!(out, "demand      {} cars", fmt_g9(scenario.demand.total_cars(model.dt())))?;
    writeln!(out, "ok")?;
    Ok(())
}
