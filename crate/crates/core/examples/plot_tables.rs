//! Writes the plot-ready tables for Example 1: trajectories, density heatmaps, savings bars
//! and the restrictiveness table.
//!
//!     cargo run --example plot_tables -- /tmp/example1-tables

use std::fs::File;
use std::path::PathBuf;

use rampflow::controllers::{ControllerKind, ControllerSpec};
use rampflow::cumulative::restrictiveness_report;
use rampflow::lp::{build_lp, solve_lp};
use rampflow::report::{
    write_heatmap_csv, write_restrictiveness_csv, write_savings_csv, write_trajectory_csv, DensityTable, SavingsRow,
};
use rampflow::scenarios::load_scenario;
use rampflow::simulator::{evaluate_metrics, simulate, ScheduledRates};

fn main() -> rampflow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rampflow-example1"));
    std::fs::create_dir_all(&dir)?;
    let scenario = load_scenario("builtin:example1")?;
    let (model, demand) = (&scenario.model, &scenario.demand);

    let plan = solve_lp(&build_lp(model, demand, None)?)?;
    let mut runs = Vec::new();
    for kind in [ControllerKind::None, ControllerKind::BestEffort, ControllerKind::Alinea] {
        let mut policy = ControllerSpec::new(kind, model.clone());
        runs.push((kind.label(), simulate(model, demand, &mut policy, &scenario.sim_options())?));
    }
    let mut replay = ScheduledRates { rates: plan.rates };
    runs.push(("optimal", simulate(model, demand, &mut replay, &scenario.sim_options())?));

    let open = evaluate_metrics(model, &runs[0].1);
    let mut savings = Vec::new();
    for (name, run) in &runs {
        write_trajectory_csv(run, File::create(dir.join(format!("trajectory_{name}.csv")))?)?;
        write_heatmap_csv(
            &DensityTable::from_trajectory(run),
            File::create(dir.join(format!("heatmap_{name}.csv")))?,
        )?;
        let m = evaluate_metrics(model, run);
        savings.push(SavingsRow::new(&scenario.label, name, m.tts, m.twt, open.tts, open.twt));
    }
    let be = &runs[1].1;
    write_restrictiveness_csv(model, &restrictiveness_report(model, be), File::create(dir.join("restrictiveness_be.csv"))?)?;
    write_savings_csv(&savings, File::create(dir.join("savings.csv"))?)?;
    for s in &savings {
        println!(
            "{:<8} TTS {:>9.4}  TWT savings {:>6.2}%",
            s.controller,
            s.tts,
            100.0 * s.twt_savings.unwrap_or(0.0)
        );
    }
    println!("tables in {}", dir.display());
    Ok(())
}
