//! Solves the min-TTS linear program for Example 1, replays the optimal rates through the
//! plant and compares the plan with best-effort control.
//!
//!     cargo run --example optimal_benchmark -- builtin:example1

use rampflow::controllers::{ControllerKind, ControllerSpec};
use rampflow::lp::{build_lp, certify_relaxation, solve_lp};
use rampflow::scenarios::load_scenario;
use rampflow::simulator::{evaluate_metrics, simulate};

fn main() -> rampflow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "builtin:example1".into());
    let scenario = load_scenario(&name)?;
    let (model, demand) = (&scenario.model, &scenario.demand);

    let instance = build_lp(model, demand, scenario.initial.as_ref())?;
    println!(
        "{} variables, {} rows",
        instance.program.num_vars(),
        instance.program.num_rows()
    );
    let plan = solve_lp(&instance)?;
    println!(
        "status {:?} after {} iterations, residual {:.2e}",
        plan.status, plan.iterations, plan.residual
    );
    let cert = certify_relaxation(model, demand, scenario.initial.as_ref(), &plan)?;
    println!(
        "TTS*  = {:.6} car·h (replayed {:.6}, exact: {})",
        plan.objective, cert.tts_sim, cert.exact
    );

    let mut be = ControllerSpec::new(ControllerKind::BestEffort, model.clone());
    let run = simulate(model, demand, &mut be, &scenario.sim_options())?;
    let tts_be = evaluate_metrics(model, &run).tts;
    println!("TTS_BE = {tts_be:.6} car·h, gap {:.3}%", 100.0 * (tts_be - plan.objective) / plan.objective);

    // density of the last cell under both plans
    let k = model.len() - 1;
    println!("{:>4} {:>10} {:>10}", "t", "optimal", "be");
    for t in (0..=demand.horizon()).step_by(5) {
        println!("{t:>4} {:>10.3} {:>10.3}", plan.densities[t][k], run.states[t].density[k]);
    }
    Ok(())
}
