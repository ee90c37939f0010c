//! Runs open loop, best-effort and ALINEA on a built-in scenario and prints the metrics.
//!
//!     cargo run --example simulate_controllers -- builtin:grenoble

use rampflow::controllers::{ControllerKind, ControllerSpec};
use rampflow::cumulative::restrictiveness_report;
use rampflow::scenarios::load_scenario;
use rampflow::simulator::{evaluate_metrics, simulate};

fn main() -> rampflow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "builtin:grenoble".into());
    let scenario = load_scenario(&name)?;
    let model = &scenario.model;
    println!("{}: {} cells, {} steps", scenario.label, model.len(), scenario.demand.horizon());
    println!("{:<8} {:>12} {:>12} {:>12} {:>12}", "policy", "TTS", "TWT", "TFT", "restrictive");
    for kind in [ControllerKind::None, ControllerKind::BestEffort, ControllerKind::Alinea] {
        let mut policy = ControllerSpec::new(kind, model.clone());
        match simulate(model, &scenario.demand, &mut policy, &scenario.sim_options()) {
            Ok(run) => {
                let m = evaluate_metrics(model, &run);
                let r = restrictiveness_report(model, &run);
                println!(
                    "{:<8} {:>12.4} {:>12.4} {:>12.4} {:>11.2}%",
                    kind.label(),
                    m.tts,
                    m.twt,
                    m.tft,
                    100.0 * r.fraction
                );
            }
            Err(e) => println!("{:<8} {e}", kind.label()),
        }
    }
    Ok(())
}
