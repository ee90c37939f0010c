//! Maps a best-effort trajectory to cumulative counts, rebuilds the densities from them,
//! checks the TTS identity and probes the monotonicity of the cumulative map.

use rampflow::controllers::{ControllerKind, ControllerSpec};
use rampflow::cumulative::{
    monotonicity_probe, reconstruct_densities, to_cumulative, total_time_spent_cumulative,
};
use rampflow::scenarios::load_scenario;
use rampflow::simulator::{evaluate_metrics, simulate};

fn main() -> rampflow::Result<()> {
    let scenario = load_scenario("builtin:grenoble")?;
    let model = &scenario.model;
    let mut be = ControllerSpec::new(ControllerKind::BestEffort, model.clone());
    let run = simulate(model, &scenario.demand, &mut be, &scenario.sim_options())?;
    let counts = to_cumulative(model, &run);

    let mut worst = 0.0f64;
    for (cs, state) in counts.iter().zip(&run.states) {
        let rho = reconstruct_densities(model, cs)?;
        for (a, b) in rho.iter().zip(&state.density) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    println!("roundtrip: max relative density error {worst:.2e}");

    let direct = evaluate_metrics(model, &run).tts;
    let counted = total_time_spent_cumulative(model, &counts);
    println!("TTS direct {direct:.9}, from counts {counted:.9}");

    // raise every count a little at the busiest step and compare the one-step images
    let t = run
        .states
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.vehicles(model).total_cmp(&b.1.vehicles(model)))
        .map(|(t, _)| t.min(run.horizon() - 1))
        .unwrap_or(0);
    let cs = &counts[t];
    let raised: Vec<f64> = cs.phi.iter().map(|p| p + 0.01).collect();
    let probe = monotonicity_probe(
        model,
        (&cs.phi, &cs.admitted),
        (&raised, &cs.admitted),
        scenario.demand.mainline(t),
    )?;
    println!("flow probe at t = {t}: max violation {:.2e}", probe.max_violation);
    Ok(())
}
