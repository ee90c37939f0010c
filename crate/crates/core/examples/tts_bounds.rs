//! Brackets the optimal TTS between the relaxed and the plain best-effort runs and checks
//! the restrictiveness certificate, on a light-demand scenario and on Example 1.

use rampflow::cumulative::tts_bounds;
use rampflow::scenarios::{load_scenario, parse_scenario};

const LIGHT: &str = r#"
name = "light"
dt_seconds = 10

[[cells]]
length = 1.0
free_speed = 100.0
critical_density = 40.0
jam_density = 200.0
ramp_max_rate = 1500.0
ramp_queue_cap = 50.0

[[cells]]
length = 1.0
free_speed = 100.0
critical_density = 40.0
jam_density = 200.0

[demand]
horizon_minutes = 20

[[demand.pulses]]
entry = 0
start_minute = 0
end_minute = 10
rate = 1200.0

[[demand.pulses]]
entry = 1
start_minute = 5
end_minute = 15
rate = 600.0
"#;

fn main() -> rampflow::Result<()> {
    for scenario in [parse_scenario(LIGHT, None)?, load_scenario("builtin:example1")?] {
        let b = tts_bounds(&scenario.model, &scenario.demand, scenario.initial.as_ref())?;
        println!("{}", scenario.label);
        println!("  TTS_LB      {:.6}", b.tts_lb);
        println!("  TTS_BE      {:.6}", b.tts_be);
        println!("  gap         {:.6} ({:.3}%)", b.gap_abs, 100.0 * b.gap_rel);
        println!("  restrictive {:.2}%", 100.0 * b.restrictive_fraction);
        println!("  certificate {}", b.certificate.label());
    }
    Ok(())
}
