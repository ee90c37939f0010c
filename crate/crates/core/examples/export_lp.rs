//! Writes the Example 2 program in CPLEX LP format for cross-checking with an external
//! solver, and prints its head.

use rampflow::lp::{build_lp, export_lp, solve_lp};
use rampflow::scenarios::load_scenario;

fn main() -> rampflow::Result<()> {
    let scenario = load_scenario("builtin:example2")?;
    let instance = build_lp(&scenario.model, &scenario.demand, None)?;
    let path = std::env::temp_dir().join("rampflow-example2.lp");
    export_lp(&instance, std::fs::File::create(&path)?)?;
    let text = std::fs::read_to_string(&path)?;
    for line in text.lines().take(8) {
        println!("{line}");
    }
    let plan = solve_lp(&instance)?;
    println!("...\nwritten to {}; objective {:.9} car·h", path.display(), plan.objective);
    Ok(())
}
