//! Model-uncertainty and flow-noise campaign on the synthetic Grenoble preset. The first
//! argument sets the number of runs per grid point.
//!
//!     RAMPFLOW_THREADS=4 cargo run --release --example uncertainty_campaign -- 20

use rampflow::report::write_campaign_csv;
use rampflow::scenarios::{load_scenario, uncertainty_campaign, CampaignConfig};

fn main() -> rampflow::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    if let Some(n) = std::env::var("RAMPFLOW_THREADS").ok().and_then(|s| s.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let scenario = load_scenario("builtin:grenoble")?;
    let config = CampaignConfig {
        runs,
        ..CampaignConfig::default()
    };
    let rows = uncertainty_campaign(&scenario, &config)?;
    write_campaign_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
