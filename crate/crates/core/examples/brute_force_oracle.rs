//! Compares the LP optimum of a two-cell, three-step instance with an exhaustive search
//! over gridded metering rates, and with best-effort control.
//!
//! The upstream cell starts congested and sheds most of its flow to an offramp; the metered
//! cell downstream is small, so admitting ramp cars early blocks the upstream discharge.

use rampflow::controllers::{ControllerKind, ControllerSpec};
use rampflow::lp::{brute_force_min_tts, build_lp, solve_lp};
use rampflow::model::{triangular_fd_defaults, CellSpec, FreewayModel};
use rampflow::simulator::{simulate, total_time_spent, DemandProfile, SimOptions, SimState};

fn main() -> rampflow::Result<()> {
    let upstream = triangular_fd_defaults(&CellSpec {
        length: 1.0,
        free_speed: 100.0,
        critical_density: 100.0,
        jam_density: 200.0,
        wave_speed: Some(100.0),
        capacity: Some(1000.0),
        split_ratio: 0.8,
        ..Default::default()
    })?;
    let metered = triangular_fd_defaults(&CellSpec {
        length: 1.0,
        free_speed: 100.0,
        critical_density: 10.0,
        jam_density: 20.0,
        wave_speed: Some(100.0),
        capacity: Some(500.0),
        ramp_max_rate: 3000.0,
        ramp_queue_cap: 100.0,
        ..Default::default()
    })?;
    let model = FreewayModel::new(vec![upstream, metered], 10.0 / 3600.0)?;
    let demand = DemandProfile::new(vec![
        vec![0.0, 0.0, 1000.0],
        vec![1000.0, 0.0, 1000.0],
        vec![1000.0, 0.0, 0.0],
    ]);
    let initial = SimState {
        density: vec![120.0, 5.0],
        queue: vec![0.0, 5.0],
    };

    let lp = solve_lp(&build_lp(&model, &demand, Some(&initial))?)?;
    println!("LP optimum   {:.12}", lp.objective);
    for grid in [3, 10, 50] {
        let bf = brute_force_min_tts(&model, &demand, Some(&initial), grid)?;
        println!(
            "grid {grid:>3}    {:.12} over {:>6} paths, rates {:?}",
            bf.tts,
            bf.paths,
            bf.rates.iter().map(|r| r[1]).collect::<Vec<_>>()
        );
    }

    let mut be = ControllerSpec::new(ControllerKind::BestEffort, model.clone());
    let options = SimOptions {
        initial: Some(initial),
        disturbance: None,
    };
    let run = simulate(&model, &demand, &mut be, &options)?;
    println!(
        "best effort  {:.12}, rates {:?}",
        total_time_spent(&model, &run.states),
        run.rates.iter().map(|r| r[1]).collect::<Vec<_>>()
    );
    Ok(())
}
