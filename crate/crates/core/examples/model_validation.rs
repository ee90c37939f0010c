//! Builds cells from the triangular defaults and shows how a too-long timestep breaks the
//! monotonicity condition.

use rampflow::model::{triangular_fd_defaults, validate_model, CellSpec, FreewayModel};

fn main() -> rampflow::Result<()> {
    let spec = CellSpec {
        length: 0.5,
        free_speed: 90.0,
        critical_density: 40.0,
        jam_density: 250.0,
        split_ratio: 0.2,
        ramp_max_rate: 1800.0,
        ramp_queue_cap: 50.0,
        ..Default::default()
    };
    let cell = triangular_fd_defaults(&spec)?;
    println!(
        "w = {:.3} km/h, F = {:.0} cars/h, d(60) = {:.1}, s(60) = {:.1}",
        cell.wave_speed,
        cell.capacity,
        cell.demand(60.0)?,
        cell.supply(60.0)?
    );

    for dt_seconds in [10.0, 20.0, 30.0] {
        let model = FreewayModel::unvalidated(vec![cell, cell], dt_seconds / 3600.0);
        let violations = validate_model(&model);
        println!("dt = {dt_seconds} s: {} violations", violations.len());
        for v in violations {
            println!("  {v}");
        }
    }
    Ok(())
}
