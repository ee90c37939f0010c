#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rampflow::controllers::{ControllerKind, ControllerSpec};
use rampflow::model::{triangular_fd_defaults, CellSpec, FreewayModel};
use rampflow::simulator::{simulate, DemandProfile, SimOptions, SimState, Trajectory};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Knobs of the random instance generator.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_cells: usize,
    pub min_steps: usize,
    pub max_steps: usize,
    /// Upper end of the demand scale as a fraction of capacity.
    pub load: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            max_cells: 4,
            min_steps: 10,
            max_steps: 40,
            load: 1.2,
        }
    }
}

/// A model with triangular diagrams and a timestep inside the monotonicity bound.
pub fn random_model(r: &mut ChaCha8Rng, max_cells: usize) -> FreewayModel {
    loop {
        let n = r.random_range(1..=max_cells);
        let specs: Vec<CellSpec> = (0..n)
            .map(|k| {
                let rc = r.random_range(15.0..60.0);
                let metered = k > 0 && r.random_bool(0.6) || n == 1;
                let mut spec = CellSpec {
                    length: r.random_range(0.3..1.5),
                    free_speed: r.random_range(60.0..120.0),
                    critical_density: rc,
                    jam_density: rc * r.random_range(3.0..6.0),
                    split_ratio: if r.random_bool(0.4) { r.random_range(0.0..0.5) } else { 0.0 },
                    ..Default::default()
                };
                if r.random_bool(0.3) {
                    spec.capacity = Some(spec.free_speed * rc * r.random_range(0.7..1.0));
                }
                if metered {
                    spec.ramp_max_rate = r.random_range(600.0..2000.0);
                    spec.ramp_queue_cap = r.random_range(10.0..100.0);
                }
                spec
            })
            .collect();
        let cells: Vec<_> = match specs.iter().map(triangular_fd_defaults).collect() {
            Ok(c) => c,
            Err(_) => continue,
        };
        let dt = cells
            .iter()
            .map(|c: &rampflow::CellParams| c.length / c.free_speed.max(c.wave_speed))
            .fold(f64::INFINITY, f64::min)
            * r.random_range(0.3..0.95);
        if let Ok(m) = FreewayModel::new(cells, dt) {
            return m;
        }
    }
}

/// Piecewise-constant demand with ramp rates below their caps.
pub fn random_demand(r: &mut ChaCha8Rng, model: &FreewayModel, steps: usize, load: f64) -> DemandProfile {
    let n = model.len();
    let cap = model.effective_capacity(0);
    let mut rows = Vec::with_capacity(steps);
    let mut row = vec![0.0; n + 1];
    for t in 0..steps {
        if t == 0 || r.random_bool(0.2) {
            row[0] = if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..load * cap) };
            for (k, c) in model.cells().iter().enumerate() {
                row[k + 1] = if c.ramp_max_rate > 0.0 && r.random_bool(0.7) {
                    r.random_range(0.0..c.ramp_max_rate)
                } else {
                    0.0
                };
            }
        }
        rows.push(row.clone());
    }
    DemandProfile::new(rows)
}

pub fn random_state(r: &mut ChaCha8Rng, model: &FreewayModel, fill: f64) -> SimState {
    SimState {
        density: model.cells().iter().map(|c| r.random_range(0.0..=fill * c.jam_density)).collect(),
        queue: model.cells().iter().map(|c| r.random_range(0.0..=fill * c.ramp_queue_cap)).collect(),
    }
}

/// A random instance on which the given controllers all run without leaving the state
/// boxes, together with their trajectories.
pub struct Instance {
    pub model: FreewayModel,
    pub demand: DemandProfile,
    pub initial: SimState,
    pub runs: Vec<(ControllerKind, Trajectory)>,
}

pub fn random_instance(seed: u64, shape: Shape, kinds: &[ControllerKind]) -> Instance {
    let mut r = rng(seed);
    loop {
        let model = random_model(&mut r, shape.max_cells);
        let steps = r.random_range(shape.min_steps..=shape.max_steps);
        let demand = random_demand(&mut r, &model, steps, shape.load);
        let initial = if r.random_bool(0.5) {
            random_state(&mut r, &model, 0.5)
        } else {
            SimState::empty(model.len())
        };
        let options = SimOptions {
            initial: Some(initial.clone()),
            disturbance: None,
        };
        let runs: Option<Vec<_>> = kinds
            .iter()
            .map(|&k| {
                let mut p = ControllerSpec::new(k, model.clone());
                simulate(&model, &demand, &mut p, &options).ok().map(|t| (k, t))
            })
            .collect();
        if let Some(runs) = runs {
            return Instance {
                model,
                demand,
                initial,
                runs,
            };
        }
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// `Σ_t Δt(w_0 + Σ w_k)` against stored plus exited cars; relative mismatch.
pub fn mass_balance_error(model: &FreewayModel, traj: &Trajectory) -> f64 {
    let dt = model.dt();
    let n = model.len();
    let initial = traj.states[0].vehicles(model);
    let inflow: f64 = traj.demand.rows().iter().map(|row| dt * row.iter().sum::<f64>()).sum();
    let mut outflow = 0.0;
    for phi in &traj.flows {
        outflow += dt * phi[n];
        for (k, c) in model.cells().iter().enumerate() {
            outflow += dt * c.split_ratio / c.through_ratio() * phi[k + 1];
        }
    }
    let stored = traj.states.last().unwrap().vehicles(model);
    (initial + inflow - stored - outflow).abs() / (initial + inflow).max(1.0)
}

/// Largest excursion of any state outside `[0, ρ̄] × [0, q̄]`.
pub fn box_excursion(model: &FreewayModel, traj: &Trajectory) -> f64 {
    let mut worst = 0.0f64;
    for s in &traj.states {
        for (k, c) in model.cells().iter().enumerate() {
            worst = worst
                .max(-s.density[k])
                .max(s.density[k] - c.jam_density)
                .max(-s.queue[k])
                .max(s.queue[k] - c.ramp_queue_cap);
        }
    }
    worst
}
