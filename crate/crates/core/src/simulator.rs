//! Forward simulation of the cell transmission model under metering rates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FreewayModel;

/// Tolerance on rate-interval and state-box checks, relative to the magnitude checked.
pub const CONTRACT_TOL: f64 = 1e-9;

/// Mainline densities (cars/km) and onramp queues (cars), one entry per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub density: Vec<f64>,
    pub queue: Vec<f64>,
}

impl SimState {
    pub fn empty(n: usize) -> Self {
        Self {
            density: vec![0.0; n],
            queue: vec![0.0; n],
        }
    }

    /// Cars on the mainline plus cars waiting on the onramps.
    pub fn vehicles(&self, model: &FreewayModel) -> f64 {
        model
            .cells()
            .iter()
            .zip(&self.density)
            .zip(&self.queue)
            .map(|((c, rho), q)| c.length * rho + q)
            .sum()
    }

    /// Checks `0 ≤ ρ ≤ ρ̄` and `0 ≤ q ≤ q̄` up to [`CONTRACT_TOL`].
    pub fn check_box(&self, model: &FreewayModel) -> Result<()> {
        if self.density.len() != model.len() || self.queue.len() != model.len() {
            return Err(Error::Contract(format!(
                "state has {} densities and {} queues for a {}-cell model",
                self.density.len(),
                self.queue.len(),
                model.len()
            )));
        }
        for (k, c) in model.cells().iter().enumerate() {
            let rho = self.density[k];
            let tol = CONTRACT_TOL * c.jam_density.max(1.0);
            if !(rho >= -tol && rho <= c.jam_density + tol) {
                return Err(Error::Contract(format!(
                    "density {rho} of cell {} outside [0, {}]",
                    k + 1,
                    c.jam_density
                )));
            }
            let q = self.queue[k];
            let tol = CONTRACT_TOL * c.ramp_queue_cap.max(1.0);
            if !(q >= -tol && q <= c.ramp_queue_cap + tol) {
                return Err(Error::Contract(format!(
                    "queue {q} of cell {} outside [0, {}]",
                    k + 1,
                    c.ramp_queue_cap
                )));
            }
        }
        Ok(())
    }
}

/// External demands over the horizon. Row `t` holds `w_0(t), w_1(t), …, w_n(t)` in cars/h,
/// where `w_0` enters the first cell from upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    rows: Vec<Vec<f64>>,
}

impl DemandProfile {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn zeros(horizon: usize, n: usize) -> Self {
        Self {
            rows: vec![vec![0.0; n + 1]; horizon],
        }
    }

    /// Number of steps `T`.
    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn mainline(&self, t: usize) -> f64 {
        self.rows[t][0]
    }

    /// Demand at the onramp of 0-based cell `k`.
    pub fn ramp(&self, t: usize, k: usize) -> f64 {
        self.rows[t][k + 1]
    }

    /// Total demand (cars) over the horizon.
    pub fn total_cars(&self, dt: f64) -> f64 {
        self.rows.iter().flatten().sum::<f64>() * dt
    }

    /// Rejects negative demands, rows of the wrong width, and ramp demands above `r̄`.
    pub fn validate(&self, model: &FreewayModel) -> Result<()> {
        for (t, row) in self.rows.iter().enumerate() {
            if row.len() != model.len() + 1 {
                return Err(Error::Scenario(format!(
                    "demand row {t} has {} entries, expected {}",
                    row.len(),
                    model.len() + 1
                )));
            }
            if !(row[0] >= 0.0) || !row[0].is_finite() {
                return Err(Error::Scenario(format!(
                    "mainline demand at step {t} must be finite and nonnegative, got {}",
                    row[0]
                )));
            }
            for (k, c) in model.cells().iter().enumerate() {
                let w = row[k + 1];
                let tol = CONTRACT_TOL * c.ramp_max_rate.max(1.0);
                if !(w >= 0.0) || w > c.ramp_max_rate + tol {
                    return Err(Error::Scenario(format!(
                        "ramp demand {w} at step {t}, ramp {} outside [0, {}]",
                        k + 1,
                        c.ramp_max_rate
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Multiplicative flow noise `φ̂ = φ·N(1, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub sigma_phi: f64,
    pub seed: u64,
}

/// Per-run noise source passed to [`step`].
pub struct FlowNoise {
    normal: Normal<f64>,
    rng: ChaCha8Rng,
}

impl FlowNoise {
    pub fn new(spec: &DisturbanceSpec) -> Result<Self> {
        let normal = Normal::new(1.0, spec.sigma_phi)
            .map_err(|e| Error::Contract(format!("invalid flow noise σ = {}: {e}", spec.sigma_phi)))?;
        Ok(Self {
            normal,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        })
    }

    fn factor(&mut self) -> f64 {
        self.normal.sample(&mut self.rng)
    }
}

/// Mainline flows `φ_0..φ_n` (cars/h) for the given state. `φ_0` is the upstream demand and
/// the last flow leaves the stretch unobstructed.
pub fn compute_flows(model: &FreewayModel, state: &SimState, w0: f64) -> Vec<f64> {
    let n = model.len();
    let cells = model.cells();
    let mut flows = Vec::with_capacity(n + 1);
    flows.push(w0);
    for k in 0..n {
        let c = &cells[k];
        let mut phi = c.demand_unchecked(state.density[k]).min(c.capacity);
        if k + 1 < n {
            phi = phi.min(cells[k + 1].supply_unchecked(state.density[k + 1]));
        }
        flows.push(phi);
    }
    flows
}

/// Feasible metering interval `[lo, hi]` for 0-based cell `k` given its queue and demand.
pub fn feasible_rate_interval(model: &FreewayModel, k: usize, queue: f64, demand: f64) -> Result<(f64, f64)> {
    let (lo, hi) = queue_rate_bounds(model, k, queue, demand);
    let c = model.cell(k);
    let lo = lo.max(0.0);
    let hi = hi.min(c.ramp_max_rate);
    if lo > hi + CONTRACT_TOL * hi.abs().max(1.0) {
        return Err(Error::InfeasibleRate { cell: k + 1, lo, hi });
    }
    Ok((lo, hi.max(lo)))
}

/// Queue-only bounds `[(q − q̄)/Δt + w, q/Δt + w]`, without the constant bounds `0` and `r̄`.
pub fn queue_rate_bounds(model: &FreewayModel, k: usize, queue: f64, demand: f64) -> (f64, f64) {
    let c = model.cell(k);
    let dt = model.dt();
    ((queue - c.ramp_queue_cap) / dt + demand, queue / dt + demand)
}

/// Which rate bounds a run enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RateBounds {
    /// Constant bounds `0 ≤ r ≤ r̄` and queue bounds.
    #[default]
    Full,
    /// Queue bounds only; rates may be negative or exceed `r̄`.
    QueueOnly,
}

impl RateBounds {
    pub fn interval(self, model: &FreewayModel, k: usize, queue: f64, demand: f64) -> Result<(f64, f64)> {
        match self {
            RateBounds::Full => feasible_rate_interval(model, k, queue, demand),
            RateBounds::QueueOnly => Ok(queue_rate_bounds(model, k, queue, demand)),
        }
    }
}

/// Advances the state by one step.
///
/// `demand_row` is `w_0, w_1, …, w_n`. Rates must already lie in the feasible interval of
/// `bounds`. Without noise the returned flows are the exact model flows and the next state is
/// checked against its box; with noise every internal flow is perturbed, limited to what the
/// sending cell holds and the receiving cell can store, and the new state is clamped into
/// its box.
pub fn step(
    model: &FreewayModel,
    state: &SimState,
    rates: &[f64],
    demand_row: &[f64],
    bounds: RateBounds,
    noise: Option<&mut FlowNoise>,
) -> Result<(SimState, Vec<f64>)> {
    let n = model.len();
    let dt = model.dt();
    let cells = model.cells();
    if rates.len() != n || demand_row.len() != n + 1 {
        return Err(Error::Contract(format!(
            "step got {} rates and {} demands for a {n}-cell model",
            rates.len(),
            demand_row.len()
        )));
    }
    for k in 0..n {
        let (lo, hi) = bounds.interval(model, k, state.queue[k], demand_row[k + 1])?;
        let r = rates[k];
        let tol = CONTRACT_TOL * lo.abs().max(hi.abs()).max(1.0);
        if !(r >= lo - tol && r <= hi + tol) {
            return Err(Error::Contract(format!(
                "rate {r} of cell {} outside feasible interval [{lo}, {hi}]",
                k + 1
            )));
        }
    }

    let mut flows = compute_flows(model, state, demand_row[0]);
    if let Some(noise) = noise {
        for k in 1..=n {
            let c = &cells[k - 1];
            // cars the sending cell can release towards the next cell in one step
            let mut cap = c.through_ratio() * c.length * state.density[k - 1].max(0.0) / dt;
            if k < n {
                let next = &cells[k];
                cap = cap.min(next.length * (next.jam_density - state.density[k]).max(0.0) / dt);
            }
            flows[k] = (flows[k] * noise.factor()).clamp(0.0, cap.max(0.0));
        }
        let mut next = advance(model, state, &flows, rates, demand_row);
        for (k, c) in cells.iter().enumerate() {
            next.density[k] = next.density[k].clamp(0.0, c.jam_density);
            if bounds == RateBounds::Full {
                next.queue[k] = next.queue[k].clamp(0.0, c.ramp_queue_cap);
            }
        }
        return Ok((next, flows));
    }

    let mut next = advance(model, state, &flows, rates, demand_row);
    snap_to_box(model, &mut next);
    next.check_box(model)?;
    Ok((next, flows))
}

fn advance(model: &FreewayModel, state: &SimState, flows: &[f64], rates: &[f64], demand_row: &[f64]) -> SimState {
    let dt = model.dt();
    let mut next = state.clone();
    for (k, c) in model.cells().iter().enumerate() {
        next.density[k] = state.density[k]
            + dt / c.length * (flows[k] + rates[k] - flows[k + 1] / c.through_ratio());
        next.queue[k] = state.queue[k] + dt * (demand_row[k + 1] - rates[k]);
    }
    next
}

// Rounding can leave a state a few ulps outside its box; pull those back exactly.
fn snap_to_box(model: &FreewayModel, s: &mut SimState) {
    for (k, c) in model.cells().iter().enumerate() {
        let tol = CONTRACT_TOL * c.jam_density.max(1.0);
        if s.density[k] < 0.0 && s.density[k] > -tol {
            s.density[k] = 0.0;
        }
        if s.density[k] > c.jam_density && s.density[k] < c.jam_density + tol {
            s.density[k] = c.jam_density;
        }
        let tol = CONTRACT_TOL * c.ramp_queue_cap.max(1.0);
        if s.queue[k] < 0.0 && s.queue[k] > -tol {
            s.queue[k] = 0.0;
        }
        if s.queue[k] > c.ramp_queue_cap && s.queue[k] < c.ramp_queue_cap + tol {
            s.queue[k] = c.ramp_queue_cap;
        }
    }
}

/// A metering policy queried once per step.
pub trait MeteringPolicy {
    /// Rates (cars/h) for every cell at step `t`. The simulator clamps them to the feasible
    /// interval before applying them.
    fn rates(&mut self, t: usize, state: &SimState, demand_row: &[f64]) -> Vec<f64>;

    /// Bounds the simulator enforces for this policy.
    fn rate_bounds(&self) -> RateBounds {
        RateBounds::Full
    }
}

/// Open-loop rate schedule, e.g. the rates of an optimal plan.
#[derive(Debug, Clone)]
pub struct ScheduledRates {
    pub rates: Vec<Vec<f64>>,
}

impl MeteringPolicy for ScheduledRates {
    fn rates(&mut self, t: usize, _state: &SimState, _demand_row: &[f64]) -> Vec<f64> {
        self.rates[t].clone()
    }
}

/// Options for [`simulate`].
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Initial state; empty freeway when unset.
    pub initial: Option<SimState>,
    pub disturbance: Option<DisturbanceSpec>,
}

/// A simulated run: `T + 1` states and the `T` flow and rate vectors that connect them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SimState>,
    /// `flows[t]` holds `φ_0(t)..φ_n(t)`.
    pub flows: Vec<Vec<f64>>,
    /// `rates[t]` holds `r_1(t)..r_n(t)`.
    pub rates: Vec<Vec<f64>>,
    pub demand: DemandProfile,
    pub bounds: RateBounds,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.rates.len()
    }
}

/// Runs `policy` over the whole demand horizon.
pub fn simulate(
    model: &FreewayModel,
    demand: &DemandProfile,
    policy: &mut dyn MeteringPolicy,
    options: &SimOptions,
) -> Result<Trajectory> {
    let n = model.len();
    let horizon = demand.horizon();
    let bounds = policy.rate_bounds();
    let mut state = options.initial.clone().unwrap_or_else(|| SimState::empty(n));
    state.check_box(model)?;
    let mut noise = options.disturbance.as_ref().map(FlowNoise::new).transpose()?;

    let mut states = Vec::with_capacity(horizon + 1);
    let mut flows = Vec::with_capacity(horizon);
    let mut rates = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let row = demand.row(t);
        let mut r = policy.rates(t, &state, row);
        if r.len() != n {
            return Err(Error::Contract(format!("policy returned {} rates for {n} cells", r.len())));
        }
        for k in 0..n {
            let (lo, hi) = bounds.interval(model, k, state.queue[k], row[k + 1])?;
            r[k] = r[k].clamp(lo, hi);
        }
        let (next, phi) = step(model, &state, &r, row, bounds, noise.as_mut())?;
        states.push(std::mem::replace(&mut state, next));
        flows.push(phi);
        rates.push(r);
    }
    states.push(state);
    Ok(Trajectory {
        states,
        flows,
        rates,
        demand: demand.clone(),
        bounds,
    })
}

/// Scalar performance measures of a trajectory (car·h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Total time spent, summed over `t = 0..=T`.
    pub tts: f64,
    /// Total free-flow time of the applied demand.
    pub tft: f64,
    /// Total waiting time `TTS − TFT`.
    pub twt: f64,
    /// Total distance travelled per step (car·km).
    pub tdt: Vec<f64>,
}

/// Expected free-flow traverse time (h) of a car entering at each cell, following the
/// split ratios downstream: `τ_k = l_k/v_k + β̄_k·τ_{k+1}`.
pub fn free_flow_times(model: &FreewayModel) -> Vec<f64> {
    let n = model.len();
    let mut tau = vec![0.0; n];
    let mut downstream = 0.0;
    for k in (0..n).rev() {
        let c = model.cell(k);
        tau[k] = c.length / c.free_speed + c.through_ratio() * downstream;
        downstream = tau[k];
    }
    tau
}

pub fn total_time_spent(model: &FreewayModel, states: &[SimState]) -> f64 {
    model.dt() * states.iter().map(|s| s.vehicles(model)).sum::<f64>()
}

pub fn total_free_flow_time(model: &FreewayModel, demand: &DemandProfile) -> f64 {
    let tau = free_flow_times(model);
    let dt = model.dt();
    demand
        .rows()
        .iter()
        .map(|row| dt * (row[0] * tau[0] + tau.iter().zip(&row[1..]).map(|(t, w)| t * w).sum::<f64>()))
        .sum()
}

pub fn total_distance_travelled(model: &FreewayModel, flows: &[f64]) -> f64 {
    model.dt()
        * model
            .cells()
            .iter()
            .zip(&flows[1..])
            .map(|(c, phi)| c.length * phi)
            .sum::<f64>()
}

pub fn evaluate_metrics(model: &FreewayModel, trajectory: &Trajectory) -> Metrics {
    let tts = total_time_spent(model, &trajectory.states);
    let tft = total_free_flow_time(model, &trajectory.demand);
    Metrics {
        tts,
        tft,
        twt: tts - tft,
        tdt: trajectory
            .flows
            .iter()
            .map(|f| total_distance_travelled(model, f))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{triangular_fd_defaults, CellSpec};
    use approx::assert_relative_eq;

    fn cell(l: f64, v: f64, rc: f64, rj: f64) -> CellSpec {
        CellSpec {
            length: l,
            free_speed: v,
            critical_density: rc,
            jam_density: rj,
            ..Default::default()
        }
    }

    fn model(specs: &[CellSpec], dt: f64) -> FreewayModel {
        FreewayModel::from_specs(specs, dt).unwrap()
    }

    #[test]
    fn flows_of_an_empty_freeway() {
        let m = model(&[cell(1.0, 100.0, 50.0, 250.0), cell(1.0, 100.0, 50.0, 250.0)], 0.01);
        let f = compute_flows(&m, &SimState::empty(2), 2000.0);
        assert_eq!(f, vec![2000.0, 0.0, 0.0]);
    }

    #[test]
    fn jammed_downstream_blocks_flow() {
        let m = model(&[cell(1.0, 100.0, 50.0, 250.0), cell(1.0, 100.0, 50.0, 250.0)], 0.01);
        let s = SimState {
            density: vec![100.0, 250.0],
            queue: vec![0.0, 0.0],
        };
        let f = compute_flows(&m, &s, 0.0);
        assert_eq!(f[1], 0.0);
        assert_relative_eq!(f[2], 5000.0);
    }

    #[test]
    fn single_cell_outflow() {
        let mut c = cell(1.0, 100.0, 50.0, 250.0);
        c.capacity = Some(5000.0);
        let m = model(&[c], 0.01);
        let s = SimState {
            density: vec![30.0],
            queue: vec![0.0],
        };
        assert_relative_eq!(compute_flows(&m, &s, 0.0)[1], 3000.0);
    }

    #[test]
    fn rate_intervals() {
        let mut c = cell(1.0, 90.0, 50.0, 250.0);
        c.ramp_max_rate = 1800.0;
        c.ramp_queue_cap = 50.0;
        let plain = cell(1.0, 90.0, 50.0, 250.0);
        let m = model(&[c, plain], 1.0 / 240.0);
        let (lo, hi) = feasible_rate_interval(&m, 0, 50.0, 1000.0).unwrap();
        assert_relative_eq!(lo, 1000.0, epsilon = 1e-9);
        assert_relative_eq!(hi, 1800.0);
        assert_eq!(feasible_rate_interval(&m, 0, 0.0, 0.0).unwrap(), (0.0, 0.0));
        assert_eq!(feasible_rate_interval(&m, 1, 0.0, 0.0).unwrap(), (0.0, 0.0));
        // demand above the rate cap on a full ramp cannot be served
        assert!(matches!(
            feasible_rate_interval(&m, 0, 50.0, 2500.0),
            Err(Error::InfeasibleRate { cell: 1, .. })
        ));
    }

    #[test]
    fn density_update() {
        let mut c = cell(1.0, 100.0, 50.0, 250.0);
        c.capacity = Some(5000.0);
        let m = model(&[c], 0.01);
        let s = SimState {
            density: vec![30.0],
            queue: vec![0.0],
        };
        let (next, flows) = step(&m, &s, &[0.0], &[2000.0, 0.0], RateBounds::Full, None).unwrap();
        assert_relative_eq!(flows[1], 3000.0);
        assert_relative_eq!(next.density[0], 20.0, max_relative = 1e-12);
    }

    #[test]
    fn queue_update_and_fixed_point() {
        let mut c = cell(1.0, 100.0, 50.0, 250.0);
        c.ramp_max_rate = 1800.0;
        c.ramp_queue_cap = 100.0;
        let m = model(&[c], 0.01);
        let s = SimState {
            density: vec![0.0],
            queue: vec![10.0],
        };
        let (next, _) = step(&m, &s, &[1000.0], &[0.0, 1000.0], RateBounds::Full, None).unwrap();
        assert_relative_eq!(next.queue[0], 10.0);

        let zero = SimState::empty(1);
        let (next, _) = step(&m, &zero, &[0.0], &[0.0, 0.0], RateBounds::Full, None).unwrap();
        assert_eq!(next, zero);
    }

    #[test]
    fn rates_outside_interval_are_rejected() {
        let mut c = cell(1.0, 100.0, 50.0, 250.0);
        c.ramp_max_rate = 1800.0;
        c.ramp_queue_cap = 100.0;
        let m = model(&[c], 0.01);
        let err = step(&m, &SimState::empty(1), &[500.0], &[0.0, 100.0], RateBounds::Full, None);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn free_flow_time_of_a_single_cell() {
        let m = model(&[cell(1.0, 100.0, 50.0, 250.0)], 0.01);
        // 500 cars in total
        let demand = DemandProfile::new(vec![vec![25_000.0, 0.0], vec![25_000.0, 0.0]]);
        assert_relative_eq!(total_free_flow_time(&m, &demand), 5.0, max_relative = 1e-12);
    }

    #[test]
    fn free_flow_time_follows_split_ratios() {
        let mut a = cell(1.0, 100.0, 50.0, 250.0);
        a.split_ratio = 0.8;
        let b = cell(2.0, 80.0, 50.0, 250.0);
        let m = model(&[a, b], 0.001);
        let tau = free_flow_times(&m);
        assert_relative_eq!(tau[0], 1.0 / 100.0 + 0.2 * 2.0 / 80.0, max_relative = 1e-12);
        assert_relative_eq!(tau[1], 2.0 / 80.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_demand_gives_zero_metrics() {
        let m = model(&[cell(1.0, 100.0, 50.0, 250.0)], 0.01);
        let demand = DemandProfile::zeros(10, 1);
        let mut p = ScheduledRates {
            rates: vec![vec![0.0]; 10],
        };
        let tr = simulate(&m, &demand, &mut p, &SimOptions::default()).unwrap();
        assert!(tr.states.iter().all(|s| s == &SimState::empty(1)));
        let met = evaluate_metrics(&m, &tr);
        assert_eq!((met.tts, met.tft, met.twt), (0.0, 0.0, 0.0));
    }

    #[test]
    fn demand_above_ramp_cap_is_rejected() {
        let mut c = cell(1.0, 100.0, 50.0, 250.0);
        c.ramp_max_rate = 1800.0;
        let m = model(&[c], 0.01);
        let demand = DemandProfile::new(vec![vec![0.0, 1900.0]]);
        assert!(matches!(demand.validate(&m), Err(Error::Scenario(_))));
    }

    #[test]
    fn noisy_step_keeps_state_in_box() {
        let c = triangular_fd_defaults(&cell(0.5, 90.0, 50.0, 250.0)).unwrap();
        let m = FreewayModel::new(vec![c; 3], 1.0 / 240.0).unwrap();
        let mut noise = FlowNoise::new(&DisturbanceSpec { sigma_phi: 0.5, seed: 3 }).unwrap();
        let mut s = SimState {
            density: vec![240.0, 10.0, 249.0],
            queue: vec![0.0; 3],
        };
        for _ in 0..200 {
            let (next, _) = step(&m, &s, &[0.0; 3], &[4000.0, 0.0, 0.0, 0.0], RateBounds::Full, Some(&mut noise)).unwrap();
            next.check_box(&m).unwrap();
            s = next;
        }
    }
}
