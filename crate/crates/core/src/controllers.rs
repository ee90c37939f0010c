//! Distributed ramp-metering policies.
//!
//! Every controller evaluates its law on an internal model, which may differ from the plant
//! it is connected to. Only the measured state and the current demand are shared.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_model, CellParams, FreewayModel};
use crate::simulator::{compute_flows, queue_rate_bounds, MeteringPolicy, RateBounds, SimState};

/// Integral gain used when none is given, in (cars/h)/(cars/km).
pub const DEFAULT_ALINEA_GAIN: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// No metering: every car that reaches an onramp is admitted.
    None,
    BestEffort,
    RelaxedBestEffort,
    Alinea,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::None => "none",
            ControllerKind::BestEffort => "be",
            ControllerKind::RelaxedBestEffort => "relaxed-be",
            ControllerKind::Alinea => "alinea",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "open-loop" => Ok(ControllerKind::None),
            "be" | "best-effort" => Ok(ControllerKind::BestEffort),
            "relaxed-be" | "relaxed-best-effort" => Ok(ControllerKind::RelaxedBestEffort),
            "alinea" => Ok(ControllerKind::Alinea),
            other => Err(Error::Scenario(format!("unknown controller `{other}`"))),
        }
    }
}

/// A controller together with the model it believes in.
#[derive(Debug, Clone)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub internal_model: FreewayModel,
    pub alinea_gain: f64,
    prev_rates: Vec<f64>,
}

impl ControllerSpec {
    pub fn new(kind: ControllerKind, internal_model: FreewayModel) -> Self {
        let n = internal_model.len();
        Self {
            kind,
            internal_model,
            alinea_gain: DEFAULT_ALINEA_GAIN,
            prev_rates: vec![0.0; n],
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Result<Self> {
        if !(gain > 0.0) {
            return Err(Error::Contract(format!("ALINEA gain must be positive, got {gain}")));
        }
        self.alinea_gain = gain;
        Ok(self)
    }

    /// Rates applied at the previous step (ALINEA memory).
    pub fn previous_rates(&self) -> &[f64] {
        &self.prev_rates
    }

    pub fn reset(&mut self) {
        self.prev_rates.iter_mut().for_each(|r| *r = 0.0);
    }
}

fn best_effort_target(cell: &CellParams, dt: f64, rho: f64, inflow: f64, outflow: f64) -> f64 {
    cell.length / dt * (cell.critical_density - rho) + outflow / cell.through_ratio() - inflow
}

/// One-step-ahead law: the rate that brings each density to its critical value, clamped to
/// `[max{0, (q − q̄)/Δt + w}, min{r̄, q/Δt + w}]`.
///
/// `flows_now` are `φ_0..φ_n` as predicted by the controller's model; `demand_row` is
/// `w_0..w_n`.
pub fn best_effort_rates(model: &FreewayModel, state: &SimState, flows_now: &[f64], demand_row: &[f64]) -> Vec<f64> {
    model
        .cells()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let target = best_effort_target(c, model.dt(), state.density[k], flows_now[k], flows_now[k + 1]);
            let (lo, hi) = queue_rate_bounds(model, k, state.queue[k], demand_row[k + 1]);
            saturate(target, lo.max(0.0), hi.min(c.ramp_max_rate))
        })
        .collect()
}

/// Same affine law as [`best_effort_rates`] but clamped to the queue bounds only. The result
/// may be negative or exceed `r̄`; it is meant for lower-bound runs.
pub fn relaxed_best_effort_rates(
    model: &FreewayModel,
    state: &SimState,
    flows_now: &[f64],
    demand_row: &[f64],
) -> Vec<f64> {
    model
        .cells()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let target = best_effort_target(c, model.dt(), state.density[k], flows_now[k], flows_now[k + 1]);
            let (lo, hi) = queue_rate_bounds(model, k, state.queue[k], demand_row[k + 1]);
            saturate(target, lo, hi)
        })
        .collect()
}

/// Integral feedback `r̃ = r(t−1) + K·(ρc − ρ)` saturated like the best-effort law. The
/// saturated value is stored as the next `r(t−1)`, which is what keeps the integrator from
/// winding up.
pub fn alinea_rates(spec: &mut ControllerSpec, state: &SimState, demand_row: &[f64]) -> Vec<f64> {
    let model = &spec.internal_model;
    let rates: Vec<f64> = model
        .cells()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let raw = spec.prev_rates[k] + spec.alinea_gain * (c.critical_density - state.density[k]);
            let (lo, hi) = queue_rate_bounds(model, k, state.queue[k], demand_row[k + 1]);
            saturate(raw, lo.max(0.0), hi.min(c.ramp_max_rate))
        })
        .collect();
    spec.prev_rates.clone_from(&rates);
    rates
}

/// Rates that admit every waiting car the constant bounds allow, up to the room left in the
/// cell after the mainline inflow and outflow of the step.
pub fn open_loop_rates(model: &FreewayModel, state: &SimState, demand_row: &[f64]) -> Vec<f64> {
    let flows = compute_flows(model, state, demand_row[0]);
    let dt = model.dt();
    model
        .cells()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let (lo, hi) = queue_rate_bounds(model, k, state.queue[k], demand_row[k + 1]);
            let hi = hi.min(c.ramp_max_rate);
            let room = (c.length / dt) * (c.jam_density - state.density[k]) - flows[k] + flows[k + 1] / c.through_ratio();
            saturate(hi.min(room), lo.max(0.0), hi)
        })
        .collect()
}

// `[x]_lo^hi = min{hi, max{x, lo}}`: the upper bound wins when the interval is empty.
#[inline]
fn saturate(x: f64, lo: f64, hi: f64) -> f64 {
    hi.min(x.max(lo))
}

impl MeteringPolicy for ControllerSpec {
    fn rates(&mut self, _t: usize, state: &SimState, demand_row: &[f64]) -> Vec<f64> {
        match self.kind {
            ControllerKind::None => open_loop_rates(&self.internal_model, state, demand_row),
            ControllerKind::BestEffort => {
                let flows = compute_flows(&self.internal_model, state, demand_row[0]);
                best_effort_rates(&self.internal_model, state, &flows, demand_row)
            }
            ControllerKind::RelaxedBestEffort => {
                let flows = compute_flows(&self.internal_model, state, demand_row[0]);
                relaxed_best_effort_rates(&self.internal_model, state, &flows, demand_row)
            }
            ControllerKind::Alinea => alinea_rates(self, state, demand_row),
        }
    }

    fn rate_bounds(&self) -> RateBounds {
        match self.kind {
            ControllerKind::RelaxedBestEffort => RateBounds::QueueOnly,
            _ => RateBounds::Full,
        }
    }
}

/// Draws a controller model with `v̂ ~ U(v(1 − dv), v(1 + dv))` and
/// `ρ̄̂ ~ U(ρ̄(1 − drho), ρ̄(1 + drho))` per cell; `ρc` is kept. The wave speed follows the
/// triangular shape of the perturbed values, and so does the flow cap unless the nominal cap
/// was set below the triangular peak, in which case it is kept.
pub fn sample_controller_model(nominal: &FreewayModel, dv: f64, drho: f64, seed: u64) -> Result<FreewayModel> {
    if !(dv >= 0.0 && drho >= 0.0) {
        return Err(Error::Contract(format!("uncertainty half-widths must be nonnegative (dv = {dv}, drho = {drho})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = Vec::new();
    for _ in 0..100 {
        let cells: Vec<CellParams> = nominal
            .cells()
            .iter()
            .map(|c| {
                let v = draw(&mut rng, c.free_speed, dv);
                let jam = draw(&mut rng, c.jam_density, drho);
                let capped = c.capacity < c.free_speed * c.critical_density * (1.0 - 1e-9);
                CellParams {
                    free_speed: v,
                    jam_density: jam,
                    wave_speed: v * c.critical_density / (jam - c.critical_density),
                    capacity: if capped { c.capacity } else { v * c.critical_density },
                    ..*c
                }
            })
            .collect();
        let model = FreewayModel::unvalidated(cells, nominal.dt());
        last = validate_model(&model);
        if last.is_empty() {
            return Ok(model);
        }
    }
    Err(Error::InvalidModel(last))
}

fn draw(rng: &mut ChaCha8Rng, centre: f64, frac: f64) -> f64 {
    if frac == 0.0 {
        centre
    } else {
        rng.random_range(centre * (1.0 - frac)..=centre * (1.0 + frac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{triangular_fd_defaults, CellSpec};
    use crate::simulator::step;
    use approx::assert_relative_eq;

    fn ramp_cell(rc: f64, rbar: f64, qbar: f64) -> CellParams {
        triangular_fd_defaults(&CellSpec {
            length: 1.0,
            free_speed: 100.0,
            critical_density: rc,
            jam_density: 250.0,
            ramp_max_rate: rbar,
            ramp_queue_cap: qbar,
            ..Default::default()
        })
        .unwrap()
    }

    fn one_cell(rc: f64, rbar: f64, qbar: f64, dt: f64) -> FreewayModel {
        FreewayModel::new(vec![ramp_cell(rc, rbar, qbar)], dt).unwrap()
    }

    #[test]
    fn open_loop_stops_at_jam_density() {
        let cell = ramp_cell(50.0, 1800.0, 100.0);
        let m = FreewayModel::new(vec![cell, cell], 0.01).unwrap();
        // the jammed second cell blocks the first; 2 cars of room are left in cell 1
        let s = SimState {
            density: vec![248.0, 250.0],
            queue: vec![0.0, 0.0],
        };
        let row = [0.0, 1000.0, 0.0];
        let r = open_loop_rates(&m, &s, &row);
        assert_relative_eq!(r[0], 200.0, max_relative = 1e-12);
        let (next, _) = step(&m, &s, &r, &row, RateBounds::Full, None).unwrap();
        assert_relative_eq!(next.density[0], 250.0, max_relative = 1e-12);

        let free = SimState::empty(2);
        assert_eq!(open_loop_rates(&m, &free, &row), vec![1000.0, 0.0]);
    }

    #[test]
    fn best_effort_saturates_at_rate_cap() {
        let m = one_cell(50.0, 1800.0, 100.0, 0.01);
        let s = SimState {
            density: vec![40.0],
            queue: vec![10.0],
        };
        // affine term: (1/0.01)(50 − 40) + 3000 − 2000 = 2000
        let target = best_effort_target(m.cell(0), 0.01, 40.0, 2000.0, 3000.0);
        assert_relative_eq!(target, 2000.0, max_relative = 1e-12);
        let r = best_effort_rates(&m, &s, &[2000.0, 3000.0], &[2000.0, 1000.0]);
        assert_relative_eq!(r[0], 1800.0);
    }

    #[test]
    fn best_effort_at_equilibrium_returns_lower_bound() {
        let m = one_cell(50.0, 1800.0, 100.0, 0.01);
        let s = SimState {
            density: vec![50.0],
            queue: vec![95.0],
        };
        let r = best_effort_rates(&m, &s, &[3000.0, 3000.0], &[3000.0, 1000.0]);
        // max{0, (95 − 100)/0.01 + 1000} = 500
        assert_relative_eq!(r[0], 500.0, max_relative = 1e-12);
        let s = SimState {
            density: vec![50.0],
            queue: vec![0.0],
        };
        let r = best_effort_rates(&m, &s, &[3000.0, 3000.0], &[3000.0, 0.0]);
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn best_effort_without_ramp_is_zero() {
        let m = one_cell(50.0, 0.0, 0.0, 0.01);
        let s = SimState {
            density: vec![10.0],
            queue: vec![0.0],
        };
        assert_eq!(best_effort_rates(&m, &s, &[4000.0, 1000.0], &[4000.0, 0.0]), vec![0.0]);
    }

    #[test]
    fn relaxed_best_effort_ignores_constant_bounds() {
        let m = one_cell(50.0, 1800.0, 100.0, 0.01);
        let s = SimState {
            density: vec![30.0],
            queue: vec![10.0],
        };
        // affine 2000 + 3000 − 2000 = 3000 is capped by q/Δt + w = 2000, above r̄ = 1800
        let target = best_effort_target(m.cell(0), 0.01, 30.0, 2000.0, 3000.0);
        let r = relaxed_best_effort_rates(&m, &s, &[2000.0, 3000.0], &[2000.0, 1000.0]);
        assert!(target > 2000.0);
        assert_relative_eq!(r[0], 2000.0, max_relative = 1e-12);
    }

    #[test]
    fn relaxed_best_effort_can_release_negative_rates() {
        let m = one_cell(50.0, 1800.0, 100.0, 0.01);
        let s = SimState {
            density: vec![200.0],
            queue: vec![0.0],
        };
        let r = relaxed_best_effort_rates(&m, &s, &[5000.0, 1000.0], &[5000.0, 0.0]);
        assert_relative_eq!(r[0], -100.0 / 0.01, max_relative = 1e-12);

        let s = SimState {
            density: vec![50.0],
            queue: vec![0.0],
        };
        let r = relaxed_best_effort_rates(&m, &s, &[2000.0, 2000.0], &[2000.0, 0.0]);
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn alinea_integrates_and_saturates() {
        let m = one_cell(50.0, 1800.0, 100.0, 0.01);
        let mut spec = ControllerSpec::new(ControllerKind::Alinea, m);
        spec.prev_rates = vec![1000.0];
        let s = SimState {
            density: vec![60.0],
            queue: vec![0.0],
        };
        let r = alinea_rates(&mut spec, &s, &[0.0, 500.0]);
        // 1000 + 70·(50 − 60) = 300 within [0, 500]
        assert_relative_eq!(r[0], 300.0);
        assert_eq!(spec.previous_rates(), &[300.0]);

        let s = SimState {
            density: vec![50.0],
            queue: vec![0.0],
        };
        assert_relative_eq!(alinea_rates(&mut spec, &s, &[0.0, 500.0])[0], 300.0);

        spec.prev_rates = vec![0.0];
        let s = SimState {
            density: vec![200.0],
            queue: vec![0.0],
        };
        assert_eq!(alinea_rates(&mut spec, &s, &[0.0, 0.0])[0], 0.0);
    }

    #[test]
    fn truthful_best_effort_tracks_critical_density() {
        let c = ramp_cell(50.0, 6000.0, 1000.0);
        let m = FreewayModel::new(vec![c, c], 0.005).unwrap();
        let s = SimState {
            density: vec![40.0, 45.0],
            queue: vec![500.0, 500.0],
        };
        let row = [3000.0, 1000.0, 1000.0];
        let flows = compute_flows(&m, &s, row[0]);
        let r = best_effort_rates(&m, &s, &flows, &row);
        let (next, _) = step(&m, &s, &r, &row, RateBounds::Full, None).unwrap();
        for k in 0..2 {
            assert!((next.density[k] - 50.0).abs() <= 1e-9 * 50.0, "{:?}", next.density);
        }
    }

    #[test]
    fn sampled_model_is_deterministic_and_within_range() {
        let c = triangular_fd_defaults(&CellSpec {
            length: 0.5,
            free_speed: 90.0,
            critical_density: 50.0,
            jam_density: 250.0,
            ..Default::default()
        })
        .unwrap();
        let mut capped = c;
        capped.capacity = 4300.0;
        let m = FreewayModel::new(vec![c, capped, c], 1.0 / 240.0).unwrap();
        assert_eq!(sample_controller_model(&m, 0.0, 0.0, 1).unwrap(), m);
        let a = sample_controller_model(&m, 0.1, 0.2, 9).unwrap();
        let b = sample_controller_model(&m, 0.1, 0.2, 9).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.cells().iter().zip(m.cells()) {
            assert!(x.free_speed >= 0.9 * y.free_speed && x.free_speed <= 1.1 * y.free_speed);
            assert!(x.jam_density >= 0.8 * y.jam_density && x.jam_density <= 1.2 * y.jam_density);
            assert_eq!(x.critical_density, y.critical_density);
        }
        assert_eq!(a.cell(1).capacity, 4300.0);
        assert_relative_eq!(a.cell(0).capacity, a.cell(0).free_speed * 50.0);
    }

    #[test]
    fn controller_names_parse() {
        for k in [ControllerKind::None, ControllerKind::BestEffort, ControllerKind::RelaxedBestEffort, ControllerKind::Alinea] {
            assert_eq!(k.label().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("mpc".parse::<ControllerKind>().is_err());
    }
}
