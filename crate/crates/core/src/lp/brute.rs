//! Exhaustive search over gridded metering policies, for tiny instances only.

use crate::cumulative::CumulativeMap;
use crate::error::{Error, Result};
use crate::model::FreewayModel;
use crate::simulator::{
    feasible_rate_interval, step, total_time_spent, DemandProfile, RateBounds, SimState,
};

/// Extra per-cell candidate rates evaluated at each node, on top of the grid.
pub type CandidateFn<'a> = &'a dyn Fn(&SimState, &[f64]) -> Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub tts: f64,
    pub rates: Vec<Vec<f64>>,
    pub paths: usize,
}

const MAX_PATHS: f64 = 5e7;

fn candidates(
    model: &FreewayModel,
    state: &SimState,
    row: &[f64],
    grid: usize,
    extra: Option<CandidateFn<'_>>,
) -> Result<Vec<Vec<f64>>> {
    let extra = extra.map(|f| f(state, row));
    (0..model.len())
        .map(|k| {
            let (lo, hi) = feasible_rate_interval(model, k, state.queue[k], row[k + 1])?;
            if hi - lo <= 1e-12 * hi.abs().max(1.0) || grid < 2 {
                return Ok(vec![lo]);
            }
            let mut v: Vec<f64> = (0..grid).map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64).collect();
            if let Some(e) = &extra {
                v.push(e[k].clamp(lo, hi));
            }
            Ok(v)
        })
        .collect()
}

fn explore(
    model: &FreewayModel,
    demand: &DemandProfile,
    grid: usize,
    extra: Option<CandidateFn<'_>>,
    states: &mut Vec<SimState>,
    flows: &mut Vec<Vec<f64>>,
    rates: &mut Vec<Vec<f64>>,
    visit: &mut dyn FnMut(&[SimState], &[Vec<f64>], &[Vec<f64>]),
) -> Result<()> {
    let t = rates.len();
    if t == demand.horizon() {
        visit(states, flows, rates);
        return Ok(());
    }
    let state = states.last().expect("initial state").clone();
    let row = demand.row(t);
    let cand = candidates(model, &state, row, grid, extra)?;
    let mut idx = vec![0usize; cand.len()];
    loop {
        let r: Vec<f64> = idx.iter().zip(&cand).map(|(&i, c)| c[i]).collect();
        let (next, phi) = step(model, &state, &r, row, RateBounds::Full, None)?;
        states.push(next);
        flows.push(phi);
        rates.push(r);
        explore(model, demand, grid, extra, states, flows, rates, visit)?;
        states.pop();
        flows.pop();
        rates.pop();
        // odometer over the per-cell candidate lists
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(());
            }
            idx[k] += 1;
            if idx[k] < cand[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn check_size(model: &FreewayModel, demand: &DemandProfile, grid: usize) -> Result<()> {
    let metered = model.metered_cells().len() as f64;
    let paths = (grid as f64 + 1.0).powf(metered * demand.horizon() as f64);
    if paths > MAX_PATHS {
        return Err(Error::Unsupported(format!("brute force would visit about {paths:.3e} paths")));
    }
    Ok(())
}

/// Smallest TTS over all policies whose rates lie on a uniform `grid`-point mesh of the
/// feasible interval at every step.
pub fn brute_force_min_tts(
    model: &FreewayModel,
    demand: &DemandProfile,
    initial: Option<&SimState>,
    grid: usize,
) -> Result<BruteForceResult> {
    check_size(model, demand, grid)?;
    let mut best = BruteForceResult {
        tts: f64::INFINITY,
        rates: Vec::new(),
        paths: 0,
    };
    let init = initial.cloned().unwrap_or_else(|| SimState::empty(model.len()));
    let mut visit = |states: &[SimState], _flows: &[Vec<f64>], rates: &[Vec<f64>]| {
        best.paths += 1;
        let tts = total_time_spent(model, states);
        if tts < best.tts {
            best.tts = tts;
            best.rates = rates.to_vec();
        }
    };
    explore(model, demand, grid, None, &mut vec![init], &mut Vec::new(), &mut Vec::new(), &mut visit)?;
    Ok(best)
}

/// Largest cumulative count `Φ_k(t)` reached by any gridded policy, for `t = 0..=T`.
/// `extra` adds per-cell candidate rates at every node.
pub fn brute_force_reachable_counts(
    model: &FreewayModel,
    demand: &DemandProfile,
    initial: Option<&SimState>,
    grid: usize,
    extra: Option<CandidateFn<'_>>,
) -> Result<Vec<Vec<f64>>> {
    check_size(model, demand, grid)?;
    let n = model.len();
    let dt = model.dt();
    let init = initial.cloned().unwrap_or_else(|| SimState::empty(n));
    let phi0 = CumulativeMap::new(model).initial(&init).phi;
    let mut best = vec![vec![f64::NEG_INFINITY; n + 1]; demand.horizon() + 1];
    let mut visit = |_states: &[SimState], flows: &[Vec<f64>], _rates: &[Vec<f64>]| {
        let mut phi = phi0.clone();
        for (t, f) in flows.iter().enumerate() {
            for k in 0..=n {
                best[t][k] = best[t][k].max(phi[k]);
                phi[k] += dt * f[k];
            }
        }
        let last = flows.len();
        for k in 0..=n {
            best[last][k] = best[last][k].max(phi[k]);
        }
    };
    explore(model, demand, grid, extra, &mut vec![init], &mut Vec::new(), &mut Vec::new(), &mut visit)?;
    Ok(best)
}
