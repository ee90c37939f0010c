//! Cumulative-count view of the dynamics and the suboptimality certificate.
//!
//! `Φ_k(t)` counts the cars that crossed the downstream boundary of cell `k` by step `t`,
//! rescaled so that the densities are affine in the counts:
//! `ρ_k = (Φ_{k−1} − Φ_k/β̄_k + R_k)/l_k`, with `R_k` the cumulative admitted ramp flow and
//! `W_k` the cumulative ramp arrivals (initial queue included). `Φ_0` is the cumulative
//! upstream inflow. On this view the one-step map is monotone, which is what the
//! certificate below relies on.

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerKind, ControllerSpec};
use crate::error::{Error, Result};
use crate::model::{FreewayModel, DOMAIN_TOL};
use crate::simulator::{
    compute_flows, evaluate_metrics, simulate, total_time_spent, DemandProfile, RateBounds, SimOptions, SimState,
    Trajectory, CONTRACT_TOL,
};

/// State in cumulative coordinates (all counts in cars).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeState {
    /// `Φ_0..Φ_n`.
    pub phi: Vec<f64>,
    /// `R_1..R_n`.
    pub admitted: Vec<f64>,
    /// `W_1..W_n`, starting from the initial queues.
    pub arrivals: Vec<f64>,
    /// Cars that left the stretch through its downstream end (unscaled).
    pub exited: f64,
}

/// Inputs of one cumulative step.
#[derive(Debug, Clone, PartialEq)]
pub struct CctmInput {
    /// `R(t + 1)`.
    pub admitted_next: Vec<f64>,
    /// `w_0(t)`.
    pub mainline_demand: f64,
    /// `w_1(t)..w_n(t)`.
    pub ramp_demand: Vec<f64>,
}

/// Coordinate change for a fixed model. Holds the products `β̄_{(a,b)} = Π_{i=a}^{b} β̄_i`.
#[derive(Debug, Clone)]
pub struct CumulativeMap<'a> {
    model: &'a FreewayModel,
    // prod[a][b] for 1-based a ≤ b + 1; the empty product is 1
    prod: Vec<Vec<f64>>,
}

impl<'a> CumulativeMap<'a> {
    pub fn new(model: &'a FreewayModel) -> Self {
        let n = model.len();
        let mut prod = vec![vec![1.0; n + 2]; n + 2];
        for a in 1..=n {
            let mut p = 1.0;
            for b in a..=n {
                p *= model.cell(b - 1).through_ratio();
                prod[a][b] = p;
            }
        }
        Self { model, prod }
    }

    pub fn model(&self) -> &FreewayModel {
        self.model
    }

    /// `Φ_k(0) = Σ_{j=k+1}^{n} l_j ρ_j(0) / β̄_{(k+1, j−1)}`, with zero ramp counts.
    pub fn initial(&self, state: &SimState) -> CumulativeState {
        let n = self.model.len();
        let mut phi = vec![0.0; n + 1];
        for (k, slot) in phi.iter_mut().enumerate() {
            *slot = (k + 1..=n)
                .map(|j| {
                    let c = self.model.cell(j - 1);
                    c.length * state.density[j - 1] / self.product(k + 1, j - 1)
                })
                .sum();
        }
        CumulativeState {
            phi,
            admitted: vec![0.0; n],
            arrivals: state.queue.clone(),
            exited: 0.0,
        }
    }

    fn product(&self, a: usize, b: usize) -> f64 {
        if b < a {
            1.0
        } else {
            self.prod[a][b]
        }
    }

    /// Densities implied by the counts, without any domain check.
    pub fn densities_unchecked(&self, phi: &[f64], admitted: &[f64]) -> Vec<f64> {
        self.model
            .cells()
            .iter()
            .enumerate()
            .map(|(k, c)| (phi[k] - phi[k + 1] / c.through_ratio() + admitted[k]) / c.length)
            .collect()
    }

    /// Densities implied by the counts; fails when one leaves `[0, ρ̄]`.
    pub fn densities(&self, phi: &[f64], admitted: &[f64]) -> Result<Vec<f64>> {
        let rho = self.densities_unchecked(phi, admitted);
        for (r, c) in rho.iter().zip(self.model.cells()) {
            let tol = DOMAIN_TOL * c.jam_density.max(1.0);
            if !(*r >= -tol && *r <= c.jam_density + tol) {
                return Err(Error::Domain {
                    density: *r,
                    jam_density: c.jam_density,
                });
            }
        }
        Ok(rho)
    }

    pub fn state(&self, cs: &CumulativeState) -> Result<SimState> {
        let density = self.densities(&cs.phi, &cs.admitted)?;
        let queue = cs.arrivals.iter().zip(&cs.admitted).map(|(w, r)| w - r).collect();
        Ok(SimState { density, queue })
    }

    /// Flows `φ_0..φ_n` at the densities implied by the counts.
    pub fn flows(&self, phi: &[f64], admitted: &[f64], w0: f64) -> Result<Vec<f64>> {
        let density = self.densities(phi, admitted)?;
        let state = SimState {
            queue: vec![0.0; density.len()],
            density,
        };
        Ok(compute_flows(self.model, &state, w0))
    }

    /// The map `f(Φ, R) = Φ + Δt·φ(ρ(Φ, R))`.
    pub fn flow_map(&self, phi: &[f64], admitted: &[f64], w0: f64) -> Result<Vec<f64>> {
        let flows = self.flows(phi, admitted, w0)?;
        let dt = self.model.dt();
        Ok(phi.iter().zip(&flows).map(|(p, f)| p + dt * f).collect())
    }

    /// One step in cumulative coordinates. `R(t + 1)` must satisfy
    /// `R(t) ≤ R(t+1) ≤ R(t) + Δt·r̄` (constant bounds, only under [`RateBounds::Full`]) and
    /// `W(t+1) − q̄ ≤ R(t+1) ≤ W(t+1)`.
    pub fn step(&self, cs: &CumulativeState, input: &CctmInput, bounds: RateBounds) -> Result<CumulativeState> {
        let n = self.model.len();
        let dt = self.model.dt();
        if input.admitted_next.len() != n || input.ramp_demand.len() != n {
            return Err(Error::Contract(format!(
                "cumulative step got {} counts and {} demands for a {n}-cell model",
                input.admitted_next.len(),
                input.ramp_demand.len()
            )));
        }
        let arrivals: Vec<f64> = cs.arrivals.iter().zip(&input.ramp_demand).map(|(w, d)| w + dt * d).collect();
        for (k, c) in self.model.cells().iter().enumerate() {
            let r = input.admitted_next[k];
            let mut lo = arrivals[k] - c.ramp_queue_cap;
            let mut hi = arrivals[k];
            if bounds == RateBounds::Full {
                lo = lo.max(cs.admitted[k]);
                hi = hi.min(cs.admitted[k] + dt * c.ramp_max_rate);
            }
            let tol = CONTRACT_TOL * lo.abs().max(hi.abs()).max(1.0);
            if !(r >= lo - tol && r <= hi + tol) {
                return Err(Error::Contract(format!(
                    "admitted count {r} of cell {} outside [{lo}, {hi}]",
                    k + 1
                )));
            }
        }
        let flows = self.flows(&cs.phi, &cs.admitted, input.mainline_demand)?;
        let phi = cs.phi.iter().zip(&flows).map(|(p, f)| p + dt * f).collect();
        Ok(CumulativeState {
            phi,
            admitted: input.admitted_next.clone(),
            arrivals,
            exited: cs.exited + dt * flows[n],
        })
    }
}

/// Maps every state of a trajectory to cumulative coordinates using its recorded flows and
/// rates.
pub fn to_cumulative(model: &FreewayModel, trajectory: &Trajectory) -> Vec<CumulativeState> {
    let map = CumulativeMap::new(model);
    let dt = model.dt();
    let n = model.len();
    let mut out = Vec::with_capacity(trajectory.states.len());
    let mut cs = map.initial(&trajectory.states[0]);
    for t in 0..trajectory.horizon() {
        let flows = &trajectory.flows[t];
        let rates = &trajectory.rates[t];
        let demand = trajectory.demand.row(t);
        let next = CumulativeState {
            phi: cs.phi.iter().zip(flows).map(|(p, f)| p + dt * f).collect(),
            admitted: cs.admitted.iter().zip(rates).map(|(r, x)| r + dt * x).collect(),
            arrivals: cs.arrivals.iter().zip(&demand[1..]).map(|(w, d)| w + dt * d).collect(),
            exited: cs.exited + dt * flows[n],
        };
        out.push(std::mem::replace(&mut cs, next));
    }
    out.push(cs);
    out
}

pub fn reconstruct_densities(model: &FreewayModel, cs: &CumulativeState) -> Result<Vec<f64>> {
    CumulativeMap::new(model).densities(&cs.phi, &cs.admitted)
}

pub fn cctm_step(model: &FreewayModel, cs: &CumulativeState, input: &CctmInput) -> Result<CumulativeState> {
    CumulativeMap::new(model).step(cs, input, RateBounds::Full)
}

/// Total time spent written in counts:
/// `Δt Σ_t [Φ_0 − Φ_n + Σ_k (W_k − (β_k/β̄_k)·Φ_k)]`.
pub fn total_time_spent_cumulative(model: &FreewayModel, states: &[CumulativeState]) -> f64 {
    let n = model.len();
    let dt = model.dt();
    states
        .iter()
        .map(|cs| {
            let mut s = cs.phi[0] - cs.phi[n];
            for (k, c) in model.cells().iter().enumerate() {
                s += cs.arrivals[k] - c.split_ratio / c.through_ratio() * cs.phi[k + 1];
            }
            dt * s
        })
        .sum()
}

/// Result of comparing the one-step map at two ordered points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    /// Largest amount by which an expected inequality fails (0 when none does).
    pub max_violation: f64,
    /// Index of the count where it happens.
    pub component: Option<usize>,
}

impl ProbeOutcome {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Checks monotonicity of `f(Φ, R)` between `base` and `probe`.
///
/// Two kinds of pairs are accepted. With equal admitted counts and `probe.phi ≥ base.phi`,
/// every component of `f` must not decrease. With equal `Φ` and admitted counts differing
/// in one cell `k` only, `f_k` must move with `R_k` and `f_{k−1}` against it. Violations are
/// reported relative to `max(1, |Φ|)`.
pub fn monotonicity_probe(
    model: &FreewayModel,
    base: (&[f64], &[f64]),
    probe: (&[f64], &[f64]),
    w0: f64,
) -> Result<ProbeOutcome> {
    let map = CumulativeMap::new(model);
    let (phi_a, r_a) = base;
    let (phi_b, r_b) = probe;
    let dt = model.dt();
    let fa = map.flows(phi_a, r_a, w0)?;
    let fb = map.flows(phi_b, r_b, w0)?;
    // f_b − f_a computed without subtracting the large counts
    let diff: Vec<f64> = (0..phi_a.len())
        .map(|i| (phi_b[i] - phi_a[i]) + dt * (fb[i] - fa[i]))
        .collect();
    let scale = |i: usize| phi_a[i].abs().max(phi_b[i].abs()).max(1.0);

    let changed: Vec<usize> = (0..r_a.len()).filter(|&k| r_a[k] != r_b[k]).collect();
    let mut worst = ProbeOutcome {
        max_violation: 0.0,
        component: None,
    };
    let mut record = |i: usize, v: f64| {
        let v = v / scale(i);
        if v > worst.max_violation {
            worst.max_violation = v;
            worst.component = Some(i);
        }
    };
    match changed.as_slice() {
        [] => {
            if phi_a.iter().zip(phi_b).any(|(a, b)| b < a) {
                return Err(Error::Contract("flow probe needs probe Φ ≥ base Φ".into()));
            }
            for (i, d) in diff.iter().enumerate() {
                record(i, -d);
            }
        }
        [k] => {
            if phi_a != phi_b {
                return Err(Error::Contract("input probe needs equal Φ".into()));
            }
            let sign = if r_b[*k] > r_a[*k] { 1.0 } else { -1.0 };
            // f_k is Φ_k shifted by the outflow of cell k, which grows with R_k
            record(k + 1, -sign * diff[k + 1]);
            // the inflow to cell k shrinks as R_k fills it
            record(*k, sign * diff[*k]);
        }
        _ => return Err(Error::Contract("input probe may change one admitted count only".into())),
    }
    Ok(worst)
}

/// Why a metered cell was found restrictive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestrictiveReason {
    /// Queue below capacity while the inflow was held to this cell's supply below capacity.
    SupplyLimitedInflow,
    /// Queue nonempty while the outflow was held to this cell's demand below capacity.
    DemandLimitedOutflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    /// No queue space: nothing can be held back.
    Unmetered,
    Nonrestrictive,
    Restrictive(RestrictiveReason),
}

impl CellStatus {
    pub fn is_restrictive(self) -> bool {
        matches!(self, CellStatus::Restrictive(_))
    }
}

/// Classifies 0-based cell `k` at a state and the flows computed from it.
///
/// Restrictive means `q < q̄` with `φ_{k−1} = s_k(ρ_k) < F_{k−1}`, or `q > 0` with
/// `φ_k = d_k(ρ_k) < F_k`, where `F` is the effective capacity of the boundary and
/// equalities hold to `10⁻⁶·F`. The upstream flow of the first cell is external and never
/// supply-limited.
pub fn classify_cell(model: &FreewayModel, state: &SimState, flows: &[f64], k: usize) -> CellStatus {
    let c = model.cell(k);
    if !c.is_metered() {
        return CellStatus::Unmetered;
    }
    let q = state.queue[k];
    let qtol = CONTRACT_TOL * c.ramp_queue_cap.max(1.0);
    let rho = state.density[k];
    if k > 0 && q < c.ramp_queue_cap - qtol {
        let cap = model.effective_capacity(k - 1);
        let eps = 1e-6 * cap.max(1.0);
        if (flows[k] - c.supply_unchecked(rho)).abs() <= eps && flows[k] < cap - eps {
            return CellStatus::Restrictive(RestrictiveReason::SupplyLimitedInflow);
        }
    }
    if q > qtol {
        let cap = model.effective_capacity(k);
        let eps = 1e-6 * cap.max(1.0);
        if (flows[k + 1] - c.demand_unchecked(rho)).abs() <= eps && flows[k + 1] < cap - eps {
            return CellStatus::Restrictive(RestrictiveReason::DemandLimitedOutflow);
        }
    }
    CellStatus::Nonrestrictive
}

/// Per-step classification of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictivenessReport {
    /// `statuses[t][k]` for `t = 0..T−1`.
    pub statuses: Vec<Vec<CellStatus>>,
    /// Fraction of restrictive (metered cell, step) pairs over `t = 1..T−1`.
    pub fraction: f64,
    /// Same fraction per cell (0 for unmetered cells).
    pub per_cell: Vec<f64>,
}

impl RestrictivenessReport {
    pub fn is_nonrestrictive(&self) -> bool {
        self.statuses.iter().skip(1).flatten().all(|s| !s.is_restrictive())
    }
}

pub fn restrictiveness_report(model: &FreewayModel, trajectory: &Trajectory) -> RestrictivenessReport {
    let n = model.len();
    let horizon = trajectory.horizon();
    let statuses: Vec<Vec<CellStatus>> = (0..horizon)
        .map(|t| (0..n).map(|k| classify_cell(model, &trajectory.states[t], &trajectory.flows[t], k)).collect())
        .collect();
    let metered = model.metered_cells();
    let steps = horizon.saturating_sub(1);
    let count = |k: usize| statuses.iter().skip(1).filter(|row| row[k].is_restrictive()).count();
    let per_cell = (0..n)
        .map(|k| {
            if steps == 0 || !model.cell(k).is_metered() {
                0.0
            } else {
                count(k) as f64 / steps as f64
            }
        })
        .collect();
    let pairs = steps * metered.len();
    let fraction = if pairs == 0 {
        0.0
    } else {
        metered.iter().map(|&k| count(k)).sum::<usize>() as f64 / pairs as f64
    };
    RestrictivenessReport {
        statuses,
        fraction,
        per_cell,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    /// The best-effort run never restricts a ramp, so it is optimal.
    Optimal,
    /// Only the bracket `TTS_LB ≤ TTS* ≤ TTS_BE` is known.
    Bounded,
}

impl Certificate {
    pub fn label(self) -> &'static str {
        match self {
            Certificate::Optimal => "optimal",
            Certificate::Bounded => "bounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsBounds {
    /// Total time spent of the relaxed best-effort run.
    pub tts_lb: f64,
    /// Total time spent of the best-effort run.
    pub tts_be: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub restrictive_fraction: f64,
    pub certificate: Certificate,
    pub twt_be: f64,
    pub tft: f64,
}

/// Runs truthful best-effort and relaxed best-effort metering and brackets the optimal TTS.
/// Only monotone models (no capacity drop) are supported.
pub fn tts_bounds(model: &FreewayModel, demand: &DemandProfile, initial: Option<&SimState>) -> Result<TtsBounds> {
    if !model.is_monotonic() {
        return Err(Error::Unsupported("TTS bounds require a model without capacity drop".into()));
    }
    let options = SimOptions {
        initial: initial.cloned(),
        disturbance: None,
    };
    let mut be = ControllerSpec::new(ControllerKind::BestEffort, model.clone());
    let be_run = simulate(model, demand, &mut be, &options)?;
    let mut relaxed = ControllerSpec::new(ControllerKind::RelaxedBestEffort, model.clone());
    let lb_run = simulate(model, demand, &mut relaxed, &options)?;
    let tts_be = total_time_spent(model, &be_run.states);
    let tts_lb = total_time_spent(model, &lb_run.states);
    let report = restrictiveness_report(model, &be_run);
    let metrics = evaluate_metrics(model, &be_run);
    let gap_abs = tts_be - tts_lb;
    Ok(TtsBounds {
        tts_lb,
        tts_be,
        gap_abs,
        gap_rel: if tts_be > 0.0 { gap_abs / tts_be } else { 0.0 },
        restrictive_fraction: report.fraction,
        certificate: if report.is_nonrestrictive() {
            Certificate::Optimal
        } else {
            Certificate::Bounded
        },
        twt_be: metrics.twt,
        tft: metrics.tft,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{triangular_fd_defaults, CellParams, CellSpec};
    use crate::simulator::ScheduledRates;
    use approx::assert_relative_eq;

    fn cell(l: f64, rc: f64, beta: f64) -> CellParams {
        triangular_fd_defaults(&CellSpec {
            length: l,
            free_speed: 100.0,
            critical_density: rc,
            jam_density: 200.0,
            split_ratio: beta,
            ramp_max_rate: 2000.0,
            ramp_queue_cap: 50.0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn initial_counts_follow_downstream_contents() {
        let m = FreewayModel::new(vec![cell(1.0, 50.0, 0.5), cell(1.0, 50.0, 0.0)], 0.005).unwrap();
        let s = SimState {
            density: vec![10.0, 5.0],
            queue: vec![0.0, 0.0],
        };
        let cs = CumulativeMap::new(&m).initial(&s);
        // l1ρ1 + l2ρ2/β̄1 = 10 + 5/0.5
        assert_relative_eq!(cs.phi[0], 20.0);
        assert_relative_eq!(cs.phi[1], 5.0);
        assert_eq!(cs.phi[2], 0.0);
        let rho = reconstruct_densities(&m, &cs).unwrap();
        assert_relative_eq!(rho[0], 10.0, max_relative = 1e-12);
        assert_relative_eq!(rho[1], 5.0, max_relative = 1e-12);
    }

    #[test]
    fn reconstruction_rejects_out_of_domain_counts() {
        let m = FreewayModel::new(vec![cell(1.0, 50.0, 0.0)], 0.005).unwrap();
        let cs = CumulativeState {
            phi: vec![-1.0, 0.0],
            admitted: vec![0.0],
            arrivals: vec![0.0],
            exited: 0.0,
        };
        assert!(matches!(reconstruct_densities(&m, &cs), Err(Error::Domain { .. })));
    }

    #[test]
    fn cumulative_step_matches_plant_step() {
        let m = FreewayModel::new(vec![cell(0.5, 40.0, 0.2), cell(0.7, 60.0, 0.0)], 1.0 / 360.0).unwrap();
        let demand = DemandProfile::new(vec![vec![3000.0, 400.0, 900.0]; 6]);
        let rates = vec![vec![300.0, 700.0]; 6];
        let initial = SimState {
            density: vec![30.0, 70.0],
            queue: vec![5.0, 10.0],
        };
        let run = simulate(
            &m,
            &demand,
            &mut ScheduledRates { rates: rates.clone() },
            &SimOptions {
                initial: Some(initial.clone()),
                disturbance: None,
            },
        )
        .unwrap();
        let map = CumulativeMap::new(&m);
        let mut cs = map.initial(&initial);
        for t in 0..6 {
            let input = CctmInput {
                admitted_next: cs.admitted.iter().zip(&rates[t]).map(|(r, x)| r + m.dt() * x).collect(),
                mainline_demand: 3000.0,
                ramp_demand: vec![400.0, 900.0],
            };
            cs = cctm_step(&m, &cs, &input).unwrap();
            let s = map.state(&cs).unwrap();
            for k in 0..2 {
                assert_relative_eq!(s.density[k], run.states[t + 1].density[k], epsilon = 1e-9);
                assert_relative_eq!(s.queue[k], run.states[t + 1].queue[k], epsilon = 1e-9);
            }
        }
        let all = to_cumulative(&m, &run);
        assert_relative_eq!(all[6].phi[0], cs.phi[0], epsilon = 1e-9);
        assert_relative_eq!(
            total_time_spent_cumulative(&m, &all),
            total_time_spent(&m, &run.states),
            max_relative = 1e-12
        );
    }

    #[test]
    fn cumulative_step_rejects_count_outside_bounds() {
        let m = FreewayModel::new(vec![cell(1.0, 50.0, 0.0)], 0.005).unwrap();
        let cs = CumulativeMap::new(&m).initial(&SimState::empty(1));
        let input = CctmInput {
            admitted_next: vec![-1.0],
            mainline_demand: 0.0,
            ramp_demand: vec![0.0],
        };
        assert!(matches!(cctm_step(&m, &cs, &input), Err(Error::Contract(_))));
    }

    #[test]
    fn probe_detects_negative_control() {
        let c = cell(1.0, 50.0, 0.0);
        let good = FreewayModel::new(vec![c, c], 0.005).unwrap();
        // Δt·v = 1.5 > l breaks the timestep condition and with it monotonicity
        let bad = FreewayModel::unvalidated(vec![c, c], 0.015);
        let phi = [60.0, 20.0, 0.0];
        let up = [60.0, 25.0, 0.0];
        let r = [0.0, 0.0];
        let ok = monotonicity_probe(&good, (&phi, &r), (&up, &r), 0.0).unwrap();
        assert!(ok.holds(1e-12), "{ok:?}");
        let ko = monotonicity_probe(&bad, (&phi, &r), (&up, &r), 0.0).unwrap();
        assert!(!ko.holds(1e-12));
        assert_eq!(ko.component, Some(1));
    }

    #[test]
    fn classification_flags_held_back_queue() {
        let m = FreewayModel::new(vec![cell(1.0, 50.0, 0.0), cell(1.0, 50.0, 0.0)], 0.005).unwrap();
        // cell 2 below critical with a waiting queue: its outflow equals demand < capacity
        let s = SimState {
            density: vec![50.0, 20.0],
            queue: vec![0.0, 10.0],
        };
        let flows = compute_flows(&m, &s, 5000.0);
        assert_eq!(classify_cell(&m, &s, &flows, 0), CellStatus::Nonrestrictive);
        assert_eq!(
            classify_cell(&m, &s, &flows, 1),
            CellStatus::Restrictive(RestrictiveReason::DemandLimitedOutflow)
        );
        // at critical density the outflow is at capacity
        let s = SimState {
            density: vec![50.0, 50.0],
            queue: vec![0.0, 10.0],
        };
        let flows = compute_flows(&m, &s, 5000.0);
        assert_eq!(classify_cell(&m, &s, &flows, 1), CellStatus::Nonrestrictive);
        // congested cell with free queue space: inflow is supply-limited below capacity
        let s = SimState {
            density: vec![50.0, 150.0],
            queue: vec![0.0, 10.0],
        };
        let flows = compute_flows(&m, &s, 5000.0);
        assert_eq!(
            classify_cell(&m, &s, &flows, 1),
            CellStatus::Restrictive(RestrictiveReason::SupplyLimitedInflow)
        );
    }

    #[test]
    fn bounds_refuse_capacity_drop() {
        let m = FreewayModel::new(vec![cell(1.0, 50.0, 0.0)], 0.005).unwrap().with_capacity_drop(0.1);
        let d = DemandProfile::zeros(3, 1);
        assert!(matches!(tts_bounds(&m, &d, None), Err(Error::Unsupported(_))));
    }

    #[test]
    fn empty_demand_gives_zero_bounds() {
        let m = FreewayModel::new(vec![cell(1.0, 50.0, 0.0)], 0.005).unwrap();
        let b = tts_bounds(&m, &DemandProfile::zeros(4, 1), None).unwrap();
        assert_eq!(b.tts_be, 0.0);
        assert_eq!(b.tts_lb, 0.0);
        assert_eq!(b.certificate, Certificate::Optimal);
    }
}
