//! The min-TTS benchmark as a linear program.
//!
//! The CTM flow equalities `φ_k = min{d_k, F_k, s_{k+1}}` are relaxed to inequalities, which
//! leaves a linear program over densities, queues, flows and rates. For monotone models the
//! relaxation is exact: [`certify_relaxation`] replays the optimal rates through the plant
//! and compares.

mod brute;
mod ipm;
mod program;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use brute::{brute_force_min_tts, brute_force_reachable_counts, BruteForceResult};
pub use ipm::{IpmOptions, IpmStatus};
pub use program::{LinearProgram, Row};

use crate::error::{Error, Result};
use crate::model::FreewayModel;
use crate::simulator::{
    simulate, total_time_spent, DemandProfile, ScheduledRates, SimOptions, SimState,
};

/// Index of every variable of the benchmark program.
///
/// Densities and queues exist for `t = 1..T` (the initial state is a constant), flows
/// `φ_0..φ_n` and rates for `t = 0..T−1`: `T·(4n + 1)` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpLayout {
    pub cells: usize,
    pub horizon: usize,
}

impl LpLayout {
    fn block(&self) -> usize {
        4 * self.cells + 1
    }

    /// Density of 0-based cell `k` at step `t ≥ 1`.
    pub fn density(&self, k: usize, t: usize) -> usize {
        (t - 1) * self.block() + k
    }

    pub fn queue(&self, k: usize, t: usize) -> usize {
        (t - 1) * self.block() + self.cells + k
    }

    /// Flow `φ_k(t)` for `k = 0..n`.
    pub fn flow(&self, k: usize, t: usize) -> usize {
        t * self.block() + 2 * self.cells + k
    }

    pub fn rate(&self, k: usize, t: usize) -> usize {
        t * self.block() + 3 * self.cells + 1 + k
    }

    pub fn num_vars(&self) -> usize {
        self.horizon * self.block()
    }
}

/// The benchmark program together with what it was built from.
#[derive(Debug, Clone)]
pub struct LpInstance {
    pub program: LinearProgram,
    pub layout: LpLayout,
    pub initial: SimState,
}

enum Term {
    Var(usize),
    Const(f64),
}

/// Builds `min Δt Σ_{t=0}^{T} Σ_k (l_k ρ_k(t) + q_k(t))` subject to the relaxed CTM.
///
/// Rows are emitted step by step so that every row only shares variables with rows of the
/// neighbouring steps.
pub fn build_lp(model: &FreewayModel, demand: &DemandProfile, initial: Option<&SimState>) -> Result<LpInstance> {
    if !model.is_monotonic() {
        return Err(Error::Unsupported(
            "the LP benchmark needs monotone demand functions (no capacity drop)".into(),
        ));
    }
    demand.validate(model)?;
    let n = model.len();
    let horizon = demand.horizon();
    let dt = model.dt();
    let initial = initial.cloned().unwrap_or_else(|| SimState::empty(n));
    initial.check_box(model)?;
    let layout = LpLayout { cells: n, horizon };
    let mut lp = LinearProgram::default();
    let cells = model.cells();

    for t in 0..horizon {
        for (k, c) in cells.iter().enumerate() {
            lp.add_var(format!("rho_{}_{}", k + 1, t + 1), dt * c.length, 0.0, c.jam_density);
        }
        for (k, c) in cells.iter().enumerate() {
            lp.add_var(format!("q_{}_{}", k + 1, t + 1), dt, 0.0, c.ramp_queue_cap);
        }
        let w0 = demand.mainline(t);
        lp.add_var(format!("phi_0_{t}"), 0.0, w0, w0);
        for k in 0..n {
            lp.add_var(format!("phi_{}_{t}", k + 1), 0.0, 0.0, model.effective_capacity(k));
        }
        for (k, c) in cells.iter().enumerate() {
            lp.add_var(format!("r_{}_{t}", k + 1), 0.0, 0.0, c.ramp_max_rate);
        }
    }
    debug_assert_eq!(lp.num_vars(), layout.num_vars());

    lp.offset = dt * initial.vehicles(model);

    let rho = |k: usize, t: usize| {
        if t == 0 {
            Term::Const(initial.density[k])
        } else {
            Term::Var(layout.density(k, t))
        }
    };
    let queue = |k: usize, t: usize| {
        if t == 0 {
            Term::Const(initial.queue[k])
        } else {
            Term::Var(layout.queue(k, t))
        }
    };
    for t in 0..horizon {
        let row = demand.row(t);
        for (k, c) in cells.iter().enumerate() {
            let a = dt / c.length;
            // ρ(t+1) − ρ(t) − (Δt/l)(φ_{k−1} + r − φ_k/β̄) = 0
            let mut coefs = vec![
                (layout.density(k, t + 1), 1.0),
                (layout.flow(k, t), -a),
                (layout.rate(k, t), -a),
                (layout.flow(k + 1, t), a / c.through_ratio()),
            ];
            let rhs = push_term(&mut coefs, rho(k, t), -1.0);
            lp.add_row(format!("dyn_rho_{}_{t}", k + 1), coefs, rhs, rhs);

            // q(t+1) − q(t) + Δt·r = Δt·w
            let mut coefs = vec![(layout.queue(k, t + 1), 1.0), (layout.rate(k, t), dt)];
            let rhs = dt * row[k + 1] + push_term(&mut coefs, queue(k, t), -1.0);
            lp.add_row(format!("dyn_q_{}_{t}", k + 1), coefs, rhs, rhs);

            // φ_k ≤ β̄ v ρ_k
            let mut coefs = vec![(layout.flow(k + 1, t), 1.0)];
            let rhs = push_term(&mut coefs, rho(k, t), -c.demand_lipschitz());
            lp.add_row(format!("dem_{}_{t}", k + 1), coefs, f64::NEG_INFINITY, rhs);

            // φ_k ≤ w_{k+1}(ρ̄_{k+1} − ρ_{k+1})
            if let Some(next) = cells.get(k + 1) {
                let mut coefs = vec![(layout.flow(k + 1, t), 1.0)];
                let rhs = next.wave_speed * next.jam_density + push_term(&mut coefs, rho(k + 1, t), next.wave_speed);
                lp.add_row(format!("sup_{}_{t}", k + 1), coefs, f64::NEG_INFINITY, rhs);
            }
        }
    }
    Ok(LpInstance {
        program: lp,
        layout,
        initial,
    })
}

// Adds `coef·term` to the left-hand side; returns the amount to move to the right-hand side.
fn push_term(coefs: &mut Vec<(usize, f64)>, term: Term, coef: f64) -> f64 {
    match term {
        Term::Var(j) => {
            coefs.push((j, coef));
            0.0
        }
        Term::Const(v) => -coef * v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Optimal plan of the benchmark program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Total time spent including the initial-state term (car·h).
    pub objective: f64,
    /// Largest constraint or bound violation of the returned point.
    pub residual: f64,
    pub iterations: usize,
    /// `densities[t][k]` for `t = 0..=T`.
    pub densities: Vec<Vec<f64>>,
    pub queues: Vec<Vec<f64>>,
    /// `flows[t]` holds `φ_0..φ_n` for `t = 0..T−1`.
    pub flows: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
}

pub fn solve_lp(instance: &LpInstance) -> Result<LpSolution> {
    solve_lp_with(instance, &IpmOptions::default())
}

pub fn solve_lp_with(instance: &LpInstance, opts: &IpmOptions) -> Result<LpSolution> {
    let res = ipm::solve(&instance.program, opts)?;
    let layout = &instance.layout;
    let (n, horizon) = (layout.cells, layout.horizon);
    let x = &res.x;
    let mut densities = vec![instance.initial.density.clone()];
    let mut queues = vec![instance.initial.queue.clone()];
    for t in 1..=horizon {
        densities.push((0..n).map(|k| x[layout.density(k, t)]).collect());
        queues.push((0..n).map(|k| x[layout.queue(k, t)]).collect());
    }
    let flows = (0..horizon).map(|t| (0..=n).map(|k| x[layout.flow(k, t)]).collect()).collect();
    let rates = (0..horizon).map(|t| (0..n).map(|k| x[layout.rate(k, t)]).collect()).collect();
    let status = match res.status {
        IpmStatus::Optimal => LpStatus::Optimal,
        IpmStatus::Infeasible => LpStatus::Infeasible,
        IpmStatus::Unbounded => LpStatus::Unbounded,
    };
    Ok(LpSolution {
        status,
        objective: instance.program.objective(x),
        residual: instance.program.max_violation(x),
        iterations: res.iterations,
        densities,
        queues,
        flows,
        rates,
    })
}

/// A boundary where the plan sends less than the CTM would.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldingBack {
    pub t: usize,
    /// 1-based cell whose downstream boundary is concerned.
    pub cell: usize,
    pub planned: f64,
    pub ctm: f64,
}

/// Outcome of replaying the optimal rates through the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub tts_lp: f64,
    pub tts_sim: f64,
    pub rel_diff: f64,
    /// The replay reproduces the LP objective to `10⁻⁶` relative.
    pub exact: bool,
    pub holding_back: Vec<HoldingBack>,
}

pub fn certify_relaxation(
    model: &FreewayModel,
    demand: &DemandProfile,
    initial: Option<&SimState>,
    solution: &LpSolution,
) -> Result<Certification> {
    if solution.status != LpStatus::Optimal {
        return Err(Error::Solver("only an optimal plan can be certified".into()));
    }
    let options = SimOptions {
        initial: initial.cloned(),
        disturbance: None,
    };
    let mut plan = ScheduledRates {
        rates: solution.rates.clone(),
    };
    let run = simulate(model, demand, &mut plan, &options)?;
    let tts_sim = total_time_spent(model, &run.states);
    let rel_diff = (tts_sim - solution.objective).abs() / solution.objective.abs().max(1e-12);

    let mut holding_back = Vec::new();
    let n = model.len();
    for t in 0..solution.flows.len() {
        let state = SimState {
            density: solution.densities[t].iter().map(|r| r.max(0.0)).collect(),
            queue: solution.queues[t].clone(),
        };
        let ctm = crate::simulator::compute_flows(model, &state, demand.mainline(t));
        for k in 1..=n {
            let planned = solution.flows[t][k];
            if planned < ctm[k] - 1e-6 * model.effective_capacity(k - 1).max(1.0) {
                holding_back.push(HoldingBack {
                    t,
                    cell: k,
                    planned,
                    ctm: ctm[k],
                });
            }
        }
    }
    Ok(Certification {
        tts_lp: solution.objective,
        tts_sim,
        rel_diff,
        exact: rel_diff <= 1e-6,
        holding_back,
    })
}

/// Writes the program in CPLEX LP format.
pub fn export_lp<W: Write>(instance: &LpInstance, out: W) -> Result<()> {
    instance.program.write_lp_format(out)
}

/// Solution summary in JSON with the rate plan (numbers rounded to 9 significant digits).
pub fn solution_json(solution: &LpSolution) -> serde_json::Value {
    let v = serde_json::json!({
        "status": solution.status,
        "objective": solution.objective,
        "residual": solution.residual,
        "iterations": solution.iterations,
        "rates": solution.rates,
        "densities": solution.densities,
        "queues": solution.queues,
    });
    crate::report::round_json(v)
}
