//! Scenario files, built-in fixtures, synthetic demand and the uncertainty campaign.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "demo"
//! dt_seconds = 10            # or dt_hours
//!
//! [cell_defaults]            # optional, merged into every [[cells]] entry
//! free_speed = 100.0
//! jam_density = 250.0
//!
//! [[cells]]
//! length = 1.0
//! critical_density = 50.0
//! ramp_max_rate = 1800.0     # onramp cap r̄ (0: no onramp)
//! ramp_queue_cap = 100.0     # queue cap q̄ (0: unmetered)
//!
//! [demand]                   # exactly one of: csv, rows, pulses, synthetic
//! horizon_minutes = 10
//! [[demand.pulses]]
//! entry = 0                  # 0 is the mainline, k the onramp of cell k
//! start_minute = 0
//! end_minute = 3
//! rate = 4000.0
//! ```
//!
//! Optional tables: `[initial]` (`density`, `queue`), `[disturbance]` (`sigma_phi`, `seed`)
//! and `[mismatch]` (`dv`, `drho`, `seed`). Cell keys are those of [`CellSpec`].

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{sample_controller_model, ControllerKind, ControllerSpec};
use crate::error::{Error, Result};
use crate::lp::{build_lp, solve_lp, LpStatus};
use crate::model::{CellSpec, FreewayModel};
use crate::simulator::{
    evaluate_metrics, simulate, DemandProfile, DisturbanceSpec, MeteringPolicy, SimOptions, SimState,
};

const EXAMPLE1: &str = include_str!("../scenarios/example1.toml");
const EXAMPLE2: &str = include_str!("../scenarios/example2.toml");
const GRENOBLE: &str = include_str!("../scenarios/grenoble.toml");

/// Names accepted after `builtin:`.
pub const BUILTINS: [&str; 3] = ["example1", "example2", "grenoble"];

/// Controller model uncertainty: relative half-widths of the free-speed and jam-density
/// draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchSpec {
    pub dv: f64,
    pub drho: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub description: String,
    pub model: FreewayModel,
    pub demand: DemandProfile,
    pub initial: Option<SimState>,
    pub disturbance: Option<DisturbanceSpec>,
    pub mismatch: Option<MismatchSpec>,
}

impl Scenario {
    pub fn initial_state(&self) -> SimState {
        self.initial.clone().unwrap_or_else(|| SimState::empty(self.model.len()))
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            initial: self.initial.clone(),
            disturbance: self.disturbance,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    dt_seconds: Option<f64>,
    dt_hours: Option<f64>,
    cell_defaults: Option<toml::Table>,
    cells: Vec<toml::Table>,
    initial: Option<InitialFile>,
    demand: DemandFile,
    disturbance: Option<DisturbanceSpec>,
    mismatch: Option<MismatchSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialFile {
    density: Vec<f64>,
    queue: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandFile {
    horizon_steps: Option<usize>,
    horizon_minutes: Option<f64>,
    csv: Option<String>,
    rows: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pulses: Vec<Pulse>,
    synthetic: Option<SynthSpec>,
}

/// Constant demand on `[start_minute, end_minute)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub entry: usize,
    pub start_minute: f64,
    pub end_minute: f64,
    pub rate: f64,
}

/// Rush-hour window in clock hours: linear rise, plateau, linear fall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakWindow {
    pub start: f64,
    pub ramp_up: f64,
    pub plateau: f64,
    pub ramp_down: f64,
}

impl PeakWindow {
    /// Peak weight in `[0, 1]` at clock hour `h`.
    pub fn weight(&self, h: f64) -> f64 {
        let x = h - self.start;
        if x <= 0.0 {
            0.0
        } else if x < self.ramp_up {
            x / self.ramp_up
        } else if x <= self.ramp_up + self.plateau {
            1.0
        } else if x < self.ramp_up + self.plateau + self.ramp_down {
            1.0 - (x - self.ramp_up - self.plateau) / self.ramp_down
        } else {
            0.0
        }
    }
}

/// Off-peak and peak demand of one onramp (1-based cell).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampDemand {
    pub cell: usize,
    pub base: f64,
    pub peak: f64,
}

/// Synthetic daily demand: every entry follows `base + (peak − base)·max_window weight`,
/// multiplied by `1 + jitter·e_t` where `e` is a unit-variance AR(1) series with
/// coefficient `smoothness`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Clock hour of step 0.
    pub start_hour: f64,
    pub horizon_hours: f64,
    pub mainline_base: f64,
    pub mainline_peak: f64,
    #[serde(default)]
    pub ramps: Vec<RampDemand>,
    #[serde(default)]
    pub windows: Vec<PeakWindow>,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub smoothness: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Generates the profile described by `spec` for `model`. Peaks above a ramp's `r̄` are
/// rejected; the jittered values are kept inside `[0, r̄]`.
pub fn synth_demand(model: &FreewayModel, spec: &SynthSpec) -> Result<DemandProfile> {
    let n = model.len();
    if !(spec.horizon_hours > 0.0) {
        return Err(Error::Scenario("synthetic horizon must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.smoothness) || !(spec.jitter >= 0.0) {
        return Err(Error::Scenario("need 0 ≤ smoothness < 1 and jitter ≥ 0".into()));
    }
    if spec.mainline_base < 0.0 || spec.mainline_peak < 0.0 {
        return Err(Error::Scenario("mainline demand must be nonnegative".into()));
    }
    let mut entries: Vec<(usize, f64, f64)> = vec![(0, spec.mainline_base, spec.mainline_peak)];
    for r in &spec.ramps {
        if r.cell == 0 || r.cell > n {
            return Err(Error::Scenario(format!("synthetic ramp at cell {} outside 1..={n}", r.cell)));
        }
        let cap = model.cell(r.cell - 1).ramp_max_rate;
        if r.base < 0.0 || r.peak < 0.0 || r.base.max(r.peak) > cap {
            return Err(Error::Scenario(format!(
                "synthetic ramp {} demand (base {}, peak {}) outside [0, r̄ = {cap}]",
                r.cell, r.base, r.peak
            )));
        }
        entries.push((r.cell, r.base, r.peak));
    }
    let dt = model.dt();
    let steps = (spec.horizon_hours / dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innovation = (1.0 - spec.smoothness * spec.smoothness).sqrt();
    let mut noise = vec![0.0f64; entries.len()];
    let mut rows = vec![vec![0.0; n + 1]; steps];
    for (t, row) in rows.iter_mut().enumerate() {
        let h = spec.start_hour + t as f64 * dt;
        let weight = spec.windows.iter().map(|w| w.weight(h)).fold(0.0, f64::max);
        for (i, &(entry, base, peak)) in entries.iter().enumerate() {
            let xi: f64 = rng.random_range(-1.0..1.0) * 3f64.sqrt();
            noise[i] = spec.smoothness * noise[i] + innovation * xi;
            let mut value = (base + (peak - base) * weight) * (1.0 + spec.jitter * noise[i]).max(0.0);
            if entry > 0 {
                value = value.min(model.cell(entry - 1).ramp_max_rate);
            }
            row[entry] = value;
        }
    }
    Ok(DemandProfile::new(rows))
}

/// Loads `builtin:NAME` or a scenario file.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let text = builtin_source(name)?;
        return parse_scenario(text, None);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Scenario(format!("cannot read scenario `{}`: {e}", path.display())))?;
    parse_scenario(&text, path.parent())
}

/// TOML source of a built-in scenario.
pub fn builtin_source(name: &str) -> Result<&'static str> {
    match name {
        "example1" => Ok(EXAMPLE1),
        "example2" => Ok(EXAMPLE2),
        "grenoble" => Ok(GRENOBLE),
        other => Err(Error::Scenario(format!(
            "unknown built-in scenario `{other}` (known: {})",
            BUILTINS.join(", ")
        ))),
    }
}

/// Parses a scenario document. Relative CSV paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
    let dt = match (file.dt_seconds, file.dt_hours) {
        (Some(s), None) => s / 3600.0,
        (None, Some(h)) => h,
        _ => return Err(Error::Scenario("give exactly one of `dt_seconds`, `dt_hours`".into())),
    };
    let mut specs = Vec::with_capacity(file.cells.len());
    for (i, cell) in file.cells.iter().enumerate() {
        let mut merged = file.cell_defaults.clone().unwrap_or_default();
        for (k, v) in cell {
            merged.insert(k.clone(), v.clone());
        }
        let spec: CellSpec = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Scenario(format!("cells[{i}]: {}", e.message())))?;
        specs.push(spec);
    }
    let model = FreewayModel::from_specs(&specs, dt).map_err(|e| Error::Scenario(e.to_string()))?;
    let n = model.len();
    let demand = load_demand(&model, &file.demand, base_dir)?;
    demand.validate(&model)?;
    let initial = match file.initial {
        None => None,
        Some(init) => {
            let queue = init.queue.unwrap_or_else(|| vec![0.0; n]);
            let state = SimState {
                density: init.density,
                queue,
            };
            state.check_box(&model).map_err(|e| Error::Scenario(format!("initial: {e}")))?;
            Some(state)
        }
    };
    Ok(Scenario {
        label: file.name,
        description: file.description,
        model,
        demand,
        initial,
        disturbance: file.disturbance,
        mismatch: file.mismatch,
    })
}

fn load_demand(model: &FreewayModel, d: &DemandFile, base_dir: Option<&Path>) -> Result<DemandProfile> {
    let n = model.len();
    let dt = model.dt();
    let sources = [d.csv.is_some(), d.rows.is_some(), !d.pulses.is_empty(), d.synthetic.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(Error::Scenario(
            "demand: give exactly one of `csv`, `rows`, `pulses`, `synthetic`".into(),
        ));
    }
    let horizon = match (d.horizon_steps, d.horizon_minutes) {
        (Some(_), Some(_)) => {
            return Err(Error::Scenario("demand: give at most one of `horizon_steps`, `horizon_minutes`".into()))
        }
        (Some(s), None) => Some(s),
        (None, Some(m)) => Some((m / 60.0 / dt).round() as usize),
        (None, None) => None,
    };
    let profile = if let Some(csv) = &d.csv {
        let path: PathBuf = base_dir.map(|b| b.join(csv)).unwrap_or_else(|| PathBuf::from(csv));
        crate::report::read_demand_csv(&path, n)?
    } else if let Some(rows) = &d.rows {
        DemandProfile::new(rows.clone())
    } else if let Some(s) = &d.synthetic {
        synth_demand(model, s)?
    } else {
        let horizon =
            horizon.ok_or_else(|| Error::Scenario("demand.pulses needs `horizon_steps` or `horizon_minutes`".into()))?;
        let mut rows = vec![vec![0.0; n + 1]; horizon];
        for (i, p) in d.pulses.iter().enumerate() {
            if p.entry > n {
                return Err(Error::Scenario(format!("demand.pulses[{i}]: entry {} outside 0..={n}", p.entry)));
            }
            for (t, row) in rows.iter_mut().enumerate() {
                // step t covers [t·Δt, (t+1)·Δt); it belongs to the window when it starts inside
                let minute = t as f64 * dt * 60.0;
                if minute >= p.start_minute - 1e-9 && minute < p.end_minute - 1e-9 {
                    row[p.entry] += p.rate;
                }
            }
        }
        return Ok(DemandProfile::new(rows));
    };
    if let Some(h) = horizon {
        if h != profile.horizon() {
            return Err(Error::Horizon(format!(
                "demand has {} steps but the scenario declares {h}",
                profile.horizon()
            )));
        }
    }
    Ok(profile)
}

/// Simulation variant of the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub capacity_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// `(Δv, Δρ̄)` pairs as relative half-widths.
    pub mismatches: Vec<(f64, f64)>,
    pub sigmas: Vec<f64>,
    pub variants: Vec<Variant>,
    pub runs: usize,
    pub seed: u64,
    pub include_alinea: bool,
    /// Adds the optimal row for the monotone noiseless variant.
    pub include_lp: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            mismatches: vec![(0.0, 0.0), (0.025, 0.05), (0.05, 0.10), (0.10, 0.20)],
            sigmas: vec![0.0, 0.05],
            variants: vec![
                Variant {
                    name: "monotonic".into(),
                    capacity_drop: 0.0,
                },
                Variant {
                    name: "capacity-drop".into(),
                    capacity_drop: 0.1,
                },
            ],
            runs: 20,
            seed: 1,
            include_alinea: true,
            include_lp: true,
        }
    }
}

/// One row of the campaign table; improvements are fractions of the open-loop TWT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub variant: String,
    pub sigma: f64,
    pub dv: f64,
    pub drho: f64,
    pub controller: String,
    pub mean_twt_improvement: f64,
    pub stdev: f64,
    pub runs: usize,
}

/// Seed of run `i` of a campaign.
pub fn run_seed(base: u64, i: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

fn twt_of(
    plant: &FreewayModel,
    scenario: &Scenario,
    policy: &mut dyn MeteringPolicy,
    disturbance: Option<DisturbanceSpec>,
) -> Result<f64> {
    let options = SimOptions {
        initial: scenario.initial.clone(),
        disturbance,
    };
    let run = simulate(plant, &scenario.demand, policy, &options)?;
    Ok(evaluate_metrics(plant, &run).twt)
}

fn improvement(open: f64, ctrl: f64) -> f64 {
    if open.abs() <= 1e-12 {
        0.0
    } else {
        (open - ctrl) / open
    }
}

fn mean_stdev(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean TWT improvement of best-effort (with a sampled controller model) and ALINEA over
/// open loop, for every variant, noise level and model mismatch. Each run pairs the
/// controlled and open-loop simulations on the same noise seed. Runs execute on the
/// current rayon pool and are reduced in seed order.
pub fn uncertainty_campaign(scenario: &Scenario, config: &CampaignConfig) -> Result<Vec<CampaignRow>> {
    use rayon::prelude::*;
    if config.runs == 0 {
        return Err(Error::Contract("campaign needs at least one run".into()));
    }
    let nominal = scenario.model.with_capacity_drop(0.0);
    let mut rows = Vec::new();
    for variant in &config.variants {
        let plant = scenario.model.with_capacity_drop(variant.capacity_drop);
        for &sigma in &config.sigmas {
            let disturbance = |i: usize| {
                (sigma > 0.0).then(|| DisturbanceSpec {
                    sigma_phi: sigma,
                    seed: run_seed(config.seed, i),
                })
            };
            // deterministic runs need not be repeated
            let runs = if sigma > 0.0 { config.runs } else { 1 };
            let open: Vec<f64> = (0..runs)
                .into_par_iter()
                .map(|i| {
                    let mut ol = ControllerSpec::new(ControllerKind::None, nominal.clone());
                    twt_of(&plant, scenario, &mut ol, disturbance(i))
                })
                .collect::<Result<_>>()?;
            for &(dv, drho) in &config.mismatches {
                let sampled = dv > 0.0 || drho > 0.0;
                let be_runs = if sampled { config.runs } else { runs };
                let imps: Vec<f64> = (0..be_runs)
                    .into_par_iter()
                    .map(|i| {
                        let internal = sample_controller_model(&nominal, dv, drho, run_seed(config.seed ^ 0x5eed, i))?;
                        let mut be = ControllerSpec::new(ControllerKind::BestEffort, internal);
                        let i_noise = i % runs;
                        let twt = twt_of(&plant, scenario, &mut be, disturbance(i_noise))?;
                        Ok(improvement(open[i_noise], twt))
                    })
                    .collect::<Result<_>>()?;
                let (mean, stdev) = mean_stdev(&imps);
                rows.push(CampaignRow {
                    variant: variant.name.clone(),
                    sigma,
                    dv,
                    drho,
                    controller: "be".into(),
                    mean_twt_improvement: mean,
                    stdev,
                    runs: imps.len(),
                });
            }
            if config.include_alinea {
                let imps: Vec<f64> = (0..runs)
                    .into_par_iter()
                    .map(|i| {
                        let mut al = ControllerSpec::new(ControllerKind::Alinea, nominal.clone());
                        let twt = twt_of(&plant, scenario, &mut al, disturbance(i))?;
                        Ok(improvement(open[i], twt))
                    })
                    .collect::<Result<_>>()?;
                let (mean, stdev) = mean_stdev(&imps);
                rows.push(CampaignRow {
                    variant: variant.name.clone(),
                    sigma,
                    dv: 0.0,
                    drho: 0.0,
                    controller: "alinea".into(),
                    mean_twt_improvement: mean,
                    stdev,
                    runs: imps.len(),
                });
            }
            if config.include_lp && variant.capacity_drop == 0.0 && sigma == 0.0 {
                let inst = build_lp(&plant, &scenario.demand, scenario.initial.as_ref())?;
                let sol = solve_lp(&inst)?;
                if sol.status == LpStatus::Optimal {
                    let tft = crate::simulator::total_free_flow_time(&plant, &scenario.demand);
                    rows.push(CampaignRow {
                        variant: variant.name.clone(),
                        sigma,
                        dv: 0.0,
                        drho: 0.0,
                        controller: "optimal".into(),
                        mean_twt_improvement: improvement(open[0], sol.objective - tft),
                        stdev: 0.0,
                        runs: 1,
                    });
                }
            }
        }
    }
    Ok(rows)
}
