//! Freeway geometry and the triangular (optionally capacity-drop) fundamental diagram.
//!
//! Units are fixed across the crate: kilometres, hours, cars, cars/km and cars/h.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when checking that a density lies in `[0, jam_density]`.
pub(crate) const DOMAIN_TOL: f64 = 1e-9;

/// Per-cell parameters. `capacity` is the explicit flow cap `F` on the flow leaving the cell
/// towards the next one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Cell length (km).
    pub length: f64,
    /// Free-flow speed (km/h).
    pub free_speed: f64,
    /// Congestion-wave speed (km/h).
    pub wave_speed: f64,
    /// Critical density (cars/km).
    pub critical_density: f64,
    /// Jam density (cars/km).
    pub jam_density: f64,
    /// Flow cap `F` (cars/h).
    pub capacity: f64,
    /// Offramp split ratio; the fraction of the cell outflow leaving the freeway.
    pub split_ratio: f64,
    /// Onramp flow cap (cars/h). Zero when the cell has no onramp.
    pub ramp_max_rate: f64,
    /// Onramp queue capacity (cars). Zero for cells without a metered onramp.
    pub ramp_queue_cap: f64,
    /// Fractional drop of the demand on the congested branch. Zero for a monotonic diagram.
    #[serde(default)]
    pub capacity_drop: f64,
}

/// Cell description where the wave speed and the flow cap may be left for the triangular
/// defaults to fill in.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub length: f64,
    pub free_speed: f64,
    pub critical_density: f64,
    pub jam_density: f64,
    #[serde(default)]
    pub wave_speed: Option<f64>,
    #[serde(default)]
    pub capacity: Option<f64>,
    #[serde(default)]
    pub split_ratio: f64,
    #[serde(default)]
    pub ramp_max_rate: f64,
    #[serde(default)]
    pub ramp_queue_cap: f64,
    #[serde(default)]
    pub capacity_drop: f64,
}

/// Resolves the triangular defaults: `w = v·ρc/(ρ̄ − ρc)` and `F = v·ρc` where unset.
pub fn triangular_fd_defaults(spec: &CellSpec) -> Result<CellParams> {
    if !(spec.jam_density > spec.critical_density) || !(spec.critical_density > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "need 0 < critical density ({}) < jam density ({})",
            spec.critical_density, spec.jam_density
        )));
    }
    if !(spec.free_speed > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "free-flow speed must be positive, got {}",
            spec.free_speed
        )));
    }
    let wave_speed = spec.wave_speed.unwrap_or(
        spec.free_speed * spec.critical_density / (spec.jam_density - spec.critical_density),
    );
    let capacity = spec
        .capacity
        .unwrap_or(spec.free_speed * spec.critical_density);
    let cell = CellParams {
        length: spec.length,
        free_speed: spec.free_speed,
        wave_speed,
        critical_density: spec.critical_density,
        jam_density: spec.jam_density,
        capacity,
        split_ratio: spec.split_ratio,
        ramp_max_rate: spec.ramp_max_rate,
        ramp_queue_cap: spec.ramp_queue_cap,
        capacity_drop: spec.capacity_drop,
    };
    if let Some(v) = cell_invariant_violations(0, &cell).into_iter().next() {
        return Err(Error::InvalidGeometry(v.message));
    }
    Ok(cell)
}

impl CellParams {
    /// `β̄ = 1 − β`, the fraction of the outflow that stays on the mainline.
    #[inline]
    pub fn through_ratio(&self) -> f64 {
        1.0 - self.split_ratio
    }

    pub fn has_onramp(&self) -> bool {
        self.ramp_max_rate > 0.0
    }

    /// A ramp can be metered only when it has queue space to hold cars back.
    pub fn is_metered(&self) -> bool {
        self.ramp_queue_cap > 0.0
    }

    fn check_domain(&self, rho: f64) -> Result<()> {
        let tol = DOMAIN_TOL * self.jam_density.max(1.0);
        if rho.is_nan() || rho < -tol || rho > self.jam_density + tol {
            return Err(Error::Domain {
                density: rho,
                jam_density: self.jam_density,
            });
        }
        Ok(())
    }

    /// Downstream demand `d(ρ)`, in cars/h continuing past the offramp.
    pub fn demand(&self, rho: f64) -> Result<f64> {
        self.check_domain(rho)?;
        Ok(self.demand_unchecked(rho))
    }

    /// Supply `s(ρ)` of free space offered to the upstream cell (cars/h).
    pub fn supply(&self, rho: f64) -> Result<f64> {
        self.check_domain(rho)?;
        Ok(self.supply_unchecked(rho))
    }

    pub(crate) fn demand_unchecked(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        let free = self.through_ratio() * self.free_speed;
        if rho <= self.critical_density {
            free * rho
        } else {
            (1.0 - self.capacity_drop) * free * self.critical_density
        }
    }

    pub(crate) fn supply_unchecked(&self, rho: f64) -> f64 {
        let rho = rho.min(self.jam_density);
        let w = self.wave_speed;
        (w * (self.jam_density - self.critical_density)).min(w * (self.jam_density - rho))
    }

    /// Peak of the demand function (reached at the critical density).
    pub fn demand_peak(&self) -> f64 {
        self.through_ratio() * self.free_speed * self.critical_density
    }

    /// Peak of the supply function (constant on `[0, ρc]`).
    pub fn supply_peak(&self) -> f64 {
        self.wave_speed * (self.jam_density - self.critical_density)
    }

    /// `c_d`, the Lipschitz constant of the piecewise-affine demand.
    pub fn demand_lipschitz(&self) -> f64 {
        self.through_ratio() * self.free_speed
    }

    /// `c_s`, the Lipschitz constant of the piecewise-affine supply.
    pub fn supply_lipschitz(&self) -> f64 {
        self.wave_speed
    }
}

/// Which inequality a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Geometry,
    DemandStep,
    SupplyStep,
    Timestep,
    EmptyModel,
}

/// One failed check reported by [`validate_model`]. `cell` is 1-based; `0` means model-wide.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub cell: usize,
    pub kind: ViolationKind,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.cell == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "cell {}: {}", self.cell, self.message)
        }
    }
}

fn cell_invariant_violations(k: usize, c: &CellParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |msg: String| {
        out.push(Violation {
            cell: k,
            kind: ViolationKind::Geometry,
            message: msg,
        })
    };
    if !(c.critical_density > 0.0 && c.critical_density < c.jam_density) {
        push(format!(
            "0 < ρc < ρ̄ violated (ρc = {}, ρ̄ = {})",
            c.critical_density, c.jam_density
        ));
    }
    if !(c.length > 0.0) {
        push(format!("length must be positive, got {}", c.length));
    }
    if !(c.free_speed > 0.0) {
        push(format!("free-flow speed must be positive, got {}", c.free_speed));
    }
    if !(c.wave_speed > 0.0) {
        push(format!("wave speed must be positive, got {}", c.wave_speed));
    }
    if !(c.capacity > 0.0) {
        push(format!("capacity must be positive, got {}", c.capacity));
    }
    if !(0.0..1.0).contains(&c.split_ratio) {
        push(format!("split ratio must lie in [0, 1), got {}", c.split_ratio));
    }
    if !(c.ramp_max_rate >= 0.0) {
        push(format!("ramp rate cap must be nonnegative, got {}", c.ramp_max_rate));
    }
    if !(c.ramp_queue_cap >= 0.0) {
        push(format!("ramp queue cap must be nonnegative, got {}", c.ramp_queue_cap));
    }
    if !(0.0..1.0).contains(&c.capacity_drop) {
        push(format!("capacity drop must lie in [0, 1), got {}", c.capacity_drop));
    }
    out
}

/// An ordered freeway stretch. Cells are stored 0-based; user-facing messages use 1-based
/// indices to match the usual cell numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreewayModel {
    cells: Vec<CellParams>,
    dt: f64,
}

impl FreewayModel {
    /// Builds a model and rejects it unless [`validate_model`] reports nothing.
    pub fn new(cells: Vec<CellParams>, dt: f64) -> Result<Self> {
        let model = Self::unvalidated(cells, dt);
        let violations = validate_model(&model);
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    /// Builds a model without checking it. Used for diagnostics and negative controls.
    pub fn unvalidated(cells: Vec<CellParams>, dt: f64) -> Self {
        Self { cells, dt }
    }

    pub fn from_specs(specs: &[CellSpec], dt: f64) -> Result<Self> {
        let cells = specs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                triangular_fd_defaults(s).map_err(|e| match e {
                    Error::InvalidGeometry(m) => Error::InvalidGeometry(format!("cell {}: {m}", k + 1)),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cells, dt)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn cells(&self) -> &[CellParams] {
        &self.cells
    }

    #[inline]
    pub fn cell(&self, k: usize) -> &CellParams {
        &self.cells[k]
    }

    /// True when every cell has a monotonic (drop-free) demand function.
    pub fn is_monotonic(&self) -> bool {
        self.cells.iter().all(|c| c.capacity_drop == 0.0)
    }

    /// 0-based indices of cells with a metered onramp.
    pub fn metered_cells(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.cells[k].is_metered()).collect()
    }

    /// Largest flow that can ever cross the downstream boundary of cell `k`:
    /// `min{d_k(ρc_k), F_k, s_{k+1}(ρc_{k+1})}` (no supply term for the last cell).
    pub fn effective_capacity(&self, k: usize) -> f64 {
        let c = &self.cells[k];
        let mut cap = c.demand_peak().min(c.capacity);
        if let Some(next) = self.cells.get(k + 1) {
            cap = cap.min(next.supply_peak());
        }
        cap
    }

    /// Returns a copy with every cell's capacity drop set to `alpha`.
    pub fn with_capacity_drop(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        for c in &mut m.cells {
            c.capacity_drop = alpha;
        }
        m
    }

    /// Returns a copy with the given timestep.
    pub fn with_dt(&self, dt: f64) -> Self {
        Self {
            cells: self.cells.clone(),
            dt,
        }
    }
}

/// Checks the geometry invariants of every cell and the timestep bounds
/// `dt·c_d ≤ l·β̄` and `dt·c_s ≤ l`. An empty result means the model is usable.
pub fn validate_model(model: &FreewayModel) -> Vec<Violation> {
    let mut out = Vec::new();
    if model.cells.is_empty() {
        out.push(Violation {
            cell: 0,
            kind: ViolationKind::EmptyModel,
            message: "model has no cells".into(),
        });
    }
    if !(model.dt > 0.0) {
        out.push(Violation {
            cell: 0,
            kind: ViolationKind::Timestep,
            message: format!("timestep must be positive, got {}", model.dt),
        });
    }
    for (i, c) in model.cells.iter().enumerate() {
        let k = i + 1;
        let geom = cell_invariant_violations(k, c);
        let geometry_ok = geom.is_empty();
        out.extend(geom);
        if !geometry_ok {
            continue;
        }
        let lhs = model.dt * c.demand_lipschitz();
        let rhs = c.length * c.through_ratio();
        if lhs > rhs * (1.0 + 1e-12) {
            out.push(Violation {
                cell: k,
                kind: ViolationKind::DemandStep,
                message: format!("Δt·c_d > l·β̄ ({lhs} > {rhs})"),
            });
        }
        let lhs = model.dt * c.supply_lipschitz();
        if lhs > c.length * (1.0 + 1e-12) {
            out.push(Violation {
                cell: k,
                kind: ViolationKind::SupplyStep,
                message: format!("Δt·c_s > l ({lhs} > {})", c.length),
            });
        }
    }
    out
}
