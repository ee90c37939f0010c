//! Report values, CSV and JSON writers, and the number formatting shared by every file
//! output: UTF-8, LF line endings and `%.9g` numbers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cumulative::{CellStatus, Certificate, RestrictiveReason, RestrictivenessReport, TtsBounds};
use crate::error::{Error, Result};
use crate::model::FreewayModel;
use crate::simulator::{DemandProfile, Metrics, Trajectory};

/// Seeds a run depended on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub noise: Option<u64>,
    pub mismatch: Option<u64>,
}

/// Summary of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub controller: String,
    pub horizon: usize,
    pub tts: f64,
    pub twt: f64,
    pub tft: f64,
    /// Bracket of the optimal TTS; absent for models with capacity drop.
    pub tts_lb: Option<f64>,
    pub tts_be: Option<f64>,
    pub gap_abs: Option<f64>,
    pub gap_rel: Option<f64>,
    pub certificate: Option<Certificate>,
    /// Restrictive fraction of this run's metered (cell, step) pairs.
    pub restrictive_fraction: f64,
    pub seeds: Seeds,
    pub lp_optimum: Option<f64>,
    /// This run's TTS equals the LP optimum to `10⁻⁶` relative.
    pub matches_lp_optimum: Option<bool>,
}

impl RunReport {
    pub fn new(scenario: &str, controller: &str, metrics: &Metrics, restrictiveness: &RestrictivenessReport) -> Self {
        Self {
            scenario: scenario.to_string(),
            controller: controller.to_string(),
            horizon: 0,
            tts: metrics.tts,
            twt: metrics.twt,
            tft: metrics.tft,
            tts_lb: None,
            tts_be: None,
            gap_abs: None,
            gap_rel: None,
            certificate: None,
            restrictive_fraction: restrictiveness.fraction,
            seeds: Seeds::default(),
            lp_optimum: None,
            matches_lp_optimum: None,
        }
    }

    pub fn with_bounds(mut self, b: &TtsBounds) -> Self {
        self.tts_lb = Some(b.tts_lb);
        self.tts_be = Some(b.tts_be);
        self.gap_abs = Some(b.gap_abs.max(0.0));
        self.gap_rel = Some(b.gap_rel.max(0.0));
        self.certificate = Some(b.certificate);
        self
    }

    pub fn with_lp_optimum(mut self, objective: f64) -> Self {
        self.lp_optimum = Some(objective);
        self.matches_lp_optimum = Some((self.tts - objective).abs() <= 1e-6 * objective.abs().max(1e-12));
        self
    }

    pub fn to_json(&self) -> Result<String> {
        json_string(self)
    }
}

/// Serializes with numbers rounded to 9 significant digits, pretty-printed, LF-terminated.
pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = round_json(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Bounds report: `{tts_lb, tts_be, certificate, gap_abs, gap_rel}` plus the restrictive
/// fraction.
pub fn bounds_json(b: &TtsBounds) -> Result<String> {
    json_string(&serde_json::json!({
        "tts_lb": b.tts_lb,
        "tts_be": b.tts_be,
        "certificate": b.certificate,
        "gap_abs": b.gap_abs,
        "gap_rel": b.gap_rel,
        "restrictive_fraction": b.restrictive_fraction,
    }))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g9).unwrap_or_default()
}

/// Long-format trajectory: `t,cell,rho,q,phi,r` with 1-based cells and `t = 0..=T`; `phi`
/// is the flow leaving the cell downstream; `phi` and `r` are empty at `t = T`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    writeln!(out, "t,cell,rho,q,phi,r")?;
    let horizon = traj.horizon();
    for (t, s) in traj.states.iter().enumerate() {
        for k in 0..s.density.len() {
            let (phi, r) = if t < horizon {
                (Some(traj.flows[t][k + 1]), Some(traj.rates[t][k]))
            } else {
                (None, None)
            };
            writeln!(
                out,
                "{t},{},{},{},{},{}",
                k + 1,
                fmt_g9(s.density[k]),
                fmt_g9(s.queue[k]),
                opt(phi),
                opt(r)
            )?;
        }
    }
    Ok(())
}

/// Densities read back from a trajectory CSV, `rho[t][k]` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub rho: Vec<Vec<f64>>,
}

impl DensityTable {
    /// Number of steps `T`.
    pub fn horizon(&self) -> usize {
        self.rho.len().saturating_sub(1)
    }

    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            rho: traj.states.iter().map(|s| s.density.clone()).collect(),
        }
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<DensityTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Scenario(format!("{}: missing column `{name}`", path.display())))
    };
    let (ct, cc, cr) = (col("t")?, col("cell")?, col("rho")?);
    let mut rho: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Scenario(format!("{} line {}: {e}", path.display(), line + 2)))
        };
        let t = parse(ct)? as usize;
        let cell = parse(cc)? as usize;
        if cell == 0 {
            return Err(Error::Scenario(format!("{} line {}: cells are 1-based", path.display(), line + 2)));
        }
        if rho.len() <= t {
            rho.resize(t + 1, Vec::new());
        }
        if rho[t].len() < cell {
            rho[t].resize(cell, f64::NAN);
        }
        rho[t][cell - 1] = parse(cr)?;
    }
    Ok(DensityTable { rho })
}

/// Demand CSV with header `t,w0,w1,...,wn`, one row per step.
pub fn read_demand_csv(path: &Path, cells: usize) -> Result<DemandProfile> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Scenario(format!("cannot read demand `{}`: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((0..=cells).map(|k| format!("w{k}")))
        .collect();
    if headers.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::Scenario(format!(
            "{}: header must be `{}`",
            path.display(),
            expected.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Scenario(format!("{} line {}: {e}", path.display(), line + 2)))?;
        if values[0] as usize != rows.len() {
            return Err(Error::Scenario(format!(
                "{} line {}: expected t = {}",
                path.display(),
                line + 2,
                rows.len()
            )));
        }
        rows.push(values[1..].to_vec());
    }
    Ok(DemandProfile::new(rows))
}

pub fn write_demand_csv<W: Write>(demand: &DemandProfile, mut out: W) -> Result<()> {
    let n = demand.rows().first().map(|r| r.len()).unwrap_or(1);
    let header: Vec<String> = std::iter::once("t".to_string()).chain((0..n).map(|k| format!("w{k}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for (t, row) in demand.rows().iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| fmt_g9(*v)).collect();
        writeln!(out, "{t},{}", vals.join(","))?;
    }
    Ok(())
}

/// Density heatmap `t,cell,rho` for `t = 0..T−1`: `T·n` rows.
pub fn write_heatmap_csv<W: Write>(table: &DensityTable, mut out: W) -> Result<()> {
    writeln!(out, "t,cell,rho")?;
    for (t, row) in table.rho.iter().take(table.horizon()).enumerate() {
        for (k, r) in row.iter().enumerate() {
            writeln!(out, "{t},{},{}", k + 1, fmt_g9(*r))?;
        }
    }
    Ok(())
}

/// Restrictiveness CSV `t,cell,status,reason` over metered cells.
pub fn write_restrictiveness_csv<W: Write>(model: &FreewayModel, report: &RestrictivenessReport, mut out: W) -> Result<()> {
    writeln!(out, "t,cell,status,reason")?;
    for (t, row) in report.statuses.iter().enumerate() {
        for k in model.metered_cells() {
            let (status, reason) = match row[k] {
                CellStatus::Unmetered => ("unmetered", ""),
                CellStatus::Nonrestrictive => ("nonrestrictive", ""),
                CellStatus::Restrictive(RestrictiveReason::SupplyLimitedInflow) => {
                    ("restrictive", "supply-limited-inflow")
                }
                CellStatus::Restrictive(RestrictiveReason::DemandLimitedOutflow) => {
                    ("restrictive", "demand-limited-outflow")
                }
            };
            writeln!(out, "{t},{},{status},{reason}", k + 1)?;
        }
    }
    Ok(())
}

/// One bar of the savings chart, relative to the open-loop run of the same scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub scenario: String,
    pub controller: String,
    pub tts: f64,
    pub twt: f64,
    /// `(TTS_OL − TTS)/TTS_OL`; `None` when the open-loop value is zero.
    pub tts_savings: Option<f64>,
    pub twt_savings: Option<f64>,
}

impl SavingsRow {
    pub fn new(scenario: &str, controller: &str, tts: f64, twt: f64, tts_ol: f64, twt_ol: f64) -> Self {
        let rel = |ol: f64, x: f64| (ol.abs() > 1e-12).then(|| (ol - x) / ol);
        Self {
            scenario: scenario.into(),
            controller: controller.into(),
            tts,
            twt,
            tts_savings: rel(tts_ol, tts),
            twt_savings: rel(twt_ol, twt),
        }
    }
}

pub fn write_savings_csv<W: Write>(rows: &[SavingsRow], mut out: W) -> Result<()> {
    writeln!(out, "scenario,controller,tts,twt,tts_savings,twt_savings")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.scenario,
            r.controller,
            fmt_g9(r.tts),
            fmt_g9(r.twt),
            opt(r.tts_savings),
            opt(r.twt_savings)
        )?;
    }
    Ok(())
}

pub fn write_campaign_csv<W: Write>(rows: &[crate::scenarios::CampaignRow], mut out: W) -> Result<()> {
    writeln!(out, "variant,sigma,dv,drho,controller,mean_twt_improvement,stdev,runs")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.variant,
            fmt_g9(r.sigma),
            fmt_g9(r.dv),
            fmt_g9(r.drho),
            r.controller,
            fmt_g9(r.mean_twt_improvement),
            fmt_g9(r.stdev),
            r.runs
        )?;
    }
    Ok(())
}

/// C `%.9g` formatting.
pub fn fmt_g9(x: f64) -> String {
    fmt_g(x, 9)
}

pub fn fmt_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds every number in a JSON value to 9 significant digits.
pub fn round_json(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => fmt_g9(f)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_formatting() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (999999999.7, "1e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (5000.0, "5000"),
            (1.0 / 240.0, "0.00416666667"),
            (1e100, "1e+100"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g9(x), want, "{x}");
        }
    }

    #[test]
    fn json_numbers_are_rounded() {
        let v = round_json(serde_json::json!({"a": [1.0 / 3.0, 2], "b": {"c": 0.1 + 0.2}}));
        assert_eq!(v.to_string(), r#"{"a":[0.333333333,2],"b":{"c":0.3}}"#);
    }
}
