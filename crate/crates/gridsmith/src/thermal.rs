//! Data-driven thermal limits.
//!
//! A log-log regression `rate/v = e^a (x/r)^k` is fitted on reference line
//! data (filtered to x/r below 20 and normalized rating above 0.005), then
//! applied to every same-voltage line with usable impedance. Everything
//! else (transformers, ideal lines, mixed-voltage branches) gets a
//! theoretical upper bound from voltage limits and admittance magnitude;
//! transformer bounds are clamped to [30, 1500] MVA. A final pass raises
//! the limit of any branch a converged power flow shows overloaded.
//!
//! Normalization convention: reference voltages in kV, ratings in MVA, so
//! the normalized rating rate/v is a current-like quantity and the fitted
//! model returns MVA when evaluated with v in kV. The convention is
//! recorded on the fit so mixed applications are detectable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::NetworkModel;
use crate::pf::PfSolution;

#[derive(Debug, Error)]
pub enum ThermalError {
    #[error("need at least 2 filtered reference points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate design matrix: all x/r ratios equal")]
    Degenerate,
    #[error("statistical model needs r > 0 and x > 0 (got r={r}, x={x})")]
    NonPositiveImpedance { r: f64, x: f64 },
    #[error("repair requires a converged power flow")]
    NotConverged,
    #[error("reference csv: {0}")]
    Csv(String),
}

/// One reference transmission line: series impedance, nominal voltage (kV)
/// and thermal rating (MVA).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub r: f64,
    pub x: f64,
    pub v: f64,
    pub rate: f64,
}

impl ReferenceLine {
    pub fn xr(&self) -> f64 {
        self.x / self.r
    }

    /// Rating normalized by voltage (current-like).
    pub fn norm_rate(&self) -> f64 {
        self.rate / self.v
    }
}

/// Reference-data filters applied before fitting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterParams {
    pub xr_max: f64,
    pub norm_rate_min: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            xr_max: 20.0,
            norm_rate_min: 0.005,
        }
    }
}

/// Fitted log-log model plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermalFit {
    pub a: f64,
    pub k: f64,
    pub filters: FilterParams,
    pub points: usize,
    pub r_squared: f64,
    /// Normalization of the fitted quantity (rating unit / voltage unit).
    pub units: String,
}

impl ThermalFit {
    /// A fit pinned to externally supplied coefficients.
    pub fn from_coefficients(a: f64, k: f64) -> ThermalFit {
        ThermalFit {
            a,
            k,
            filters: FilterParams::default(),
            points: 0,
            r_squared: f64::NAN,
            units: "MVA/kV".into(),
        }
    }
}

/// Keep lines inside the trusted region: x/r below the cap and normalized
/// rating above the floor (drops ideal conductors and bad records).
pub fn filter_reference(lines: &[ReferenceLine], params: &FilterParams) -> Vec<ReferenceLine> {
    lines
        .iter()
        .filter(|l| l.r > 0.0 && l.x > 0.0 && l.v > 0.0 && l.rate > 0.0)
        .filter(|l| l.xr() < params.xr_max && l.norm_rate() > params.norm_rate_min)
        .copied()
        .collect()
}

/// Ordinary least squares of ln(rate/v) on ln(x/r) over already-filtered
/// lines. Returns the fitted (a, k) with the goodness of fit.
pub fn fit_loglog(lines: &[ReferenceLine], params: &FilterParams) -> Result<ThermalFit, ThermalError> {
    if lines.len() < 2 {
        return Err(ThermalError::TooFewPoints(lines.len()));
    }
    let n = lines.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for l in lines {
        let x = l.xr().ln();
        let y = l.norm_rate().ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 * n * sxx.max(1.0) {
        return Err(ThermalError::Degenerate);
    }
    let k = (n * sxy - sx * sy) / denom;
    let a = (sy - k * sx) / n;
    let ss_tot = syy - sy * sy / n;
    let ss_reg = k * (sxy - sx * sy / n);
    let r_squared = if ss_tot > 0.0 { ss_reg / ss_tot } else { 1.0 };
    Ok(ThermalFit {
        a,
        k,
        filters: *params,
        points: lines.len(),
        r_squared,
        units: "MVA/kV".into(),
    })
}

/// Statistical limit S = v * e^a * (x/r)^k. With v in kV the result is in
/// MVA. Only valid for lines with positive r and x and equal nominal
/// voltage at both ends; other elements go to [`upper_bound_limit`].
pub fn statistical_limit(fit: &ThermalFit, r: f64, x: f64, v: f64) -> Result<f64, ThermalError> {
    if r <= 0.0 || x <= 0.0 {
        return Err(ThermalError::NonPositiveImpedance { r, x });
    }
    Ok(v * (fit.a + fit.k * (x / r).ln()).exp())
}

/// Theoretical throughput bound from voltage magnitude limits and the
/// element admittance magnitude:
/// S^2 = vi^2 y^2 (vi^2 + vj^2 - 2 vi vj cos(theta)). Per-unit in, per-unit
/// out. The conventional angle assumption is 15 degrees.
pub fn upper_bound_limit(vi_max: f64, vj_max: f64, y_mag: f64, theta_delta: f64) -> f64 {
    let transfer = vi_max * vi_max + vj_max * vj_max
        - 2.0 * vi_max * vj_max * theta_delta.cos();
    vi_max * y_mag * transfer.max(0.0).sqrt()
}

/// Configuration for limit application.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LimitConfig {
    /// Angle-difference assumption for the upper bound (rad).
    pub theta_delta: f64,
    /// Transformer rating clamp in MVA.
    pub xfmr_min_mva: f64,
    pub xfmr_max_mva: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            theta_delta: 15.0_f64.to_radians(),
            xfmr_min_mva: 30.0,
            xfmr_max_mva: 1500.0,
        }
    }
}

/// Assign a thermal limit to every in-service branch: statistical model
/// where applicable, upper bound elsewhere, transformer clamp applied.
/// Existing ratings are overwritten.
pub fn apply_limits(model: &NetworkModel, fit: &ThermalFit, cfg: &LimitConfig) -> NetworkModel {
    let mut out = model.clone();
    for br in out.branches.values_mut() {
        if !br.status {
            continue;
        }
        let kv_f = model.buses[&br.f_bus].base_kv;
        let kv_t = model.buses[&br.t_bus].base_kv;
        let same_kv = (kv_f - kv_t).abs() <= 1e-9 * kv_f.max(kv_t);

        let statistical = (!br.is_transformer && same_kv)
            .then(|| statistical_limit(fit, br.r, br.x, kv_f).ok())
            .flatten();

        br.rate_a = match statistical {
            Some(mva) => mva,
            None => {
                let vi = model.buses[&br.f_bus].vmax;
                let vj = model.buses[&br.t_bus].vmax;
                let y = 1.0 / br.z_mag();
                let mva = upper_bound_limit(vi, vj, y, cfg.theta_delta) * model.base_mva;
                if br.is_transformer {
                    mva.clamp(cfg.xfmr_min_mva, cfg.xfmr_max_mva)
                } else {
                    mva
                }
            }
        };
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairEvent {
    pub branch: usize,
    pub flow_mva: f64,
    pub old_rate: f64,
    pub new_rate: f64,
}

/// Raise the rating of every branch whose converged flow exceeds it to
/// margin * flow. Post: zero violations by construction.
pub fn repair_violations(
    model: &NetworkModel,
    flows: &PfSolution,
    margin: f64,
) -> Result<(NetworkModel, Vec<RepairEvent>), ThermalError> {
    if !flows.converged {
        return Err(ThermalError::NotConverged);
    }
    let mut out = model.clone();
    let mut log = Vec::new();
    for br in out.branches.values_mut() {
        if !br.status || br.rate_a <= 0.0 {
            continue;
        }
        let Some(flow) = flows.flows.get(&br.id) else {
            continue;
        };
        let flow_mva = flow.s_max() * model.base_mva;
        if flow_mva > br.rate_a {
            log.push(RepairEvent {
                branch: br.id,
                flow_mva,
                old_rate: br.rate_a,
                new_rate: margin * flow_mva,
            });
            br.rate_a = margin * flow_mva;
        }
    }
    Ok((out, log))
}

/// Count of in-service branches whose flow exceeds the rating.
pub fn count_violations(model: &NetworkModel, flows: &PfSolution) -> usize {
    model
        .in_service_branches()
        .filter(|br| br.rate_a > 0.0)
        .filter(|br| {
            flows
                .flows
                .get(&br.id)
                .is_some_and(|f| f.s_max() * model.base_mva > br.rate_a)
        })
        .count()
}

/// Read reference lines from CSV with columns r,x,v_kv,rate_mva.
pub fn load_reference_csv(path: impl AsRef<std::path::Path>) -> Result<Vec<ReferenceLine>, ThermalError> {
    #[derive(Deserialize)]
    struct Row {
        r: f64,
        x: f64,
        v_kv: f64,
        rate_mva: f64,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| ThermalError::Csv(e.to_string()))?;
    let mut out = Vec::new();
    for rec in reader.deserialize::<Row>() {
        let row = rec.map_err(|e| ThermalError::Csv(e.to_string()))?;
        out.push(ReferenceLine {
            r: row.r,
            x: row.x,
            v: row.v_kv,
            rate: row.rate_mva,
        });
    }
    Ok(out)
}

/// The (x/r, rate/v) scatter behind the fit, for plot-ready export.
pub fn scatter_points(lines: &[ReferenceLine]) -> Vec<(f64, f64)> {
    lines.iter().map(|l| (l.xr(), l.norm_rate())).collect()
}
