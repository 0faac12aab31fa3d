//! Optimal power flow: DC-OPF as a sparse LP/QP and AC-OPF as a nonlinear
//! program, both solved by the in-crate primal-dual interior-point method.
//! Optional nodal slack variables turn infeasibility into localized,
//! penalized imbalance instead of solver failure.

pub mod acopf;
pub mod dcopf;
pub mod lp;
pub mod nlp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pf::BranchFlow;

pub use acopf::{ac_opf, verify_ac_feasibility, AcOpfOptions, HessianMode};
pub use dcopf::{dc_opf, DcOpfOptions};

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("generator {0} has no cost data")]
    MissingCost(usize),
    #[error("branch {0} has zero reactance; clean the model first")]
    ZeroReactance(usize),
    #[error(transparent)]
    Reference(#[from] crate::pf::PfError),
    #[error(transparent)]
    Solver(#[from] nlp::NlpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpfStatus {
    Optimal,
    Infeasible,
    IterLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    BranchFlowFrom { branch: usize },
    BranchFlowTo { branch: usize },
    GenPMax { gen: usize },
    GenPMin { gen: usize },
    GenQMax { gen: usize },
    GenQMin { gen: usize },
    VoltageMax { bus: usize },
    VoltageMin { bus: usize },
}

/// Solved OPF with dispatch, voltages, optional nodal slacks and the list
/// of binding constraints. Objective in currency/h.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpfResult {
    pub status: OpfStatus,
    /// Full objective including any slack penalty.
    pub objective: f64,
    /// Generation cost component only.
    pub dispatch_cost: f64,
    pub pg: BTreeMap<usize, f64>,
    pub qg: BTreeMap<usize, f64>,
    pub vm: BTreeMap<usize, f64>,
    pub va: BTreeMap<usize, f64>,
    /// Signed nodal slack (pu), present when slack variables were enabled.
    pub slack_p: BTreeMap<usize, f64>,
    pub slack_q: BTreeMap<usize, f64>,
    pub flows: BTreeMap<usize, BranchFlow>,
    pub binding: Vec<Binding>,
    pub iterations: usize,
    pub kkt_error: f64,
    pub solve_seconds: f64,
}

impl OpfResult {
    pub fn total_slack(&self) -> f64 {
        self.slack_p
            .values()
            .chain(self.slack_q.values())
            .map(|v| v.abs())
            .sum()
    }

    /// Largest |slack| bus, if any slack was carried.
    pub fn worst_slack_bus(&self) -> Option<(usize, f64)> {
        self.slack_p
            .iter()
            .chain(self.slack_q.iter())
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(&id, &v)| (id, v))
    }
}

/// Linear and quadratic cost coefficients in MW terms: cost(p_mw) =
/// c2 p^2 + c1 p + c0.
pub(crate) fn cost_coefficients(gen: &crate::netmodel::Gen) -> Result<(f64, f64, f64), OpfError> {
    let cost = gen.cost.as_ref().ok_or(OpfError::MissingCost(gen.id))?;
    let k = &cost.coeffs;
    Ok(match k.len() {
        0 => (0.0, 0.0, 0.0),
        1 => (0.0, 0.0, k[0]),
        2 => (0.0, k[0], k[1]),
        _ => (k[k.len() - 3], k[k.len() - 2], k[k.len() - 1]),
    })
}

/// Default slack penalty: 1e4 x the largest linear cost coefficient
/// (currency per MWh of violation).
pub(crate) fn default_penalty(model: &crate::netmodel::NetworkModel) -> f64 {
    let max_c1 = model
        .in_service_gens()
        .filter_map(|g| cost_coefficients(g).ok())
        .map(|(_, c1, _)| c1.abs())
        .fold(1.0_f64, f64::max);
    1e4 * max_c1
}

/// Relative optimality gap in percent: 100 * (nlp - relax) / nlp.
pub fn gap(nlp_obj: f64, relax_obj: f64) -> f64 {
    100.0 * (nlp_obj - relax_obj) / nlp_obj
}
