//! Steady-state power flow: Newton-Raphson AC, linearized DC, and
//! slack-augmented least-squares variants for infeasibility diagnosis.

mod dc;
mod newton;
mod slack;
pub mod ybus;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::netmodel::{BusType, NetworkModel};
pub use dc::dc_pf;
pub use newton::{ac_pf, JacobianProbe};
pub use slack::{ac_pf_slack, gen_slack_pf, GenSlackPf, SlackPf};
pub use ybus::BranchFlow;

#[derive(Debug, Error)]
pub enum PfError {
    #[error("island containing bus {bus} has {count} reference buses (want exactly 1)")]
    BadReference { bus: usize, count: usize },
    #[error("singular system at iteration {iteration}")]
    Singular { iteration: usize },
    #[error("did not converge in {0} iterations (max mismatch {1:.3e} pu)")]
    IterLimit(usize, f64),
    #[error("model is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy)]
pub struct PfOptions {
    /// Convergence tolerance on the largest power mismatch (pu).
    pub tol: f64,
    pub max_iter: usize,
    /// Switch PV buses to PQ when aggregate reactive limits are hit.
    pub enforce_q_limits: bool,
    /// Start from vm=1, va=0 instead of the stored setpoints.
    pub flat_start: bool,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tol: 1e-8,
            max_iter: 30,
            enforce_q_limits: true,
            flat_start: true,
        }
    }
}

/// Solved operating point. All quantities per-unit, angles in radians.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct PfSolution {
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
    pub vm: BTreeMap<usize, f64>,
    pub va: BTreeMap<usize, f64>,
    pub pg: BTreeMap<usize, f64>,
    pub qg: BTreeMap<usize, f64>,
    pub flows: BTreeMap<usize, BranchFlow>,
}

impl PfSolution {
    /// Sum of series losses over in-service branches (pu).
    pub fn total_losses(&self) -> f64 {
        self.flows.values().map(|f| f.p_fr + f.p_to).sum()
    }
}

/// Exactly one reference bus per island.
pub(crate) fn check_reference(model: &NetworkModel) -> Result<(), PfError> {
    if model.buses.is_empty() {
        return Err(PfError::Empty);
    }
    for island in model.islands() {
        let count = island
            .iter()
            .filter(|id| model.buses[id].bus_type == BusType::REF)
            .count();
        if count != 1 {
            return Err(PfError::BadReference {
                bus: *island.iter().next().unwrap(),
                count,
            });
        }
    }
    Ok(())
}

/// Distribute solved bus-level generation among the in-service generators
/// at each bus: reactive power in proportion to each unit's Q range,
/// active setpoints kept except at reference buses where the lowest-id
/// unit absorbs the island imbalance.
pub(crate) fn allocate_dispatch(
    model: &NetworkModel,
    index: &ybus::BusIndex,
    injections: &[num_complex::Complex64],
    solution: &mut PfSolution,
) {
    for bus in model.buses.values() {
        let gens: Vec<&crate::netmodel::Gen> = model
            .gens_at(bus.id)
            .filter(|g| g.status)
            .collect();
        if gens.is_empty() {
            continue;
        }
        let s = injections[index.of(bus.id)];
        let (mut pd, mut qd) = (0.0, 0.0);
        for l in model.loads_at(bus.id).filter(|l| l.status) {
            pd += l.pd;
            qd += l.qd;
        }
        let p_total = s.re + pd;
        let q_total = s.im + qd;

        // active power
        match bus.bus_type {
            BusType::REF => {
                let others: f64 = gens.iter().skip(1).map(|g| g.pg).sum();
                solution.pg.insert(gens[0].id, p_total - others);
                for g in gens.iter().skip(1) {
                    solution.pg.insert(g.id, g.pg);
                }
            }
            _ => {
                for g in &gens {
                    solution.pg.insert(g.id, g.pg);
                }
            }
        }

        // reactive power in proportion to unit ranges
        let ranges: Vec<f64> = gens.iter().map(|g| (g.qmax - g.qmin).max(0.0)).collect();
        let total_range: f64 = ranges.iter().sum();
        if total_range > 0.0 {
            let base: f64 = gens.iter().map(|g| g.qmin).sum();
            for (g, range) in gens.iter().zip(&ranges) {
                solution
                    .qg
                    .insert(g.id, g.qmin + (q_total - base) * range / total_range);
            }
        } else {
            let share = q_total / gens.len() as f64;
            for g in &gens {
                solution.qg.insert(g.id, share);
            }
        }
    }
    // out-of-service units contribute nothing
    for g in model.gens.values().filter(|g| !g.status) {
        solution.pg.insert(g.id, 0.0);
        solution.qg.insert(g.id, 0.0);
    }
}
