//! Feasibility diagnosis: a staged sequence of slack-augmented OPF and
//! power-flow evaluations that localizes model defects.
//!
//! Stage order: slack DC-OPF (active balance), slack AC-OPF (reactive and
//! full balance), AC-vs-DC power flow setpoint comparison, generator-slack
//! power flow. A fully balanced model exits after the AC-OPF stage with a
//! FEASIBLE verdict; otherwise the verdict names the first failing stage
//! and each stage ranks its worst offenders by |slack|.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::NetworkModel;
use crate::opf::{ac_opf, dc_opf, AcOpfOptions, DcOpfOptions, OpfError};
use crate::pf::{ac_pf_slack, dc_pf, gen_slack_pf, PfError, PfSolution};

#[derive(Debug, Error)]
pub enum DiagnosisError {
    #[error("stage '{stage}': {source}")]
    Opf {
        stage: &'static str,
        #[source]
        source: OpfError,
    },
    #[error("stage '{stage}': {source}")]
    Pf {
        stage: &'static str,
        #[source]
        source: PfError,
    },
    #[error("solutions share no bus or generator ids")]
    DisjointSolutions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Feasible,
    PImbalance,
    QImbalance,
    GenSetpointMismatch,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagnosisTolerances {
    /// Per-bus slack tolerance for the OPF stages (pu).
    pub opf_slack: f64,
    /// Setpoint mismatch tolerance for the PF comparison stages (pu).
    pub pf_mismatch: f64,
}

impl Default for DiagnosisTolerances {
    fn default() -> Self {
        DiagnosisTolerances {
            opf_slack: 1e-4,
            pf_mismatch: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffenderKind {
    BusP,
    BusQ,
    Gen,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Offender {
    pub kind: OffenderKind,
    pub id: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageResult {
    pub name: String,
    pub max_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Worst offenders ranked by |slack|, largest first.
    pub offenders: Vec<Offender>,
}

impl StageResult {
    fn from_offenders(
        name: &str,
        tolerance: f64,
        mut offenders: Vec<Offender>,
    ) -> StageResult {
        offenders.sort_by(|a, b| b.slack.abs().total_cmp(&a.slack.abs()));
        offenders.truncate(10);
        let max_slack = offenders.first().map_or(0.0, |o| o.slack.abs());
        StageResult {
            name: name.to_string(),
            max_slack,
            tolerance,
            passed: max_slack < tolerance,
            offenders,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub stages: Vec<StageResult>,
    pub verdict: Verdict,
}

impl DiagnosisReport {
    pub fn stage(&self, name: &str) -> Option<&StageResult> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Stable text rendering for regression diffing.
impl fmt::Display for DiagnosisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {:?}", self.verdict)?;
        for stage in &self.stages {
            writeln!(
                f,
                "stage {:<22} max_slack {:>12.6e} tol {:>8.1e} {}",
                stage.name,
                stage.max_slack,
                stage.tolerance,
                if stage.passed { "pass" } else { "FAIL" }
            )?;
            for o in &stage.offenders {
                writeln!(f, "  {:?} {:>6}  {:+.6e}", o.kind, o.id, o.slack)?;
            }
        }
        Ok(())
    }
}

/// Run the staged diagnosis.
pub fn diagnose(
    model: &NetworkModel,
    tolerances: &DiagnosisTolerances,
) -> Result<DiagnosisReport, DiagnosisError> {
    let mut stages = Vec::new();

    // stage 1: slack DC-OPF, active power balance
    let dc = dc_opf(
        model,
        &DcOpfOptions {
            slack: true,
            ..Default::default()
        },
    )
    .map_err(|source| DiagnosisError::Opf {
        stage: "dc-opf-slack",
        source,
    })?;
    let offenders: Vec<Offender> = dc
        .slack_p
        .iter()
        .filter(|(_, v)| v.abs() > 0.0)
        .map(|(&id, &slack)| Offender {
            kind: OffenderKind::BusP,
            id,
            slack,
        })
        .collect();
    stages.push(StageResult::from_offenders(
        "dc-opf-slack",
        tolerances.opf_slack,
        offenders,
    ));

    // stage 2: slack AC-OPF, full balance
    let ac = ac_opf(
        model,
        &AcOpfOptions {
            slack: true,
            ..Default::default()
        },
    )
    .map_err(|source| DiagnosisError::Opf {
        stage: "ac-opf-slack",
        source,
    })?;
    let mut offenders: Vec<Offender> = ac
        .slack_p
        .iter()
        .map(|(&id, &slack)| Offender {
            kind: OffenderKind::BusP,
            id,
            slack,
        })
        .chain(ac.slack_q.iter().map(|(&id, &slack)| Offender {
            kind: OffenderKind::BusQ,
            id,
            slack,
        }))
        .collect();
    offenders.retain(|o| o.slack.abs() > 0.0);
    let stage2 = StageResult::from_offenders("ac-opf-slack", tolerances.opf_slack, offenders);
    let stage2_kind = stage2.offenders.first().map(|o| o.kind);
    stages.push(stage2);

    let stage1_ok = stages[0].passed;
    let stage2_ok = stages[1].passed;

    // fully balanced: conclude here
    if stage1_ok && stage2_ok {
        return Ok(DiagnosisReport {
            stages,
            verdict: Verdict::Feasible,
        });
    }

    // stage 3: generator setpoint comparison between AC and DC power flow
    let dc_sol = dc_pf(model).map_err(|source| DiagnosisError::Pf {
        stage: "pf-setpoint-compare",
        source,
    })?;
    let ac_sol = ac_pf_slack(model, 1e-8).map_err(|source| DiagnosisError::Pf {
        stage: "pf-setpoint-compare",
        source,
    })?;
    let delta = compare_solutions(&ac_sol.solution, &dc_sol)?;
    let offenders: Vec<Offender> = delta
        .dpg
        .iter()
        .map(|(&id, &d)| Offender {
            kind: OffenderKind::Gen,
            id,
            slack: d,
        })
        .collect();
    stages.push(StageResult::from_offenders(
        "pf-setpoint-compare",
        tolerances.pf_mismatch,
        offenders,
    ));

    // stage 4: generator-slack power flow anchored on the DC-OPF dispatch
    let gen_slack = gen_slack_pf(model, &dc.pg, 1e-6).map_err(|source| DiagnosisError::Pf {
        stage: "gen-slack-pf",
        source,
    })?;
    let offenders: Vec<Offender> = gen_slack
        .gen_slack
        .iter()
        .map(|(&id, &slack)| Offender {
            kind: OffenderKind::Gen,
            id,
            slack,
        })
        .collect();
    stages.push(StageResult::from_offenders(
        "gen-slack-pf",
        tolerances.pf_mismatch,
        offenders,
    ));

    let verdict = if !stage1_ok {
        Verdict::PImbalance
    } else if stage2_kind == Some(OffenderKind::BusQ) {
        Verdict::QImbalance
    } else if !stage2_ok {
        Verdict::PImbalance
    } else {
        Verdict::GenSetpointMismatch
    };

    Ok(DiagnosisReport { stages, verdict })
}

/// Per-component deltas between two solutions over their common ids.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationDelta {
    pub dvm: BTreeMap<usize, f64>,
    /// Angle deltas wrapped to (-pi, pi] rad.
    pub dva: BTreeMap<usize, f64>,
    pub dpg: BTreeMap<usize, f64>,
    pub dqg: BTreeMap<usize, f64>,
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w > std::f64::consts::PI {
        w -= two_pi;
    } else if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

fn max_mean(map: &BTreeMap<usize, f64>) -> (f64, f64) {
    if map.is_empty() {
        return (0.0, 0.0);
    }
    let max = map.values().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mean = map.values().map(|v| v.abs()).sum::<f64>() / map.len() as f64;
    (max, mean)
}

impl ValidationDelta {
    pub fn max_dvm(&self) -> f64 {
        max_mean(&self.dvm).0
    }
    pub fn max_dva(&self) -> f64 {
        max_mean(&self.dva).0
    }
    pub fn max_dpg(&self) -> f64 {
        max_mean(&self.dpg).0
    }
    pub fn max_dqg(&self) -> f64 {
        max_mean(&self.dqg).0
    }
    pub fn mean_dvm(&self) -> f64 {
        max_mean(&self.dvm).1
    }
    pub fn mean_dva(&self) -> f64 {
        max_mean(&self.dva).1
    }
}

/// a minus b over common buses and generators.
pub fn compare_solutions(
    a: &PfSolution,
    b: &PfSolution,
) -> Result<ValidationDelta, DiagnosisError> {
    let mut delta = ValidationDelta::default();
    for (&id, &vm) in &a.vm {
        if let Some(&other) = b.vm.get(&id) {
            delta.dvm.insert(id, vm - other);
        }
    }
    for (&id, &va) in &a.va {
        if let Some(&other) = b.va.get(&id) {
            delta.dva.insert(id, wrap_angle(va - other));
        }
    }
    for (&id, &pg) in &a.pg {
        if let Some(&other) = b.pg.get(&id) {
            delta.dpg.insert(id, pg - other);
        }
    }
    for (&id, &qg) in &a.qg {
        if let Some(&other) = b.qg.get(&id) {
            delta.dqg.insert(id, qg - other);
        }
    }
    if delta.dvm.is_empty() && delta.dpg.is_empty() {
        return Err(DiagnosisError::DisjointSolutions);
    }
    Ok(delta)
}
