//! Slack-augmented power flow: when Newton fails, a damped least-squares
//! (Levenberg-Marquardt) pass minimizes the power mismatches within voltage
//! bounds and reports the residuals as per-bus injection slacks. Feasible
//! networks produce zero slack; the argmax of |slack| localizes a defect.

use std::collections::BTreeMap;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::netmodel::{BusType, NetworkModel};

use super::newton::PfState;
use super::{check_reference, PfError, PfOptions, PfSolution};

/// Power-flow solution plus per-bus injection slacks (pu).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SlackPf {
    pub solution: PfSolution,
    pub sp: BTreeMap<usize, f64>,
    pub sq: BTreeMap<usize, f64>,
}

impl SlackPf {
    pub fn max_slack(&self) -> f64 {
        self.sp
            .values()
            .chain(self.sq.values())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Bus with the largest |slack|, with its value.
    pub fn worst_bus(&self) -> Option<(usize, f64)> {
        self.sp
            .iter()
            .chain(self.sq.iter())
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(&id, &v)| (id, v))
    }
}

/// Generator-slack power flow result: per-generator active power
/// adjustments needed to balance the network at fixed setpoints.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GenSlackPf {
    pub solution: PfSolution,
    pub gen_slack: BTreeMap<usize, f64>,
}

/// Damped least squares on a sparse residual/Jacobian pair.
/// Returns (x, residual, iterations).
fn levenberg_marquardt(
    dim: usize,
    mut x: Vec<f64>,
    mut eval_res: impl FnMut(&[f64]) -> Vec<f64>,
    mut eval_jac: impl FnMut(&[f64]) -> Vec<Triplet<usize, usize, f64>>,
    mut project: impl FnMut(&mut [f64]),
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>, usize), PfError> {
    project(&mut x);
    let mut f = eval_res(&x);
    let mut ssq: f64 = f.iter().map(|v| v * v).sum();
    let mut lambda = 1e-4;
    let mut stall = 0;

    for iter in 1..=max_iter {
        let tri = eval_jac(&x);

        // J^T J and J^T f accumulated row-wise
        let mut rows: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for t in &tri {
            rows.entry(t.row).or_default().push((t.col, t.val));
        }
        let mut normal: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut grad = vec![0.0; dim];
        for (r, entries) in &rows {
            for &(ci, vi) in entries {
                grad[ci] += vi * f[*r];
                for &(cj, vj) in entries {
                    *normal.entry((ci, cj)).or_insert(0.0) += vi * vj;
                }
            }
        }

        let gnorm = grad.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gnorm < 1e-11 || ssq < 1e-22 {
            return Ok((x, f, iter));
        }

        let mut accepted = false;
        for _ in 0..12 {
            let mut tri2: Vec<Triplet<usize, usize, f64>> = normal
                .iter()
                .map(|(&(i, j), &v)| Triplet::new(i, j, v))
                .collect();
            for i in 0..dim {
                let d = normal.get(&(i, i)).copied().unwrap_or(0.0);
                tri2.push(Triplet::new(i, i, lambda * d.max(1e-8)));
            }
            let a = SparseColMat::try_new_from_triplets(dim, dim, &tri2)
                .map_err(|_| PfError::Singular { iteration: iter })?;
            let rhs = Mat::from_fn(dim, 1, |r, _| -grad[r]);
            let Ok(chol) = a.as_ref().sp_cholesky(faer::Side::Lower) else {
                lambda *= 10.0;
                continue;
            };
            let dx = chol.solve(rhs.as_ref());

            let mut trial = x.clone();
            for i in 0..dim {
                let step = dx[(i, 0)];
                if !step.is_finite() {
                    lambda *= 10.0;
                    break;
                }
                trial[i] += step;
            }
            project(&mut trial);
            let f_trial = eval_res(&trial);
            let ssq_trial: f64 = f_trial.iter().map(|v| v * v).sum();
            if ssq_trial < ssq {
                let rel = (ssq - ssq_trial) / ssq.max(1e-300);
                x = trial;
                f = f_trial;
                ssq = ssq_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                stall = if rel < 1e-10 { stall + 1 } else { 0 };
                break;
            }
            lambda *= 4.0;
        }
        if !accepted || stall >= 3 {
            return Ok((x, f, iter));
        }
    }
    let iters = max_iter;
    Ok((x, f, iters))
}

fn pack(state: &PfState, ang: &[usize], mag: &[usize]) -> Vec<f64> {
    ang.iter()
        .map(|&i| state.va[i])
        .chain(mag.iter().map(|&i| state.vm[i]))
        .collect()
}

fn unpack(state: &mut PfState, ang: &[usize], mag: &[usize], x: &[f64]) {
    for (c, &i) in ang.iter().enumerate() {
        state.va[i] = x[c];
    }
    for (c, &i) in mag.iter().enumerate() {
        state.vm[i] = x[ang.len() + c];
    }
}

/// AC power flow that always returns: Newton first, then damped least
/// squares on the mismatches with voltage magnitudes kept inside their
/// bounds. Residual mismatches become per-bus slacks (sp, sq); buses whose
/// equations are not part of the system (reference P, PV reactive) carry
/// zero slack by construction.
pub fn ac_pf_slack(model: &NetworkModel, tol: f64) -> Result<SlackPf, PfError> {
    check_reference(model)?;
    let opts = PfOptions {
        tol,
        ..Default::default()
    };
    let zero_slacks = |model: &NetworkModel| -> (BTreeMap<usize, f64>, BTreeMap<usize, f64>) {
        let z: BTreeMap<usize, f64> = model.buses.keys().map(|&id| (id, 0.0)).collect();
        (z.clone(), z)
    };

    match super::ac_pf(model, &opts) {
        Ok(solution) => {
            let (sp, sq) = zero_slacks(model);
            Ok(SlackPf { solution, sp, sq })
        }
        Err(PfError::IterLimit(..)) | Err(PfError::Singular { .. }) => {
            // least-squares fallback, PV voltages held, no Q switching
            let mut state = PfState::new(model, &opts);
            let (ang, mag) = state.equation_sets();
            let x0 = pack(&state, &ang, &mag);
            let dim = x0.len();

            let vmin: Vec<f64> = mag
                .iter()
                .map(|&i| model.buses[&state.index.id(i)].vmin)
                .collect();
            let vmax: Vec<f64> = mag
                .iter()
                .map(|&i| model.buses[&state.index.id(i)].vmax)
                .collect();
            let n_ang = ang.len();

            let mut st_res = PfState::new(model, &opts);
            let mut st_jac = PfState::new(model, &opts);
            let (ang_r, mag_r) = (ang.clone(), mag.clone());
            let (ang_j, mag_j) = (ang.clone(), mag.clone());

            let (x, f, iters) = levenberg_marquardt(
                dim,
                x0,
                move |x| {
                    unpack(&mut st_res, &ang_r, &mag_r, x);
                    let s = st_res.ybus.injections(&st_res.voltages());
                    st_res.mismatch(&s, &ang_r, &mag_r)
                },
                move |x| {
                    unpack(&mut st_jac, &ang_j, &mag_j, x);
                    let s = st_jac.ybus.injections(&st_jac.voltages());
                    st_jac.jacobian(&s, &ang_j, &mag_j)
                },
                move |x| {
                    for c in 0..vmin.len() {
                        x[n_ang + c] = x[n_ang + c].clamp(vmin[c], vmax[c]);
                    }
                },
                80,
            )?;

            unpack(&mut state, &ang, &mag, &x);
            let norm = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let mut solution = state.extract(model, iters, norm);
            solution.converged = norm < tol;

            let (mut sp, mut sq) = zero_slacks(model);
            for (c, &i) in ang.iter().enumerate() {
                sp.insert(state.index.id(i), f[c]);
            }
            for (c, &i) in mag.iter().enumerate() {
                sq.insert(state.index.id(i), f[ang.len() + c]);
            }
            Ok(SlackPf { solution, sp, sq })
        }
        Err(e) => Err(e),
    }
}

/// Power flow with the generator dispatch pinned to `dispatch` (pu) and a
/// per-generator active slack variable, solved as regularized least
/// squares. Large |slack| localizes the generators whose setpoints cannot
/// be realized; generators at reference buses absorb island imbalance and
/// carry zero slack by construction.
pub fn gen_slack_pf(
    model: &NetworkModel,
    dispatch: &BTreeMap<usize, f64>,
    weight: f64,
) -> Result<GenSlackPf, PfError> {
    check_reference(model)?;
    let mut pinned = model.clone();
    for g in pinned.gens.values_mut() {
        if let Some(&p) = dispatch.get(&g.id) {
            g.pg = p;
        }
    }

    let opts = PfOptions {
        enforce_q_limits: false,
        ..Default::default()
    };
    let mut state = PfState::new(&pinned, &opts);
    let (ang, mag) = state.equation_sets();

    // slack variables for in-service generators at non-reference buses
    let slack_gens: Vec<usize> = pinned
        .in_service_gens()
        .filter(|g| pinned.buses[&g.bus].bus_type != BusType::REF)
        .map(|g| g.id)
        .collect();
    let gen_bus_row: Vec<Option<usize>> = slack_gens
        .iter()
        .map(|gid| {
            let bus = pinned.gens[gid].bus;
            ang.iter()
                .position(|&i| state.index.id(i) == bus)
                .map(|r| r)
        })
        .collect();

    let n_ang = ang.len();
    let n_mag = mag.len();
    let n_pf = n_ang + n_mag;
    let dim = n_pf + slack_gens.len();
    let n_res = n_pf + slack_gens.len();
    let w_sqrt = weight.sqrt();

    let mut x0 = pack(&state, &ang, &mag);
    x0.extend(std::iter::repeat(0.0).take(slack_gens.len()));

    let vmin: Vec<f64> = mag
        .iter()
        .map(|&i| pinned.buses[&state.index.id(i)].vmin)
        .collect();
    let vmax: Vec<f64> = mag
        .iter()
        .map(|&i| pinned.buses[&state.index.id(i)].vmax)
        .collect();

    let mut st_res = PfState::new(&pinned, &opts);
    let mut st_jac = PfState::new(&pinned, &opts);
    let (ang_r, mag_r) = (ang.clone(), mag.clone());
    let (ang_j, mag_j) = (ang.clone(), mag.clone());
    let rows_r = gen_bus_row.clone();
    let rows_j = gen_bus_row.clone();

    let (x, f, iters) = levenberg_marquardt(
        dim,
        x0,
        move |x| {
            unpack(&mut st_res, &ang_r, &mag_r, x);
            let s = st_res.ybus.injections(&st_res.voltages());
            let mut f = st_res.mismatch(&s, &ang_r, &mag_r);
            f.resize(n_res, 0.0);
            for (k, row) in rows_r.iter().enumerate() {
                let dp = x[n_pf + k];
                if let Some(r) = row {
                    f[*r] -= dp;
                }
                f[n_pf + k] = w_sqrt * dp;
            }
            f
        },
        move |x| {
            unpack(&mut st_jac, &ang_j, &mag_j, x);
            let s = st_jac.ybus.injections(&st_jac.voltages());
            let mut tri = st_jac.jacobian(&s, &ang_j, &mag_j);
            for (k, row) in rows_j.iter().enumerate() {
                if let Some(r) = row {
                    tri.push(Triplet::new(*r, n_pf + k, -1.0));
                }
                tri.push(Triplet::new(n_pf + k, n_pf + k, w_sqrt));
            }
            tri
        },
        move |x| {
            for c in 0..vmin.len() {
                x[n_ang + c] = x[n_ang + c].clamp(vmin[c], vmax[c]);
            }
        },
        80,
    )?;

    unpack(&mut state, &ang, &mag, &x);
    let norm = f[..n_pf].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut solution = state.extract(&pinned, iters, norm);
    solution.converged = norm < 1e-6;

    let mut gen_slack: BTreeMap<usize, f64> =
        pinned.gens.keys().map(|&id| (id, 0.0)).collect();
    for (k, gid) in slack_gens.iter().enumerate() {
        gen_slack.insert(*gid, x[n_pf + k]);
    }
    Ok(GenSlackPf {
        solution,
        gen_slack,
    })
}
