//! Full Newton-Raphson power flow, polar coordinates, sparse LU steps.

use std::collections::BTreeMap;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;

use crate::netmodel::{BusType, NetworkModel};

use super::ybus::{branch_flow, BusIndex, YBus};
use super::{allocate_dispatch, check_reference, PfError, PfOptions, PfSolution};

/// Mutable power-flow state shared by the Newton and least-squares solvers.
pub(crate) struct PfState {
    pub index: BusIndex,
    pub ybus: YBus,
    /// Working bus kinds (PV buses may switch to PQ on Q-limit violation).
    pub kind: Vec<BusType>,
    /// Scheduled injections: generation setpoints minus load (pu).
    pub p_spec: Vec<f64>,
    pub q_spec: Vec<f64>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

impl PfState {
    pub fn new(model: &NetworkModel, opts: &PfOptions) -> PfState {
        let index = BusIndex::new(model);
        let ybus = YBus::build(model, &index);
        let n = index.len();
        let mut kind = vec![BusType::PQ; n];
        let mut p_spec = vec![0.0; n];
        let mut q_spec = vec![0.0; n];
        let mut vm_target = vec![1.0; n];
        let mut vm = vec![1.0; n];
        let mut va = vec![0.0; n];

        for (i, &id) in index.ids.iter().enumerate() {
            let bus = &model.buses[&id];
            kind[i] = bus.bus_type;
            let (p, q) = model.scheduled_injection(id);
            p_spec[i] = p;
            q_spec[i] = q;
            vm_target[i] = model
                .gens_at(id)
                .find(|g| g.status)
                .map(|g| g.vg)
                .unwrap_or(bus.vm);
            // a PV/REF bus without any in-service generator cannot hold
            // voltage: demote to PQ (REF is rejected upstream by validate)
            if bus.bus_type == BusType::PV && !model.gens_at(id).any(|g| g.status) {
                kind[i] = BusType::PQ;
            }
            match kind[i] {
                BusType::REF => {
                    vm[i] = vm_target[i];
                    va[i] = bus.va;
                }
                BusType::PV => {
                    vm[i] = vm_target[i];
                    va[i] = if opts.flat_start { 0.0 } else { bus.va };
                }
                BusType::PQ => {
                    vm[i] = if opts.flat_start { 1.0 } else { bus.vm };
                    va[i] = if opts.flat_start { 0.0 } else { bus.va };
                }
            }
        }

        PfState {
            index,
            ybus,
            kind,
            p_spec,
            q_spec,
            vm,
            va,
        }
    }

    pub fn voltages(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    /// Buses with a free angle (PV+PQ) and a free magnitude (PQ).
    pub fn equation_sets(&self) -> (Vec<usize>, Vec<usize>) {
        let ang: Vec<usize> = (0..self.kind.len())
            .filter(|&i| self.kind[i] != BusType::REF)
            .collect();
        let mag: Vec<usize> = (0..self.kind.len())
            .filter(|&i| self.kind[i] == BusType::PQ)
            .collect();
        (ang, mag)
    }

    /// Mismatch vector [dP at ang buses, dQ at mag buses], f = S(V) - S_spec.
    pub fn mismatch(&self, s: &[Complex64], ang: &[usize], mag: &[usize]) -> Vec<f64> {
        let mut f = Vec::with_capacity(ang.len() + mag.len());
        for &i in ang {
            f.push(s[i].re - self.p_spec[i]);
        }
        for &i in mag {
            f.push(s[i].im - self.q_spec[i]);
        }
        f
    }

    /// Jacobian of the mismatch wrt [va at ang buses, vm at mag buses],
    /// as triplets. `s` is the current injection vector.
    pub fn jacobian(
        &self,
        s: &[Complex64],
        ang: &[usize],
        mag: &[usize],
    ) -> Vec<Triplet<usize, usize, f64>> {
        let n = self.kind.len();
        let mut ang_col = vec![usize::MAX; n];
        let mut mag_col = vec![usize::MAX; n];
        for (c, &i) in ang.iter().enumerate() {
            ang_col[i] = c;
        }
        for (c, &i) in mag.iter().enumerate() {
            mag_col[i] = ang.len() + c;
        }
        let mut row_of_p = vec![usize::MAX; n];
        let mut row_of_q = vec![usize::MAX; n];
        for (r, &i) in ang.iter().enumerate() {
            row_of_p[i] = r;
        }
        for (r, &i) in mag.iter().enumerate() {
            row_of_q[i] = ang.len() + r;
        }

        let mut tri = Vec::new();
        for i in 0..n {
            let (rp, rq) = (row_of_p[i], row_of_q[i]);
            if rp == usize::MAX && rq == usize::MAX {
                continue;
            }
            let (vi, pi, qi) = (self.vm[i], s[i].re, s[i].im);
            for &(j, y) in &self.ybus.rows[i] {
                let (g, b) = (y.re, y.im);
                if j == i {
                    if rp != usize::MAX {
                        if ang_col[i] != usize::MAX {
                            tri.push(Triplet::new(rp, ang_col[i], -qi - b * vi * vi));
                        }
                        if mag_col[i] != usize::MAX {
                            tri.push(Triplet::new(rp, mag_col[i], pi / vi + g * vi));
                        }
                    }
                    if rq != usize::MAX {
                        if ang_col[i] != usize::MAX {
                            tri.push(Triplet::new(rq, ang_col[i], pi - g * vi * vi));
                        }
                        if mag_col[i] != usize::MAX {
                            tri.push(Triplet::new(rq, mag_col[i], qi / vi - b * vi));
                        }
                    }
                } else {
                    let vj = self.vm[j];
                    let theta = self.va[i] - self.va[j];
                    let (sin, cos) = theta.sin_cos();
                    let a_ij = g * cos + b * sin;
                    let b_ij = g * sin - b * cos;
                    if rp != usize::MAX {
                        if ang_col[j] != usize::MAX {
                            tri.push(Triplet::new(rp, ang_col[j], vi * vj * b_ij));
                        }
                        if mag_col[j] != usize::MAX {
                            tri.push(Triplet::new(rp, mag_col[j], vi * a_ij));
                        }
                    }
                    if rq != usize::MAX {
                        if ang_col[j] != usize::MAX {
                            tri.push(Triplet::new(rq, ang_col[j], -vi * vj * a_ij));
                        }
                        if mag_col[j] != usize::MAX {
                            tri.push(Triplet::new(rq, mag_col[j], vi * b_ij));
                        }
                    }
                }
            }
        }
        tri
    }

    /// One Newton solve: J dx = -f. Returns the update split as
    /// (d_va at ang buses, d_vm at mag buses).
    fn newton_step(
        &self,
        f: &[f64],
        ang: &[usize],
        mag: &[usize],
        iteration: usize,
    ) -> Result<Vec<f64>, PfError> {
        let dim = ang.len() + mag.len();
        let tri = self.jacobian(&self.ybus.injections(&self.voltages()), ang, mag);
        let jac = SparseColMat::try_new_from_triplets(dim, dim, &tri)
            .map_err(|_| PfError::Singular { iteration })?;
        let lu = jac
            .as_ref()
            .sp_lu()
            .map_err(|_| PfError::Singular { iteration })?;
        let rhs = Mat::from_fn(dim, 1, |r, _| -f[r]);
        let dx = lu.solve(rhs.as_ref());
        let out: Vec<f64> = (0..dim).map(|r| dx[(r, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(PfError::Singular { iteration });
        }
        Ok(out)
    }

    /// Run Newton iterations until the mismatch drops below tol.
    pub fn solve_newton(&mut self, opts: &PfOptions) -> Result<(usize, f64), PfError> {
        let (ang, mag) = self.equation_sets();
        let mut iterations = 0;
        loop {
            let s = self.ybus.injections(&self.voltages());
            let f = self.mismatch(&s, &ang, &mag);
            let norm = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if norm < opts.tol {
                return Ok((iterations, norm));
            }
            if iterations >= opts.max_iter {
                return Err(PfError::IterLimit(iterations, norm));
            }
            iterations += 1;
            let dx = self.newton_step(&f, &ang, &mag, iterations)?;
            for (c, &i) in ang.iter().enumerate() {
                self.va[i] += dx[c];
            }
            for (c, &i) in mag.iter().enumerate() {
                self.vm[i] += dx[ang.len() + c];
            }
        }
    }

    /// Check aggregate reactive limits at PV buses; switch violators to PQ
    /// with Q pinned at the limit. Returns true if anything switched.
    fn enforce_q_limits(&mut self, model: &NetworkModel, s: &[Complex64]) -> bool {
        let mut switched = false;
        for i in 0..self.kind.len() {
            if self.kind[i] != BusType::PV {
                continue;
            }
            let id = self.index.id(i);
            let (mut qmin, mut qmax, mut qd) = (0.0, 0.0, 0.0);
            for g in model.gens_at(id).filter(|g| g.status) {
                qmin += g.qmin;
                qmax += g.qmax;
            }
            for l in model.loads_at(id).filter(|l| l.status) {
                qd += l.qd;
            }
            let q_gen = s[i].im + qd;
            let pinned = if q_gen > qmax + 1e-9 {
                Some(qmax)
            } else if q_gen < qmin - 1e-9 {
                Some(qmin)
            } else {
                None
            };
            if let Some(limit) = pinned {
                self.kind[i] = BusType::PQ;
                self.q_spec[i] = limit - qd;
                switched = true;
            }
        }
        switched
    }

    pub fn extract(&self, model: &NetworkModel, iterations: usize, norm: f64) -> PfSolution {
        let mut solution = PfSolution {
            converged: true,
            iterations,
            max_mismatch: norm,
            vm: BTreeMap::new(),
            va: BTreeMap::new(),
            pg: BTreeMap::new(),
            qg: BTreeMap::new(),
            flows: BTreeMap::new(),
        };
        for (i, &id) in self.index.ids.iter().enumerate() {
            solution.vm.insert(id, self.vm[i]);
            solution.va.insert(id, self.va[i]);
        }
        let v = self.voltages();
        let s = self.ybus.injections(&v);
        allocate_dispatch(model, &self.index, &s, &mut solution);
        for br in model.in_service_branches() {
            let flow = branch_flow(br, v[self.index.of(br.f_bus)], v[self.index.of(br.t_bus)]);
            solution.flows.insert(br.id, flow);
        }
        solution
    }
}

/// Full AC power flow (Newton-Raphson, polar). PV buses hold their voltage
/// setpoint unless aggregate reactive limits force a switch to PQ
/// (`opts.enforce_q_limits`).
pub fn ac_pf(model: &NetworkModel, opts: &PfOptions) -> Result<PfSolution, PfError> {
    check_reference(model)?;
    let mut state = PfState::new(model, opts);
    let (mut iterations, mut norm) = state.solve_newton(opts)?;

    if opts.enforce_q_limits {
        // one-way PV -> PQ switching, re-solving warm from the last point
        for _ in 0..10 {
            let s = state.ybus.injections(&state.voltages());
            if !state.enforce_q_limits(model, &s) {
                break;
            }
            let (it, n) = state.solve_newton(opts)?;
            iterations += it;
            norm = n;
        }
    }

    Ok(state.extract(model, iterations, norm))
}


/// Evaluation handle for external verification of the Newton machinery:
/// exposes the mismatch vector and the analytic Jacobian at an arbitrary
/// voltage point so tests can difference them numerically.
#[doc(hidden)]
pub struct JacobianProbe {
    state: PfState,
    ang: Vec<usize>,
    mag: Vec<usize>,
}

impl JacobianProbe {
    pub fn new(model: &NetworkModel) -> Result<JacobianProbe, PfError> {
        check_reference(model)?;
        let state = PfState::new(model, &PfOptions::default());
        let (ang, mag) = state.equation_sets();
        Ok(JacobianProbe { state, ang, mag })
    }

    /// Number of unknowns: angles at non-reference buses then magnitudes
    /// at PQ buses.
    pub fn dim(&self) -> usize {
        self.ang.len() + self.mag.len()
    }

    pub fn set_x(&mut self, x: &[f64]) {
        for (c, &i) in self.ang.iter().enumerate() {
            self.state.va[i] = x[c];
        }
        for (c, &i) in self.mag.iter().enumerate() {
            self.state.vm[i] = x[self.ang.len() + c];
        }
    }

    pub fn x(&self) -> Vec<f64> {
        self.ang
            .iter()
            .map(|&i| self.state.va[i])
            .chain(self.mag.iter().map(|&i| self.state.vm[i]))
            .collect()
    }

    pub fn mismatch(&self) -> Vec<f64> {
        let s = self.state.ybus.injections(&self.state.voltages());
        self.state.mismatch(&s, &self.ang, &self.mag)
    }

    pub fn jacobian_dense(&self) -> Vec<Vec<f64>> {
        let s = self.state.ybus.injections(&self.state.voltages());
        let tri = self.state.jacobian(&s, &self.ang, &self.mag);
        let n = self.dim();
        let mut dense = vec![vec![0.0; n]; n];
        for t in &tri {
            dense[t.row][t.col] += t.val;
        }
        dense
    }
}
