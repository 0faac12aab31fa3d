//! AC optimal power flow as a nonlinear program in polar voltages.
//!
//! min sum of generator costs (+ slack penalty)
//! s.t. nodal P/Q balance (with optional signed slack),
//!      |S_ij|^2 <= rate^2 at both branch ends (slacked squared form),
//!      angle-difference bounds, voltage and generator boxes.
//!
//! Analytic gradient, Jacobian and Lagrangian Hessian; a Gauss-Newton
//! Hessian mode drops the second-order constraint terms for robustness.

use std::collections::BTreeMap;
use std::time::Instant;

use faer::sparse::Triplet;
use num_complex::Complex64;

use crate::netmodel::{Branch, BusType, Gen, NetworkModel};
use crate::pf::ybus::{branch_admittance, branch_flow, BusIndex, YBus};

use super::nlp::{self, IpmOptions, IpmStatus, NlpProblem};
use super::{cost_coefficients, default_penalty, Binding, OpfError, OpfResult, OpfStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    Exact,
    GaussNewton,
}

#[derive(Debug, Clone, Copy)]
pub struct AcOpfOptions {
    pub slack: bool,
    /// Penalty in currency per MWh of nodal imbalance.
    pub penalty: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub hessian: HessianMode,
}

impl Default for AcOpfOptions {
    fn default() -> Self {
        AcOpfOptions {
            slack: false,
            penalty: None,
            tol: 1e-6,
            max_iter: 400,
            hessian: HessianMode::Exact,
        }
    }
}

/// One rated branch end in the constraint set.
struct FlowEnd {
    /// local (metered) bus position, remote bus position
    local: usize,
    remote: usize,
    y_ee: Complex64,
    y_eo: Complex64,
    rate_pu2: f64,
}

pub(crate) struct AcOpfProblem<'a> {
    model: &'a NetworkModel,
    index: BusIndex,
    ybus: YBus,
    gens: Vec<&'a Gen>,
    branches: Vec<&'a Branch>,
    flow_ends: Vec<FlowEnd>,
    /// branch positions with enforceable angle-difference bounds
    ang_cons: Vec<usize>,
    costs: Vec<(f64, f64, f64)>,
    pd: Vec<f64>,
    qd: Vec<f64>,
    base: f64,
    penalty_pu: f64,
    slack: bool,
    hessian: HessianMode,
    // layout
    n: usize,
    off_vm: usize,
    off_pg: usize,
    off_qg: usize,
    off_s: usize,
    off_ang: usize,
    off_slk: usize,
    nvars: usize,
    ncons: usize,
}

impl<'a> AcOpfProblem<'a> {
    pub fn build(model: &'a NetworkModel, opts: &AcOpfOptions) -> Result<Self, OpfError> {
        let index = BusIndex::new(model);
        let ybus = YBus::build(model, &index);
        let n = index.len();
        let gens: Vec<&Gen> = model.in_service_gens().collect();
        let branches: Vec<&Branch> = model.in_service_branches().collect();

        let mut costs = Vec::with_capacity(gens.len());
        for g in &gens {
            costs.push(cost_coefficients(g)?);
        }

        let base = model.base_mva;
        let mut flow_ends = Vec::new();
        for br in branches.iter() {
            if br.rate_a <= 0.0 {
                continue;
            }
            let y = branch_admittance(br);
            let rate_pu2 = (br.rate_a / base).powi(2);
            let f = index.of(br.f_bus);
            let t = index.of(br.t_bus);
            flow_ends.push(FlowEnd {
                local: f,
                remote: t,
                y_ee: y.yff,
                y_eo: y.yft,
                rate_pu2,
            });
            flow_ends.push(FlowEnd {
                local: t,
                remote: f,
                y_ee: y.ytt,
                y_eo: y.ytf,
                rate_pu2,
            });
        }

        let ang_cons: Vec<usize> = branches
            .iter()
            .enumerate()
            .filter(|(_, br)| {
                br.angmin > -std::f64::consts::FRAC_PI_2
                    && br.angmax < std::f64::consts::FRAC_PI_2
                    && br.angmin < br.angmax
            })
            .map(|(k, _)| k)
            .collect();

        let mut pd = vec![0.0; n];
        let mut qd = vec![0.0; n];
        for l in model.loads.values().filter(|l| l.status) {
            let i = index.of(l.bus);
            pd[i] += l.pd;
            qd[i] += l.qd;
        }

        let off_vm = n;
        let off_pg = off_vm + n;
        let off_qg = off_pg + gens.len();
        let off_s = off_qg + gens.len();
        let off_ang = off_s + flow_ends.len();
        let off_slk = off_ang + ang_cons.len();
        let nvars = off_slk + if opts.slack { 4 * n } else { 0 };
        let ncons = 2 * n + flow_ends.len() + ang_cons.len();

        Ok(AcOpfProblem {
            model,
            index,
            ybus,
            gens,
            branches,
            flow_ends,
            ang_cons,
            costs,
            pd,
            qd,
            base,
            penalty_pu: opts.penalty.unwrap_or_else(|| default_penalty(model)) * base,
            slack: opts.slack,
            hessian: opts.hessian,
            n,
            off_vm,
            off_pg,
            off_qg,
            off_s,
            off_ang,
            off_slk,
            nvars,
            ncons,
        })
    }

    fn voltages(&self, x: &[f64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| Complex64::from_polar(x[self.off_vm + i], x[i]))
            .collect()
    }

    /// P, Q and their gradients wrt [theta_e, theta_o, v_e, v_o] at one end.
    #[allow(clippy::type_complexity)]
    fn end_flow(&self, fe: &FlowEnd, x: &[f64]) -> (f64, f64, [f64; 4], [f64; 4]) {
        let te = x[fe.local];
        let to = x[fe.remote];
        let ve = x[self.off_vm + fe.local];
        let vo = x[self.off_vm + fe.remote];
        let (g_ee, b_ee) = (fe.y_ee.re, fe.y_ee.im);
        let (g_eo, b_eo) = (fe.y_eo.re, fe.y_eo.im);
        let (sin, cos) = (te - to).sin_cos();
        let a = g_eo * cos + b_eo * sin;
        let b = g_eo * sin - b_eo * cos;
        let p = g_ee * ve * ve + ve * vo * a;
        let q = -b_ee * ve * ve + ve * vo * b;
        let dp = [-ve * vo * b, ve * vo * b, 2.0 * g_ee * ve + vo * a, ve * a];
        let dq = [ve * vo * a, -ve * vo * a, -2.0 * b_ee * ve + vo * b, ve * b];
        (p, q, dp, dq)
    }

    fn end_vars(&self, fe: &FlowEnd) -> [usize; 4] {
        [
            fe.local,
            fe.remote,
            self.off_vm + fe.local,
            self.off_vm + fe.remote,
        ]
    }
}

fn push_sym(tri: &mut Vec<Triplet<usize, usize, f64>>, i: usize, j: usize, v: f64) {
    if v == 0.0 {
        return;
    }
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    tri.push(Triplet::new(r, c, v));
}

impl NlpProblem for AcOpfProblem<'_> {
    fn num_vars(&self) -> usize {
        self.nvars
    }

    fn num_cons(&self) -> usize {
        self.ncons
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lb = vec![f64::NEG_INFINITY; self.nvars];
        let mut ub = vec![f64::INFINITY; self.nvars];
        for (i, &id) in self.index.ids.iter().enumerate() {
            let bus = &self.model.buses[&id];
            if bus.bus_type == BusType::REF {
                lb[i] = bus.va;
                ub[i] = bus.va;
            }
            lb[self.off_vm + i] = bus.vmin;
            ub[self.off_vm + i] = bus.vmax;
        }
        for (g, gen) in self.gens.iter().enumerate() {
            lb[self.off_pg + g] = gen.pmin.min(gen.pmax);
            ub[self.off_pg + g] = gen.pmax;
            lb[self.off_qg + g] = gen.qmin.min(gen.qmax);
            ub[self.off_qg + g] = gen.qmax;
        }
        for (s, fe) in self.flow_ends.iter().enumerate() {
            ub[self.off_s + s] = fe.rate_pu2;
        }
        for (k, &bpos) in self.ang_cons.iter().enumerate() {
            lb[self.off_ang + k] = self.branches[bpos].angmin;
            ub[self.off_ang + k] = self.branches[bpos].angmax;
        }
        if self.slack {
            for c in self.off_slk..self.nvars {
                lb[c] = 0.0;
            }
        }
        (lb, ub)
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.nvars];
        for (i, &id) in self.index.ids.iter().enumerate() {
            let bus = &self.model.buses[&id];
            x[i] = if bus.bus_type == BusType::REF {
                bus.va
            } else {
                0.0
            };
            x[self.off_vm + i] = 1.0_f64.clamp(bus.vmin, bus.vmax);
        }
        for (g, gen) in self.gens.iter().enumerate() {
            x[self.off_pg + g] = 0.5 * (gen.pmin.min(gen.pmax) + gen.pmax);
            x[self.off_qg + g] = 0.5 * (gen.qmin.min(gen.qmax) + gen.qmax);
        }
        for (s, fe) in self.flow_ends.iter().enumerate() {
            let (p, q, _, _) = self.end_flow(fe, &x);
            x[self.off_s + s] = (p * p + q * q).min(fe.rate_pu2 * 0.99);
        }
        x
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut obj = 0.0;
        for (g, &(c2, c1, c0)) in self.costs.iter().enumerate() {
            let p_mw = x[self.off_pg + g] * self.base;
            obj += c2 * p_mw * p_mw + c1 * p_mw + c0;
        }
        if self.slack {
            for c in self.off_slk..self.nvars {
                obj += self.penalty_pu * x[c];
            }
        }
        obj
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for (g, &(c2, c1, _)) in self.costs.iter().enumerate() {
            let p_mw = x[self.off_pg + g] * self.base;
            grad[self.off_pg + g] = (2.0 * c2 * p_mw + c1) * self.base;
        }
        if self.slack {
            for c in self.off_slk..self.nvars {
                grad[c] = self.penalty_pu;
            }
        }
    }

    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        let v = self.voltages(x);
        let s = self.ybus.injections(&v);
        for i in 0..self.n {
            out[i] = s[i].re + self.pd[i];
            out[self.n + i] = s[i].im + self.qd[i];
        }
        for (g, gen) in self.gens.iter().enumerate() {
            let i = self.index.of(gen.bus);
            out[i] -= x[self.off_pg + g];
            out[self.n + i] -= x[self.off_qg + g];
        }
        if self.slack {
            for i in 0..self.n {
                out[i] -= x[self.off_slk + 4 * i] - x[self.off_slk + 4 * i + 1];
                out[self.n + i] -= x[self.off_slk + 4 * i + 2] - x[self.off_slk + 4 * i + 3];
            }
        }
        let mut row = 2 * self.n;
        for (k, fe) in self.flow_ends.iter().enumerate() {
            let (p, q, _, _) = self.end_flow(fe, x);
            out[row] = p * p + q * q - x[self.off_s + k];
            row += 1;
        }
        for (k, &bpos) in self.ang_cons.iter().enumerate() {
            let br = self.branches[bpos];
            out[row] = x[self.index.of(br.f_bus)] - x[self.index.of(br.t_bus)]
                - x[self.off_ang + k];
            row += 1;
        }
    }

    fn jacobian(&self, x: &[f64]) -> Vec<Triplet<usize, usize, f64>> {
        let v = self.voltages(x);
        let s = self.ybus.injections(&v);
        let mut tri = Vec::new();

        // balance rows: injection derivatives over the ybus sparsity
        for i in 0..self.n {
            let vi = x[self.off_vm + i];
            let (p_i, q_i) = (s[i].re, s[i].im);
            for &(j, y) in &self.ybus.rows[i] {
                let (g, b) = (y.re, y.im);
                if j == i {
                    tri.push(Triplet::new(i, i, -q_i - b * vi * vi));
                    tri.push(Triplet::new(i, self.off_vm + i, p_i / vi + g * vi));
                    tri.push(Triplet::new(self.n + i, i, p_i - g * vi * vi));
                    tri.push(Triplet::new(self.n + i, self.off_vm + i, q_i / vi - b * vi));
                } else {
                    let vj = x[self.off_vm + j];
                    let (sin, cos) = (x[i] - x[j]).sin_cos();
                    let a_ij = g * cos + b * sin;
                    let b_ij = g * sin - b * cos;
                    tri.push(Triplet::new(i, j, vi * vj * b_ij));
                    tri.push(Triplet::new(i, self.off_vm + j, vi * a_ij));
                    tri.push(Triplet::new(self.n + i, j, -vi * vj * a_ij));
                    tri.push(Triplet::new(self.n + i, self.off_vm + j, vi * b_ij));
                }
            }
        }
        for (g, gen) in self.gens.iter().enumerate() {
            let i = self.index.of(gen.bus);
            tri.push(Triplet::new(i, self.off_pg + g, -1.0));
            tri.push(Triplet::new(self.n + i, self.off_qg + g, -1.0));
        }
        if self.slack {
            for i in 0..self.n {
                tri.push(Triplet::new(i, self.off_slk + 4 * i, -1.0));
                tri.push(Triplet::new(i, self.off_slk + 4 * i + 1, 1.0));
                tri.push(Triplet::new(self.n + i, self.off_slk + 4 * i + 2, -1.0));
                tri.push(Triplet::new(self.n + i, self.off_slk + 4 * i + 3, 1.0));
            }
        }

        let mut row = 2 * self.n;
        for (k, fe) in self.flow_ends.iter().enumerate() {
            let (p, q, dp, dq) = self.end_flow(fe, x);
            let vars = self.end_vars(fe);
            for c in 0..4 {
                let val = 2.0 * p * dp[c] + 2.0 * q * dq[c];
                tri.push(Triplet::new(row, vars[c], val));
            }
            tri.push(Triplet::new(row, self.off_s + k, -1.0));
            row += 1;
        }
        for (k, &bpos) in self.ang_cons.iter().enumerate() {
            let br = self.branches[bpos];
            tri.push(Triplet::new(row, self.index.of(br.f_bus), 1.0));
            tri.push(Triplet::new(row, self.index.of(br.t_bus), -1.0));
            tri.push(Triplet::new(row, self.off_ang + k, -1.0));
            row += 1;
        }
        tri
    }

    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_factor: f64,
        lambda: &[f64],
    ) -> Vec<Triplet<usize, usize, f64>> {
        let mut tri = Vec::new();
        for (g, &(c2, _, _)) in self.costs.iter().enumerate() {
            if c2 != 0.0 {
                let col = self.off_pg + g;
                tri.push(Triplet::new(
                    col,
                    col,
                    2.0 * c2 * self.base * self.base * obj_factor,
                ));
            }
        }

        let exact = self.hessian == HessianMode::Exact;

        if exact {
            // second derivatives of the bus injections
            for i in 0..self.n {
                let lp = lambda[i];
                let lq = lambda[self.n + i];
                if lp == 0.0 && lq == 0.0 {
                    continue;
                }
                let vi = x[self.off_vm + i];
                for &(j, y) in &self.ybus.rows[i] {
                    let (g, b) = (y.re, y.im);
                    if j == i {
                        push_sym(
                            &mut tri,
                            self.off_vm + i,
                            self.off_vm + i,
                            lp * 2.0 * g - lq * 2.0 * b,
                        );
                        continue;
                    }
                    let vj = x[self.off_vm + j];
                    let (sin, cos) = (x[i] - x[j]).sin_cos();
                    let a_ij = g * cos + b * sin;
                    let b_ij = g * sin - b * cos;
                    let (ti, tj, mi, mj) = (i, j, self.off_vm + i, self.off_vm + j);

                    let w_a = lp * a_ij + lq * b_ij; // multiplies the "a-like" pattern
                    let w_b = lp * b_ij - lq * a_ij; // multiplies the "b-like" pattern

                    // theta-theta block
                    push_sym(&mut tri, ti, ti, -vi * vj * w_a);
                    push_sym(&mut tri, ti, tj, vi * vj * w_a);
                    push_sym(&mut tri, tj, tj, -vi * vj * w_a);
                    // theta-vm block
                    push_sym(&mut tri, ti, mi, -vj * w_b);
                    push_sym(&mut tri, ti, mj, -vi * w_b);
                    push_sym(&mut tri, tj, mi, vj * w_b);
                    push_sym(&mut tri, tj, mj, vi * w_b);
                    // vm-vm block
                    push_sym(&mut tri, mi, mj, lp * a_ij + lq * b_ij);
                }
            }
        }

        // flow constraint blocks
        let mut row = 2 * self.n;
        for fe in &self.flow_ends {
            let lam = lambda[row];
            row += 1;
            if lam == 0.0 {
                continue;
            }
            let (p, q, dp, dq) = self.end_flow(fe, x);
            let vars = self.end_vars(fe);

            // gradient outer products (kept in both Hessian modes)
            for ci in 0..4 {
                for cj in 0..=ci {
                    let mut v = 2.0 * (dp[ci] * dp[cj] + dq[ci] * dq[cj]);
                    if exact {
                        v += 2.0 * (p * d2_flow_p(fe, x, self, ci, cj)
                            + q * d2_flow_q(fe, x, self, ci, cj));
                    }
                    push_sym(&mut tri, vars[ci], vars[cj], lam * v);
                }
            }
        }
        tri
    }
}

/// Second derivative of the end active power wrt vars (ci, cj) in the
/// local ordering [theta_e, theta_o, v_e, v_o].
fn d2_flow_p(fe: &FlowEnd, x: &[f64], p: &AcOpfProblem, ci: usize, cj: usize) -> f64 {
    let (hi, lo) = if ci >= cj { (ci, cj) } else { (cj, ci) };
    let ve = x[p.off_vm + fe.local];
    let vo = x[p.off_vm + fe.remote];
    let (g_ee, _) = (fe.y_ee.re, fe.y_ee.im);
    let (g_eo, b_eo) = (fe.y_eo.re, fe.y_eo.im);
    let (sin, cos) = (x[fe.local] - x[fe.remote]).sin_cos();
    let a = g_eo * cos + b_eo * sin;
    let b = g_eo * sin - b_eo * cos;
    match (hi, lo) {
        (0, 0) | (1, 1) => -ve * vo * a,
        (1, 0) => ve * vo * a,
        (2, 0) => -vo * b,
        (3, 0) => -ve * b,
        (2, 1) => vo * b,
        (3, 1) => ve * b,
        (2, 2) => 2.0 * g_ee,
        (3, 2) => a,
        _ => 0.0,
    }
}

fn d2_flow_q(fe: &FlowEnd, x: &[f64], p: &AcOpfProblem, ci: usize, cj: usize) -> f64 {
    let (hi, lo) = if ci >= cj { (ci, cj) } else { (cj, ci) };
    let ve = x[p.off_vm + fe.local];
    let vo = x[p.off_vm + fe.remote];
    let (_, b_ee) = (fe.y_ee.re, fe.y_ee.im);
    let (g_eo, b_eo) = (fe.y_eo.re, fe.y_eo.im);
    let (sin, cos) = (x[fe.local] - x[fe.remote]).sin_cos();
    let a = g_eo * cos + b_eo * sin;
    let b = g_eo * sin - b_eo * cos;
    match (hi, lo) {
        (0, 0) | (1, 1) => -ve * vo * b,
        (1, 0) => ve * vo * b,
        (2, 0) => vo * a,
        (3, 0) => ve * a,
        (2, 1) => -vo * a,
        (3, 1) => -ve * a,
        (2, 2) => -2.0 * b_ee,
        (3, 2) => b,
        _ => 0.0,
    }
}

/// Solve the AC-OPF.
pub fn ac_opf(model: &NetworkModel, opts: &AcOpfOptions) -> Result<OpfResult, OpfError> {
    let start = Instant::now();
    crate::pf::check_reference(model)?;
    let problem = AcOpfProblem::build(model, opts)?;
    let ipm_opts = IpmOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        ..Default::default()
    };
    let sol = nlp::solve(&problem, &ipm_opts)?;

    let status = match sol.status {
        IpmStatus::Optimal => OpfStatus::Optimal,
        IpmStatus::Infeasible => OpfStatus::Infeasible,
        IpmStatus::IterLimit => OpfStatus::IterLimit,
    };
    let x = &sol.x;

    let mut result = OpfResult {
        status,
        objective: sol.objective,
        dispatch_cost: 0.0,
        pg: BTreeMap::new(),
        qg: BTreeMap::new(),
        vm: BTreeMap::new(),
        va: BTreeMap::new(),
        slack_p: BTreeMap::new(),
        slack_q: BTreeMap::new(),
        flows: BTreeMap::new(),
        binding: Vec::new(),
        iterations: sol.iterations,
        kkt_error: sol.kkt_error,
        solve_seconds: 0.0,
    };

    for (i, &id) in problem.index.ids.iter().enumerate() {
        let bus = &model.buses[&id];
        let vm = x[problem.off_vm + i];
        result.va.insert(id, x[i]);
        result.vm.insert(id, vm);
        let span = (bus.vmax - bus.vmin).max(1e-9);
        if bus.vmax - vm < 1e-5 * span {
            result.binding.push(Binding::VoltageMax { bus: id });
        } else if vm - bus.vmin < 1e-5 * span {
            result.binding.push(Binding::VoltageMin { bus: id });
        }
    }

    let mut dispatch_cost = 0.0;
    for (g, gen) in problem.gens.iter().enumerate() {
        let p = x[problem.off_pg + g];
        let q = x[problem.off_qg + g];
        result.pg.insert(gen.id, p);
        result.qg.insert(gen.id, q);
        let (c2, c1, c0) = problem.costs[g];
        dispatch_cost += c2 * (p * problem.base).powi(2) + c1 * p * problem.base + c0;
        let pspan = (gen.pmax - gen.pmin).abs().max(1e-6);
        if gen.pmax - p < 1e-5 * pspan {
            result.binding.push(Binding::GenPMax { gen: gen.id });
        } else if p - gen.pmin < 1e-5 * pspan {
            result.binding.push(Binding::GenPMin { gen: gen.id });
        }
        let qspan = (gen.qmax - gen.qmin).abs().max(1e-6);
        if gen.qmax - q < 1e-5 * qspan {
            result.binding.push(Binding::GenQMax { gen: gen.id });
        } else if q - gen.qmin < 1e-5 * qspan {
            result.binding.push(Binding::GenQMin { gen: gen.id });
        }
    }
    result.dispatch_cost = dispatch_cost;

    let v = problem.voltages(x);
    for br in &problem.branches {
        let flow = branch_flow(
            br,
            v[problem.index.of(br.f_bus)],
            v[problem.index.of(br.t_bus)],
        );
        if br.rate_a > 0.0 {
            let lim = br.rate_a / problem.base;
            let s_fr = flow.p_fr.hypot(flow.q_fr);
            let s_to = flow.p_to.hypot(flow.q_to);
            if lim - s_fr < 1e-4 * lim {
                result.binding.push(Binding::BranchFlowFrom { branch: br.id });
            }
            if lim - s_to < 1e-4 * lim {
                result.binding.push(Binding::BranchFlowTo { branch: br.id });
            }
        }
        result.flows.insert(br.id, flow);
    }

    if problem.slack {
        for (i, &id) in problem.index.ids.iter().enumerate() {
            let sp = x[problem.off_slk + 4 * i] - x[problem.off_slk + 4 * i + 1];
            let sq = x[problem.off_slk + 4 * i + 2] - x[problem.off_slk + 4 * i + 3];
            result.slack_p.insert(id, sp);
            result.slack_q.insert(id, sq);
        }
    }

    result.solve_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct FeasibilityViolation {
    pub what: String,
    pub amount: f64,
}

/// Independent check of a returned operating point against every model
/// constraint, recomputed from the raw network data.
pub fn verify_ac_feasibility(
    model: &NetworkModel,
    result: &OpfResult,
    tol: f64,
) -> Vec<FeasibilityViolation> {
    let mut violations = Vec::new();
    let mut push = |what: String, amount: f64| {
        if amount > tol {
            violations.push(FeasibilityViolation { what, amount });
        }
    };

    let index = BusIndex::new(model);
    let ybus = YBus::build(model, &index);
    let v: Vec<Complex64> = index
        .ids
        .iter()
        .map(|id| Complex64::from_polar(result.vm[id], result.va[id]))
        .collect();
    let s = ybus.injections(&v);

    for (i, &id) in index.ids.iter().enumerate() {
        let bus = &model.buses[&id];
        push(format!("vm lower at bus {id}"), bus.vmin - result.vm[&id]);
        push(format!("vm upper at bus {id}"), result.vm[&id] - bus.vmax);

        let (mut p, mut q) = (s[i].re, s[i].im);
        for l in model.loads_at(id).filter(|l| l.status) {
            p += l.pd;
            q += l.qd;
        }
        for g in model.gens_at(id).filter(|g| g.status) {
            p -= result.pg.get(&g.id).copied().unwrap_or(0.0);
            q -= result.qg.get(&g.id).copied().unwrap_or(0.0);
        }
        p -= result.slack_p.get(&id).copied().unwrap_or(0.0);
        q -= result.slack_q.get(&id).copied().unwrap_or(0.0);
        push(format!("P balance at bus {id}"), p.abs());
        push(format!("Q balance at bus {id}"), q.abs());
    }

    for g in model.in_service_gens() {
        let p = result.pg.get(&g.id).copied().unwrap_or(0.0);
        let q = result.qg.get(&g.id).copied().unwrap_or(0.0);
        push(format!("pmax at gen {}", g.id), p - g.pmax);
        push(format!("pmin at gen {}", g.id), g.pmin.min(g.pmax) - p);
        push(format!("qmax at gen {}", g.id), q - g.qmax);
        push(format!("qmin at gen {}", g.id), g.qmin.min(g.qmax) - q);
    }

    for br in model.in_service_branches() {
        let flow = branch_flow(br, v[index.of(br.f_bus)], v[index.of(br.t_bus)]);
        if br.rate_a > 0.0 {
            let lim = br.rate_a / model.base_mva;
            push(
                format!("flow from at branch {}", br.id),
                flow.p_fr.hypot(flow.q_fr) - lim,
            );
            push(
                format!("flow to at branch {}", br.id),
                flow.p_to.hypot(flow.q_to) - lim,
            );
        }
        let dva = result.va[&br.f_bus] - result.va[&br.t_bus];
        if br.angmin > -std::f64::consts::FRAC_PI_2 && br.angmax < std::f64::consts::FRAC_PI_2 {
            push(format!("angmin at branch {}", br.id), br.angmin - dva);
            push(format!("angmax at branch {}", br.id), dva - br.angmax);
        }
    }
    violations
}


#[cfg(test)]
mod derivative_tests {
    use super::tests_support::*;
    use super::*;

    /// Central finite differences on objective gradient, constraint
    /// Jacobian and Lagrangian Hessian.
    pub(crate) fn check_derivatives(problem: &AcOpfProblem, x: &[f64], tol: f64) {
        let n = problem.num_vars();
        let m = problem.num_cons();
        let h = 1e-6;

        // gradient
        let mut grad = vec![0.0; n];
        problem.gradient(x, &mut grad);
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (problem.objective(&xp) - problem.objective(&xm)) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1.0);
            assert!(
                (grad[i] - fd).abs() / scale < tol,
                "gradient mismatch at {i}: {} vs {fd}",
                grad[i]
            );
        }

        // jacobian
        let tri = problem.jacobian(x);
        let mut jac = vec![vec![0.0; n]; m];
        for t in &tri {
            jac[t.row][t.col] += t.val;
        }
        let mut cp = vec![0.0; m];
        let mut cm = vec![0.0; m];
        for col in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[col] += h;
            xm[col] -= h;
            problem.constraints(&xp, &mut cp);
            problem.constraints(&xm, &mut cm);
            for row in 0..m {
                let fd = (cp[row] - cm[row]) / (2.0 * h);
                let scale = jac[row][col].abs().max(fd.abs()).max(1.0);
                assert!(
                    (jac[row][col] - fd).abs() / scale < tol,
                    "jacobian mismatch at ({row},{col}): {} vs {fd}",
                    jac[row][col]
                );
            }
        }

        // lagrangian hessian against FD of grad(L)
        let sigma = 0.7;
        let lambda: Vec<f64> = (0..m).map(|k| 0.3 + 0.1 * (k % 7) as f64).collect();
        let tri = problem.lagrangian_hessian(x, sigma, &lambda);
        let mut hess = vec![vec![0.0; n]; n];
        for t in &tri {
            hess[t.row][t.col] += t.val;
            if t.row != t.col {
                hess[t.col][t.row] += t.val;
            }
        }
        let grad_l = |x: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; n];
            problem.gradient(x, &mut g);
            for v in g.iter_mut() {
                *v *= sigma;
            }
            let tri = problem.jacobian(x);
            for t in &tri {
                g[t.col] += lambda[t.row] * t.val;
            }
            g
        };
        for col in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[col] += h;
            xm[col] -= h;
            let gp = grad_l(&xp);
            let gm = grad_l(&xm);
            for row in 0..n {
                let fd = (gp[row] - gm[row]) / (2.0 * h);
                let scale = hess[row][col].abs().max(fd.abs()).max(1.0);
                assert!(
                    (hess[row][col] - fd).abs() / scale < tol * 10.0,
                    "hessian mismatch at ({row},{col}): {} vs {fd}",
                    hess[row][col]
                );
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let m = random_network(42, 5);
        let problem = AcOpfProblem::build(&m, &AcOpfOptions::default()).unwrap();
        // displaced point away from flat start
        let mut x = problem.initial_point();
        let nv = x.len();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += 0.03 * ((i * 2654435761) % 97) as f64 / 97.0 - 0.015;
        }
        let _ = nv;
        check_derivatives(&problem, &x, 1e-5);
    }

    #[test]
    fn slack_problem_derivatives_match() {
        let m = random_network(7, 4);
        let problem = AcOpfProblem::build(
            &m,
            &AcOpfOptions {
                slack: true,
                ..Default::default()
            },
        )
        .unwrap();
        let mut x = problem.initial_point();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += 0.02 * ((i * 40503) % 89) as f64 / 89.0;
        }
        check_derivatives(&problem, &x, 1e-5);
    }
}
