//! DC optimal power flow as a sparse LP (QP when quadratic costs exist).
//!
//! Variables: bus angles, generator outputs, branch flows, and (optionally)
//! split nodal slacks s+ - s- with an l1 penalty. Constraints: flow
//! definition f = (va_f - va_t - shift)/(x*tap) per branch and active
//! power balance per bus. Reference angles are fixed variables.

use std::collections::BTreeMap;
use std::time::Instant;

use faer::sparse::Triplet;

use crate::netmodel::{BusType, NetworkModel};
use crate::pf::ybus::BusIndex;
use crate::pf::BranchFlow;

use super::lp::SparseQp;
use super::nlp::{self, IpmOptions, IpmStatus};
use super::{cost_coefficients, default_penalty, Binding, OpfError, OpfResult, OpfStatus};

#[derive(Debug, Clone, Copy)]
pub struct DcOpfOptions {
    /// Add nodal slack variables with penalty cost.
    pub slack: bool,
    /// Penalty in currency per MWh of nodal imbalance; default
    /// 1e4 x the largest linear cost coefficient.
    pub penalty: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DcOpfOptions {
    fn default() -> Self {
        DcOpfOptions {
            slack: false,
            penalty: None,
            tol: 1e-6,
            max_iter: 300,
        }
    }
}

pub fn dc_opf(model: &NetworkModel, opts: &DcOpfOptions) -> Result<OpfResult, OpfError> {
    let start = Instant::now();
    crate::pf::check_reference(model)?;
    let base = model.base_mva;
    let index = BusIndex::new(model);
    let n = index.len();

    let gens: Vec<&crate::netmodel::Gen> = model.in_service_gens().collect();
    let branches: Vec<&crate::netmodel::Branch> = model.in_service_branches().collect();
    for br in &branches {
        if br.x == 0.0 {
            return Err(OpfError::ZeroReactance(br.id));
        }
    }
    let ng = gens.len();
    let nb = branches.len();

    // variable layout; slack columns are always built: they keep the
    // barrier subproblems strictly interior even when balance rows pin
    // variables to their bounds, and they turn primal infeasibility into
    // a measurable quantity
    let off_theta = 0;
    let off_pg = off_theta + n;
    let off_flow = off_pg + ng;
    let off_slack = off_flow + nb;
    let nvars = off_slack + 2 * n;

    // constraint layout: flow definitions then bus balance
    let row_flow = 0;
    let row_bal = row_flow + nb;
    let ncons = row_bal + n;

    let mut qp = SparseQp::new(nvars, ncons);
    qp.q_diag = vec![0.0; nvars];

    // angles: free, reference fixed at its stored value
    for (i, &id) in index.ids.iter().enumerate() {
        let bus = &model.buses[&id];
        if bus.bus_type == BusType::REF {
            qp.lower[off_theta + i] = bus.va;
            qp.upper[off_theta + i] = bus.va;
        }
        qp.x0[off_theta + i] = 0.0;
    }

    // generator boxes and costs
    for (g, gen) in gens.iter().enumerate() {
        let (c2, c1, c0) = cost_coefficients(gen)?;
        let col = off_pg + g;
        qp.lower[col] = gen.pmin.min(gen.pmax);
        qp.upper[col] = gen.pmax;
        qp.x0[col] = 0.5 * (qp.lower[col] + qp.upper[col]);
        qp.c[col] = c1 * base;
        qp.q_diag[col] = c2 * base * base;
        qp.c0 += c0;
    }

    // flow variables, definitions and limits
    for (k, br) in branches.iter().enumerate() {
        let col = off_flow + k;
        let b = 1.0 / (br.x * br.tap);
        if br.rate_a > 0.0 {
            qp.lower[col] = -br.rate_a / base;
            qp.upper[col] = br.rate_a / base;
        }
        let f = index.of(br.f_bus);
        let t = index.of(br.t_bus);
        qp.a.push(Triplet::new(row_flow + k, col, 1.0));
        qp.a.push(Triplet::new(row_flow + k, off_theta + f, -b));
        qp.a.push(Triplet::new(row_flow + k, off_theta + t, b));
        qp.b[row_flow + k] = -b * br.shift;
        // balance coupling
        qp.a.push(Triplet::new(row_bal + f, col, -1.0));
        qp.a.push(Triplet::new(row_bal + t, col, 1.0));
    }

    // balance rows: sum(pg) - net flow (+ slack) = load + conductance
    for (g, gen) in gens.iter().enumerate() {
        let i = index.of(gen.bus);
        qp.a.push(Triplet::new(row_bal + i, off_pg + g, 1.0));
    }
    for (i, &id) in index.ids.iter().enumerate() {
        let mut demand = 0.0;
        for l in model.loads_at(id).filter(|l| l.status) {
            demand += l.pd;
        }
        for s in model.shunts_at(id).filter(|s| s.status) {
            demand += s.gs;
        }
        qp.b[row_bal + i] = demand;
    }

    let penalty = opts.penalty.unwrap_or_else(|| default_penalty(model)) * base;
    for i in 0..n {
        for (which, sign) in [(0usize, 1.0), (1usize, -1.0)] {
            let col = off_slack + 2 * i + which;
            qp.lower[col] = 0.0;
            qp.c[col] = penalty;
            qp.a.push(Triplet::new(row_bal + i, col, sign));
        }
    }
    if opts.slack {
        // small quadratic cost on flows: imbalance absorbed anywhere on a
        // lossless network is degenerate, and an analytic-center split
        // smears the slack over many buses. Preferring small flows pins
        // the slack at the defective bus the way real losses would.
        for k in 0..nb {
            qp.q_diag[off_flow + k] = 1e-4 * penalty;
        }
    }

    // the internal big-M slack columns dominate the objective scaling, so
    // the scaled KKT tolerance must sit well below the requested accuracy
    // for the physical variables to resolve
    let ipm_opts = IpmOptions {
        tol: opts.tol * 1e-3,
        max_iter: opts.max_iter,
        ..Default::default()
    };
    let sol = nlp::solve(&qp, &ipm_opts)?;

    let total_slack: f64 = (0..2 * n).map(|j| sol.x[off_slack + j].abs()).sum();
    let status = match sol.status {
        // without user-requested slack, any residual imbalance absorbed by
        // the internal elastic columns means the plain problem is infeasible
        IpmStatus::Optimal if !opts.slack && total_slack > 1e-6 => OpfStatus::Infeasible,
        IpmStatus::Optimal => OpfStatus::Optimal,
        IpmStatus::Infeasible => OpfStatus::Infeasible,
        IpmStatus::IterLimit => OpfStatus::IterLimit,
    };

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
        solve_seconds: start.elapsed().as_secs_f64(),
    };

    for (i, &id) in index.ids.iter().enumerate() {
        result.vm.insert(id, 1.0);
        result.va.insert(id, sol.x[off_theta + i]);
    }
    let mut dispatch_cost = qp.c0;
    for (g, gen) in gens.iter().enumerate() {
        let p = sol.x[off_pg + g];
        result.pg.insert(gen.id, p);
        result.qg.insert(gen.id, 0.0);
        let (c2, c1, _) = cost_coefficients(gen)?;
        dispatch_cost += c2 * (p * base).powi(2) + c1 * p * base;
        let span = (gen.pmax - gen.pmin).abs().max(1e-6);
        if gen.pmax - p < 1e-4 * span {
            result.binding.push(Binding::GenPMax { gen: gen.id });
        } else if p - gen.pmin < 1e-4 * span {
            result.binding.push(Binding::GenPMin { gen: gen.id });
        }
    }
    result.dispatch_cost = dispatch_cost;
    if !opts.slack {
        // internal elastic columns are an implementation detail here: at
        // feasibility their penalty contribution is below the solver
        // tolerance, so the generation cost is the LP optimum
        result.objective = dispatch_cost;
    }

    for (k, br) in branches.iter().enumerate() {
        let p = sol.x[off_flow + k];
        result.flows.insert(
            br.id,
            BranchFlow {
                p_fr: p,
                q_fr: 0.0,
                p_to: -p,
                q_to: 0.0,
            },
        );
        if br.rate_a > 0.0 {
            let lim = br.rate_a / base;
            if lim - p.abs() < 1e-4 * lim {
                result.binding.push(Binding::BranchFlowFrom { branch: br.id });
            }
        }
    }

    if opts.slack {
        for (i, &id) in index.ids.iter().enumerate() {
            let s = sol.x[off_slack + 2 * i] - sol.x[off_slack + 2 * i + 1];
            result.slack_p.insert(id, s);
        }
    }

    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Branch, Bus, Gen, GenCost, Load};

    fn bus(id: usize, bt: BusType) -> Bus {
        Bus {
            id,
            area: 1,
            base_kv: 330.0,
            bus_type: bt,
            vm: 1.0,
            va: 0.0,
            vmin: 0.9,
            vmax: 1.1,
        }
    }

    fn gen(id: usize, at: usize, pmax: f64, c1: f64) -> Gen {
        let mut g = Gen::new(id, at);
        g.pmax = pmax;
        g.qmin = -10.0;
        g.qmax = 10.0;
        g.cost = Some(GenCost::linear(c1, 0.0));
        g
    }

    fn load(id: usize, at: usize, pd: f64) -> Load {
        Load {
            id,
            bus: at,
            pd,
            qd: 0.0,
            status: true,
        }
    }

    #[test]
    fn slack_absorbs_shortfall() {
        // gen can supply 1.0 pu, load wants 1.5: slack of 0.5 at the load bus
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PQ));
        m.branches.insert(1, Branch::new(1, 1, 2, 0.0, 0.1));
        m.gens.insert(1, gen(1, 1, 1.0, 10.0));
        m.loads.insert(1, load(1, 2, 1.5));

        let r = dc_opf(
            &m,
            &DcOpfOptions {
                slack: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.status, OpfStatus::Optimal);
        assert!((r.pg[&1] - 1.0).abs() < 1e-5, "pg = {}", r.pg[&1]);
        assert!((r.slack_p[&2] - 0.5).abs() < 1e-4, "slack {:?}", r.slack_p);
        assert!((r.worst_slack_bus().unwrap().0) == 2);
    }

    #[test]
    fn infeasible_without_slack() {
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PQ));
        m.branches.insert(1, Branch::new(1, 1, 2, 0.0, 0.1));
        m.gens.insert(1, gen(1, 1, 1.0, 10.0));
        m.loads.insert(1, load(1, 2, 1.5));
        let r = dc_opf(&m, &DcOpfOptions::default()).unwrap();
        assert_eq!(r.status, OpfStatus::Infeasible);
    }

    #[test]
    fn merit_order_dispatch() {
        // cheap unit loads to its limit before the expensive one runs
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PV));
        m.buses.insert(3, bus(3, BusType::PQ));
        m.branches.insert(1, Branch::new(1, 1, 3, 0.0, 0.1));
        m.branches.insert(2, Branch::new(2, 2, 3, 0.0, 0.1));
        m.gens.insert(1, gen(1, 1, 0.6, 5.0));
        m.gens.insert(2, gen(2, 2, 1.0, 25.0));
        m.loads.insert(1, load(1, 3, 1.0));

        let r = dc_opf(&m, &DcOpfOptions::default()).unwrap();
        assert_eq!(r.status, OpfStatus::Optimal);
        assert!((r.pg[&1] - 0.6).abs() < 1e-5);
        assert!((r.pg[&2] - 0.4).abs() < 1e-5);
        // objective: 0.6*100*5 + 0.4*100*25 = 1300 $/h
        assert!((r.objective - 1300.0).abs() < 0.1, "obj {}", r.objective);
        assert!(r.binding.contains(&Binding::GenPMax { gen: 1 }));
    }

    #[test]
    fn zero_load_zero_dispatch() {
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PQ));
        m.branches.insert(1, Branch::new(1, 1, 2, 0.0, 0.1));
        m.gens.insert(1, gen(1, 1, 1.0, 10.0));
        let r = dc_opf(&m, &DcOpfOptions::default()).unwrap();
        assert_eq!(r.status, OpfStatus::Optimal);
        assert!(r.pg[&1].abs() < 1e-6);
        assert!(r.objective.abs() < 1e-3);
    }

    #[test]
    fn line_limit_forces_expensive_local_gen() {
        // 2 buses: cheap remote gen behind a 0.3 pu line, pricey local gen
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PV));
        let mut br = Branch::new(1, 1, 2, 0.0, 0.1);
        br.rate_a = 30.0; // 0.3 pu
        m.branches.insert(1, br);
        m.gens.insert(1, gen(1, 1, 5.0, 1.0));
        m.gens.insert(2, gen(2, 2, 5.0, 50.0));
        m.loads.insert(1, load(1, 2, 1.0));

        let r = dc_opf(&m, &DcOpfOptions::default()).unwrap();
        assert_eq!(r.status, OpfStatus::Optimal);
        assert!((r.pg[&1] - 0.3).abs() < 1e-5);
        assert!((r.pg[&2] - 0.7).abs() < 1e-5);
        assert!(r
            .binding
            .iter()
            .any(|b| matches!(b, Binding::BranchFlowFrom { branch: 1 })));
    }
}
