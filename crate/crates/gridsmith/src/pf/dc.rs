//! Linearized "DC" power flow: B*theta = P with branch susceptance 1/x.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::netmodel::{BusType, NetworkModel};

use super::ybus::{BranchFlow, BusIndex};
use super::{allocate_dispatch, check_reference, PfError, PfSolution};

/// Solve the linear active-power flow. Taps and shifts are honored
/// (susceptance 1/(x*tap), shift as a fixed flow offset); bus conductance
/// loads are taken at vm = 1.
pub fn dc_pf(model: &NetworkModel) -> Result<PfSolution, PfError> {
    check_reference(model)?;
    let index = BusIndex::new(model);
    let n = index.len();

    // nodal susceptance matrix and shift injections
    let mut diag = vec![0.0; n];
    let mut tri: Vec<Triplet<usize, usize, f64>> = Vec::new();
    let mut p_shift = vec![0.0; n];
    for br in model.in_service_branches() {
        let b = 1.0 / (br.x * br.tap);
        let f = index.of(br.f_bus);
        let t = index.of(br.t_bus);
        diag[f] += b;
        diag[t] += b;
        tri.push(Triplet::new(f, t, -b));
        tri.push(Triplet::new(t, f, -b));
        p_shift[f] -= b * br.shift;
        p_shift[t] += b * br.shift;
    }

    // scheduled injections with conductance load at flat voltage
    let mut p_spec = vec![0.0; n];
    for (i, &id) in index.ids.iter().enumerate() {
        let (p, _) = model.scheduled_injection(id);
        p_spec[i] = p;
        for s in model.shunts_at(id).filter(|s| s.status) {
            p_spec[i] -= s.gs;
        }
    }

    // eliminate reference buses (angle fixed at the stored va)
    let is_ref: Vec<bool> = index
        .ids
        .iter()
        .map(|id| model.buses[id].bus_type == BusType::REF)
        .collect();
    let mut col = vec![usize::MAX; n];
    let mut kept = Vec::new();
    for i in 0..n {
        if !is_ref[i] {
            col[i] = kept.len();
            kept.push(i);
        }
    }
    let m = kept.len();

    let mut theta = vec![0.0; n];
    for (i, &id) in index.ids.iter().enumerate() {
        if is_ref[i] {
            theta[i] = model.buses[&id].va;
        }
    }

    if m > 0 {
        let mut rtri: Vec<Triplet<usize, usize, f64>> = Vec::new();
        let mut rhs = vec![0.0; m];
        for (r, &i) in kept.iter().enumerate() {
            rtri.push(Triplet::new(r, r, diag[i]));
            rhs[r] = p_spec[i] - p_shift[i];
        }
        for t in &tri {
            let (i, j, v) = (t.row, t.col, t.val);
            if col[i] != usize::MAX {
                if col[j] != usize::MAX {
                    rtri.push(Triplet::new(col[i], col[j], v));
                } else {
                    rhs[col[i]] -= v * theta[j];
                }
            }
        }
        let b_mat = SparseColMat::try_new_from_triplets(m, m, &rtri)
            .map_err(|_| PfError::Singular { iteration: 0 })?;
        let lu = b_mat
            .as_ref()
            .sp_lu()
            .map_err(|_| PfError::Singular { iteration: 0 })?;
        let rhs_mat = Mat::from_fn(m, 1, |r, _| rhs[r]);
        let sol = lu.solve(rhs_mat.as_ref());
        for (r, &i) in kept.iter().enumerate() {
            theta[i] = sol[(r, 0)];
            if !theta[i].is_finite() {
                return Err(PfError::Singular { iteration: 0 });
            }
        }
    }

    let mut solution = PfSolution {
        converged: true,
        iterations: 1,
        max_mismatch: 0.0,
        ..Default::default()
    };
    for (i, &id) in index.ids.iter().enumerate() {
        solution.vm.insert(id, 1.0);
        solution.va.insert(id, theta[i]);
    }

    // lossless flows p = (theta_f - theta_t - shift) / (x*tap)
    let mut net = vec![0.0; n];
    for br in model.in_service_branches() {
        let f = index.of(br.f_bus);
        let t = index.of(br.t_bus);
        let p = (theta[f] - theta[t] - br.shift) / (br.x * br.tap);
        solution.flows.insert(
            br.id,
            BranchFlow {
                p_fr: p,
                q_fr: 0.0,
                p_to: -p,
                q_to: 0.0,
            },
        );
        net[f] += p;
        net[t] -= p;
    }

    // dispatch: computed injection at each bus plus conductance load
    let injections: Vec<num_complex::Complex64> = (0..n)
        .map(|i| {
            let gs: f64 = model
                .shunts_at(index.id(i))
                .filter(|s| s.status)
                .map(|s| s.gs)
                .sum();
            num_complex::Complex64::new(net[i] + gs, 0.0)
        })
        .collect();
    allocate_dispatch(model, &index, &injections, &mut solution);
    // reactive dispatch is meaningless in DC
    let qs: Vec<usize> = solution.qg.keys().copied().collect();
    for id in qs {
        solution.qg.insert(id, 0.0);
    }

    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Branch, Bus, Gen, Load};

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

    #[test]
    fn single_line_identity() {
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PQ));
        m.branches.insert(1, Branch::new(1, 1, 2, 0.0, 0.1));
        let mut g = Gen::new(1, 1);
        g.pmax = 10.0;
        m.gens.insert(1, g);
        m.loads.insert(
            1,
            Load {
                id: 1,
                bus: 2,
                pd: 1.0,
                qd: 0.0,
                status: true,
            },
        );
        let sol = dc_pf(&m).unwrap();
        assert!((sol.va[&2] - (-0.1)).abs() < 1e-12);
        assert!((sol.flows[&1].p_fr - 1.0).abs() < 1e-12);
        assert!((sol.pg[&1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_splits_two_thirds_one_third() {
        // equal reactances: direct path carries 2/3, two-hop path 1/3
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PQ));
        m.buses.insert(3, bus(3, BusType::PQ));
        m.branches.insert(1, Branch::new(1, 1, 2, 0.0, 0.1));
        m.branches.insert(2, Branch::new(2, 2, 3, 0.0, 0.1));
        m.branches.insert(3, Branch::new(3, 1, 3, 0.0, 0.1));
        let mut g = Gen::new(1, 1);
        g.pmax = 10.0;
        m.gens.insert(1, g);
        m.loads.insert(
            1,
            Load {
                id: 1,
                bus: 2,
                pd: 0.9,
                qd: 0.0,
                status: true,
            },
        );
        let sol = dc_pf(&m).unwrap();
        assert!((sol.flows[&1].p_fr - 0.6).abs() < 1e-12);
        assert!((sol.flows[&3].p_fr - 0.3).abs() < 1e-12);
        assert!((sol.flows[&2].p_fr - (-0.3)).abs() < 1e-12);
    }

    #[test]
    fn lossless_balance_and_linearity() {
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PQ));
        m.buses.insert(3, bus(3, BusType::PQ));
        m.branches.insert(1, Branch::new(1, 1, 2, 0.01, 0.2));
        m.branches.insert(2, Branch::new(2, 2, 3, 0.01, 0.25));
        let mut g = Gen::new(1, 1);
        g.pmax = 10.0;
        m.gens.insert(1, g);
        for (id, p) in [(1, 0.4), (2, 0.25)] {
            m.loads.insert(
                id,
                Load {
                    id,
                    bus: id + 1,
                    pd: p,
                    qd: 0.0,
                    status: true,
                },
            );
        }
        let sol = dc_pf(&m).unwrap();
        let gen: f64 = sol.pg.values().sum();
        assert!((gen - 0.65).abs() < 1e-12);

        // scale loads by c: angles scale by c
        let mut scaled = m.clone();
        for l in scaled.loads.values_mut() {
            l.pd *= 2.0;
        }
        let sol2 = dc_pf(&scaled).unwrap();
        for id in [2, 3] {
            assert!((sol2.va[&id] - 2.0 * sol.va[&id]).abs() < 1e-12);
        }
    }

    #[test]
    fn islanded_without_reference_fails() {
        let mut m = NetworkModel::new("t", 100.0);
        m.buses.insert(1, bus(1, BusType::REF));
        m.buses.insert(2, bus(2, BusType::PQ));
        // no branch: bus 2 is an island without a reference
        assert!(matches!(dc_pf(&m), Err(PfError::BadReference { .. })));
    }
}
