//! Bus indexing, Y-bus assembly and branch flow evaluation.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::netmodel::{Branch, NetworkModel};

/// Maps external bus ids to dense matrix positions (sorted by id).
#[derive(Debug, Clone)]
pub struct BusIndex {
    pub ids: Vec<usize>,
    pos: BTreeMap<usize, usize>,
}

impl BusIndex {
    pub fn new(model: &NetworkModel) -> Self {
        let ids: Vec<usize> = model.buses.keys().copied().collect();
        let pos = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        BusIndex { ids, pos }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn of(&self, bus_id: usize) -> usize {
        self.pos[&bus_id]
    }

    pub fn id(&self, pos: usize) -> usize {
        self.ids[pos]
    }
}

/// Per-branch admittance blocks for the standard Π-with-ideal-tap model.
#[derive(Debug, Clone, Copy)]
pub struct BranchAdmittance {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

pub fn branch_admittance(br: &Branch) -> BranchAdmittance {
    let ys = Complex64::new(br.r, br.x).inv();
    let t2 = br.tap * br.tap;
    let shift = Complex64::from_polar(1.0, br.shift);
    BranchAdmittance {
        yff: (ys + Complex64::new(0.0, br.b_fr)) / t2,
        yft: -ys / (br.tap * shift.conj()),
        ytf: -ys / (br.tap * shift),
        ytt: ys + Complex64::new(0.0, br.b_to),
    }
}

/// Sparse bus admittance matrix as sorted adjacency rows.
#[derive(Debug, Clone)]
pub struct YBus {
    pub n: usize,
    /// Row i holds sorted (col, Y_ij) pairs with duplicates merged.
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

impl YBus {
    pub fn build(model: &NetworkModel, index: &BusIndex) -> YBus {
        let n = index.len();
        let mut entries: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); n];
        let mut add = |i: usize, j: usize, v: Complex64| {
            *entries[i].entry(j).or_insert(Complex64::ZERO) += v;
        };

        for br in model.in_service_branches() {
            let f = index.of(br.f_bus);
            let t = index.of(br.t_bus);
            let y = branch_admittance(br);
            add(f, f, y.yff);
            add(f, t, y.yft);
            add(t, f, y.ytf);
            add(t, t, y.ytt);
        }
        for s in model.shunts.values().filter(|s| s.status) {
            let i = index.of(s.bus);
            add(i, i, Complex64::new(s.gs, s.bs));
        }

        YBus {
            n,
            rows: entries
                .into_iter()
                .map(|row| row.into_iter().collect())
                .collect(),
        }
    }

    /// Complex nodal injections S = diag(V) * conj(Y * V).
    pub fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let current: Complex64 = self.rows[i]
                    .iter()
                    .map(|&(j, y)| y * v[j])
                    .sum();
                v[i] * current.conj()
            })
            .collect()
    }
}

/// Complex power entering a branch at each end (pu).
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BranchFlow {
    pub p_fr: f64,
    pub q_fr: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl BranchFlow {
    /// Larger apparent power of the two ends (pu).
    pub fn s_max(&self) -> f64 {
        let s_fr = self.p_fr.hypot(self.q_fr);
        let s_to = self.p_to.hypot(self.q_to);
        s_fr.max(s_to)
    }
}

pub fn branch_flow(br: &Branch, v_f: Complex64, v_t: Complex64) -> BranchFlow {
    let y = branch_admittance(br);
    let s_f = v_f * (y.yff * v_f + y.yft * v_t).conj();
    let s_t = v_t * (y.ytf * v_f + y.ytt * v_t).conj();
    BranchFlow {
        p_fr: s_f.re,
        q_fr: s_f.im,
        p_to: s_t.re,
        q_to: s_t.im,
    }
}
