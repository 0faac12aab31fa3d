//! Shared test support: fixture loading, random network generation, and a
//! dense two-phase simplex used as an independent LP oracle.

#![allow(dead_code)]

use gridsmith::netmodel::*;

pub fn case5() -> NetworkModel {
    gridsmith::matpower::parse_matpower(include_str!("../../fixtures/case5.m")).unwrap()
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Deterministic xorshift stream in [0, 1).
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Stream {
        Stream(seed.wrapping_mul(0x9e3779b97f4a7c15).max(1))
    }

    pub fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next() * n as f64) as usize).min(n - 1)
    }
}

/// Connected random network with generators, loads and costs.
pub fn random_network(seed: u64, nbus: usize) -> NetworkModel {
    let mut rng = Stream::new(seed);
    let mut m = NetworkModel::new(format!("rand{seed}"), 100.0);
    for id in 1..=nbus {
        m.buses.insert(
            id,
            Bus {
                id,
                area: 1000,
                base_kv: 330.0,
                bus_type: if id == 1 { BusType::REF } else { BusType::PQ },
                vm: 1.0,
                va: 0.0,
                vmin: 0.9,
                vmax: 1.1,
            },
        );
    }
    let mut bid = 0;
    for id in 2..=nbus {
        bid += 1;
        let mut br = Branch::new(bid, id - 1, id, 0.005 + 0.02 * rng.next(), 0.05 + 0.1 * rng.next());
        br.b_fr = 0.01 * rng.next();
        br.b_to = br.b_fr;
        br.rate_a = 200.0 + 150.0 * rng.next();
        m.branches.insert(bid, br);
    }
    for _ in 0..nbus / 2 {
        let a = 1 + rng.below(nbus);
        let b = 1 + rng.below(nbus);
        if a == b {
            continue;
        }
        bid += 1;
        let mut br = Branch::new(bid, a, b, 0.005 + 0.02 * rng.next(), 0.05 + 0.1 * rng.next());
        br.rate_a = 200.0 + 150.0 * rng.next();
        m.branches.insert(bid, br);
    }
    let second = 1 + nbus / 2;
    for (gid, at) in [(1, 1), (2, second)] {
        let mut g = Gen::new(gid, at);
        g.pmax = 2.0 + rng.next();
        g.qmin = -1.5;
        g.qmax = 1.5;
        g.vg = 1.0;
        g.cost = Some(GenCost::linear(5.0 + 20.0 * rng.next(), 0.0));
        m.gens.insert(gid, g);
    }
    if second != 1 {
        m.buses.get_mut(&second).unwrap().bus_type = BusType::PV;
    }
    for id in 2..=nbus {
        m.loads.insert(
            id,
            Load {
                id,
                bus: id,
                pd: 0.1 + 0.25 * rng.next(),
                qd: 0.05 * rng.next(),
                status: true,
            },
        );
    }
    m
}

/// Bounded-variable LP in equality form for the oracle.
pub struct OracleLp {
    pub c: Vec<f64>,
    pub c0: f64,
    /// Dense equality rows.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Minimize with a dense two-phase simplex (Bland's rule). Returns the
/// optimal objective; panics on infeasible/unbounded input since oracle
/// cases are constructed feasible.
pub fn simplex_solve(lp: &OracleLp) -> f64 {
    let n = lp.c.len();
    let m0 = lp.b.len();

    // convert to standard form: x >= 0 columns
    // column mapping: per variable, (positive part index, negative part index)
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut ncols = 0;
    for j in 0..n {
        if lp.lower[j].is_finite() {
            col_of.push((ncols, None));
            ncols += 1;
        } else {
            col_of.push((ncols, Some(ncols + 1)));
            ncols += 2;
        }
    }
    let upper_rows: Vec<usize> = (0..n).filter(|&j| lp.upper[j].is_finite()).collect();
    let m = m0 + upper_rows.len();
    let slack0 = ncols;
    ncols += upper_rows.len();

    // rows: original equalities with lower-bound shift, then upper bounds
    let mut a = vec![vec![0.0; ncols]; m];
    let mut b = vec![0.0; m];
    let mut c = vec![0.0; ncols];
    let mut c0 = lp.c0;

    for j in 0..n {
        let shift = if lp.lower[j].is_finite() { lp.lower[j] } else { 0.0 };
        c0 += lp.c[j] * shift;
        let (pos, neg) = col_of[j];
        c[pos] += lp.c[j];
        if let Some(neg) = neg {
            c[neg] -= lp.c[j];
        }
        for i in 0..m0 {
            let v = lp.a[i][j];
            if v != 0.0 {
                a[i][pos] += v;
                if let Some(neg) = neg {
                    a[i][neg] -= v;
                }
                b[i] -= v * shift;
            }
        }
    }
    for i in 0..m0 {
        b[i] += lp.b[i];
    }
    for (k, &j) in upper_rows.iter().enumerate() {
        let shift = if lp.lower[j].is_finite() { lp.lower[j] } else { 0.0 };
        let (pos, neg) = col_of[j];
        a[m0 + k][pos] = 1.0;
        if let Some(neg) = neg {
            a[m0 + k][neg] = -1.0;
        }
        a[m0 + k][slack0 + k] = 1.0;
        b[m0 + k] = lp.upper[j] - shift;
    }

    // phase 1 with artificials
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            for v in a[i].iter_mut() {
                *v = -*v;
            }
        }
    }
    let art0 = ncols;
    let total = ncols + m;
    let mut tableau = vec![vec![0.0; total]; m];
    for i in 0..m {
        tableau[i][..ncols].copy_from_slice(&a[i]);
        tableau[i][art0 + i] = 1.0;
    }
    let mut basis: Vec<usize> = (art0..total).collect();
    let phase1_cost: Vec<f64> = (0..total).map(|j| if j >= art0 { 1.0 } else { 0.0 }).collect();
    let feas = run_simplex(&mut tableau, &mut b, &mut basis, &phase1_cost, total);
    assert!(feas.abs() < 1e-7, "oracle LP infeasible (phase 1 = {feas})");

    // drive remaining artificials out of the basis where possible
    for i in 0..m {
        if basis[i] >= art0 {
            if let Some(j) = (0..ncols).find(|&j| tableau[i][j].abs() > 1e-9) {
                pivot(&mut tableau, &mut b, &mut basis, i, j);
            }
        }
    }

    let mut phase2_cost = vec![0.0; total];
    phase2_cost[..ncols].copy_from_slice(&c);
    // forbid artificials from re-entering
    for j in art0..total {
        phase2_cost[j] = 1e12;
    }
    let obj = run_simplex(&mut tableau, &mut b, &mut basis, &phase2_cost, ncols);
    obj + c0
}

fn pivot(tableau: &mut [Vec<f64>], b: &mut [f64], basis: &mut [usize], row: usize, col: usize) {
    let piv = tableau[row][col];
    for v in tableau[row].iter_mut() {
        *v /= piv;
    }
    b[row] /= piv;
    for i in 0..tableau.len() {
        if i == row {
            continue;
        }
        let factor = tableau[i][col];
        if factor != 0.0 {
            for j in 0..tableau[i].len() {
                tableau[i][j] -= factor * tableau[row][j];
            }
            b[i] -= factor * b[row];
        }
    }
    basis[row] = col;
}

/// Bland's-rule simplex; returns the optimal objective for the given cost.
fn run_simplex(
    tableau: &mut [Vec<f64>],
    b: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    enter_limit: usize,
) -> f64 {
    let m = tableau.len();
    for _round in 0..20000 {
        // reduced costs via the basis multipliers
        let mut y = vec![0.0; m];
        for i in 0..m {
            y[i] = cost[basis[i]];
        }
        let mut entering = None;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            let mut reduced = cost[j];
            for i in 0..m {
                reduced -= y[i] * tableau[i][j];
            }
            if reduced < -1e-9 {
                entering = Some(j);
                break; // Bland: lowest index
            }
        }
        let Some(col) = entering else {
            return (0..m).map(|i| cost[basis[i]] * b[i]).sum();
        };
        // ratio test, Bland ties by lowest basis index
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            if tableau[i][col] > 1e-9 {
                let ratio = b[i] / tableau[i][col];
                match best {
                    None => best = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12
                            || (ratio < br + 1e-12 && basis[i] < basis[bi])
                        {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let (row, _) = best.expect("oracle LP unbounded");
        pivot(tableau, b, basis, row, col);
    }
    panic!("oracle simplex exceeded the iteration cap");
}

/// Build the DC-OPF LP for the oracle straight from the network physics:
/// angle variables, per-branch flow variables with limits, nodal balance.
/// Independent of the production builder.
pub fn dc_opf_oracle(model: &NetworkModel) -> f64 {
    let buses: Vec<usize> = model.buses.keys().copied().collect();
    let pos = |id: usize| buses.iter().position(|&b| b == id).unwrap();
    let n = buses.len();
    let gens: Vec<&Gen> = model.gens.values().filter(|g| g.status).collect();
    let branches: Vec<&Branch> = model.branches.values().filter(|b| b.status).collect();
    let ng = gens.len();
    let nb = branches.len();

    let nvars = n + ng + nb;
    let mut lp = OracleLp {
        c: vec![0.0; nvars],
        c0: 0.0,
        a: vec![vec![0.0; nvars]; nb + n],
        b: vec![0.0; nb + n],
        lower: vec![f64::NEG_INFINITY; nvars],
        upper: vec![f64::INFINITY; nvars],
    };

    for (k, g) in gens.iter().enumerate() {
        let col = n + k;
        lp.lower[col] = g.pmin.min(g.pmax);
        lp.upper[col] = g.pmax;
        let cost = g.cost.as_ref().expect("oracle needs costs");
        let c1 = cost.coeffs[cost.coeffs.len() - 2];
        lp.c[col] = c1 * model.base_mva;
        lp.c0 += cost.coeffs[cost.coeffs.len() - 1];
    }
    for (i, &id) in buses.iter().enumerate() {
        if model.buses[&id].bus_type == BusType::REF {
            lp.lower[i] = model.buses[&id].va;
            lp.upper[i] = model.buses[&id].va;
        }
    }
    for (k, br) in branches.iter().enumerate() {
        let col = n + ng + k;
        let susceptance = 1.0 / (br.x * br.tap);
        if br.rate_a > 0.0 {
            lp.lower[col] = -br.rate_a / model.base_mva;
            lp.upper[col] = br.rate_a / model.base_mva;
        }
        lp.a[k][col] = 1.0;
        lp.a[k][pos(br.f_bus)] -= susceptance;
        lp.a[k][pos(br.t_bus)] += susceptance;
        lp.b[k] = -susceptance * br.shift;
        lp.a[nb + pos(br.f_bus)][col] -= 1.0;
        lp.a[nb + pos(br.t_bus)][col] += 1.0;
    }
    for (k, g) in gens.iter().enumerate() {
        lp.a[nb + pos(g.bus)][n + k] += 1.0;
    }
    for (i, &id) in buses.iter().enumerate() {
        let mut demand = 0.0;
        for l in model.loads.values().filter(|l| l.status && l.bus == id) {
            demand += l.pd;
        }
        for s in model.shunts.values().filter(|s| s.status && s.bus == id) {
            demand += s.gs;
        }
        lp.b[nb + i] = demand;
    }

    simplex_solve(&lp)
}
