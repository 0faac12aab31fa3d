//! Network reduction: ideal-line/breaker removal and degree-2 series joins.
//!
//! Two rules, applied in order, each to a fixpoint:
//! 1. in-service non-transformer branches that look like ideal lines or
//!    closed breakers are eliminated by merging their endpoint buses:
//!    either |z| below `z_small` with total charging below `b_small`, or
//!    X/R above `xr_high` with total charging below `b_small`;
//! 2. buses of degree 2 with no attached devices disappear, their two
//!    incident line branches replaced by the series sum.
//!
//! Bus merges keep the lower id and the tighter voltage bounds. Branches
//! that become self-loops are dropped, with their charging preserved as a
//! bus shunt so device admittance is conserved exactly.

use serde::{Deserialize, Serialize};

use crate::netmodel::{Branch, BranchOrigin, BusType, NetworkModel, Shunt};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReductionConfig {
    /// Impedance magnitude threshold (pu).
    pub z_small: f64,
    /// Total charging susceptance threshold (pu).
    pub b_small: f64,
    /// X/R ratio threshold.
    pub xr_high: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            z_small: 0.01,
            b_small: 0.01,
            xr_high: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalRule {
    SmallImpedance,
    HighXr,
    SelfLoop,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemovalEvent {
    pub branch: usize,
    pub rule: RemovalRule,
    /// Bus that was merged away (0 for self-loop drops).
    pub removed_bus: usize,
    /// Surviving bus.
    pub into_bus: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JoinEvent {
    pub removed_bus: usize,
    pub branches: [usize; 2],
    pub new_branch: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReductionLog {
    pub removals: Vec<RemovalEvent>,
    pub joins: Vec<JoinEvent>,
}

fn qualifies(br: &Branch, cfg: &ReductionConfig) -> Option<RemovalRule> {
    if !br.status || br.is_transformer {
        return None;
    }
    if br.total_charging() >= cfg.b_small {
        return None;
    }
    if br.z_mag() < cfg.z_small {
        Some(RemovalRule::SmallImpedance)
    } else if br.xr_ratio() > cfg.xr_high {
        Some(RemovalRule::HighXr)
    } else {
        None
    }
}

/// Merge `dead` into `keep`: retarget branch endpoints and devices, tighten
/// voltage bounds, promote the bus type if the dead bus outranked the
/// survivor. Self-loops produced by the merge are dropped with their
/// charging converted to a bus shunt.
fn merge_buses(
    model: &mut NetworkModel,
    keep: usize,
    dead: usize,
    log: &mut Vec<RemovalEvent>,
) {
    let dead_bus = model.buses.remove(&dead).expect("dead bus exists");
    {
        let bus = model.buses.get_mut(&keep).expect("surviving bus exists");
        bus.vmin = bus.vmin.max(dead_bus.vmin);
        bus.vmax = bus.vmax.min(dead_bus.vmax);
        let rank = |t: BusType| match t {
            BusType::REF => 2,
            BusType::PV => 1,
            BusType::PQ => 0,
        };
        if rank(dead_bus.bus_type) > rank(bus.bus_type) {
            bus.bus_type = dead_bus.bus_type;
        }
    }

    for g in model.gens.values_mut() {
        if g.bus == dead {
            g.bus = keep;
        }
    }
    for l in model.loads.values_mut() {
        if l.bus == dead {
            l.bus = keep;
        }
    }
    for s in model.shunts.values_mut() {
        if s.bus == dead {
            s.bus = keep;
        }
    }

    let mut self_loops = Vec::new();
    for br in model.branches.values_mut() {
        if br.f_bus == dead {
            br.f_bus = keep;
        }
        if br.t_bus == dead {
            br.t_bus = keep;
        }
        if br.f_bus == br.t_bus {
            self_loops.push(br.id);
        }
    }
    for id in self_loops {
        let br = model.branches.remove(&id).expect("self-loop exists");
        let b_total = br.b_fr + br.b_to;
        if br.status && b_total != 0.0 {
            let sid = model.shunts.keys().next_back().map_or(1, |k| k + 1);
            model.shunts.insert(
                sid,
                Shunt {
                    id: sid,
                    bus: keep,
                    gs: 0.0,
                    bs: b_total,
                    status: true,
                },
            );
        }
        log.push(RemovalEvent {
            branch: id,
            rule: RemovalRule::SelfLoop,
            removed_bus: 0,
            into_bus: keep,
        });
    }
}

/// Remove ideal lines and breakers to a fixpoint.
pub fn remove_ideal_lines(
    model: &NetworkModel,
    cfg: &ReductionConfig,
) -> (NetworkModel, Vec<RemovalEvent>) {
    let mut out = model.clone();
    let mut log = Vec::new();
    loop {
        let hit = out
            .branches
            .values()
            .find_map(|br| qualifies(br, cfg).map(|rule| (br.id, rule)));
        let Some((id, rule)) = hit else {
            return (out, log);
        };
        let br = out.branches.remove(&id).expect("candidate exists");
        let keep = br.f_bus.min(br.t_bus);
        let dead = br.f_bus.max(br.t_bus);
        log.push(RemovalEvent {
            branch: id,
            rule,
            removed_bus: dead,
            into_bus: keep,
        });
        if keep != dead {
            merge_buses(&mut out, keep, dead, &mut log);
        }
    }
}

fn join_candidate(model: &NetworkModel) -> Option<(usize, usize, usize)> {
    // bus -> (in-service line branches, any other attachment)
    for bus in model.buses.values() {
        if bus.bus_type == BusType::REF {
            continue;
        }
        let mut incident = Vec::new();
        let mut blocked = false;
        for br in model.branches.values() {
            if br.f_bus != bus.id && br.t_bus != bus.id {
                continue;
            }
            if !br.status || br.is_transformer {
                blocked = true;
                break;
            }
            incident.push(br.id);
            if incident.len() > 2 {
                break;
            }
        }
        if blocked || incident.len() != 2 {
            continue;
        }
        if model.gens_at(bus.id).next().is_some()
            || model.loads_at(bus.id).next().is_some()
            || model.shunts_at(bus.id).next().is_some()
        {
            continue;
        }
        let (a, b) = (incident[0], incident[1]);
        let other = |id: usize| {
            let br = &model.branches[&id];
            if br.f_bus == bus.id {
                br.t_bus
            } else {
                br.f_bus
            }
        };
        if other(a) == other(b) || other(a) == bus.id || other(b) == bus.id {
            continue; // parallel pair or self-loop: not a series chain
        }
        return Some((bus.id, a, b));
    }
    None
}

/// Orient a branch so that `t_bus == at`, swapping end charging as needed.
fn oriented(br: &Branch, at: usize) -> Branch {
    let mut out = br.clone();
    if out.t_bus != at {
        std::mem::swap(&mut out.f_bus, &mut out.t_bus);
        std::mem::swap(&mut out.b_fr, &mut out.b_to);
        let (lo, hi) = (-out.angmax, -out.angmin);
        out.angmin = lo;
        out.angmax = hi;
    }
    out
}

/// Join series chains through bare degree-2 buses to a fixpoint.
pub fn join_degree2(model: &NetworkModel) -> (NetworkModel, Vec<JoinEvent>) {
    let mut out = model.clone();
    let mut log = Vec::new();
    while let Some((bus, a, b)) = join_candidate(&out) {
        let first = oriented(&out.branches[&a], bus); // n1 -> bus
        let second = oriented(&out.branches[&b], bus); // n2 -> bus
        out.branches.remove(&a);
        out.branches.remove(&b);

        let interior = first.b_to + second.b_to;
        let new_id = a.min(b);
        let mut joined = Branch::new(
            new_id,
            first.f_bus,
            second.f_bus,
            first.r + second.r,
            first.x + second.x,
        );
        joined.b_fr = first.b_fr + interior / 2.0;
        joined.b_to = second.b_fr + interior / 2.0;
        joined.rate_a = match (first.rate_a > 0.0, second.rate_a > 0.0) {
            (true, true) => first.rate_a.min(second.rate_a),
            (true, false) => first.rate_a,
            (false, true) => second.rate_a,
            (false, false) => 0.0,
        };
        // series composition: angle differences add
        joined.angmin = first.angmin + (-second.angmax);
        joined.angmax = first.angmax + (-second.angmin);
        joined.origin = BranchOrigin::Joined;
        joined.interconnector =
            out.buses[&joined.f_bus].area != out.buses[&joined.t_bus].area;
        out.branches.insert(new_id, joined);
        out.buses.remove(&bus);
        log.push(JoinEvent {
            removed_bus: bus,
            branches: [a, b],
            new_branch: new_id,
        });
    }
    (out, log)
}

/// Full reduction: ideal-line removal to fixpoint, then degree-2 joining to
/// fixpoint (removal first, since merges create new degree-2 buses).
pub fn reduce(model: &NetworkModel, cfg: &ReductionConfig) -> (NetworkModel, ReductionLog) {
    let (removed, removals) = remove_ideal_lines(model, cfg);
    let (joined, joins) = join_degree2(&removed);
    (joined, ReductionLog { removals, joins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Bus, Gen, Load, NetworkModel};

    fn bus(id: usize, bus_type: BusType) -> Bus {
        Bus {
            id,
            area: 1000,
            base_kv: 330.0,
            bus_type,
            vm: 1.0,
            va: 0.0,
            vmin: 0.9,
            vmax: 1.1,
        }
    }

    fn chain(n: usize) -> NetworkModel {
        // bus 1 (REF, gen) - 2 - ... - n (load), lines between
        let mut m = NetworkModel::new("chain", 100.0);
        for i in 1..=n {
            m.buses.insert(
                i,
                bus(i, if i == 1 { BusType::REF } else { BusType::PQ }),
            );
        }
        for i in 1..n {
            let mut br = Branch::new(i, i, i + 1, 0.01 * i as f64, 0.1 * i as f64);
            br.b_fr = 0.02;
            br.b_to = 0.02;
            m.branches.insert(i, br);
        }
        let mut g = Gen::new(1, 1);
        g.pmax = 10.0;
        m.gens.insert(1, g);
        m.loads.insert(
            1,
            Load {
                id: 1,
                bus: n,
                pd: 1.0,
                qd: 0.2,
                status: true,
            },
        );
        m
    }

    fn totals(m: &NetworkModel) -> (f64, f64, f64) {
        let pd: f64 = m.loads.values().filter(|l| l.status).map(|l| l.pd).sum();
        let pmax: f64 = m.gens.values().filter(|g| g.status).map(|g| g.pmax).sum();
        let bs: f64 = m.shunts.values().filter(|s| s.status).map(|s| s.bs).sum();
        (pd, pmax, bs)
    }

    #[test]
    fn small_impedance_branch_removed() {
        let mut m = chain(3);
        m.branches.insert(10, {
            let mut br = Branch::new(10, 1, 2, 0.001, 0.005);
            br.b_fr = 0.0005;
            br.b_to = 0.0005;
            br
        });
        let (out, log) = remove_ideal_lines(&m, &ReductionConfig::default());
        assert!(log
            .iter()
            .any(|e| e.branch == 10 && e.rule == RemovalRule::SmallImpedance));
        // buses 1 and 2 merged into 1
        assert!(!out.buses.contains_key(&2));
        assert!(out.buses.contains_key(&1));
        // the old 1-2 line became a self-loop and is gone; its charging moved
        // to a bus shunt
        assert!(!out.branches.contains_key(&1));
        assert!(log.iter().any(|e| e.rule == RemovalRule::SelfLoop));
        let shunt_b: f64 = out.shunts.values().map(|s| s.bs).sum();
        assert!((shunt_b - 0.04).abs() < 1e-15);
    }

    #[test]
    fn high_xr_branch_removed() {
        let mut m = chain(3);
        m.branches.insert(10, {
            let mut br = Branch::new(10, 2, 3, 0.001, 0.5);
            br.b_fr = 0.0;
            br.b_to = 0.0;
            br
        });
        let (_, log) = remove_ideal_lines(&m, &ReductionConfig::default());
        assert!(log
            .iter()
            .any(|e| e.branch == 10 && e.rule == RemovalRule::HighXr));
    }

    #[test]
    fn normal_branch_retained() {
        let mut m = chain(2);
        let br = m.branches.get_mut(&1).unwrap();
        br.r = 0.02;
        br.x = 0.2;
        br.b_fr = 0.0005;
        br.b_to = 0.0005;
        let (out, log) = remove_ideal_lines(&m, &ReductionConfig::default());
        assert!(log.is_empty());
        assert_eq!(out.branches.len(), 1);
    }

    #[test]
    fn transformers_never_removed_or_joined() {
        let mut m = chain(3);
        for br in m.branches.values_mut() {
            br.is_transformer = true;
            br.r = 0.0001;
            br.x = 0.001;
            br.b_fr = 0.0;
            br.b_to = 0.0;
        }
        let (out, log) = reduce(&m, &ReductionConfig::default());
        assert!(log.removals.is_empty());
        assert!(log.joins.is_empty());
        assert_eq!(out.branches.len(), 2);
    }

    #[test]
    fn series_join_sums_impedance() {
        let mut m = chain(3);
        m.branches.get_mut(&1).unwrap().b_fr = 0.01;
        m.branches.get_mut(&1).unwrap().b_to = 0.01;
        m.branches.get_mut(&2).unwrap().b_fr = 0.03;
        m.branches.get_mut(&2).unwrap().b_to = 0.03;
        m.branches.get_mut(&2).unwrap().r = 0.02;
        m.branches.get_mut(&2).unwrap().x = 0.2;
        let (out, log) = join_degree2(&m);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].removed_bus, 2);
        let br = &out.branches[&1];
        assert!((br.r - 0.03).abs() < 1e-15);
        assert!((br.x - 0.3).abs() < 1e-15);
        assert_eq!(br.origin, BranchOrigin::Joined);
        // outer charging stays at the ends, interior split between them
        assert!((br.b_fr - (0.01 + 0.04 / 2.0)).abs() < 1e-15);
        assert!((br.b_to - (0.03 + 0.04 / 2.0)).abs() < 1e-15);
        // total charging conserved
        assert!((br.b_fr + br.b_to - 0.08).abs() < 1e-15);
    }

    #[test]
    fn loaded_degree2_bus_not_joined() {
        let mut m = chain(3);
        m.loads.insert(
            2,
            Load {
                id: 2,
                bus: 2,
                pd: 0.1,
                qd: 0.0,
                status: true,
            },
        );
        let (out, log) = join_degree2(&m);
        assert!(log.is_empty());
        assert_eq!(out.buses.len(), 3);
    }

    #[test]
    fn chain_collapses_to_single_branch() {
        let m = chain(5);
        let (out, log) = join_degree2(&m);
        assert_eq!(log.len(), 3);
        assert_eq!(out.branches.len(), 1);
        let br = out.branches.values().next().unwrap();
        // 0.01+0.02+0.03+0.04 and 0.1+0.2+0.3+0.4
        assert!((br.r - 0.1).abs() < 1e-15);
        assert!((br.x - 1.0).abs() < 1e-12);
        assert_eq!((br.f_bus, br.t_bus), (1, 5));
    }

    #[test]
    fn reduction_preserves_islands_and_totals() {
        let mut m = chain(6);
        // make branch 3 ideal so removal fires too
        let br = m.branches.get_mut(&3).unwrap();
        br.r = 0.0001;
        br.x = 0.001;
        br.b_fr = 0.0;
        br.b_to = 0.0;
        let before_islands = m.islands().len();
        let before = totals(&m);
        let (out, _) = reduce(&m, &ReductionConfig::default());
        assert_eq!(out.islands().len(), before_islands);
        let after = totals(&out);
        assert!((before.0 - after.0).abs() < 1e-15);
        assert!((before.1 - after.1).abs() < 1e-15);
        assert!((before.2 - after.2).abs() < 1e-15);
        out.validate().unwrap();
    }

    #[test]
    fn rate_propagation_takes_minimum() {
        let mut m = chain(3);
        m.branches.get_mut(&1).unwrap().rate_a = 300.0;
        m.branches.get_mut(&2).unwrap().rate_a = 200.0;
        let (out, _) = join_degree2(&m);
        assert_eq!(out.branches[&1].rate_a, 200.0);
    }
}
