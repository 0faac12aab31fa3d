//! Per-unit network data model shared by every stage of the pipeline.
//!
//! A [`NetworkModel`] holds buses, branches (lines and transformers in a
//! unified Π representation), generators, loads and shunts, all keyed by
//! integer id and stored in per-unit on `base_mva`. Models are immutable
//! after construction: transformations return new models.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default angle-difference bound for branches when the source data has none.
pub const DEFAULT_ANGLE_BOUND_RAD: f64 = 30.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("base power must be positive, got {0}")]
    NonPositiveBase(f64),
    #[error("branch {branch} references missing bus {bus}")]
    DanglingBus { branch: usize, bus: usize },
    #[error("{component} {id} references missing bus {bus}")]
    DanglingDevice {
        component: &'static str,
        id: usize,
        bus: usize,
    },
    #[error("island containing bus {bus} has {count} reference buses (want exactly 1)")]
    BadReferenceCount { bus: usize, count: usize },
    #[error("bus {0}: voltage bounds must satisfy 0 < vmin <= vmax")]
    BadVoltageBounds(usize),
    #[error("bus {0}: base_kv must be positive")]
    BadBaseKv(usize),
    #[error("branch {0}: tap ratio must be positive")]
    BadTap(usize),
    #[error("branch {0}: zero series impedance on in-service branch")]
    ZeroImpedance(usize),
    #[error("gen {0}: capability bounds violated (pmin <= pmax, qmin <= qmax)")]
    BadGenBounds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    PQ,
    PV,
    REF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchOrigin {
    /// Plain transmission line from the source tables.
    Line,
    /// Two-winding transformer converted from a T-section.
    Xfmr2w,
    /// One leg of a star-decomposed three-winding transformer.
    Xfmr3wLeg,
    /// Series join of cascading branches through a degree-2 bus.
    Joined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenKind {
    Synchronous,
    NetworkSource,
}

/// Generator fuel category. Table-driven cost and operational data is keyed
/// on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FuelCategory {
    BlackCoal,
    BrownCoal,
    NaturalGas,
    Hydro,
    Wind,
    Solar,
}

impl FuelCategory {
    pub const ALL: [FuelCategory; 6] = [
        FuelCategory::BlackCoal,
        FuelCategory::BrownCoal,
        FuelCategory::NaturalGas,
        FuelCategory::Hydro,
        FuelCategory::Wind,
        FuelCategory::Solar,
    ];

    /// Categories a synchronous machine may take (everything but solar).
    pub const SYNCHRONOUS: [FuelCategory; 5] = [
        FuelCategory::BlackCoal,
        FuelCategory::BrownCoal,
        FuelCategory::NaturalGas,
        FuelCategory::Hydro,
        FuelCategory::Wind,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FuelCategory::BlackCoal => "black_coal",
            FuelCategory::BrownCoal => "brown_coal",
            FuelCategory::NaturalGas => "natural_gas",
            FuelCategory::Hydro => "hydro",
            FuelCategory::Wind => "wind",
            FuelCategory::Solar => "solar",
        }
    }

    pub fn parse(s: &str) -> Option<FuelCategory> {
        match s.trim().to_ascii_lowercase().as_str() {
            "black_coal" | "black coal" => Some(FuelCategory::BlackCoal),
            "brown_coal" | "brown coal" => Some(FuelCategory::BrownCoal),
            "natural_gas" | "natural gas" | "gas" => Some(FuelCategory::NaturalGas),
            "hydro" | "water" => Some(FuelCategory::Hydro),
            "wind" => Some(FuelCategory::Wind),
            "solar" => Some(FuelCategory::Solar),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Area code; the bundled data uses 1000/2000/3000/4000/5000 per state.
    pub area: usize,
    /// Nominal voltage in kV.
    pub base_kv: f64,
    pub bus_type: BusType,
    /// Voltage magnitude setpoint/solution (pu).
    pub vm: f64,
    /// Voltage angle (rad).
    pub va: f64,
    pub vmin: f64,
    pub vmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub f_bus: usize,
    pub t_bus: usize,
    /// Series resistance (pu).
    pub r: f64,
    /// Series reactance (pu).
    pub x: f64,
    /// Shunt susceptance at the from end (pu).
    pub b_fr: f64,
    /// Shunt susceptance at the to end (pu).
    pub b_to: f64,
    /// Tap ratio on the from side; 1.0 for plain lines.
    pub tap: f64,
    /// Phase shift (rad); 0 throughout the bundled data.
    pub shift: f64,
    /// Thermal limit in MVA; 0 means unset.
    pub rate_a: f64,
    pub status: bool,
    pub is_transformer: bool,
    pub origin: BranchOrigin,
    /// Angle-difference bounds (rad) on va_f - va_t.
    pub angmin: f64,
    pub angmax: f64,
    /// Endpoints belong to different areas.
    pub interconnector: bool,
}

impl Branch {
    pub fn new(id: usize, f_bus: usize, t_bus: usize, r: f64, x: f64) -> Self {
        Branch {
            id,
            f_bus,
            t_bus,
            r,
            x,
            b_fr: 0.0,
            b_to: 0.0,
            tap: 1.0,
            shift: 0.0,
            rate_a: 0.0,
            status: true,
            is_transformer: false,
            origin: BranchOrigin::Line,
            angmin: -DEFAULT_ANGLE_BOUND_RAD,
            angmax: DEFAULT_ANGLE_BOUND_RAD,
            interconnector: false,
        }
    }

    /// Series impedance magnitude (pu).
    pub fn z_mag(&self) -> f64 {
        self.r.hypot(self.x)
    }

    /// |X|/|R| ratio; infinite when R is zero.
    pub fn xr_ratio(&self) -> f64 {
        if self.r == 0.0 {
            f64::INFINITY
        } else {
            (self.x / self.r).abs()
        }
    }

    /// Total charging susceptance magnitude at both ends (pu).
    pub fn total_charging(&self) -> f64 {
        self.b_fr.abs() + self.b_to.abs()
    }
}

/// Polynomial generator cost: coefficients in MATPOWER order
/// (highest power of MW first, constant last), currency per MWh terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCost {
    pub startup: f64,
    pub shutdown: f64,
    pub coeffs: Vec<f64>,
}

impl GenCost {
    pub fn linear(c1: f64, c0: f64) -> Self {
        GenCost {
            startup: 0.0,
            shutdown: 0.0,
            coeffs: vec![c1, c0],
        }
    }

    /// Evaluate the cost at an active power output in MW.
    pub fn eval_mw(&self, p_mw: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * p_mw + c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gen {
    pub id: usize,
    pub bus: usize,
    /// Active/reactive setpoints (pu).
    pub pg: f64,
    pub qg: f64,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    /// Voltage magnitude setpoint (pu).
    pub vg: f64,
    pub status: bool,
    pub kind: GenKind,
    pub fuel: Option<FuelCategory>,
    pub cost: Option<GenCost>,
}

impl Gen {
    pub fn new(id: usize, bus: usize) -> Self {
        Gen {
            id,
            bus,
            pg: 0.0,
            qg: 0.0,
            pmin: 0.0,
            pmax: 0.0,
            qmin: 0.0,
            qmax: 0.0,
            vg: 1.0,
            status: true,
            kind: GenKind::Synchronous,
            fuel: None,
            cost: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: usize,
    pub bus: usize,
    /// Demand (pu).
    pub pd: f64,
    pub qd: f64,
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shunt {
    pub id: usize,
    pub bus: usize,
    /// Shunt admittance (pu): consumed P = gs*vm^2, injected Q = bs*vm^2.
    pub gs: f64,
    pub bs: f64,
    pub status: bool,
}

/// The complete per-unit network model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub name: String,
    /// System power base in MVA.
    pub base_mva: f64,
    pub buses: BTreeMap<usize, Bus>,
    pub branches: BTreeMap<usize, Branch>,
    pub gens: BTreeMap<usize, Gen>,
    pub loads: BTreeMap<usize, Load>,
    pub shunts: BTreeMap<usize, Shunt>,
    pub areas: BTreeMap<usize, String>,
}

impl NetworkModel {
    pub fn new(name: impl Into<String>, base_mva: f64) -> Self {
        NetworkModel {
            name: name.into(),
            base_mva,
            buses: BTreeMap::new(),
            branches: BTreeMap::new(),
            gens: BTreeMap::new(),
            loads: BTreeMap::new(),
            shunts: BTreeMap::new(),
            areas: BTreeMap::new(),
        }
    }

    pub fn max_bus_id(&self) -> usize {
        self.buses.keys().next_back().copied().unwrap_or(0)
    }

    pub fn max_branch_id(&self) -> usize {
        self.branches.keys().next_back().copied().unwrap_or(0)
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = &Branch> {
        self.branches.values().filter(|b| b.status)
    }

    pub fn in_service_gens(&self) -> impl Iterator<Item = &Gen> {
        self.gens.values().filter(|g| g.status)
    }

    pub fn gens_at(&self, bus: usize) -> impl Iterator<Item = &Gen> {
        self.gens.values().filter(move |g| g.bus == bus)
    }

    pub fn loads_at(&self, bus: usize) -> impl Iterator<Item = &Load> {
        self.loads.values().filter(move |l| l.bus == bus)
    }

    pub fn shunts_at(&self, bus: usize) -> impl Iterator<Item = &Shunt> {
        self.shunts.values().filter(move |s| s.bus == bus)
    }

    /// Structural validation: referential integrity, per-island reference
    /// bus count, bound sanity.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.base_mva <= 0.0 {
            return Err(ModelError::NonPositiveBase(self.base_mva));
        }
        for bus in self.buses.values() {
            if !(bus.vmin > 0.0 && bus.vmin <= bus.vmax) {
                return Err(ModelError::BadVoltageBounds(bus.id));
            }
            if bus.base_kv <= 0.0 {
                return Err(ModelError::BadBaseKv(bus.id));
            }
        }
        for br in self.branches.values() {
            for bus in [br.f_bus, br.t_bus] {
                if !self.buses.contains_key(&bus) {
                    return Err(ModelError::DanglingBus {
                        branch: br.id,
                        bus,
                    });
                }
            }
            if br.tap <= 0.0 {
                return Err(ModelError::BadTap(br.id));
            }
            if br.status && br.r == 0.0 && br.x == 0.0 {
                return Err(ModelError::ZeroImpedance(br.id));
            }
        }
        for (component, bus, id) in self
            .gens
            .values()
            .map(|g| ("gen", g.bus, g.id))
            .chain(self.loads.values().map(|l| ("load", l.bus, l.id)))
            .chain(self.shunts.values().map(|s| ("shunt", s.bus, s.id)))
        {
            if !self.buses.contains_key(&bus) {
                return Err(ModelError::DanglingDevice { component, id, bus });
            }
        }
        for g in self.gens.values() {
            if g.pmin > g.pmax || g.qmin > g.qmax {
                return Err(ModelError::BadGenBounds(g.id));
            }
        }
        for island in self.islands() {
            let refs = island
                .iter()
                .filter(|id| self.buses[id].bus_type == BusType::REF)
                .count();
            if refs != 1 {
                return Err(ModelError::BadReferenceCount {
                    bus: *island.iter().next().unwrap(),
                    count: refs,
                });
            }
        }
        Ok(())
    }

    /// Rescale every per-unit quantity to a new MVA base. Physical (SI)
    /// quantities are unchanged: impedances scale by new/old, powers and
    /// admittances by old/new.
    pub fn rebase(&self, new_base: f64) -> Result<NetworkModel, ModelError> {
        if new_base <= 0.0 {
            return Err(ModelError::NonPositiveBase(new_base));
        }
        let z_scale = new_base / self.base_mva;
        let s_scale = self.base_mva / new_base;
        let mut out = self.clone();
        out.base_mva = new_base;
        for br in out.branches.values_mut() {
            br.r *= z_scale;
            br.x *= z_scale;
            br.b_fr *= s_scale;
            br.b_to *= s_scale;
            // rate_a is MVA, not pu: unchanged
        }
        for g in out.gens.values_mut() {
            g.pg *= s_scale;
            g.qg *= s_scale;
            g.pmin *= s_scale;
            g.pmax *= s_scale;
            g.qmin *= s_scale;
            g.qmax *= s_scale;
        }
        for l in out.loads.values_mut() {
            l.pd *= s_scale;
            l.qd *= s_scale;
        }
        for s in out.shunts.values_mut() {
            s.gs *= s_scale;
            s.bs *= s_scale;
        }
        Ok(out)
    }

    /// Partition of all buses into connected islands over in-service
    /// branches. Every bus appears in exactly one island.
    pub fn islands(&self) -> Vec<BTreeSet<usize>> {
        let ids: Vec<usize> = self.buses.keys().copied().collect();
        let index: BTreeMap<usize, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();

        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }

        for br in self.in_service_branches() {
            let (Some(&a), Some(&b)) = (index.get(&br.f_bus), index.get(&br.t_bus)) else {
                continue;
            };
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }

        let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (i, &id) in ids.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().insert(id);
        }
        groups.into_values().collect()
    }

    /// Replace each generator with negative active injection by a
    /// zero-injection generator plus a load of equal magnitude at the same
    /// bus. Net nodal injection is preserved exactly.
    pub fn split_negative_gens(&self) -> NetworkModel {
        let mut out = self.clone();
        let mut next_load_id = out.loads.keys().next_back().map_or(1, |id| id + 1);
        for g in out.gens.values_mut() {
            if g.pg < 0.0 {
                out.loads.insert(
                    next_load_id,
                    Load {
                        id: next_load_id,
                        bus: g.bus,
                        pd: -g.pg,
                        qd: -g.qg,
                        status: g.status,
                    },
                );
                next_load_id += 1;
                g.pg = 0.0;
                g.qg = 0.0;
                if g.pmin < 0.0 {
                    g.pmin = 0.0;
                }
                if g.pmax < 0.0 {
                    g.pmax = 0.0;
                }
            }
        }
        out
    }

    /// Net scheduled complex injection at a bus: generation minus load
    /// (shunts excluded, they are voltage dependent).
    pub fn scheduled_injection(&self, bus: usize) -> (f64, f64) {
        let (mut p, mut q) = (0.0, 0.0);
        for g in self.gens_at(bus).filter(|g| g.status) {
            p += g.pg;
            q += g.qg;
        }
        for l in self.loads_at(bus).filter(|l| l.status) {
            p -= l.pd;
            q -= l.qd;
        }
        (p, q)
    }
}
