//! Generator fuel classification and cost assignment.
//!
//! Synchronous machines get a fuel category from a per-state random forest
//! trained on reference capacity data (SMOTE-balanced); network sources
//! map to solar, with the two HVDC-endpoint sources special-cased. Cost
//! and operational parameters then follow from the per-category table.

pub mod forest;
pub mod smote;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{FuelCategory, GenCost, GenKind, NetworkModel};

pub use forest::{Forest, ForestParams};
pub use smote::{smote, SmoteResult};

#[derive(Debug, Error)]
pub enum GenClassError {
    #[error("no reference generators for state {0}")]
    EmptyTrainingSet(usize),
    #[error("no forest trained for area {0}")]
    MissingForest(usize),
    #[error("generator {0} has no fuel category; run classification first")]
    UnclassifiedGen(usize),
    #[error("reference csv: {0}")]
    Csv(String),
}

/// Operational and cost parameters per fuel category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelModel {
    pub min_gen_pct: f64,
    pub min_on_h: f64,
    pub min_off_h: f64,
    pub no_load_fuel_pct: f64,
    pub aux_load_pct: f64,
    pub ramp_up_mw_h: f64,
    pub ramp_down_mw_h: f64,
    pub thermal_eff_pct: f64,
    pub maintenance_d_y: f64,
    /// $/MW/year
    pub fixed_op_cost: f64,
    /// $/MWh sent-out
    pub variable_op_cost: f64,
    /// $/MW
    pub no_load_cost: f64,
    /// $/MW/year
    pub no_load_recurring_cost: f64,
    /// $/MW
    pub cold_start_cost: f64,
    pub warm_start_cost: f64,
    pub hot_start_cost: f64,
}

impl FuelModel {
    /// Parameter table, one column per category.
    pub fn for_category(category: FuelCategory) -> FuelModel {
        use FuelCategory::*;
        let col = |bc, brc, gas, hydro, wind, solar| match category {
            BlackCoal => bc,
            BrownCoal => brc,
            NaturalGas => gas,
            Hydro => hydro,
            Wind => wind,
            Solar => solar,
        };
        FuelModel {
            min_gen_pct: col(40.0, 60.0, 0.0, 0.0, 0.0, 10.0),
            min_on_h: col(8.0, 16.0, 1.0, 1.0, 1.0, 1.0),
            min_off_h: col(8.0, 16.0, 1.0, 1.0, 1.0, 1.0),
            no_load_fuel_pct: col(10.0, 10.0, 30.0, 0.0, 0.0, 0.0),
            aux_load_pct: col(6.0, 10.0, 3.0, 1.0, 1.0, 8.0),
            ramp_up_mw_h: col(120.0, 130.0, 600.0, 7630.0, 900.0, 10000.0),
            ramp_down_mw_h: col(150.0, 140.0, 600.0, 1840.0, 600.0, 10000.0),
            thermal_eff_pct: col(35.4, 23.5, 32.0, 100.0, 100.0, 100.0),
            maintenance_d_y: col(20.0, 20.0, 5.0, 7.0, 3.0, 10.0),
            fixed_op_cost: col(53400.0, 147200.0, 14200.0, 56700.0, 43000.0, 64000.0),
            variable_op_cost: col(1.0, 1.0, 8.3, 7.0, 10.0, 15.2),
            no_load_cost: col(1500.0, 1500.0, 500.0, 500.0, 2000.0, 500.0),
            no_load_recurring_cost: col(500.0, 500.0, 200.0, 200.0, 1000.0, 200.0),
            cold_start_cost: col(350.0, 350.0, 100.0, 5.0, 5.0, 5.0),
            warm_start_cost: col(120.0, 120.0, 100.0, 3.0, 3.0, 3.0),
            hot_start_cost: col(40.0, 40.0, 100.0, 2.0, 2.0, 2.0),
        }
    }
}

/// One reference generator record from the public station list.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReferenceGen {
    pub capacity_mw: f64,
    /// Area id of the state (1000..5000 convention).
    pub state: usize,
    pub fuel: FuelCategory,
}

/// Load reference generators from CSV (capacity_mw, state, fuel, status).
/// Only operational rows with a recognized single fuel category are kept.
pub fn load_reference_csv(path: impl AsRef<Path>) -> Result<Vec<ReferenceGen>, GenClassError> {
    #[derive(Deserialize)]
    struct Row {
        capacity_mw: f64,
        state: usize,
        fuel: String,
        status: String,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| GenClassError::Csv(e.to_string()))?;
    let mut out = Vec::new();
    for rec in reader.deserialize::<Row>() {
        let row = rec.map_err(|e| GenClassError::Csv(e.to_string()))?;
        if !row.status.eq_ignore_ascii_case("operational") {
            continue;
        }
        let Some(fuel) = FuelCategory::parse(&row.fuel) else {
            continue;
        };
        out.push(ReferenceGen {
            capacity_mw: row.capacity_mw,
            state: row.state,
            fuel,
        });
    }
    Ok(out)
}

fn class_index(fuel: FuelCategory) -> usize {
    FuelCategory::ALL.iter().position(|&f| f == fuel).unwrap()
}

/// Train a forest on the reference generators of one state: capacity is
/// the single feature, classes are SMOTE-balanced first.
pub fn train_forest(
    reference: &[ReferenceGen],
    state: usize,
    params: &ForestParams,
    smote_k: usize,
    seed: u64,
) -> Result<Forest, GenClassError> {
    let rows: Vec<&ReferenceGen> = reference.iter().filter(|r| r.state == state).collect();
    if rows.is_empty() {
        return Err(GenClassError::EmptyTrainingSet(state));
    }
    let samples: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.capacity_mw]).collect();
    let labels: Vec<usize> = rows.iter().map(|r| class_index(r.fuel)).collect();
    let balanced = smote(&samples, &labels, smote_k, seed);
    Ok(Forest::train(
        &balanced.samples,
        &balanced.labels,
        FuelCategory::ALL.len(),
        params,
        seed,
    ))
}

/// Forests for every state present in the reference data.
pub fn train_state_forests(
    reference: &[ReferenceGen],
    params: &ForestParams,
    smote_k: usize,
    seed: u64,
) -> Result<BTreeMap<usize, Forest>, GenClassError> {
    let states: std::collections::BTreeSet<usize> =
        reference.iter().map(|r| r.state).collect();
    states
        .into_iter()
        .map(|s| train_forest(reference, s, params, smote_k, seed).map(|f| (s, f)))
        .collect()
}

/// The two HVDC-interconnector endpoints modeled as network sources.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BasslinkSpec {
    /// Source that represents Tasmania on the mainland side.
    pub mainland_gen: usize,
    /// Source on the Tasmanian side.
    pub tasmania_gen: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub basslink: Option<BasslinkSpec>,
    /// Tag network sources with negligible active and substantial reactive
    /// output as var compensators instead of classifying them solar.
    pub var_compensator_filter: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClassifyLog {
    pub var_compensators: Vec<usize>,
}

const VICTORIA_AREA: usize = 2000;

/// Assign a fuel category to every generator. Synchronous units are
/// predicted by the forest of their bus area, restricted to non-solar
/// categories; network sources become solar; the Basslink endpoints are
/// pre-allocated (mainland: hydro, reassigned to the Victoria area;
/// Tasmania: natural gas).
pub fn classify(
    model: &NetworkModel,
    forests: &BTreeMap<usize, Forest>,
    opts: &ClassifyOptions,
) -> Result<(NetworkModel, ClassifyLog), GenClassError> {
    let mut out = model.clone();
    let mut log = ClassifyLog::default();
    let allowed: Vec<bool> = FuelCategory::ALL
        .iter()
        .map(|f| FuelCategory::SYNCHRONOUS.contains(f))
        .collect();

    let gen_ids: Vec<usize> = out.gens.keys().copied().collect();
    for id in gen_ids {
        let (bus, kind, pmax, pg_small, q_big) = {
            let g = &out.gens[&id];
            let q_span = g.qmax.abs().max(g.qmin.abs()).max(g.qg.abs());
            (
                g.bus,
                g.kind,
                g.pmax,
                g.pg.abs() < 1e-3 && g.pmax.abs() < 1e-3,
                q_span > 0.05,
            )
        };

        if let Some(basslink) = &opts.basslink {
            if id == basslink.mainland_gen {
                out.gens.get_mut(&id).unwrap().fuel = Some(FuelCategory::Hydro);
                out.buses.get_mut(&bus).unwrap().area = VICTORIA_AREA;
                out.areas
                    .entry(VICTORIA_AREA)
                    .or_insert_with(|| VICTORIA_AREA.to_string());
                continue;
            }
            if id == basslink.tasmania_gen {
                out.gens.get_mut(&id).unwrap().fuel = Some(FuelCategory::NaturalGas);
                continue;
            }
        }

        match kind {
            GenKind::NetworkSource => {
                if opts.var_compensator_filter && pg_small && q_big {
                    log.var_compensators.push(id);
                    continue;
                }
                out.gens.get_mut(&id).unwrap().fuel = Some(FuelCategory::Solar);
            }
            GenKind::Synchronous => {
                let area = out.buses[&bus].area;
                let forest = forests
                    .get(&area)
                    .ok_or(GenClassError::MissingForest(area))?;
                let capacity_mw = pmax * out.base_mva;
                let class = forest.predict_restricted(&[capacity_mw], &allowed);
                out.gens.get_mut(&id).unwrap().fuel = Some(FuelCategory::ALL[class]);
            }
        }
    }
    Ok((out, log))
}

/// Attach linear costs and minimum-generation floors from the per-category
/// table. Total: errors if any generator is unclassified.
pub fn assign_costs(model: &NetworkModel) -> Result<NetworkModel, GenClassError> {
    let mut out = model.clone();
    for g in out.gens.values_mut() {
        let fuel = g.fuel.ok_or(GenClassError::UnclassifiedGen(g.id))?;
        let table = FuelModel::for_category(fuel);
        g.cost = Some(GenCost::linear(table.variable_op_cost, 0.0));
        g.pmin = table.min_gen_pct / 100.0 * g.pmax;
    }
    Ok(out)
}

/// Per-category operational metadata for every generator, keyed by gen id
/// (carried in the sidecar since the case format cannot hold it).
pub fn operational_metadata(model: &NetworkModel) -> BTreeMap<usize, FuelModel> {
    model
        .gens
        .values()
        .filter_map(|g| g.fuel.map(|f| (g.id, FuelModel::for_category(f))))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixRow {
    pub area: usize,
    pub fuel: FuelCategory,
    pub model_count: usize,
    pub model_mw: f64,
    pub ref_count: usize,
    pub ref_mw: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FuelMixReport {
    pub rows: Vec<MixRow>,
}

impl fmt::Display for FuelMixReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>6} {:<12} {:>11} {:>12} {:>9} {:>12}",
            "area", "fuel", "model_count", "model_mw", "ref_count", "ref_mw"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>6} {:<12} {:>11} {:>12.1} {:>9} {:>12.1}",
                r.area,
                r.fuel.name(),
                r.model_count,
                r.model_mw,
                r.ref_count,
                r.ref_mw
            )?;
        }
        Ok(())
    }
}

impl FuelMixReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("area,fuel,model_count,model_mw,ref_count,ref_mw\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.area,
                r.fuel.name(),
                r.model_count,
                r.model_mw,
                r.ref_count,
                r.ref_mw
            ));
        }
        out
    }
}

/// Side-by-side per-state, per-fuel counts and capacities for the model
/// and the reference list.
pub fn fuel_mix_report(model: &NetworkModel, reference: &[ReferenceGen]) -> FuelMixReport {
    let mut areas: std::collections::BTreeSet<usize> =
        model.buses.values().map(|b| b.area).collect();
    areas.extend(reference.iter().map(|r| r.state));

    let mut rows = Vec::new();
    for &area in &areas {
        for &fuel in &FuelCategory::ALL {
            let (mut model_count, mut model_mw) = (0, 0.0);
            for g in model.gens.values() {
                if g.fuel == Some(fuel) && model.buses[&g.bus].area == area {
                    model_count += 1;
                    model_mw += g.pmax * model.base_mva;
                }
            }
            let (mut ref_count, mut ref_mw) = (0, 0.0);
            for r in reference.iter().filter(|r| r.state == area && r.fuel == fuel) {
                ref_count += 1;
                ref_mw += r.capacity_mw;
            }
            if model_count + ref_count > 0 {
                rows.push(MixRow {
                    area,
                    fuel,
                    model_count,
                    model_mw,
                    ref_count,
                    ref_mw,
                });
            }
        }
    }
    FuelMixReport { rows }
}
