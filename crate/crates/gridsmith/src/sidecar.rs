//! Stage artifact I/O: MATPOWER case text plus a JSON sidecar for the
//! attributes the case format cannot carry (fuel tags, generator kinds,
//! branch provenance, asymmetric charging, fit coefficients, area names).
//! Writing then reading a stage reproduces the model exactly, which is
//! what makes individually-run pipeline stages byte-composable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matpower::{parse_matpower, write_matpower, MatpowerError};
use crate::netmodel::{BranchOrigin, FuelCategory, GenKind, NetworkModel};
use crate::thermal::ThermalFit;

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Case {
        path: PathBuf,
        #[source]
        source: MatpowerError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Sidecar {
    pub name: String,
    pub area_names: BTreeMap<usize, String>,
    pub gen_kind: BTreeMap<usize, GenKind>,
    pub fuel: BTreeMap<usize, FuelCategory>,
    pub origin: BTreeMap<usize, BranchOrigin>,
    /// Exact per-end charging for branches whose ends differ (the case
    /// format only stores the total).
    pub charging: BTreeMap<usize, (f64, f64)>,
    pub thermal_fit: Option<ThermalFit>,
    pub operational: BTreeMap<usize, crate::genclass::FuelModel>,
}

impl Sidecar {
    pub fn from_model(model: &NetworkModel) -> Sidecar {
        let mut sc = Sidecar {
            name: model.name.clone(),
            area_names: model.areas.clone(),
            ..Default::default()
        };
        for g in model.gens.values() {
            sc.gen_kind.insert(g.id, g.kind);
            if let Some(fuel) = g.fuel {
                sc.fuel.insert(g.id, fuel);
            }
        }
        for br in model.branches.values() {
            sc.origin.insert(br.id, br.origin);
            if br.b_fr != br.b_to {
                sc.charging.insert(br.id, (br.b_fr, br.b_to));
            }
        }
        sc.operational = crate::genclass::operational_metadata(model);
        sc
    }

    pub fn apply(&self, model: &mut NetworkModel) {
        model.name = self.name.clone();
        for (id, name) in &self.area_names {
            model.areas.insert(*id, name.clone());
        }
        for g in model.gens.values_mut() {
            if let Some(&kind) = self.gen_kind.get(&g.id) {
                g.kind = kind;
            }
            if let Some(&fuel) = self.fuel.get(&g.id) {
                g.fuel = Some(fuel);
            }
        }
        for br in model.branches.values_mut() {
            if let Some(&origin) = self.origin.get(&br.id) {
                br.origin = origin;
            }
            if let Some(&(b_fr, b_to)) = self.charging.get(&br.id) {
                br.b_fr = b_fr;
                br.b_to = b_to;
            }
        }
    }
}

fn meta_path(case_path: &Path) -> PathBuf {
    case_path.with_extension("meta.json")
}

/// Write `<path>` (MATPOWER text) and `<path stem>.meta.json`.
pub fn write_stage(
    path: impl AsRef<Path>,
    model: &NetworkModel,
    fit: Option<&ThermalFit>,
) -> Result<(), SidecarError> {
    let path = path.as_ref();
    let mut sidecar = Sidecar::from_model(model);
    sidecar.thermal_fit = fit.cloned();

    std::fs::write(path, write_matpower(model)).map_err(|source| SidecarError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let meta = meta_path(path);
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|source| SidecarError::Json {
            path: meta.clone(),
            source,
        })?;
    std::fs::write(&meta, json).map_err(|source| SidecarError::Io {
        path: meta,
        source,
    })?;
    Ok(())
}

/// Read a stage artifact; a missing sidecar is fine (plain case file).
pub fn read_stage(path: impl AsRef<Path>) -> Result<(NetworkModel, Sidecar), SidecarError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SidecarError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut model = parse_matpower(&text).map_err(|source| SidecarError::Case {
        path: path.to_path_buf(),
        source,
    })?;
    let meta = meta_path(path);
    let sidecar = if meta.exists() {
        let json = std::fs::read_to_string(&meta).map_err(|source| SidecarError::Io {
            path: meta.clone(),
            source,
        })?;
        let sc: Sidecar =
            serde_json::from_str(&json).map_err(|source| SidecarError::Json {
                path: meta,
                source,
            })?;
        sc.apply(&mut model);
        sc
    } else {
        Sidecar::default()
    };
    Ok((model, sidecar))
}
