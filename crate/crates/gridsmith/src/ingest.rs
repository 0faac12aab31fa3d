//! Relational CSV ingest: component tables -> raw records -> network model.
//!
//! The expected directory layout is seven CSV files (UTF-8, header row,
//! '.' decimal separator):
//!
//! | file               | columns                                                                 |
//! |--------------------|-------------------------------------------------------------------------|
//! | buses.csv          | id,area,base_kv,slack,vm_pu,va_deg,vmin_pu,vmax_pu                       |
//! | lines.csv          | id,f_bus,t_bus,r_ohm,x_ohm,b_s,rate_mva,status                           |
//! | transformers2w.csv | id,f_bus,t_bus,mva_base,r1_pu,x1_pu,r2_pu,x2_pu,rm_pu,xm_pu,v1_pu,v2_pu,status |
//! | transformers3w.csv | id,bus1,bus2,bus3,mva_base,r1_pu,x1_pu,r2_pu,x2_pu,r3_pu,x3_pu,rm_pu,xm_pu,v1_pu,v2_pu,v3_pu,status |
//! | generators.csv     | id,bus,mva_base,kind,pg_pu,qg_pu,pmin_pu,pmax_pu,qmin_pu,qmax_pu,vg_pu,status |
//! | loads.csv          | id,bus,pd_mw,qd_mvar,status                                              |
//! | shunts.csv         | id,bus,gs_mw,bs_mvar,status                                              |
//!
//! Line impedances are in ohms on the from-bus nominal voltage; transformer
//! and generator quantities are per-unit on the device MVA base
//! (`rm_pu = xm_pu = 0` means no magnetizing branch); loads and shunts are
//! in MW/MVAr at nominal voltage. `kind` is `synchronous` or
//! `network_source`. Out-of-service rows are kept and flagged, not dropped.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equiv::{xfmr2w_to_branch, xfmr3w_to_branches, TSection, ThreeWinding};
use crate::netmodel::{Bus, BusType, Gen, GenKind, Load, NetworkModel, Shunt};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing table file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: {count} row error(s); first: {first}")]
    Rows {
        file: String,
        count: usize,
        first: String,
    },
    #[error("{table} row {row}: references missing bus {bus}")]
    DanglingBus {
        table: &'static str,
        row: usize,
        bus: usize,
    },
    #[error("{table} row {row}: device base must be positive, got {base}")]
    BadDeviceBase {
        table: &'static str,
        row: usize,
        base: f64,
    },
    #[error("{table} row {row}: duplicate id {id}")]
    DuplicateId {
        table: &'static str,
        row: usize,
        id: usize,
    },
    #[error("system base must be positive, got {0}")]
    BadSystemBase(f64),
    #[error(transparent)]
    Equiv(#[from] crate::equiv::EquivError),
}

fn int_bool(v: i64) -> bool {
    v != 0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawBus {
    pub id: usize,
    pub area: usize,
    pub base_kv: f64,
    pub slack: i64,
    pub vm_pu: f64,
    pub va_deg: f64,
    pub vmin_pu: f64,
    pub vmax_pu: f64,
    #[serde(skip)]
    pub row: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawLine {
    pub id: usize,
    pub f_bus: usize,
    pub t_bus: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub b_s: f64,
    pub rate_mva: f64,
    pub status: i64,
    #[serde(skip)]
    pub row: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawXfmr2w {
    pub id: usize,
    pub f_bus: usize,
    pub t_bus: usize,
    pub mva_base: f64,
    pub r1_pu: f64,
    pub x1_pu: f64,
    pub r2_pu: f64,
    pub x2_pu: f64,
    pub rm_pu: f64,
    pub xm_pu: f64,
    pub v1_pu: f64,
    pub v2_pu: f64,
    pub status: i64,
    #[serde(skip)]
    pub row: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawXfmr3w {
    pub id: usize,
    pub bus1: usize,
    pub bus2: usize,
    pub bus3: usize,
    pub mva_base: f64,
    pub r1_pu: f64,
    pub x1_pu: f64,
    pub r2_pu: f64,
    pub x2_pu: f64,
    pub r3_pu: f64,
    pub x3_pu: f64,
    pub rm_pu: f64,
    pub xm_pu: f64,
    pub v1_pu: f64,
    pub v2_pu: f64,
    pub v3_pu: f64,
    pub status: i64,
    #[serde(skip)]
    pub row: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawGen {
    pub id: usize,
    pub bus: usize,
    pub mva_base: f64,
    pub kind: String,
    pub pg_pu: f64,
    pub qg_pu: f64,
    pub pmin_pu: f64,
    pub pmax_pu: f64,
    pub qmin_pu: f64,
    pub qmax_pu: f64,
    pub vg_pu: f64,
    pub status: i64,
    #[serde(skip)]
    pub row: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawLoad {
    pub id: usize,
    pub bus: usize,
    pub pd_mw: f64,
    pub qd_mvar: f64,
    pub status: i64,
    #[serde(skip)]
    pub row: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawShunt {
    pub id: usize,
    pub bus: usize,
    pub gs_mw: f64,
    pub bs_mvar: f64,
    pub status: i64,
    #[serde(skip)]
    pub row: usize,
}

/// Parsed component tables in source-native units.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RawTables {
    pub buses: Vec<RawBus>,
    pub lines: Vec<RawLine>,
    pub xfmr2w: Vec<RawXfmr2w>,
    pub xfmr3w: Vec<RawXfmr3w>,
    pub gens: Vec<RawGen>,
    pub loads: Vec<RawLoad>,
    pub shunts: Vec<RawShunt>,
}

fn read_table<T: for<'de> Deserialize<'de> + SetRow>(
    dir: &Path,
    name: &str,
) -> Result<Vec<T>, IngestError> {
    let path = dir.join(name);
    let file = File::open(&path).map_err(|_| IngestError::MissingFile(path.clone()))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in reader.deserialize::<T>().enumerate() {
        // data rows start at line 2 (after the header)
        let row = i + 2;
        match rec {
            Ok(mut v) => {
                v.set_row(row);
                out.push(v);
            }
            Err(e) => errors.push(format!("row {row}: {e}")),
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::Rows {
            file: name.to_string(),
            count: errors.len(),
            first: errors[0].clone(),
        });
    }
    Ok(out)
}

trait SetRow {
    fn set_row(&mut self, row: usize);
}

macro_rules! impl_set_row {
    ($($t:ty),*) => {
        $(impl SetRow for $t {
            fn set_row(&mut self, row: usize) {
                self.row = row;
            }
        })*
    };
}
impl_set_row!(RawBus, RawLine, RawXfmr2w, RawXfmr3w, RawGen, RawLoad, RawShunt);

/// Load the documented set of CSV tables from a directory.
pub fn load_tables(dir: impl AsRef<Path>) -> Result<RawTables, IngestError> {
    let dir = dir.as_ref();
    Ok(RawTables {
        buses: read_table(dir, "buses.csv")?,
        lines: read_table(dir, "lines.csv")?,
        xfmr2w: read_table(dir, "transformers2w.csv")?,
        xfmr3w: read_table(dir, "transformers3w.csv")?,
        gens: read_table(dir, "generators.csv")?,
        loads: read_table(dir, "loads.csv")?,
        shunts: read_table(dir, "shunts.csv")?,
    })
}

/// Convert raw tables to a per-unit network model on `base_mva`.
///
/// Device quantities are first taken per-unit on their own base, then
/// rebased onto the system base. Lines convert from ohms/siemens on the
/// from-bus voltage base. Three-winding transformers spawn an auxiliary
/// star bus with id above the current maximum; interconnector branches
/// (endpoints in different areas) are flagged.
pub fn to_network(raw: &RawTables, base_mva: f64) -> Result<NetworkModel, IngestError> {
    if base_mva <= 0.0 {
        return Err(IngestError::BadSystemBase(base_mva));
    }
    let mut model = NetworkModel::new("ingest", base_mva);

    for b in &raw.buses {
        if model.buses.contains_key(&b.id) {
            return Err(IngestError::DuplicateId {
                table: "buses.csv",
                row: b.row,
                id: b.id,
            });
        }
        model.buses.insert(
            b.id,
            Bus {
                id: b.id,
                area: b.area,
                base_kv: b.base_kv,
                bus_type: if int_bool(b.slack) {
                    BusType::REF
                } else {
                    BusType::PQ
                },
                vm: b.vm_pu,
                va: b.va_deg.to_radians(),
                vmin: b.vmin_pu,
                vmax: b.vmax_pu,
            },
        );
        model.areas.entry(b.area).or_insert_with(|| b.area.to_string());
    }

    let check_bus = |model: &NetworkModel, table, row, bus| {
        if model.buses.contains_key(&bus) {
            Ok(())
        } else {
            Err(IngestError::DanglingBus { table, row, bus })
        }
    };

    let mut next_branch = 1usize;
    for line in &raw.lines {
        check_bus(&model, "lines.csv", line.row, line.f_bus)?;
        check_bus(&model, "lines.csv", line.row, line.t_bus)?;
        let kv = model.buses[&line.f_bus].base_kv;
        let z_base = kv * kv / base_mva;
        let mut br = crate::netmodel::Branch::new(
            next_branch,
            line.f_bus,
            line.t_bus,
            line.r_ohm / z_base,
            line.x_ohm / z_base,
        );
        let b_pu = line.b_s * z_base;
        br.b_fr = b_pu / 2.0;
        br.b_to = b_pu / 2.0;
        br.rate_a = line.rate_mva;
        br.status = int_bool(line.status);
        model.branches.insert(next_branch, br);
        next_branch += 1;
    }

    for t in &raw.xfmr2w {
        check_bus(&model, "transformers2w.csv", t.row, t.f_bus)?;
        check_bus(&model, "transformers2w.csv", t.row, t.t_bus)?;
        if t.mva_base <= 0.0 {
            return Err(IngestError::BadDeviceBase {
                table: "transformers2w.csv",
                row: t.row,
                base: t.mva_base,
            });
        }
        // device pu -> system pu: impedances scale by S_sys / S_dev
        let scale = base_mva / t.mva_base;
        let zm = Complex64::new(t.rm_pu, t.xm_pu);
        let section = TSection {
            z1: Complex64::new(t.r1_pu, t.x1_pu) * scale,
            z2: Complex64::new(t.r2_pu, t.x2_pu) * scale,
            z3: (zm.norm() > 0.0).then_some(zm * scale),
            v1_pu: t.v1_pu,
            v2_pu: t.v2_pu,
        };
        let mut br = xfmr2w_to_branch(&section, next_branch, t.f_bus, t.t_bus)?;
        br.status = int_bool(t.status);
        model.branches.insert(next_branch, br);
        next_branch += 1;
    }

    for t in &raw.xfmr3w {
        for bus in [t.bus1, t.bus2, t.bus3] {
            check_bus(&model, "transformers3w.csv", t.row, bus)?;
        }
        if t.mva_base <= 0.0 {
            return Err(IngestError::BadDeviceBase {
                table: "transformers3w.csv",
                row: t.row,
                base: t.mva_base,
            });
        }
        let scale = base_mva / t.mva_base;
        let zm = Complex64::new(t.rm_pu, t.xm_pu);
        let primary = model.buses[&t.bus1].clone();
        let aux_id = model.max_bus_id() + 1;
        let winding = ThreeWinding {
            z: [
                Complex64::new(t.r1_pu, t.x1_pu) * scale,
                Complex64::new(t.r2_pu, t.x2_pu) * scale,
                Complex64::new(t.r3_pu, t.x3_pu) * scale,
            ],
            z_mag: (zm.norm() > 0.0).then_some(zm * scale),
            v_pu: [t.v1_pu, t.v2_pu, t.v3_pu],
        };
        let aux_bus = Bus {
            id: aux_id,
            area: primary.area,
            base_kv: primary.base_kv,
            bus_type: BusType::PQ,
            vm: 1.0,
            va: 0.0,
            vmin: primary.vmin,
            vmax: primary.vmax,
        };
        let (legs, aux) = xfmr3w_to_branches(
            &winding,
            [t.bus1, t.bus2, t.bus3],
            aux_bus,
            [next_branch, next_branch + 1, next_branch + 2],
        )?;
        model.buses.insert(aux.id, aux);
        for mut leg in legs {
            leg.status = int_bool(t.status);
            model.branches.insert(leg.id, leg);
            next_branch += 1;
        }
    }

    for g in &raw.gens {
        check_bus(&model, "generators.csv", g.row, g.bus)?;
        if g.mva_base <= 0.0 {
            return Err(IngestError::BadDeviceBase {
                table: "generators.csv",
                row: g.row,
                base: g.mva_base,
            });
        }
        if model.gens.contains_key(&g.id) {
            return Err(IngestError::DuplicateId {
                table: "generators.csv",
                row: g.row,
                id: g.id,
            });
        }
        // device pu -> system pu: powers scale by S_dev / S_sys
        let scale = g.mva_base / base_mva;
        let kind = if g.kind.eq_ignore_ascii_case("network_source") {
            GenKind::NetworkSource
        } else {
            GenKind::Synchronous
        };
        model.gens.insert(
            g.id,
            Gen {
                id: g.id,
                bus: g.bus,
                pg: g.pg_pu * scale,
                qg: g.qg_pu * scale,
                pmin: g.pmin_pu * scale,
                pmax: g.pmax_pu * scale,
                qmin: g.qmin_pu * scale,
                qmax: g.qmax_pu * scale,
                vg: g.vg_pu,
                status: int_bool(g.status),
                kind,
                fuel: None,
                cost: None,
            },
        );
        let bus = model.buses.get_mut(&g.bus).unwrap();
        if bus.bus_type == BusType::PQ && int_bool(g.status) {
            bus.bus_type = BusType::PV;
        }
    }

    for l in &raw.loads {
        check_bus(&model, "loads.csv", l.row, l.bus)?;
        model.loads.insert(
            l.id,
            Load {
                id: l.id,
                bus: l.bus,
                pd: l.pd_mw / base_mva,
                qd: l.qd_mvar / base_mva,
                status: int_bool(l.status),
            },
        );
    }

    for s in &raw.shunts {
        check_bus(&model, "shunts.csv", s.row, s.bus)?;
        model.shunts.insert(
            s.id,
            Shunt {
                id: s.id,
                bus: s.bus,
                gs: s.gs_mw / base_mva,
                bs: s.bs_mvar / base_mva,
                status: int_bool(s.status),
            },
        );
    }

    // flag interconnectors now that all endpoints are known
    let areas: BTreeMap<usize, usize> = model.buses.values().map(|b| (b.id, b.area)).collect();
    for br in model.branches.values_mut() {
        br.interconnector = areas[&br.f_bus] != areas[&br.t_bus];
    }

    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_dir(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, content) in files {
            let mut f = File::create(dir.path().join(name)).unwrap();
            f.write_all(content.as_bytes()).unwrap();
        }
        dir
    }

    fn headers() -> Vec<(&'static str, String)> {
        vec![
            (
                "buses.csv",
                "id,area,base_kv,slack,vm_pu,va_deg,vmin_pu,vmax_pu\n".into(),
            ),
            (
                "lines.csv",
                "id,f_bus,t_bus,r_ohm,x_ohm,b_s,rate_mva,status\n".into(),
            ),
            (
                "transformers2w.csv",
                "id,f_bus,t_bus,mva_base,r1_pu,x1_pu,r2_pu,x2_pu,rm_pu,xm_pu,v1_pu,v2_pu,status\n"
                    .into(),
            ),
            (
                "transformers3w.csv",
                "id,bus1,bus2,bus3,mva_base,r1_pu,x1_pu,r2_pu,x2_pu,r3_pu,x3_pu,rm_pu,xm_pu,v1_pu,v2_pu,v3_pu,status\n".into(),
            ),
            (
                "generators.csv",
                "id,bus,mva_base,kind,pg_pu,qg_pu,pmin_pu,pmax_pu,qmin_pu,qmax_pu,vg_pu,status\n"
                    .into(),
            ),
            ("loads.csv", "id,bus,pd_mw,qd_mvar,status\n".into()),
            ("shunts.csv", "id,bus,gs_mw,bs_mvar,status\n".into()),
        ]
    }

    fn fixture(extra: &[(&str, &str)]) -> tempfile::TempDir {
        let mut files = headers();
        for (name, more) in extra {
            let slot = files.iter_mut().find(|(n, _)| n == name).unwrap();
            slot.1.push_str(more);
        }
        let borrowed: Vec<(&str, &str)> = files.iter().map(|(n, c)| (*n, c.as_str())).collect();
        write_dir(&borrowed)
    }

    #[test]
    fn empty_headed_csvs_give_empty_tables() {
        let dir = fixture(&[]);
        let raw = load_tables(dir.path()).unwrap();
        assert!(raw.buses.is_empty());
        assert!(raw.lines.is_empty());
        assert!(raw.gens.is_empty());
    }

    #[test]
    fn missing_file_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_tables(dir.path()),
            Err(IngestError::MissingFile(_))
        ));
    }

    #[test]
    fn three_bus_fixture_parses() {
        let dir = fixture(&[
            (
                "buses.csv",
                "1,1000,330,1,1.0,0.0,0.9,1.1\n2,1000,330,0,1.0,0.0,0.9,1.1\n3,2000,132,0,1.0,0.0,0.9,1.1\n",
            ),
            (
                "lines.csv",
                "1,1,2,10.0,60.0,0.0,500,1\n",
            ),
            (
                "transformers2w.csv",
                "1,2,3,100,0.002,0.05,0.002,0.05,0,0,1.0,1.0,1\n",
            ),
            (
                "generators.csv",
                "1,1,50,synchronous,0.5,0.0,0.0,1.0,-0.8,0.8,1.0,1\n",
            ),
            ("loads.csv", "1,3,40,10,1\n"),
        ]);
        let raw = load_tables(dir.path()).unwrap();
        assert_eq!(raw.buses.len(), 3);
        assert_eq!(raw.lines.len(), 1);

        let m = to_network(&raw, 100.0).unwrap();
        assert_eq!(m.buses.len(), 3);
        assert_eq!(m.branches.len(), 2);

        // 10 ohm on 330 kV at 100 MVA base
        let line = &m.branches[&1];
        assert!((line.r - 10.0 * 100.0 / (330.0 * 330.0)).abs() < 1e-15);
        assert!((line.r - 0.009182736455463728).abs() < 1e-12);

        // gen on 50 MVA device base, pmax = 1 pu device -> 0.5 pu system
        let gen = &m.gens[&1];
        assert!((gen.pmax - 0.5).abs() < 1e-15);
        assert!((gen.pg - 0.25).abs() < 1e-15);

        // transformer crosses areas -> interconnector
        let xf = &m.branches[&2];
        assert!(xf.is_transformer);
        assert!(xf.interconnector);
        assert!(!line.interconnector);

        // bus types: slack kept, gen bus promoted to PV
        assert_eq!(m.buses[&1].bus_type, BusType::REF);
        assert_eq!(m.buses[&3].bus_type, BusType::PQ);
    }

    #[test]
    fn unit_conversion_round_trips() {
        let dir = fixture(&[
            ("buses.csv", "1,1000,330,1,1.0,0.0,0.9,1.1\n2,1000,330,0,1.0,0.0,0.9,1.1\n"),
            ("lines.csv", "1,1,2,12.5,80.0,1e-4,700,1\n"),
        ]);
        let raw = load_tables(dir.path()).unwrap();
        let m = to_network(&raw, 100.0).unwrap();
        let z_base = 330.0 * 330.0 / 100.0;
        let br = &m.branches[&1];
        // pu -> SI -> pu
        let r_si = br.r * z_base;
        assert!((r_si - 12.5).abs() / 12.5 < 1e-12);
        let b_si = (br.b_fr + br.b_to) / z_base;
        assert!((b_si - 1e-4).abs() / 1e-4 < 1e-12);
    }

    #[test]
    fn three_winding_gets_aux_bus_above_max_id() {
        let dir = fixture(&[
            (
                "buses.csv",
                "10,1000,330,1,1.0,0.0,0.9,1.1\n20,1000,132,0,1.0,0.0,0.9,1.1\n30,1000,66,0,1.0,0.0,0.9,1.1\n",
            ),
            (
                "transformers3w.csv",
                "1,10,20,30,100,0.001,0.05,0.001,0.05,0.001,0.05,0,50,1.0,1.0,1.0,1\n",
            ),
        ]);
        let raw = load_tables(dir.path()).unwrap();
        let m = to_network(&raw, 100.0).unwrap();
        assert_eq!(m.buses.len(), 4);
        assert!(m.buses.contains_key(&31));
        assert_eq!(m.branches.len(), 3);
        // all legs end at the aux bus; primary leg carries the magnetizing shunt
        for br in m.branches.values() {
            assert_eq!(br.t_bus, 31);
        }
        assert!(m.branches[&1].b_to != 0.0);
        assert_eq!(m.branches[&2].b_to, 0.0);
    }

    #[test]
    fn dangling_and_bad_rows_reported() {
        let dir = fixture(&[
            ("buses.csv", "1,1000,330,1,1.0,0.0,0.9,1.1\n"),
            ("lines.csv", "1,1,99,10,60,0,500,1\n"),
        ]);
        let raw = load_tables(dir.path()).unwrap();
        assert!(matches!(
            to_network(&raw, 100.0),
            Err(IngestError::DanglingBus { bus: 99, .. })
        ));

        let dir = fixture(&[("loads.csv", "1,1,forty,10,1\n")]);
        match load_tables(dir.path()) {
            Err(IngestError::Rows { file, count, .. }) => {
                assert_eq!(file, "loads.csv");
                assert_eq!(count, 1);
            }
            other => panic!("expected row errors, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_device_base_rejected() {
        let dir = fixture(&[
            ("buses.csv", "1,1000,330,1,1.0,0.0,0.9,1.1\n"),
            (
                "generators.csv",
                "1,1,0,synchronous,0.5,0.0,0.0,1.0,-0.8,0.8,1.0,1\n",
            ),
        ]);
        let raw = load_tables(dir.path()).unwrap();
        assert!(matches!(
            to_network(&raw, 100.0),
            Err(IngestError::BadDeviceBase { .. })
        ));
    }
}
