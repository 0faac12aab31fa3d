//! MATPOWER case file reader and writer.
//!
//! Parses the literal-matrix subset of the MATPOWER `.m` format (the only
//! subset the published case files use): `mpc.baseMVA`, `mpc.bus`,
//! `mpc.gen`, `mpc.branch` and `mpc.gencost`. Cell arrays and unknown
//! fields are tolerated and skipped; unknown trailing columns are ignored.
//!
//! File units follow the format spec (MW/MVAr, degrees, MVA rates); the
//! in-memory [`NetworkModel`] is per-unit with radians. Loads and shunts
//! are split out of the bus matrix columns PD/QD and GS/BS the way
//! PowerModels does it; out-of-service loads and shunts cannot be
//! represented in the file and are dropped on write.

use std::fmt::Write as _;

use thiserror::Error;

use crate::netmodel::{
    Branch, BranchOrigin, Bus, BusType, Gen, GenCost, Load, NetworkModel, Shunt,
    DEFAULT_ANGLE_BOUND_RAD,
};

pub const BUS_COLS: usize = 13;
pub const GEN_COLS: usize = 21;
pub const BRANCH_COLS: usize = 13;

#[derive(Debug, Error)]
pub enum MatpowerError {
    #[error("line {line}: cannot parse '{token}' as a number")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: {section} row has {got} columns, need at least {want}")]
    ShortRow {
        line: usize,
        section: &'static str,
        got: usize,
        want: usize,
    },
    #[error("line {line}: duplicate bus id {id}")]
    DuplicateBus { line: usize, id: usize },
    #[error("line {line}: {section} references unknown bus {id}")]
    UnknownBus {
        line: usize,
        section: &'static str,
        id: usize,
    },
    #[error("line {line}: value in column {col} must be a non-negative integer")]
    BadId { line: usize, col: usize },
    #[error("line {line}: unterminated matrix for field '{field}'")]
    Unterminated { line: usize, field: String },
    #[error("missing required field '{0}'")]
    MissingField(&'static str),
    #[error("line {line}: gencost model {model} unsupported (only polynomial model 2)")]
    UnsupportedCostModel { line: usize, model: i64 },
    #[error("gencost has {got} rows for {gens} generators")]
    GencostShape { got: usize, gens: usize },
}

/// Raw MATPOWER case: matrices in file units and column order, with the
/// source line of each row retained for error reporting.
#[derive(Debug, Clone, Default)]
pub struct MatpowerCase {
    pub name: String,
    pub base_mva: f64,
    pub bus: Vec<Vec<f64>>,
    pub gen: Vec<Vec<f64>>,
    pub branch: Vec<Vec<f64>>,
    pub gencost: Vec<Vec<f64>>,
    pub bus_lines: Vec<usize>,
    pub gen_lines: Vec<usize>,
    pub branch_lines: Vec<usize>,
    pub gencost_lines: Vec<usize>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64, MatpowerError> {
    token.parse::<f64>().map_err(|_| MatpowerError::BadNumber {
        line,
        token: token.to_string(),
    })
}

/// Parse the textual case into raw matrices.
pub fn parse_case_text(text: &str) -> Result<MatpowerCase, MatpowerError> {
    let mut case = MatpowerCase::default();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;

    while i < lines.len() {
        let raw = strip_comment(lines[i]);
        let trimmed = raw.trim();

        if let Some(rest) = trimmed.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                case.name = rest[eq + 1..].trim().to_string();
            }
            i += 1;
            continue;
        }

        let Some(field_start) = trimmed.strip_prefix("mpc.") else {
            i += 1;
            continue;
        };
        let Some(eq) = field_start.find('=') else {
            i += 1;
            continue;
        };
        let field = field_start[..eq].trim().to_string();
        let after_eq = field_start[eq + 1..].trim_start();

        if after_eq.starts_with('[') {
            let (rows, row_lines, next) = parse_matrix(&lines, i, &field)?;
            match field.as_str() {
                "bus" => {
                    case.bus = rows;
                    case.bus_lines = row_lines;
                }
                "gen" => {
                    case.gen = rows;
                    case.gen_lines = row_lines;
                }
                "branch" => {
                    case.branch = rows;
                    case.branch_lines = row_lines;
                }
                "gencost" => {
                    case.gencost = rows;
                    case.gencost_lines = row_lines;
                }
                _ => {} // areas, dcline, ... not modeled
            }
            i = next;
        } else if after_eq.starts_with('{') {
            // cell array (bus_name and friends): skip to closing brace
            let mut j = i;
            loop {
                if strip_comment(lines[j]).contains('}') {
                    break;
                }
                j += 1;
                if j >= lines.len() {
                    return Err(MatpowerError::Unterminated {
                        line: i + 1,
                        field,
                    });
                }
            }
            i = j + 1;
        } else {
            // scalar or string field on one line
            if field == "baseMVA" {
                let value = after_eq.trim_end_matches(';').trim();
                case.base_mva = parse_number(value, i + 1)?;
            }
            i += 1;
        }
    }

    if case.base_mva == 0.0 {
        return Err(MatpowerError::MissingField("baseMVA"));
    }
    if case.bus.is_empty() && case.bus_lines.is_empty() {
        return Err(MatpowerError::MissingField("bus"));
    }
    Ok(case)
}

/// Collect a `[ ... ];` matrix starting at line `start`. Returns rows, the
/// 1-based source line of each row, and the index of the line after the
/// closing bracket. Rows end at ';' or at a newline.
#[allow(clippy::type_complexity)]
fn parse_matrix(
    lines: &[&str],
    start: usize,
    field: &str,
) -> Result<(Vec<Vec<f64>>, Vec<usize>, usize), MatpowerError> {
    let mut rows = Vec::new();
    let mut row_lines = Vec::new();
    let mut pending: Vec<f64> = Vec::new();
    let mut pending_line = start + 1;
    let mut j = start;

    loop {
        if j >= lines.len() {
            return Err(MatpowerError::Unterminated {
                line: start + 1,
                field: field.to_string(),
            });
        }
        let mut text = strip_comment(lines[j]);
        if j == start {
            // drop everything up to and including the '['
            match text.find('[') {
                Some(pos) => text = &text[pos + 1..],
                None => {
                    return Err(MatpowerError::Unterminated {
                        line: start + 1,
                        field: field.to_string(),
                    })
                }
            }
        }

        let mut done = false;
        if let Some(pos) = text.find(']') {
            text = &text[..pos];
            done = true;
        }

        let mut rest = text;
        loop {
            match rest.find(';') {
                Some(pos) => {
                    let (head, tail) = rest.split_at(pos);
                    push_tokens(head, j + 1, &mut pending, &mut pending_line)?;
                    if !pending.is_empty() {
                        rows.push(std::mem::take(&mut pending));
                        row_lines.push(pending_line);
                    }
                    rest = &tail[1..];
                }
                None => {
                    push_tokens(rest, j + 1, &mut pending, &mut pending_line)?;
                    break;
                }
            }
        }

        if done || !pending.is_empty() {
            if !pending.is_empty() {
                rows.push(std::mem::take(&mut pending));
                row_lines.push(pending_line);
            }
            if done {
                return Ok((rows, row_lines, j + 1));
            }
        }
        j += 1;
    }
}

fn push_tokens(
    text: &str,
    line: usize,
    pending: &mut Vec<f64>,
    pending_line: &mut usize,
) -> Result<(), MatpowerError> {
    for tok in text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
    {
        if pending.is_empty() {
            *pending_line = line;
        }
        pending.push(parse_number(tok, line)?);
    }
    Ok(())
}

fn as_id(v: f64, line: usize, col: usize) -> Result<usize, MatpowerError> {
    let r = v.round();
    if (v - r).abs() > 1e-6 || r < 0.0 {
        return Err(MatpowerError::BadId { line, col });
    }
    Ok(r as usize)
}

/// Convert a raw case to the per-unit network model.
pub fn case_to_model(case: &MatpowerCase) -> Result<NetworkModel, MatpowerError> {
    let deg = std::f64::consts::PI / 180.0;
    let base = case.base_mva;
    let mut model = NetworkModel::new(case.name.clone(), base);
    let mut next_load = 1;
    let mut next_shunt = 1;

    for (row, &line) in case.bus.iter().zip(&case.bus_lines) {
        if row.len() < BUS_COLS {
            return Err(MatpowerError::ShortRow {
                line,
                section: "bus",
                got: row.len(),
                want: BUS_COLS,
            });
        }
        let id = as_id(row[0], line, 1)?;
        if model.buses.contains_key(&id) {
            return Err(MatpowerError::DuplicateBus { line, id });
        }
        let bus_type = match row[1] as i64 {
            2 => BusType::PV,
            3 => BusType::REF,
            _ => BusType::PQ,
        };
        let area = as_id(row[6], line, 7)?;
        model.buses.insert(
            id,
            Bus {
                id,
                area,
                base_kv: row[9],
                bus_type,
                vm: row[7],
                va: row[8] * deg,
                vmin: row[12],
                vmax: row[11],
            },
        );
        model
            .areas
            .entry(area)
            .or_insert_with(|| area.to_string());
        if row[2] != 0.0 || row[3] != 0.0 {
            model.loads.insert(
                next_load,
                Load {
                    id: next_load,
                    bus: id,
                    pd: row[2] / base,
                    qd: row[3] / base,
                    status: true,
                },
            );
            next_load += 1;
        }
        if row[4] != 0.0 || row[5] != 0.0 {
            model.shunts.insert(
                next_shunt,
                Shunt {
                    id: next_shunt,
                    bus: id,
                    gs: row[4] / base,
                    bs: row[5] / base,
                    status: true,
                },
            );
            next_shunt += 1;
        }
    }

    for (n, (row, &line)) in case.gen.iter().zip(&case.gen_lines).enumerate() {
        if row.len() < 10 {
            return Err(MatpowerError::ShortRow {
                line,
                section: "gen",
                got: row.len(),
                want: 10,
            });
        }
        let bus = as_id(row[0], line, 1)?;
        if !model.buses.contains_key(&bus) {
            return Err(MatpowerError::UnknownBus {
                line,
                section: "gen",
                id: bus,
            });
        }
        let id = n + 1;
        model.gens.insert(
            id,
            Gen {
                id,
                bus,
                pg: row[1] / base,
                qg: row[2] / base,
                qmax: row[3] / base,
                qmin: row[4] / base,
                vg: row[5],
                status: row[7] > 0.0,
                pmax: row[8] / base,
                pmin: row[9] / base,
                kind: crate::netmodel::GenKind::Synchronous,
                fuel: None,
                cost: None,
            },
        );
    }

    for (n, (row, &line)) in case.branch.iter().zip(&case.branch_lines).enumerate() {
        if row.len() < 11 {
            return Err(MatpowerError::ShortRow {
                line,
                section: "branch",
                got: row.len(),
                want: 11,
            });
        }
        let f_bus = as_id(row[0], line, 1)?;
        let t_bus = as_id(row[1], line, 2)?;
        for bus in [f_bus, t_bus] {
            if !model.buses.contains_key(&bus) {
                return Err(MatpowerError::UnknownBus {
                    line,
                    section: "branch",
                    id: bus,
                });
            }
        }
        let tap_col = row[8];
        let is_transformer = tap_col != 0.0;
        let tap = if tap_col == 0.0 { 1.0 } else { tap_col };
        let (angmin, angmax) = match (row.get(11), row.get(12)) {
            (Some(&lo), Some(&hi)) if !(lo == 0.0 && hi == 0.0) && lo > -360.0 && hi < 360.0 => {
                (lo * deg, hi * deg)
            }
            _ => (-DEFAULT_ANGLE_BOUND_RAD, DEFAULT_ANGLE_BOUND_RAD),
        };
        let id = n + 1;
        model.branches.insert(
            id,
            Branch {
                id,
                f_bus,
                t_bus,
                r: row[2],
                x: row[3],
                b_fr: row[4] / 2.0,
                b_to: row[4] / 2.0,
                rate_a: row[5],
                tap,
                shift: row[9] * deg,
                status: row[10] > 0.0,
                is_transformer,
                origin: if is_transformer {
                    BranchOrigin::Xfmr2w
                } else {
                    BranchOrigin::Line
                },
                angmin,
                angmax,
                interconnector: model.buses[&f_bus].area != model.buses[&t_bus].area,
            },
        );
    }

    if !case.gencost.is_empty() {
        if case.gencost.len() != case.gen.len() {
            return Err(MatpowerError::GencostShape {
                got: case.gencost.len(),
                gens: case.gen.len(),
            });
        }
        for (n, (row, &line)) in case.gencost.iter().zip(&case.gencost_lines).enumerate() {
            if row.len() < 4 {
                return Err(MatpowerError::ShortRow {
                    line,
                    section: "gencost",
                    got: row.len(),
                    want: 4,
                });
            }
            let mdl = row[0] as i64;
            if mdl != 2 {
                return Err(MatpowerError::UnsupportedCostModel { line, model: mdl });
            }
            let ncost = row[3] as usize;
            if row.len() < 4 + ncost {
                return Err(MatpowerError::ShortRow {
                    line,
                    section: "gencost",
                    got: row.len(),
                    want: 4 + ncost,
                });
            }
            let coeffs = row[4..4 + ncost].to_vec();
            let gen = model.gens.get_mut(&(n + 1)).expect("gencost shape checked");
            gen.cost = Some(GenCost {
                startup: row[1],
                shutdown: row[2],
                coeffs,
            });
        }
    }

    Ok(model)
}

/// Parse MATPOWER case text straight into a network model.
pub fn parse_matpower(text: &str) -> Result<NetworkModel, MatpowerError> {
    case_to_model(&parse_case_text(text)?)
}

/// Shortest representation that round-trips the f64 exactly.
fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn sanitize_name(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if out.is_empty() || out.chars().next().unwrap().is_ascii_digit() {
        out.insert_str(0, "case_");
    }
    out
}

/// Convert a network model back to a raw case (file units, stable id order).
pub fn model_to_case(model: &NetworkModel) -> MatpowerCase {
    let rad = 180.0 / std::f64::consts::PI;
    let base = model.base_mva;
    let mut case = MatpowerCase {
        name: sanitize_name(&model.name),
        base_mva: base,
        ..Default::default()
    };

    for bus in model.buses.values() {
        let (mut pd, mut qd, mut gs, mut bs) = (0.0, 0.0, 0.0, 0.0);
        for l in model.loads_at(bus.id).filter(|l| l.status) {
            pd += l.pd * base;
            qd += l.qd * base;
        }
        for s in model.shunts_at(bus.id).filter(|s| s.status) {
            gs += s.gs * base;
            bs += s.bs * base;
        }
        let bt = match bus.bus_type {
            BusType::PQ => 1.0,
            BusType::PV => 2.0,
            BusType::REF => 3.0,
        };
        case.bus.push(vec![
            bus.id as f64,
            bt,
            pd,
            qd,
            gs,
            bs,
            bus.area as f64,
            bus.vm,
            bus.va * rad,
            bus.base_kv,
            1.0,
            bus.vmax,
            bus.vmin,
        ]);
    }

    for g in model.gens.values() {
        case.gen.push(vec![
            g.bus as f64,
            g.pg * base,
            g.qg * base,
            g.qmax * base,
            g.qmin * base,
            g.vg,
            base,
            if g.status { 1.0 } else { 0.0 },
            g.pmax * base,
            g.pmin * base,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ]);
    }

    for br in model.branches.values() {
        case.branch.push(vec![
            br.f_bus as f64,
            br.t_bus as f64,
            br.r,
            br.x,
            br.b_fr + br.b_to,
            br.rate_a,
            0.0,
            0.0,
            if br.is_transformer { br.tap } else { 0.0 },
            br.shift * rad,
            if br.status { 1.0 } else { 0.0 },
            br.angmin * rad,
            br.angmax * rad,
        ]);
    }

    if model.gens.values().any(|g| g.cost.is_some()) {
        for g in model.gens.values() {
            let cost = g.cost.clone().unwrap_or_else(|| GenCost::linear(0.0, 0.0));
            let mut row = vec![
                2.0,
                cost.startup,
                cost.shutdown,
                cost.coeffs.len() as f64,
            ];
            row.extend(&cost.coeffs);
            case.gencost.push(row);
        }
    }

    case
}

/// Render a raw case as `.m` text. Deterministic: rows follow model id
/// order, numbers use shortest exact representation.
pub fn write_case(case: &MatpowerCase) -> String {
    let mut out = String::new();
    let name = if case.name.is_empty() {
        "mpc".to_string()
    } else {
        sanitize_name(&case.name)
    };
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", fmt_f64(case.base_mva));

    let sections: [(&str, &Vec<Vec<f64>>); 4] = [
        ("bus", &case.bus),
        ("gen", &case.gen),
        ("branch", &case.branch),
        ("gencost", &case.gencost),
    ];
    for (field, rows) in sections {
        if rows.is_empty() && field != "bus" {
            continue;
        }
        let _ = writeln!(out, "\nmpc.{field} = [");
        for row in rows {
            let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(out, "\t{};", cells.join("\t"));
        }
        let _ = writeln!(out, "];");
    }
    out
}

/// Serialize a network model as MATPOWER case text.
pub fn write_matpower(model: &NetworkModel) -> String {
    write_case(&model_to_case(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "\
function mpc = tiny2
% a comment line
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t330\t1\t1.1\t0.9;
\t2\t1\t20\t5\t0\t0\t1\t1\t0\t330\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t300\t-300\t1\t100\t1\t500\t0\t0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t250\t0\t0\t0\t0\t1\t-30\t30;
];
mpc.gencost = [
\t2\t0\t0\t2\t10\t0;
];
";

    #[test]
    fn parses_minimal_two_bus() {
        let m = parse_matpower(TWO_BUS).unwrap();
        assert_eq!(m.buses.len(), 2);
        assert_eq!(m.branches.len(), 1);
        assert_eq!(m.gens.len(), 1);
        assert_eq!(m.loads.len(), 1);
        assert_eq!(m.base_mva, 100.0);
        assert!((m.loads[&1].pd - 0.2).abs() < 1e-15);
        let br = &m.branches[&1];
        assert!(!br.is_transformer);
        assert!((br.b_fr - 0.01).abs() < 1e-15);
        assert_eq!(m.gens[&1].cost.as_ref().unwrap().coeffs, vec![10.0, 0.0]);
    }

    #[test]
    fn round_trip_preserves_model() {
        let m = parse_matpower(TWO_BUS).unwrap();
        let text = write_matpower(&m);
        let m2 = parse_matpower(&text).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn writer_is_idempotent() {
        let m = parse_matpower(TWO_BUS).unwrap();
        let w1 = write_matpower(&m);
        let w2 = write_matpower(&parse_matpower(&w1).unwrap());
        assert_eq!(w1, w2);
    }

    #[test]
    fn tolerates_trailing_columns_and_unknown_fields() {
        let text = TWO_BUS
            .replace(
                "\t1\t2\t0.01\t0.1\t0.02\t250\t0\t0\t0\t0\t1\t-30\t30;",
                "\t1\t2\t0.01\t0.1\t0.02\t250\t0\t0\t0\t0\t1\t-30\t30\t99\t98;",
            )
            .replace(
                "mpc.gencost",
                "mpc.bus_name = {\n\t'a';\n\t'b';\n};\nmpc.extra = 42;\nmpc.gencost",
            );
        let m = parse_matpower(&text).unwrap();
        assert_eq!(m.branches.len(), 1);
    }

    #[test]
    fn reports_bad_number_with_line() {
        let text = TWO_BUS.replace("\t2\t1\t20\t5", "\t2\t1\ttwenty\t5");
        match parse_matpower(&text) {
            Err(MatpowerError::BadNumber { line, token }) => {
                assert_eq!(token, "twenty");
                assert_eq!(line, 7);
            }
            other => panic!("expected BadNumber, got {other:?}"),
        }
    }

    #[test]
    fn reports_duplicate_bus() {
        let text = TWO_BUS.replace(
            "\t2\t1\t20\t5\t0\t0\t1\t1\t0\t330\t1\t1.1\t0.9;",
            "\t1\t1\t20\t5\t0\t0\t1\t1\t0\t330\t1\t1.1\t0.9;",
        );
        assert!(matches!(
            parse_matpower(&text),
            Err(MatpowerError::DuplicateBus { id: 1, .. })
        ));
    }

    #[test]
    fn reports_unknown_bus_reference() {
        let text = TWO_BUS.replace(
            "\t1\t2\t0.01\t0.1",
            "\t1\t7\t0.01\t0.1",
        );
        assert!(matches!(
            parse_matpower(&text),
            Err(MatpowerError::UnknownBus { id: 7, .. })
        ));
    }

    #[test]
    fn single_line_matrix_parses() {
        let text = "function mpc = t\nmpc.baseMVA = 100;\nmpc.bus = [ 1 3 0 0 0 0 1 1 0 330 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 330 1 1.1 0.9 ];\n";
        let case = parse_case_text(text).unwrap();
        assert_eq!(case.bus.len(), 2);
    }

    #[test]
    fn empty_model_writes_valid_skeleton() {
        let m = NetworkModel::new("empty", 100.0);
        let text = write_matpower(&m);
        assert!(text.contains("mpc.baseMVA = 100;"));
        assert!(text.contains("mpc.bus = ["));
    }

    #[test]
    fn tap_zero_means_line_tap_one() {
        let m = parse_matpower(TWO_BUS).unwrap();
        assert_eq!(m.branches[&1].tap, 1.0);
        let text = write_matpower(&m);
        // line branches write tap column as 0
        let m2 = parse_matpower(&text).unwrap();
        assert!(!m2.branches[&1].is_transformer);
    }
}
