//! File formats: instance JSON, record CSVs, experiment configs and result CSVs.
//!
//! Readers validate everything before handing data to the core and report
//! the offending field or row. Instance files come in two shapes:
//!
//! ```json
//! {"k": 2, "a": [0.4, 0.1, 0.2, 0.3], "q": [[0.5, 0.5], [0.8, 0.2], [0.3, 0.7], [0.4, 0.6]]}
//! {"p": [[0.2, 0.2], [0.08, 0.02], [0.06, 0.14], [0.12, 0.18]]}
//! ```
//!
//! Rows are in canonical group order (y,t) = (0,0), (0,1), (1,0), (1,1).
//! Record CSVs have a header with columns `y,t,z` (plus `x` for stratified
//! data); an empty `z` marks a confounded-only record.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{Dataset, DeconfoundedCounts, StratifiedRecord};
use crate::model::{
    joint_from_parts, parts_from_joint, ConditionalTable, ConfoundedDistribution, Group, JointDistribution, PROB_TOL,
};
use crate::sim::{ErrorCurve, ExperimentConfig, InstanceSource};

/// Serialized form of an instance, either factored (`a`, `q`) or joint (`p`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
}

const GROUP_NAMES: [&str; 4] = ["(y=0,t=0)", "(y=0,t=1)", "(y=1,t=0)", "(y=1,t=1)"];

fn check_entries(field: &str, values: &[f64]) -> std::result::Result<(), String> {
    match values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(i) => Err(format!("{field}: entry {i} = {} must be a non-negative number", values[i])),
        None => Ok(()),
    }
}

fn check_sum(field: &str, values: &[f64]) -> std::result::Result<(), String> {
    check_entries(field, values)?;
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(format!("{field}: entries sum to {sum}, expected 1"));
    }
    Ok(())
}

fn four_rows<'a>(field: &str, rows: &'a [Vec<f64>], k: Option<usize>) -> std::result::Result<&'a [Vec<f64>], String> {
    if rows.len() != 4 {
        return Err(format!("{field}: expected 4 rows (one per (y,t) group), found {}", rows.len()));
    }
    let k = k.unwrap_or(rows[0].len());
    if k < 2 {
        return Err(format!("{field}: k must be at least 2, got {k}"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != k {
            return Err(format!(
                "{field} row {i} {}: has {} entries, expected k = {k}",
                GROUP_NAMES[i],
                row.len()
            ));
        }
    }
    Ok(rows)
}

impl InstanceFile {
    pub fn from_parts(a: &ConfoundedDistribution, q: &ConditionalTable) -> Self {
        InstanceFile {
            k: Some(q.k()),
            a: Some(a.as_array().to_vec()),
            q: Some(q.rows().to_vec()),
            ..Default::default()
        }
    }

    pub fn from_joint(p: &JointDistribution) -> Self {
        let parts = parts_from_joint(p);
        InstanceFile::from_parts(&parts.a, &parts.q)
    }

    fn validate(&self) -> std::result::Result<JointDistribution, String> {
        match (&self.a, &self.q, &self.p) {
            (Some(a), Some(q), None) => {
                if a.len() != 4 {
                    return Err(format!("a: expected 4 entries, found {}", a.len()));
                }
                check_sum("a", a)?;
                let q = four_rows("q", q, self.k)?;
                for (i, row) in q.iter().enumerate() {
                    check_sum(&format!("q row {i} {}", GROUP_NAMES[i]), row)?;
                }
                let a = ConfoundedDistribution::new([a[0], a[1], a[2], a[3]]).map_err(|e| e.to_string())?;
                let q = ConditionalTable::new([q[0].clone(), q[1].clone(), q[2].clone(), q[3].clone()])
                    .map_err(|e| e.to_string())?;
                Ok(joint_from_parts(&a, &q))
            }
            (None, None, Some(p)) => {
                let p = four_rows("p", p, self.k)?;
                for (i, row) in p.iter().enumerate() {
                    check_entries(&format!("p row {i} {}", GROUP_NAMES[i]), row)?;
                }
                let flat: Vec<f64> = p.iter().flatten().copied().collect();
                check_sum("p", &flat)?;
                JointDistribution::new([p[0].clone(), p[1].clone(), p[2].clone(), p[3].clone()]).map_err(|e| e.to_string())
            }
            (_, _, Some(_)) => Err("give either `p` or both `a` and `q`, not both forms".into()),
            (None, _, None) => Err("missing field `a` (or give the joint table as `p`)".into()),
            (Some(_), None, None) => Err("missing field `q`".into()),
        }
    }

    pub fn to_joint(&self) -> Result<JointDistribution> {
        self.validate().map_err(Error::InvalidDistribution)
    }
}

fn input_error(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Input {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| input_error(path, e))?;
    Ok(s)
}

fn parse_instance(path: &Path) -> Result<InstanceFile> {
    serde_json::from_str(&read_text(path)?).map_err(|e| input_error(path, e))
}

pub fn read_instance(path: &Path) -> Result<JointDistribution> {
    parse_instance(path)?.validate().map_err(|m| input_error(path, m))
}

/// Reads `a` from a file holding `{"a": [...]}` or a full instance.
pub fn read_marginal(path: &Path) -> Result<ConfoundedDistribution> {
    let file = parse_instance(path)?;
    match (&file.a, &file.p) {
        (Some(a), None) if file.q.is_none() => {
            if a.len() != 4 {
                return Err(input_error(path, format!("a: expected 4 entries, found {}", a.len())));
            }
            check_sum("a", a).map_err(|m| input_error(path, m))?;
            ConfoundedDistribution::new([a[0], a[1], a[2], a[3]]).map_err(|e| input_error(path, e))
        }
        _ => Ok(parts_from_joint(&file.validate().map_err(|m| input_error(path, m))?).a),
    }
}

pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::other)?;
    writeln!(out)?;
    Ok(())
}

struct Columns {
    x: Option<usize>,
    y: usize,
    t: usize,
    z: Option<usize>,
}

fn columns(path: &Path, headers: &csv::StringRecord, with_x: bool) -> Result<Columns> {
    let mut found: [Option<usize>; 4] = [None; 4];
    for (i, h) in headers.iter().enumerate() {
        let slot = match h.trim() {
            "x" if with_x => 0,
            "y" => 1,
            "t" => 2,
            "z" => 3,
            other => return Err(input_error(path, format!("unknown column `{other}` in header"))),
        };
        if found[slot].replace(i).is_some() {
            return Err(input_error(path, format!("duplicate column `{}`", h.trim())));
        }
    }
    let need = |slot: usize, name: &str| found[slot].ok_or_else(|| input_error(path, format!("missing column `{name}`")));
    Ok(Columns {
        x: if with_x { Some(need(0, "x")?) } else { None },
        y: need(1, "y")?,
        t: need(2, "t")?,
        z: found[3],
    })
}

struct Row {
    x: Option<usize>,
    group: Group,
    z: Option<usize>,
}

fn read_rows(path: &Path, k: usize, with_x: bool) -> Result<Vec<Row>> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_error(path, e))?;
    let cols = columns(path, &reader.headers().map_err(|e| input_error(path, e))?.clone(), with_x)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Data rows are numbered from 1; line numbers include the header.
        let row_no = i + 1;
        let record = record.map_err(|e| input_error(path, format!("row {row_no}: {e}")))?;
        let bad = |msg: String| input_error(path, format!("row {row_no}: {msg}"));
        let field = |c: usize| record.get(c).unwrap_or("");
        let bit = |c: usize, name: &str| -> Result<u8> {
            match field(c) {
                "0" => Ok(0),
                "1" => Ok(1),
                v => Err(bad(format!("{name} must be 0 or 1, got `{v}`"))),
            }
        };
        let group = Group {
            y: bit(cols.y, "y")?,
            t: bit(cols.t, "t")?,
        };
        let z = match cols.z.map(field) {
            None | Some("") => None,
            Some(v) => match v.parse::<usize>() {
                Ok(z) if z < k => Some(z),
                _ => return Err(bad(format!("z must be an integer in [0, {k}), got `{v}`"))),
            },
        };
        let x = match cols.x {
            None => None,
            Some(c) => Some(
                field(c)
                    .parse::<usize>()
                    .map_err(|_| bad(format!("x must be a non-negative integer, got `{}`", field(c))))?,
            ),
        };
        rows.push(Row { x, group, z });
    }
    if rows.is_empty() {
        return Err(input_error(path, "no data rows"));
    }
    Ok(rows)
}

/// Every row is a confounded (y, t) record; rows with `z` are also deconfounded.
pub fn read_dataset(path: &Path, k: usize) -> Result<Dataset> {
    let rows: Vec<(Group, Option<usize>)> = read_rows(path, k, false)?.into_iter().map(|r| (r.group, r.z)).collect();
    Dataset::from_rows(k, &rows)
}

/// A fully revealed table for empirical simulations; every row needs `z`.
pub fn read_full_table(path: &Path, k: usize) -> Result<DeconfoundedCounts> {
    let mut counts = DeconfoundedCounts::zeros(k);
    for (i, row) in read_rows(path, k, false)?.into_iter().enumerate() {
        let z = row
            .z
            .ok_or_else(|| input_error(path, format!("row {}: z is required for a ground-truth table", i + 1)))?;
        counts.add(row.group, z, 1);
    }
    Ok(counts)
}

pub fn read_stratified(path: &Path, k: usize) -> Result<Vec<StratifiedRecord>> {
    Ok(read_rows(path, k, true)?
        .into_iter()
        .map(|r| StratifiedRecord {
            x: r.x.expect("x column"),
            group: r.group,
            z: r.z,
        })
        .collect())
}

/// Reads an experiment config; relative instance paths resolve against the
/// config's directory.
pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let mut config: ExperimentConfig = serde_json::from_str(&read_text(path)?).map_err(|e| input_error(path, e))?;
    if let Some(InstanceSource::Files(files)) = &mut config.instances {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for f in files.iter_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
    }
    Ok(config)
}

pub fn write_error_curve(out: &mut dyn Write, curve: &ErrorCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &curve.rows {
        w.serialize(row).map_err(std::io::Error::other)?;
    }
    if curve.rows.is_empty() {
        w.write_record([
            "policy",
            "grid_kind",
            "grid_value",
            "mean_abs_error",
            "std_abs_error",
            "reps",
            "instances",
        ])
        .map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_error_curve_file(path: &Path, curve: &ErrorCurve) -> Result<()> {
    let mut file = File::create(path).map_err(|e| input_error(path, e))?;
    write_error_curve(&mut file, curve)
}

pub fn read_error_curve(path: &Path) -> Result<ErrorCurve> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| input_error(path, e))?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| input_error(path, e))?;
    Ok(ErrorCurve { rows })
}
