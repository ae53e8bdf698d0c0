//! File formats used by the command-line tool.
//!
//! * structure JSON: explicit `{"n_bottom", "constraints", "labels"?}`, or a
//!   shorthand `{"temporal": {"periods", "factors"}}` / `{"binary": m}`.
//! * forecast JSON: `{"forecasts": [...]}` in `[u; b]` order, or an object
//!   keyed by node label. Each entry is `{"family", "params"}`; sample
//!   families may instead give `"source": {"csv", "column"}`.
//! * particle CSV: header of bottom labels, one particle per row.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::distributions::ForecastDistribution;
use crate::error::{Error, Result};
use crate::hierarchy::{
    binary_hierarchy, temporal_structure, AggregationStructure, GroupedStructure, StructureFile,
};
use crate::reconcile::{BaseForecasts, Particles};

#[derive(Debug, Deserialize)]
struct TemporalSpec {
    periods: usize,
    factors: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum StructureInput {
    Temporal {
        temporal: TemporalSpec,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
    Binary {
        binary: usize,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
    Explicit(StructureFile),
}

fn with_labels(g: GroupedStructure, labels: Option<Vec<String>>) -> Result<GroupedStructure> {
    match labels {
        None => Ok(g),
        Some(l) => StructureFile {
            labels: Some(l),
            ..StructureFile::from(&g)
        }
        .into_structure(),
    }
}

pub fn parse_structure(text: &str) -> Result<GroupedStructure> {
    match serde_json::from_str::<StructureInput>(text)? {
        StructureInput::Temporal { temporal, labels } => with_labels(
            temporal_structure(temporal.periods, &temporal.factors)?,
            labels,
        ),
        StructureInput::Binary { binary, labels } => {
            with_labels(GroupedStructure::from(&binary_hierarchy(binary)?), labels)
        }
        StructureInput::Explicit(f) => f.into_structure(),
    }
}

pub fn read_structure(path: &Path) -> Result<GroupedStructure> {
    parse_structure(&std::fs::read_to_string(path).map_err(|e| with_path(e, path))?)
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsvColumn {
    csv: PathBuf,
    column: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForecastEntry {
    family: String,
    #[serde(default)]
    params: Option<Value>,
    #[serde(default)]
    source: Option<CsvColumn>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ForecastList {
    Ordered(Vec<ForecastEntry>),
    Keyed(BTreeMap<String, ForecastEntry>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForecastFile {
    forecasts: ForecastList,
}

/// One named column of a CSV file; empty cells are skipped.
pub fn read_csv_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_path(path)?;
    let idx = rd
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::InvalidInput(format!("{}: no column {column:?}", path.display())))?;
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        out.push(cell.parse::<f64>().map_err(|_| {
            Error::InvalidInput(format!(
                "{}:{}: {column}: not a number: {cell:?}",
                path.display(),
                line + 2
            ))
        })?);
    }
    Ok(out)
}

fn entry_to_distribution(
    entry: ForecastEntry,
    dir: &Path,
    name: &str,
) -> Result<ForecastDistribution> {
    let field = |e: Error| Error::InvalidInput(format!("forecast {name}: {e}"));
    let params = match (entry.params, entry.source) {
        (Some(p), None) => p,
        (None, Some(src)) => {
            let path = dir.join(&src.csv);
            let xs = read_csv_column(&path, &src.column).map_err(field)?;
            match entry.family.as_str() {
                "samples_continuous" => serde_json::json!({ "samples": xs }),
                "samples_discrete" => {
                    let counts: Option<Vec<u64>> = xs
                        .iter()
                        .map(|&x| (x >= 0.0 && x.fract() == 0.0).then_some(x as u64))
                        .collect();
                    let counts = counts.ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "forecast {name}: {} has non-count values",
                            src.column
                        ))
                    })?;
                    serde_json::json!({ "samples": counts })
                }
                other => {
                    return Err(Error::InvalidInput(format!(
                        "forecast {name}: family {other:?} cannot take a csv source"
                    )))
                }
            }
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "forecast {name}: give exactly one of \"params\" or \"source\""
            )))
        }
    };
    let d: ForecastDistribution =
        serde_json::from_value(serde_json::json!({ "family": entry.family, "params": params }))
            .map_err(|e| Error::InvalidInput(format!("forecast {name}: {e}")))?;
    d.validate().map_err(field)?;
    Ok(d)
}

/// Parse a forecast file against `structure`. `dir` resolves CSV sources.
pub fn parse_forecasts(
    text: &str,
    structure: &GroupedStructure,
    dir: &Path,
) -> Result<BaseForecasts> {
    let file: ForecastFile = serde_json::from_str(text)?;
    let labels = structure.node_labels();
    let all = match file.forecasts {
        ForecastList::Ordered(list) => {
            if list.len() != structure.n_total() {
                return Err(Error::InvalidInput(format!(
                    "forecasts: expected {} entries (one per node), found {}",
                    structure.n_total(),
                    list.len()
                )));
            }
            list.into_iter()
                .enumerate()
                .map(|(i, e)| entry_to_distribution(e, dir, &format!("[{i}] ({})", labels[i])))
                .collect::<Result<Vec<_>>>()?
        }
        ForecastList::Keyed(mut map) => {
            let out = labels
                .iter()
                .map(|l| {
                    let e = map.remove(l).ok_or_else(|| {
                        Error::InvalidInput(format!("forecasts: missing node {l:?}"))
                    })?;
                    entry_to_distribution(e, dir, l)
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(extra) = map.keys().next() {
                return Err(Error::InvalidInput(format!(
                    "forecasts: unknown node {extra:?}"
                )));
            }
            out
        }
    };
    BaseForecasts::from_node_order(structure, all)
}

pub fn read_forecasts(path: &Path, structure: &GroupedStructure) -> Result<BaseForecasts> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(e, path))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_forecasts(&text, structure, dir)
}

/// Serialize base forecasts in `[u; b]` order.
pub fn forecasts_json(base: &BaseForecasts) -> Result<String> {
    let all: Vec<&ForecastDistribution> = base.upper.iter().chain(&base.bottom).collect();
    Ok(serde_json::to_string_pretty(
        &serde_json::json!({ "forecasts": all }),
    )?)
}

pub fn write_particles(path: &Path, particles: &Particles, labels: &[String]) -> Result<()> {
    if labels.len() != particles.n_series() {
        return Err(Error::Dimension {
            expected: particles.n_series(),
            actual: labels.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(labels)?;
    let mut rec: Vec<String> = Vec::with_capacity(labels.len());
    for i in 0..particles.n_particles() {
        rec.clear();
        rec.extend(particles.columns().iter().map(|c| c[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a particle CSV; returns the header and the particles.
pub fn read_particles(path: &Path) -> Result<(Vec<String>, Particles)> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::InvalidInput(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                line + 2,
                header.len(),
                rec.len()
            )));
        }
        for (col, cell) in columns.iter_mut().zip(rec.iter()) {
            col.push(cell.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!(
                    "{}:{}: not a number: {cell:?}",
                    path.display(),
                    line + 2
                ))
            })?);
        }
    }
    Ok((header, Particles::from_columns(columns)?))
}

/// Metadata written next to reconciled particles.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunMeta {
    pub algorithm: String,
    pub seed: u64,
    pub n: usize,
    pub structure_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    pub wall_time_ms: f64,
}

/// A one-row CSV of values keyed by label.
pub fn read_labeled_row(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let rec = rd
        .records()
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: no data row", path.display())))??;
    header
        .into_iter()
        .zip(rec.iter())
        .map(|(h, cell)| {
            let v = cell.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("{}: {h}: not a number: {cell:?}", path.display()))
            })?;
            Ok((h, v))
        })
        .collect()
}

/// Every column of a CSV by header. Empty cells are skipped, so columns
/// may have different lengths.
pub fn read_columns(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        for (k, cell) in rec.iter().enumerate().take(header.len()) {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            cols[k].push(cell.parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!(
                    "{}:{}: {}: not a number: {cell:?}",
                    path.display(),
                    line + 2,
                    header[k]
                ))
            })?);
        }
    }
    Ok(header.into_iter().zip(cols).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_shorthands() {
        let w = parse_structure(r#"{"temporal": {"periods": 52, "factors": [2, 4, 13, 26, 52]}}"#)
            .unwrap();
        assert_eq!(w.n_upper(), 46);
        let b = parse_structure(r#"{"binary": 8}"#).unwrap();
        assert_eq!(b.n_upper(), 7);
        let e =
            parse_structure(r#"{"n_bottom": 2, "constraints": [[0, 1]], "labels": ["x", "y"]}"#)
                .unwrap();
        assert_eq!(e.node_labels(), vec!["u0", "x", "y"]);
    }

    #[test]
    fn forecasts_ordered_and_keyed() {
        let g = parse_structure(
            r#"{"n_bottom": 2, "constraints": [[0, 1]], "labels": ["tot", "a", "b"]}"#,
        )
        .unwrap();
        let ordered = r#"{"forecasts": [
            {"family": "poisson", "params": {"rate": 4}},
            {"family": "poisson", "params": {"rate": 1}},
            {"family": "negbin", "params": {"mean": 2, "dispersion": 3}}]}"#;
        let a = parse_forecasts(ordered, &g, Path::new(".")).unwrap();
        let keyed = r#"{"forecasts": {
            "b": {"family": "negbin", "params": {"mean": 2, "dispersion": 3}},
            "tot": {"family": "poisson", "params": {"rate": 4}},
            "a": {"family": "poisson", "params": {"rate": 1}}}}"#;
        let b = parse_forecasts(keyed, &g, Path::new(".")).unwrap();
        assert_eq!(a, b);
        let short = r#"{"forecasts": [{"family": "poisson", "params": {"rate": 4}}]}"#;
        assert!(parse_forecasts(short, &g, Path::new(".")).is_err());
        let bad = r#"{"forecasts": [
            {"family": "poisson", "params": {"rate": -4}},
            {"family": "poisson", "params": {"rate": 1}},
            {"family": "poisson", "params": {"rate": 1}}]}"#;
        let msg = parse_forecasts(bad, &g, Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("[0] (tot)"), "{msg}");
    }

    #[test]
    fn csv_sources_and_particle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.csv"), "tot,junk\n3,x\n5,y\n\n4,z\n").unwrap();
        let g = parse_structure(r#"{"n_bottom": 2, "constraints": [[0, 1]]}"#).unwrap();
        let text = r#"{"forecasts": [
            {"family": "samples_discrete", "source": {"csv": "s.csv", "column": "tot"}},
            {"family": "poisson", "params": {"rate": 1}},
            {"family": "poisson", "params": {"rate": 2}}]}"#;
        let base = parse_forecasts(text, &g, dir.path()).unwrap();
        assert_eq!(
            base.upper[0],
            ForecastDistribution::EmpiricalDiscrete {
                samples: vec![3, 5, 4]
            }
        );

        let p = Particles::from_rows(&[vec![1.0, 2.5], vec![3.0, 4.0]]).unwrap();
        let path = dir.path().join("p.csv");
        write_particles(&path, &p, &["b0".into(), "b1".into()]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "b0,b1\n1,2.5\n3,4\n"
        );
        let (h, q) = read_particles(&path).unwrap();
        assert_eq!(h, vec!["b0", "b1"]);
        assert_eq!(p, q);
    }
}
