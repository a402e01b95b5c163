//! Dataset CSV and forest JSON files, plus the usage-error marker the
//! binary maps to exit code 2.

use std::fmt;
use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use anyhow::Context;
use recourse_core::{
    load_forest, save_forest, Dataset, FeatureSpec, Instance, Label, RandomForest, Schema,
};

/// Marker for operator mistakes (bad flags, malformed inputs, missing
/// input files) as opposed to runtime failures. The binary exits 2 when
/// an error chain contains one.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn read_input(path: &Path) -> anyhow::Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == ErrorKind::NotFound => {
            Err(usage(format!("no such file: {}", path.display())))
        }
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

/// Header `f_<name>,...,label,group`, one instance per row. Feature
/// values use the shortest round-trip decimal form.
pub fn write_dataset_csv(path: &Path, dataset: &Dataset) -> anyhow::Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header: Vec<String> =
        dataset.schema().features().iter().map(|f| format!("f_{}", f.name)).collect();
    header.push("label".into());
    header.push("group".into());
    writer.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for inst in dataset.instances() {
        row.clear();
        row.extend(inst.features.iter().map(|v| v.to_string()));
        row.push(if inst.label.is_expert() { "1".into() } else { "0".into() });
        row.push(inst.group.to_string());
        writer.write_record(&row)?;
    }
    writer.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Feature domains are not stored in the CSV; each feature's bounds are
/// the column's observed min/max (widened a little when constant), so
/// every row is in-domain by construction. Callers that train on subsets
/// must keep the full-file schema to stay compatible with held-out rows.
pub fn read_dataset_csv(path: &Path) -> anyhow::Result<Dataset> {
    let text = read_input(path)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let columns: Vec<String> = headers.iter().map(str::to_string).collect();
    if columns.len() < 3
        || columns[columns.len() - 2] != "label"
        || columns[columns.len() - 1] != "group"
    {
        return Err(usage(format!(
            "{}: header must be f_<name>,...,label,group",
            path.display()
        )));
    }
    let d = columns.len() - 2;
    let mut names = Vec::with_capacity(d);
    for column in &columns[..d] {
        match column.strip_prefix("f_") {
            Some(name) if !name.is_empty() => names.push(name.to_string()),
            _ => {
                return Err(usage(format!(
                    "{}: feature column {column:?} must be named f_<name>",
                    path.display()
                )))
            }
        }
    }

    let mut rows: Vec<(Vec<f64>, Label, u32)> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let line = index + 2;
        let record = record.map_err(|e| usage(format!("{}: row {line}: {e}", path.display())))?;
        if record.len() != columns.len() {
            return Err(usage(format!(
                "{}: row {line}: expected {} fields, got {}",
                path.display(),
                columns.len(),
                record.len()
            )));
        }
        let bad = |column: &str, value: &str| {
            usage(format!(
                "{}: row {line}: invalid value {value:?} in column {column}",
                path.display()
            ))
        };
        let mut features = Vec::with_capacity(d);
        for i in 0..d {
            let raw = &record[i];
            let value: f64 = raw.trim().parse().map_err(|_| bad(&columns[i], raw))?;
            if !value.is_finite() {
                return Err(bad(&columns[i], raw));
            }
            features.push(value);
        }
        let label = match record[d].trim() {
            "0" => Label::Novice,
            "1" => Label::Expert,
            other => return Err(bad("label", other)),
        };
        let group: u32 = record[d + 1].trim().parse().map_err(|_| bad("group", &record[d + 1]))?;
        rows.push((features, label, group));
    }
    if rows.is_empty() {
        return Err(usage(format!("{}: no instances", path.display())));
    }

    let specs: Vec<FeatureSpec> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (features, _, _) in &rows {
                lo = lo.min(features[i]);
                hi = hi.max(features[i]);
            }
            if lo == hi {
                lo -= 0.5;
                hi += 0.5;
            }
            FeatureSpec::new(name.clone(), lo, hi)
        })
        .collect();
    let schema = Schema::new(specs).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let instances =
        rows.into_iter().map(|(features, label, group)| Instance { features, label, group }).collect();
    Dataset::new(schema, instances).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn write_forest(path: &Path, forest: &RandomForest) -> anyhow::Result<()> {
    fs::write(path, save_forest(forest)).with_context(|| format!("writing {}", path.display()))
}

pub fn read_forest(path: &Path) -> anyhow::Result<RandomForest> {
    let text = read_input(path)?;
    load_forest(text.as_bytes()).map_err(|e| usage(format!("{}: {e}", path.display())))
}
