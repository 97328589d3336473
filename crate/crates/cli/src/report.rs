//! `report`: a JSON spec naming per-subject map files becomes a
//! variability table in CSV.

use std::path::{Path, PathBuf};

use harp::evaluation::{report_csv, variability_row, SiteScans, VariabilityRow};
use harp::io;
use harp::volume::{Mask, ScalarMap};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    pub rows: Vec<RowSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    pub metric: String,
    pub scenario: String,
    pub subjects: Vec<SubjectSpec>,
}

/// Paths are relative to the report file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectSpec {
    pub mask: PathBuf,
    /// Source-site scans (scan-rescan group).
    pub source: Vec<PathBuf>,
    /// Target-site scans; they complete every inter-scanner group.
    pub target: Vec<PathBuf>,
    /// Source-site scans after each method, in column order.
    pub methods: Vec<MethodSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub source: Vec<PathBuf>,
}

struct LoadedSubject {
    mask: Mask,
    source: Vec<ScalarMap>,
    target: Vec<ScalarMap>,
    methods: Vec<(String, Vec<ScalarMap>)>,
}

fn load_all(base: &Path, paths: &[PathBuf]) -> harp::Result<Vec<ScalarMap>> {
    paths
        .iter()
        .map(|p| io::read_scalar(base.join(p)))
        .collect()
}

fn build_row(base: &Path, row: &RowSpec) -> Result<VariabilityRow, CliError> {
    let mut loaded = Vec::with_capacity(row.subjects.len());
    for s in &row.subjects {
        loaded.push(LoadedSubject {
            mask: io::read_mask(base.join(&s.mask))?,
            source: load_all(base, &s.source)?,
            target: load_all(base, &s.target)?,
            methods: s
                .methods
                .iter()
                .map(|m| Ok((m.name.clone(), load_all(base, &m.source)?)))
                .collect::<harp::Result<_>>()?,
        });
    }
    let Some(first) = loaded.first() else {
        return Err(CliError::Usage(format!(
            "row {} has no subjects",
            row.metric
        )));
    };
    let names: Vec<String> = first.methods.iter().map(|(n, _)| n.clone()).collect();
    if loaded
        .iter()
        .any(|s| s.methods.iter().map(|(n, _)| n).ne(names.iter()))
    {
        return Err(CliError::Usage(format!(
            "row {}: every subject must list the same methods in the same order",
            row.metric
        )));
    }
    let scans: Vec<SiteScans<'_>> = loaded
        .iter()
        .map(|s| SiteScans {
            source: s.source.iter().collect(),
            target: s.target.iter().collect(),
        })
        .collect();
    let methods: Vec<(&str, Vec<Vec<&ScalarMap>>)> = names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            (
                n.as_str(),
                loaded
                    .iter()
                    .map(|s| s.methods[k].1.iter().collect())
                    .collect(),
            )
        })
        .collect();
    let masks: Vec<&Mask> = loaded.iter().map(|s| &s.mask).collect();
    Ok(variability_row(
        &row.metric,
        &row.scenario,
        &scans,
        &methods,
        &masks,
    )?)
}

pub fn run(spec_path: &Path, out: &Path, json_out: Option<&Path>) -> Result<(), CliError> {
    let spec: ReportSpec = io::read_json(spec_path)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let rows = spec
        .rows
        .iter()
        .map(|r| build_row(base, r))
        .collect::<Result<Vec<_>, _>>()?;
    io::atomic_write(out, report_csv(&rows).as_bytes())?;
    if let Some(p) = json_out {
        io::write_json(p, &rows)?;
    }
    Ok(())
}
