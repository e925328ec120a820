//! File formats: sample CSVs, model JSON, marginal grid CSVs, run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use copspline::copulas::{build_copula, Copula, CopulaSpec};
use copspline::moments::SampleMatrix;
use copspline::penalty::{BivariateMarginalSpec, MarginalGrid, MarginalSet};

use crate::errors::{CliError, CliResult};

/// Read a numeric CSV with an optional single header row (auto-detected by a
/// non-numeric first row). Comma-separated, '.' decimal.
pub fn read_sample_csv(path: &Path) -> CliResult<SampleMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let mut data: Vec<f64> = Vec::new();
    let mut cols = 0usize;
    let mut rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if row_idx == 0 {
            cols = record.len();
            // header row if any field fails to parse as a number
            if record.iter().any(|f| f.trim().parse::<f64>().is_err()) {
                continue;
            }
        }
        if record.len() != cols {
            return Err(CliError::Parse(format!(
                "{}: row {} has {} fields, expected {cols}",
                path.display(),
                row_idx + 1,
                record.len()
            )));
        }
        for (col_idx, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                CliError::Parse(format!(
                    "{}: row {}, column {}: '{field}' is not a number",
                    path.display(),
                    row_idx + 1,
                    col_idx + 1
                ))
            })?;
            data.push(value);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Parse(format!("{}: no data rows", path.display())));
    }
    SampleMatrix::new(data, rows, cols).map_err(CliError::from)
}

pub fn write_sample_csv(path: &Path, data: &SampleMatrix) -> CliResult<()> {
    let mut out = String::new();
    for i in 0..data.nrows() {
        let row: Vec<String> = data.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_model_json(path: &Path) -> CliResult<Box<dyn Copula>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let spec: CopulaSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    build_copula(&spec).map_err(CliError::from)
}

/// Load bivariate marginal specs from either a model JSON (all pairs derived
/// from the model) or a directory of grid CSVs named `pair_<i>_<j>.csv`.
pub fn read_marginals(path: &Path, dims: usize) -> CliResult<MarginalSet> {
    if path.is_dir() {
        read_marginal_grids(path)
    } else {
        let model = read_model_json(path)?;
        if model.dims() != dims {
            return Err(CliError::Config(format!(
                "marginal model is {}-dimensional but the grid has {dims} dimensions",
                model.dims()
            )));
        }
        MarginalSet::from_model(model.as_ref()).map_err(CliError::from)
    }
}

/// Grid CSV format: first line `pair=<i>-<j>,resolution=<r>` (1-based axes),
/// then `r` rows of `r` comma-separated density values, row-major.
fn read_marginal_grids(dir: &Path) -> CliResult<MarginalSet> {
    let mut set = MarginalSet::new();
    let mut found = 0usize;
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.extension().is_none_or(|e| e != "csv") {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::Parse(format!("{}: empty grid file", path.display())))?;
        let (i, j, r) = parse_grid_header(header)
            .ok_or_else(|| CliError::Parse(format!("{}: bad grid header '{header}'", path.display())))?;
        let mut values = Vec::with_capacity(r * r);
        for (row_idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    CliError::Parse(format!(
                        "{}: row {}: '{field}' is not a number",
                        path.display(),
                        row_idx + 2
                    ))
                })?;
                values.push(v);
            }
        }
        let grid = MarginalGrid::new(r, values).map_err(CliError::from)?;
        set.insert(i - 1, j - 1, BivariateMarginalSpec::Grid(grid))
            .map_err(CliError::from)?;
        found += 1;
    }
    if found == 0 {
        return Err(CliError::Config(format!(
            "no marginal grid CSVs found in {}",
            dir.display()
        )));
    }
    Ok(set)
}

fn parse_grid_header(header: &str) -> Option<(usize, usize, usize)> {
    let mut pair = None;
    let mut resolution = None;
    for part in header.split(',') {
        let (key, value) = part.split_once('=')?;
        match key.trim() {
            "pair" => {
                let (i, j) = value.trim().split_once('-')?;
                pair = Some((i.parse().ok()?, j.parse().ok()?));
            }
            "resolution" => resolution = Some(value.trim().parse().ok()?),
            _ => return None,
        }
    }
    let (i, j) = pair?;
    Some((i, j, resolution?))
}

/// Per-run provenance record, one per output location.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub input_digests: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            schema_version: 1,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            input_digests: BTreeMap::new(),
            seed,
            duration_secs: 0.0,
        }
    }

    pub fn digest_input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        self.input_digests
            .insert(path.display().to_string(), format!("{digest:x}"));
        Ok(())
    }

    pub fn finish(mut self, elapsed: Duration, path: &Path) -> CliResult<()> {
        self.duration_secs = elapsed.as_secs_f64();
        write_json(path, &self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Stderr progress reporting; silenced by `--quiet`, JSON lines with
/// `--json-logs`.
#[derive(Debug, Clone, Copy)]
pub struct Logger {
    pub quiet: bool,
    pub json: bool,
}

impl Logger {
    pub fn info(&self, msg: &str) {
        if self.quiet {
            return;
        }
        if self.json {
            eprintln!(
                "{}",
                serde_json::json!({"level": "info", "message": msg})
            );
        } else {
            eprintln!("{msg}");
        }
    }
}
