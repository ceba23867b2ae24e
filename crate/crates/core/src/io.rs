//! CSV ingestion, model documents and atomic file output.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GllvmError, Result};
use crate::estimator::FittedModel;
use crate::model::{CovariateMatrix, ResponseKind, ResponseMatrix};

/// Version of the model document written by [`write_model`].
pub const MODEL_FORMAT_VERSION: &str = "1.0.0";

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path)
        .map_err(|e| GllvmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).trim(csv::Trim::All).from_reader(input)
}

fn ragged(e: csv::Error) -> GllvmError {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => GllvmError::Parse(format!(
            "row {} has {len} fields, expected {expected_len}",
            pos.as_ref().map_or(0, |p| p.line())
        )),
        _ => GllvmError::Csv(e),
    }
}

fn check_cell(kind: ResponseKind, v: f64, line: u64, site: &str, column: &str) -> Result<()> {
    let ok = match kind {
        ResponseKind::Cover => (0.0..=1.0).contains(&v),
        ResponseKind::Ordinal => v >= 1.0 && v.fract() == 0.0,
    };
    if ok {
        Ok(())
    } else {
        let want = if kind == ResponseKind::Cover { "a cover value in [0,1]" } else { "a class label >= 1" };
        Err(GllvmError::Parse(format!("line {line} (site '{site}'), column '{column}': {v} is not {want}")))
    }
}

fn parse_number(text: &str, line: u64, site: &str, column: &str) -> Result<f64> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| GllvmError::Parse(format!("line {line} (site '{site}'), column '{column}': cannot parse '{text}'")))
}

/// Wide table: header row, first column site id, one column per species.
/// Empty cells are missing.
pub fn parse_responses<R: Read>(input: R, kind: ResponseKind) -> Result<ResponseMatrix> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(GllvmError::Parse("header needs a site column and at least one species".into()));
    }
    let species: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let m = species.len();
    let mut sites: Vec<String> = Vec::new();
    let mut seen = HashMap::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(ragged)?;
        let line = record.position().map_or(0, |p| p.line());
        let site = record[0].to_owned();
        if let Some(first) = seen.insert(site.clone(), line) {
            return Err(GllvmError::Parse(format!("line {line}: site '{site}' already appears on line {first}")));
        }
        for (k, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                values.push(0.0);
                mask.push(false);
            } else {
                let v = parse_number(cell, line, &site, &species[k])?;
                check_cell(kind, v, line, &site, &species[k])?;
                values.push(v);
                mask.push(true);
            }
        }
        sites.push(site);
    }
    let n = sites.len();
    let values = Array2::from_shape_vec((n, m), values).map_err(|e| GllvmError::Parse(e.to_string()))?;
    let mask = Array2::from_shape_vec((n, m), mask).map_err(|e| GllvmError::Parse(e.to_string()))?;
    ResponseMatrix::new(values, mask, sites, species, kind)
}

/// Long table with columns site, species, value. Absent combinations are
/// missing; sites and species keep their order of first appearance.
pub fn parse_responses_long<R: Read>(input: R, kind: ResponseKind) -> Result<ResponseMatrix> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    if header.len() != 3 {
        return Err(GllvmError::Parse("long format needs exactly the columns site, species, value".into()));
    }
    let mut sites: Vec<String> = Vec::new();
    let mut species: Vec<String> = Vec::new();
    let mut site_ix = HashMap::new();
    let mut species_ix = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(ragged)?;
        let line = record.position().map_or(0, |p| p.line());
        let (site, sp, text) = (&record[0], &record[1], &record[2]);
        let i = *site_ix.entry(site.to_owned()).or_insert_with(|| {
            sites.push(site.to_owned());
            sites.len() - 1
        });
        let j = *species_ix.entry(sp.to_owned()).or_insert_with(|| {
            species.push(sp.to_owned());
            species.len() - 1
        });
        if text.is_empty() {
            continue;
        }
        let v = parse_number(text, line, site, sp)?;
        check_cell(kind, v, line, site, sp)?;
        if cells.insert((i, j), v).is_some() {
            return Err(GllvmError::Parse(format!("line {line}: duplicate entry for site '{site}', species '{sp}'")));
        }
    }
    let (n, m) = (sites.len(), species.len());
    let mut values = Array2::zeros((n, m));
    let mut mask = Array2::from_elem((n, m), false);
    for ((i, j), v) in cells {
        values[(i, j)] = v;
        mask[(i, j)] = true;
    }
    ResponseMatrix::new(values, mask, sites, species, kind)
}

pub fn read_cover_csv(path: &Path) -> Result<ResponseMatrix> {
    parse_responses(open(path)?, ResponseKind::Cover)
}

pub fn read_responses(path: &Path, kind: ResponseKind, long: bool) -> Result<ResponseMatrix> {
    if long {
        parse_responses_long(open(path)?, kind)
    } else {
        parse_responses(open(path)?, kind)
    }
}

/// Covariates keyed by site id.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteCovariates {
    pub sites: Vec<String>,
    pub covariates: CovariateMatrix,
}

impl SiteCovariates {
    /// Rows reordered to match `sites`; every site must be present.
    pub fn aligned_to(&self, sites: &[String]) -> Result<CovariateMatrix> {
        let index: HashMap<&str, usize> = self.sites.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
        let rows = sites
            .iter()
            .map(|s| index.get(s.as_str()).copied().ok_or_else(|| GllvmError::Validation(format!("no covariates for site '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.covariates.select_rows(&rows))
    }
}

/// Wide covariate table: first column site id, then one numeric column per
/// covariate. Missing values are not allowed.
pub fn parse_covariates<R: Read>(input: R) -> Result<SiteCovariates> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(GllvmError::Parse("empty header".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut sites = Vec::new();
    let mut seen = HashMap::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(ragged)?;
        let line = record.position().map_or(0, |p| p.line());
        let site = record[0].to_owned();
        if let Some(first) = seen.insert(site.clone(), line) {
            return Err(GllvmError::Parse(format!("line {line}: site '{site}' already appears on line {first}")));
        }
        for (k, cell) in record.iter().skip(1).enumerate() {
            values.push(parse_number(cell, line, &site, &names[k])?);
        }
        sites.push(site);
    }
    let values =
        Array2::from_shape_vec((sites.len(), names.len()), values).map_err(|e| GllvmError::Parse(e.to_string()))?;
    Ok(SiteCovariates { sites, covariates: CovariateMatrix::new(values, names)? })
}

pub fn read_covariates_csv(path: &Path) -> Result<SiteCovariates> {
    parse_covariates(open(path)?)
}

/// Two-column table site, label (latent unit, or a site-map target).
pub fn parse_site_labels<R: Read>(input: R) -> Result<Vec<(String, String)>> {
    let mut rdr = reader(input);
    if rdr.headers()?.len() != 2 {
        return Err(GllvmError::Parse("expected two columns: site and label".into()));
    }
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(ragged)?;
        let line = record.position().map_or(0, |p| p.line());
        if let Some(first) = seen.insert(record[0].to_owned(), line) {
            return Err(GllvmError::Parse(format!("line {line}: site '{}' already appears on line {first}", &record[0])));
        }
        out.push((record[0].to_owned(), record[1].to_owned()));
    }
    Ok(out)
}

pub fn read_site_labels(path: &Path) -> Result<Vec<(String, String)>> {
    parse_site_labels(open(path)?)
}

/// Labels for `sites`, looked up by site id.
pub fn labels_for(table: &[(String, String)], sites: &[String]) -> Result<Vec<String>> {
    let index: HashMap<&str, &str> = table.iter().map(|(s, l)| (s.as_str(), l.as_str())).collect();
    sites
        .iter()
        .map(|s| index.get(s.as_str()).map(|l| (*l).to_owned()).ok_or_else(|| GllvmError::Validation(format!("no label for site '{s}'"))))
        .collect()
}

/// Site × column table of numbers.
pub fn write_table<W: Write>(sites: &[String], columns: &[String], values: &Array2<f64>, out: W) -> Result<()> {
    if values.dim() != (sites.len(), columns.len()) {
        return Err(GllvmError::Dimension(format!("table {:?} for {} sites, {} columns", values.dim(), sites.len(), columns.len())));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["site".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for (site, row) in sites.iter().zip(values.rows()) {
        let mut rec = vec![site.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Wide response table; masked cells are written empty.
pub fn write_responses<W: Write>(data: &ResponseMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["site".to_string()];
    header.extend(data.species_names().iter().cloned());
    w.write_record(&header)?;
    for (i, site) in data.site_names().iter().enumerate() {
        let mut rec = vec![site.clone()];
        rec.extend((0..data.n_species()).map(|j| data.get(i, j).map_or_else(String::new, |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelDocument<M> {
    format_version: String,
    model: M,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: String,
}

pub fn model_to_json(model: &FittedModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDocument { format_version: MODEL_FORMAT_VERSION.to_string(), model })?)
}

/// Parse a model document. Documents from another major version, or from a
/// newer minor version, are refused.
pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    let ours = semver::Version::parse(MODEL_FORMAT_VERSION).expect("valid constant");
    let found = semver::Version::parse(&probe.format_version).map_err(|_| GllvmError::Version {
        found: probe.format_version.clone(),
        expected: format!("^{ours}"),
    })?;
    if found.major != ours.major || found.minor > ours.minor {
        return Err(GllvmError::Version { found: found.to_string(), expected: format!("^{ours}") });
    }
    let doc: ModelDocument<FittedModel> = serde_json::from_str(text)?;
    Ok(doc.model)
}

pub fn write_model(model: &FittedModel, path: &Path) -> Result<()> {
    write_atomic(path, model_to_json(model)?.as_bytes())
}

pub fn read_model(path: &Path) -> Result<FittedModel> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    model_from_json(&text)
}

/// Write to a temporary file beside `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| GllvmError::Io(e.error))?;
    Ok(())
}

/// Render with `f` into memory, then write atomically.
pub fn write_atomic_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)
}
