//! On-disk bundle format: `table1.csv`, `table2.csv`, `relations.csv`, and an
//! optional `manifest.json` that pins the category dictionaries, relationship
//! kind, and provenance of a saved database.
//!
//! Tables are header-first CSVs of categorical labels. Relations are two
//! columns naming a row of each table, either by 0-based index or, when an id
//! column is configured, by that column's values. Saving always writes
//! 0-based indices and a manifest, so a saved bundle reloads exactly.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use relsyn_core::orchestrator::SynthesisConfig;
use relsyn_core::relational::{
    BiAdjacency, RelationKind, RelationalDatabase, Schema, Table,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TABLE1_FILE: &str = "table1.csv";
pub const TABLE2_FILE: &str = "table2.csv";
pub const RELATIONS_FILE: &str = "relations.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One categorical column: its name and the label behind each code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDictionary {
    pub name: String,
    pub labels: Vec<String>,
}

/// Sidecar metadata written next to the CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub kind: RelationKind,
    /// Edge count of the source database the bundle mirrors.
    pub m: usize,
    /// Edge count of the bundle itself.
    pub m_syn: usize,
    pub d_max: usize,
    pub table1: Vec<ColumnDictionary>,
    pub table2: Vec<ColumnDictionary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SynthesisConfig>,
}

/// A database together with the dictionaries that decode it back to labels.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub db: RelationalDatabase,
    pub dicts1: Vec<ColumnDictionary>,
    pub dicts2: Vec<ColumnDictionary>,
}

/// Where the four bundle files live.
#[derive(Debug, Clone)]
pub struct BundleFiles {
    pub table1: PathBuf,
    pub table2: PathBuf,
    pub relations: PathBuf,
    pub manifest: Option<PathBuf>,
}

impl BundleFiles {
    /// The fixed layout used by saved bundles; the manifest is picked up
    /// when present.
    pub fn in_dir(dir: &Path) -> Self {
        let manifest = dir.join(MANIFEST_FILE);
        Self {
            table1: dir.join(TABLE1_FILE),
            table2: dir.join(TABLE2_FILE),
            relations: dir.join(RELATIONS_FILE),
            manifest: manifest.exists().then_some(manifest),
        }
    }
}

/// How to interpret the input files.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Used when no manifest declares the kind.
    pub kind: RelationKind,
    /// Column holding row identifiers instead of a feature; relations then
    /// reference those identifiers rather than row indices.
    pub id_column1: Option<String>,
    pub id_column2: Option<String>,
    /// Keep only each record's first edges until both endpoints reach this
    /// degree; later edges are dropped (but still checked for duplicates).
    pub d_max_cap: Option<usize>,
    /// Dictionaries to encode against instead of inferring them; values
    /// outside them are errors. Overrides the manifest.
    pub dicts1: Option<Vec<ColumnDictionary>>,
    pub dicts2: Option<Vec<ColumnDictionary>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            kind: RelationKind::default(),
            id_column1: None,
            id_column2: None,
            d_max_cap: None,
            dicts1: None,
            dicts2: None,
        }
    }
}

/// Provenance recorded in the manifest on save.
#[derive(Debug, Clone, Default)]
pub struct SaveContext {
    /// Edge count of the source database; defaults to the bundle's own.
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub config: Option<SynthesisConfig>,
}

type LoadedTable = (Table, Vec<ColumnDictionary>, Option<HashMap<String, usize>>);

fn reader(path: &Path, delimiter: u8) -> Result<csv::Reader<fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Reads one table CSV into coded form. Returns the table, the dictionary
/// per column, and the id-to-row map when an id column was requested.
pub(crate) fn read_table(
    path: &Path,
    delimiter: u8,
    id_column: Option<&str>,
    declared: Option<&[ColumnDictionary]>,
) -> Result<LoadedTable, CliError> {
    let mut rdr = reader(path, delimiter)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let id_index = match id_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Data(format!("{}: no column named {name:?}", path.display()))
        })?),
        None => None,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != id_index)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(CliError::Data(format!("{}: no feature columns", path.display())));
    }

    let mut ids = Vec::new();
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(CliError::Data(format!(
                "{}: row {}: {} fields, header has {}",
                path.display(),
                r + 2,
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (i, field) in record.iter().enumerate() {
            if Some(i) == id_index {
                ids.push(field.to_string());
            } else {
                row.push(field.to_string());
            }
        }
        raw_rows.push(row);
    }

    let dicts: Vec<ColumnDictionary> = match declared {
        Some(declared) => {
            let declared_names: Vec<&str> =
                declared.iter().map(|c| c.name.as_str()).collect();
            if declared_names != feature_names.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(CliError::Data(format!(
                    "{}: columns {feature_names:?} do not match the declared columns {declared_names:?}",
                    path.display()
                )));
            }
            declared.to_vec()
        }
        None => feature_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let labels: BTreeSet<&str> =
                    raw_rows.iter().map(|row| row[j].as_str()).collect();
                ColumnDictionary {
                    name: name.clone(),
                    labels: labels.into_iter().map(str::to_string).collect(),
                }
            })
            .collect(),
    };
    let lookups: Vec<HashMap<&str, usize>> = dicts
        .iter()
        .map(|c| c.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect())
        .collect();

    let mut rows = Vec::with_capacity(raw_rows.len());
    for (r, raw) in raw_rows.iter().enumerate() {
        let mut row = Vec::with_capacity(raw.len());
        for (j, field) in raw.iter().enumerate() {
            let code = lookups[j].get(field.as_str()).copied().ok_or_else(|| {
                CliError::Data(format!(
                    "{}: row {}: value {field:?} is not in the dictionary for column {:?}",
                    path.display(),
                    r + 2,
                    dicts[j].name
                ))
            })?;
            row.push(code);
        }
        rows.push(row);
    }

    let schema = Schema::new(dicts.iter().map(|c| (c.name.clone(), c.labels.len())).collect())?;
    let table = Table::new(schema, rows)?;

    let id_map = match id_index {
        Some(_) => {
            let mut map = HashMap::with_capacity(ids.len());
            for (i, id) in ids.into_iter().enumerate() {
                if map.insert(id.clone(), i).is_some() {
                    return Err(CliError::Data(format!(
                        "{}: duplicate id {id:?}",
                        path.display()
                    )));
                }
            }
            Some(map)
        }
        None => None,
    };
    Ok((table, dicts, id_map))
}

fn resolve_endpoint(
    field: &str,
    map: Option<&HashMap<String, usize>>,
    n: usize,
    side: usize,
    path: &Path,
    row: usize,
) -> Result<usize, CliError> {
    match map {
        Some(map) => map.get(field).copied().ok_or_else(|| {
            CliError::Data(format!(
                "{}: row {row}: unknown table{side} id {field:?}",
                path.display()
            ))
        }),
        None => {
            let idx: usize = field.parse().map_err(|_| {
                CliError::Data(format!(
                    "{}: row {row}: {field:?} is not a row index",
                    path.display()
                ))
            })?;
            if idx >= n {
                return Err(CliError::Data(format!(
                    "{}: row {row}: index {idx} is out of range for table{side} with {n} rows",
                    path.display()
                )));
            }
            Ok(idx)
        }
    }
}

fn read_relations(
    path: &Path,
    delimiter: u8,
    n1: usize,
    n2: usize,
    map1: Option<&HashMap<String, usize>>,
    map2: Option<&HashMap<String, usize>>,
    d_max_cap: Option<usize>,
) -> Result<BiAdjacency, CliError> {
    let mut rdr = reader(path, delimiter)?;
    let header_len = rdr.headers()?.len();
    if header_len != 2 {
        return Err(CliError::Data(format!(
            "{}: expected two columns, found {header_len}",
            path.display()
        )));
    }
    let mut adjacency = BiAdjacency::new(n1, n2);
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut deg1 = vec![0usize; n1];
    let mut deg2 = vec![0usize; n2];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(CliError::Data(format!(
                "{}: row {}: expected two fields, found {}",
                path.display(),
                r + 2,
                record.len()
            )));
        }
        let i = resolve_endpoint(&record[0], map1, n1, 1, path, r + 2)?;
        let j = resolve_endpoint(&record[1], map2, n2, 2, path, r + 2)?;
        if !seen.insert((i, j)) {
            return Err(CliError::Data(format!(
                "{}: row {}: duplicate relation ({}, {})",
                path.display(),
                r + 2,
                &record[0],
                &record[1]
            )));
        }
        if let Some(cap) = d_max_cap {
            if deg1[i] == cap || deg2[j] == cap {
                continue;
            }
        }
        deg1[i] += 1;
        deg2[j] += 1;
        adjacency.insert(i, j)?;
    }
    Ok(adjacency)
}

/// Loads a bundle. A manifest, when present, supplies the dictionaries and
/// the relationship kind; explicitly declared dictionaries take precedence
/// over both it and inference.
pub fn load_bundle(files: &BundleFiles, opts: &LoadOptions) -> Result<Bundle, CliError> {
    let manifest: Option<BundleManifest> = match &files.manifest {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| {
                CliError::Data(format!("{}: {e}", path.display()))
            })?)
        }
        None => None,
    };
    let kind = manifest.as_ref().map_or(opts.kind, |m| m.kind);
    let declared1 = opts
        .dicts1
        .clone()
        .or_else(|| manifest.as_ref().map(|m| m.table1.clone()));
    let declared2 = opts
        .dicts2
        .clone()
        .or_else(|| manifest.as_ref().map(|m| m.table2.clone()));

    let (table1, dicts1, map1) = read_table(
        &files.table1,
        opts.delimiter,
        opts.id_column1.as_deref(),
        declared1.as_deref(),
    )?;
    let (table2, dicts2, map2) = read_table(
        &files.table2,
        opts.delimiter,
        opts.id_column2.as_deref(),
        declared2.as_deref(),
    )?;
    let adjacency = read_relations(
        &files.relations,
        opts.delimiter,
        table1.n_rows(),
        table2.n_rows(),
        map1.as_ref(),
        map2.as_ref(),
        opts.d_max_cap,
    )?;
    let db = RelationalDatabase::new(table1, table2, adjacency, kind)?;
    let violations = db.validate_integrity();
    if !violations.is_empty() {
        return Err(CliError::Data(format!(
            "{}: {} (and {} more violations)",
            files.relations.display(),
            violations[0],
            violations.len() - 1
        )));
    }
    Ok(Bundle { db, dicts1, dicts2 })
}

fn write_table(path: &Path, table: &Table, dicts: &[ColumnDictionary]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(dicts.iter().map(|c| c.name.as_str()))?;
    for row in table.rows() {
        wtr.write_record(row.iter().zip(dicts).map(|(&code, dict)| dict.labels[code].as_str()))?;
    }
    wtr.flush()?;
    Ok(())
}

fn write_relations(path: &Path, adjacency: &BiAdjacency) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["id1", "id2"])?;
    for (i, j) in adjacency.edges() {
        wtr.write_record([i.to_string(), j.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the bundle directory: label CSVs, 0-based relation indices, and a
/// manifest that makes the reload exact. Output is deterministic byte for
/// byte in the bundle contents.
pub fn save_bundle(bundle: &Bundle, ctx: &SaveContext, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_table(&dir.join(TABLE1_FILE), bundle.db.table1(), &bundle.dicts1)?;
    write_table(&dir.join(TABLE2_FILE), bundle.db.table2(), &bundle.dicts2)?;
    write_relations(&dir.join(RELATIONS_FILE), bundle.db.adjacency())?;
    let m_syn = bundle.db.adjacency().edge_count();
    let manifest = BundleManifest {
        kind: bundle.db.kind(),
        m: ctx.m.unwrap_or(m_syn),
        m_syn,
        d_max: bundle.db.max_degree(),
        table1: bundle.dicts1.clone(),
        table2: bundle.dicts2.clone(),
        seed: ctx.seed,
        config: ctx.config.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}
