//! A pre-aggregated data cube: one moments sketch per cell.
//!
//! Cells are keyed by the tuple of dimension values of their rows, or by
//! block index when rows are grouped into fixed-size sequence blocks.
//!
//! On disk a store is a directory holding `manifest.json` and `cells.bin`.
//! `cells.bin` is a sequence of records, each a little-endian `u32` key
//! length, the key as a JSON array of strings, a `u32` sketch length and the
//! serialized sketch.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use moments_sketch::{merge_all_parallel, MomentsSketch};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const CELLS: &str = "cells.bin";
const FORMAT: &str = "moments-cube";
const VERSION: u32 = 1;
const KEY_ENCODING: &str = "json-array";
/// Dimension name used for sequence-block cells.
pub const SEQUENCE_DIMENSION: &str = "cell";

/// How rows are assigned to cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Grouping {
    /// One cell per distinct tuple of values in these columns.
    Dimensions { columns: Vec<String> },
    /// Consecutive blocks of `cell_size` parsed rows.
    Sequence { cell_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: u64,
    pub skipped: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dimensions: Vec<String>,
    metric: String,
    order: usize,
    grouping: Grouping,
    key_encoding: String,
    cells: usize,
    data: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeStore {
    dimensions: Vec<String>,
    metric: String,
    order: usize,
    grouping: Grouping,
    cells: BTreeMap<Vec<String>, MomentsSketch>,
}

impl CubeStore {
    pub fn new(metric: &str, grouping: Grouping, order: usize) -> Result<Self> {
        MomentsSketch::new(order)?;
        let dimensions = match &grouping {
            Grouping::Dimensions { columns } => {
                let mut seen = columns.clone();
                seen.sort();
                seen.dedup();
                if seen.len() != columns.len() {
                    return Err(HarnessError::Invalid("duplicate dimension column".into()));
                }
                if columns.iter().any(|c| c == metric) {
                    return Err(HarnessError::Invalid(format!("{metric:?} is both metric and dimension")));
                }
                columns.clone()
            }
            Grouping::Sequence { cell_size: 0 } => {
                return Err(HarnessError::Invalid("cell size must be positive".into()))
            }
            Grouping::Sequence { .. } => vec![SEQUENCE_DIMENSION.to_string()],
        };
        Ok(Self {
            dimensions,
            metric: metric.to_string(),
            order,
            grouping,
            cells: BTreeMap::new(),
        })
    }

    pub fn dimensions(&self) -> &[String] {
        &self.dimensions
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&Vec<String>, &MomentsSketch)> {
        self.cells.iter()
    }

    pub fn cell(&self, key: &[String]) -> Option<&MomentsSketch> {
        self.cells.get(key)
    }

    /// Total number of values across all cells.
    pub fn total_count(&self) -> u64 {
        self.cells.values().map(MomentsSketch::count).sum()
    }

    /// Adds one value to the cell at `key`, creating the cell if needed.
    pub fn insert(&mut self, key: Vec<String>, value: f64) -> Result<()> {
        if key.len() != self.dimensions.len() {
            return Err(HarnessError::Invalid(format!(
                "key has {} values for {} dimensions",
                key.len(),
                self.dimensions.len()
            )));
        }
        let sketch = match self.cells.entry(key) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(MomentsSketch::new(self.order)?),
        };
        sketch.accumulate(value)?;
        Ok(())
    }

    /// Builds a store from CSV with a header row. Rows with a wrong field
    /// count, an unparseable metric or a non-finite metric are skipped and
    /// counted.
    pub fn ingest<R: Read>(
        input: R,
        metric: &str,
        grouping: Grouping,
        order: usize,
    ) -> Result<(Self, IngestReport)> {
        let mut store = Self::new(metric, grouping, order)?;
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let headers = reader.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| HarnessError::Invalid(format!("no column named {name:?}")))
        };
        let metric_col = column(metric)?;
        let dim_cols = match &store.grouping {
            Grouping::Dimensions { columns } => columns.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?,
            Grouping::Sequence { .. } => Vec::new(),
        };
        let mut report = IngestReport::default();
        let mut record = csv::StringRecord::new();
        loop {
            match reader.read_record(&mut record) {
                Ok(false) => break,
                Ok(true) => {}
                Err(e) if e.is_io_error() => return Err(e.into()),
                Err(_) => {
                    report.skipped += 1;
                    continue;
                }
            }
            let value = (record.len() == headers.len())
                .then(|| record[metric_col].trim().parse::<f64>().ok())
                .flatten()
                .filter(|v| v.is_finite());
            let Some(value) = value else {
                report.skipped += 1;
                continue;
            };
            let key = match &store.grouping {
                Grouping::Dimensions { .. } => dim_cols.iter().map(|&c| record[c].trim().to_string()).collect(),
                Grouping::Sequence { cell_size } => vec![(report.rows / *cell_size as u64).to_string()],
            };
            store.insert(key, value)?;
            report.rows += 1;
        }
        if report.rows == 0 {
            return Err(HarnessError::NoRows { skipped: report.skipped });
        }
        Ok((store, report))
    }

    pub fn ingest_path(
        path: &Path,
        metric: &str,
        grouping: Grouping,
        order: usize,
    ) -> Result<(Self, IngestReport)> {
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::ingest(BufReader::new(file), metric, grouping, order)
    }

    /// Cells matching every term of `filter`.
    pub fn select(&self, filter: &Filter) -> Result<Vec<&MomentsSketch>> {
        let terms = filter.resolve(&self.dimensions)?;
        Ok(self
            .cells
            .iter()
            .filter(|(key, _)| terms.iter().all(|(i, v)| &key[*i] == v))
            .map(|(_, s)| s)
            .collect())
    }

    /// Merges the selected cells on `threads` workers. Returns the merged
    /// sketch and the number of cells merged.
    pub fn merge_selection(&self, filter: &Filter, threads: usize) -> Result<(MomentsSketch, usize)> {
        let cells = self.select(filter)?;
        if cells.is_empty() {
            return Err(HarnessError::EmptySelection);
        }
        Ok((merge_all_parallel(self.order, &cells, threads)?, cells.len()))
    }

    /// Cells grouped by the values of `columns`.
    pub fn group_by(&self, columns: &[String]) -> Result<BTreeMap<Vec<String>, Vec<&MomentsSketch>>> {
        let idx = columns
            .iter()
            .map(|c| self.dimension_index(c))
            .collect::<Result<Vec<_>>>()?;
        let mut groups: BTreeMap<Vec<String>, Vec<&MomentsSketch>> = BTreeMap::new();
        for (key, s) in &self.cells {
            let g = idx.iter().map(|&i| key[i].clone()).collect();
            groups.entry(g).or_default().push(s);
        }
        Ok(groups)
    }

    fn dimension_index(&self, name: &str) -> Result<usize> {
        self.dimensions
            .iter()
            .position(|d| d == name)
            .ok_or_else(|| HarnessError::Invalid(format!("unknown dimension {name:?}")))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let data_path = dir.join(CELLS);
        let file = File::create(&data_path).map_err(|e| HarnessError::io(&data_path, e))?;
        let mut w = BufWriter::new(file);
        for (key, sketch) in &self.cells {
            let key = serde_json::to_vec(key)?;
            let bytes = sketch.to_bytes();
            let mut record = Vec::with_capacity(8 + key.len() + bytes.len());
            record.extend_from_slice(&(key.len() as u32).to_le_bytes());
            record.extend_from_slice(&key);
            record.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            record.extend_from_slice(&bytes);
            w.write_all(&record).map_err(|e| HarnessError::io(&data_path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(&data_path, e))?;

        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            dimensions: self.dimensions.clone(),
            metric: self.metric.clone(),
            order: self.order,
            grouping: self.grouping.clone(),
            key_encoding: KEY_ENCODING.into(),
            cells: self.cells.len(),
            data: CELLS.into(),
        };
        let manifest_path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&manifest_path, text).map_err(|e| HarnessError::io(&manifest_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| HarnessError::io(&manifest_path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format != FORMAT || m.version != VERSION || m.key_encoding != KEY_ENCODING {
            return Err(HarnessError::Corrupt(format!(
                "unsupported store {} v{} with {} keys",
                m.format, m.version, m.key_encoding
            )));
        }
        let mut store = Self::new(&m.metric, m.grouping, m.order)?;
        if store.dimensions != m.dimensions {
            return Err(HarnessError::Corrupt("dimensions disagree with grouping".into()));
        }
        let data_path = dir.join(&m.data);
        let bytes = std::fs::read(&data_path).map_err(|e| HarnessError::io(&data_path, e))?;
        let mut rest = bytes.as_slice();
        while !rest.is_empty() {
            let key_bytes = take_chunk(&mut rest)?;
            let key: Vec<String> = serde_json::from_slice(key_bytes)?;
            let sketch = MomentsSketch::from_bytes(take_chunk(&mut rest)?)?;
            if key.len() != store.dimensions.len() || sketch.order() != store.order {
                return Err(HarnessError::Corrupt(format!("cell {key:?} does not match the manifest")));
            }
            if store.cells.insert(key.clone(), sketch).is_some() {
                return Err(HarnessError::Corrupt(format!("duplicate cell {key:?}")));
            }
        }
        if store.cells.len() != m.cells {
            return Err(HarnessError::Corrupt(format!(
                "manifest lists {} cells, data holds {}",
                m.cells,
                store.cells.len()
            )));
        }
        Ok(store)
    }
}

fn take_chunk<'a>(rest: &mut &'a [u8]) -> Result<&'a [u8]> {
    let truncated = || HarnessError::Corrupt("truncated cell record".into());
    if rest.len() < 4 {
        return Err(truncated());
    }
    let len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
    let body = rest.get(4..4 + len).ok_or_else(truncated)?;
    *rest = &rest[4 + len..];
    Ok(body)
}

/// Conjunction of `dimension = value` terms.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Filter {
    terms: Vec<(String, String)>,
}

impl Filter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn eq(mut self, dimension: &str, value: &str) -> Self {
        self.terms.push((dimension.to_string(), value.to_string()));
        self
    }

    /// Parses `dim=value` terms.
    pub fn parse<S: AsRef<str>>(terms: &[S]) -> Result<Self> {
        let mut f = Self::all();
        for t in terms {
            let t = t.as_ref();
            let (d, v) = t
                .split_once('=')
                .ok_or_else(|| HarnessError::Invalid(format!("filter term {t:?} is not dim=value")))?;
            f = f.eq(d.trim(), v.trim());
        }
        Ok(f)
    }

    pub fn terms(&self) -> &[(String, String)] {
        &self.terms
    }

    fn resolve(&self, dimensions: &[String]) -> Result<Vec<(usize, &str)>> {
        self.terms
            .iter()
            .map(|(d, v)| {
                dimensions
                    .iter()
                    .position(|x| x == d)
                    .map(|i| (i, v.as_str()))
                    .ok_or_else(|| HarnessError::Invalid(format!("unknown dimension {d:?}")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(cols: &[&str]) -> Grouping {
        Grouping::Dimensions {
            columns: cols.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn sequence_cells() {
        let mut csv = String::from("value\n");
        for i in 0..400 {
            csv += &format!("{i}\n");
        }
        let (store, report) = CubeStore::ingest(csv.as_bytes(), "value", Grouping::Sequence { cell_size: 200 }, 10).unwrap();
        assert_eq!(report, IngestReport { rows: 400, skipped: 0 });
        assert_eq!(store.len(), 2);
        assert!(store.cells().all(|(_, s)| s.count() == 200));
    }

    #[test]
    fn one_cell_per_tuple() {
        let mut csv = String::from("a,b,v\n");
        for a in 0..3 {
            for b in 0..4 {
                csv += &format!("x{a},y{b},{}\n", a * b);
                csv += &format!("x{a},y{b},{}\n", a + b);
            }
        }
        let (store, _) = CubeStore::ingest(csv.as_bytes(), "v", dims(&["a", "b"]), 6).unwrap();
        assert_eq!(store.len(), 12);
        assert_eq!(store.total_count(), 24);
        let sel = store.select(&Filter::all().eq("a", "x1")).unwrap();
        assert_eq!(sel.len(), 4);
        assert_eq!(store.group_by(&["b".into()]).unwrap().len(), 4);
    }

    #[test]
    fn malformed_rows_are_counted() {
        let csv = "k,v\na,1\nb,oops\nc\nd,inf\ne,2.5\n";
        let (store, report) = CubeStore::ingest(csv.as_bytes(), "v", dims(&["k"]), 4).unwrap();
        assert_eq!(report, IngestReport { rows: 2, skipped: 3 });
        assert_eq!(store.len(), 2);
        let err = CubeStore::ingest("k,v\na,x\n".as_bytes(), "v", dims(&["k"]), 4).unwrap_err();
        assert!(matches!(err, HarnessError::NoRows { skipped: 1 }));
    }

    #[test]
    fn unknown_columns_are_rejected() {
        assert!(CubeStore::ingest("k,v\na,1\n".as_bytes(), "w", dims(&["k"]), 4).is_err());
        assert!(CubeStore::ingest("k,v\na,1\n".as_bytes(), "v", dims(&["z"]), 4).is_err());
        assert!(CubeStore::new("v", dims(&["v"]), 4).is_err());
        let (store, _) = CubeStore::ingest("k,v\na,1\n".as_bytes(), "v", dims(&["k"]), 4).unwrap();
        assert!(store.select(&Filter::all().eq("z", "a")).is_err());
        assert!(matches!(
            store.merge_selection(&Filter::all().eq("k", "b"), 1),
            Err(HarnessError::EmptySelection)
        ));
    }

    #[test]
    fn filter_parsing() {
        let f = Filter::parse(&["a = 1", "b=x=y"]).unwrap();
        assert_eq!(f.terms()[0], ("a".into(), "1".into()));
        assert_eq!(f.terms()[1], ("b".into(), "x=y".into()));
        assert!(Filter::parse(&["nope"]).is_err());
    }

    #[test]
    fn save_and_load_roundtrip() {
        let csv = "k,j,v\na,\"x,1\",1\nb,y,2\na,\"x,1\",3\n";
        let (store, _) = CubeStore::ingest(csv.as_bytes(), "v", dims(&["k", "j"]), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        assert_eq!(CubeStore::load(dir.path()).unwrap(), store);

        let data = dir.path().join(CELLS);
        let bytes = std::fs::read(&data).unwrap();
        std::fs::write(&data, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(CubeStore::load(dir.path()), Err(HarnessError::Corrupt(_))));
    }
}
