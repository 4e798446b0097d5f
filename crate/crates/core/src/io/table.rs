//! Tabular results with a typed schema, written as CSV plus a JSON metadata
//! sidecar, or as a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Int,
    Float,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// One table entry. Floats compare bitwise so that round trips can be
/// checked exactly.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Float(a), Cell::Float(b)) => a.to_bits() == b.to_bits(),
            (Cell::Text(a), Cell::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Cell {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Cell::Int(_) => ColumnKind::Int,
            Cell::Float(_) => ColumnKind::Float,
            Cell::Text(_) => ColumnKind::Text,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(i) => Some(i as f64),
            Cell::Float(x) => Some(x),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn to_csv_field(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    fn from_csv_field(field: &str, kind: ColumnKind) -> Result<Self> {
        let bad = || Error::Format(format!("cannot read `{field}` as {kind:?}"));
        Ok(match kind {
            ColumnKind::Int => Cell::Int(field.parse().map_err(|_| bad())?),
            ColumnKind::Float => Cell::Float(field.parse().map_err(|_| bad())?),
            ColumnKind::Text => Cell::Text(field.to_string()),
        })
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Int(i) => serde_json::Value::from(*i),
            Cell::Float(x) => serde_json::Value::from(*x),
            Cell::Text(s) => serde_json::Value::from(s.as_str()),
        }
    }

    fn from_json(value: &serde_json::Value, kind: ColumnKind) -> Result<Self> {
        let bad = || Error::Format(format!("cannot read `{value}` as {kind:?}"));
        Ok(match kind {
            ColumnKind::Int => Cell::Int(value.as_i64().ok_or_else(bad)?),
            ColumnKind::Float => Cell::Float(value.as_f64().ok_or_else(bad)?),
            ColumnKind::Text => Cell::Text(value.as_str().ok_or_else(bad)?.to_string()),
        })
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Provenance stored beside the rows. Contains nothing that varies between
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub master_seed: u64,
    pub replicates: usize,
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub schema: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    pub metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema: Vec<Column>,
    metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
struct JsonDocument {
    schema: Vec<Column>,
    metadata: Metadata,
    rows: Vec<Vec<serde_json::Value>>,
}

/// `results.csv` gets `results.csv.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

impl ResultTable {
    pub fn new(schema: Vec<Column>, metadata: Metadata) -> Self {
        Self {
            schema,
            rows: Vec::new(),
            metadata,
        }
    }

    /// Append a row, checking its shape against the schema.
    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.schema.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} cells", self.schema.len()),
                found: row.len().to_string(),
            });
        }
        if let Some((col, cell)) = self.schema.iter().zip(&row).find(|(c, cell)| c.kind != cell.kind()) {
            return Err(Error::Format(format!(
                "column `{}` holds {:?}, got {:?}",
                col.name,
                col.kind,
                cell.kind()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    /// All values of a numeric column.
    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows.iter().map(|r| r[j].as_f64()).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(self.schema.iter().map(|c| c.name.as_str()))
            .map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_csv_field)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn sidecar_json(&self) -> String {
        let sidecar = Sidecar {
            schema: self.schema.clone(),
            metadata: self.metadata.clone(),
        };
        let mut s = serde_json::to_string_pretty(&sidecar).expect("metadata serializes");
        s.push('\n');
        s
    }

    pub fn to_json_string(&self) -> String {
        let doc = JsonDocument {
            schema: self.schema.clone(),
            metadata: self.metadata.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(Cell::to_json).collect())
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn from_csv_parts(csv_text: &str, sidecar_json: &str) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_str(sidecar_json).map_err(|e| Error::Format(e.to_string()))?;
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(csv_text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::Format(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let expected: Vec<&str> = sidecar.schema.iter().map(|c| c.name.as_str()).collect();
        if header != expected {
            return Err(Error::Format(format!(
                "header {header:?} does not match schema {expected:?}"
            )));
        }
        let mut table = ResultTable::new(sidecar.schema, sidecar.metadata);
        for record in r.records() {
            let record = record.map_err(|e| Error::Format(e.to_string()))?;
            let row = record
                .iter()
                .zip(&table.schema)
                .map(|(f, c)| Cell::from_csv_field(f, c.kind))
                .collect::<Result<Vec<_>>>()?;
            table.push(row)?;
        }
        Ok(table)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: JsonDocument = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let mut table = ResultTable::new(doc.schema, doc.metadata);
        for row in &doc.rows {
            let cells = row
                .iter()
                .zip(&table.schema)
                .map(|(v, c)| Cell::from_json(v, c.kind))
                .collect::<Result<Vec<_>>>()?;
            table.push(cells)?;
        }
        Ok(table)
    }

    /// Write to `path`; CSV also writes the metadata sidecar.
    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        match format {
            OutputFormat::Csv => {
                std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))?;
                let meta = sidecar_path(path);
                std::fs::write(&meta, self.sidecar_json()).map_err(|e| Error::io(&meta, e))
            }
            OutputFormat::Json => std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e)),
        }
    }

    pub fn read(path: &Path, format: OutputFormat) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match format {
            OutputFormat::Csv => {
                let meta = sidecar_path(path);
                let sidecar = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
                Self::from_csv_parts(&text, &sidecar)
            }
            OutputFormat::Json => Self::from_json_str(&text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert_eq, proptest};

    fn metadata() -> Metadata {
        Metadata {
            tool: "riskcomp".into(),
            version: "0.0.0".into(),
            experiment: "test".into(),
            master_seed: 3,
            replicates: 10,
            parameters: serde_json::json!({"n": 5}),
        }
    }

    fn table(rows: &[(i64, f64, String)]) -> ResultTable {
        let mut t = ResultTable::new(
            vec![
                Column::new("k", ColumnKind::Int),
                Column::new("x", ColumnKind::Float),
                Column::new("label", ColumnKind::Text),
            ],
            metadata(),
        );
        for (k, x, s) in rows {
            t.push(vec![Cell::Int(*k), Cell::Float(*x), Cell::Text(s.clone())])
                .unwrap();
        }
        t
    }

    #[test]
    fn push_checks_shape_and_kind() {
        let mut t = table(&[]);
        assert!(t.push(vec![Cell::Int(1)]).is_err());
        assert!(t
            .push(vec![Cell::Float(1.0), Cell::Float(1.0), Cell::Text("a".into())])
            .is_err());
    }

    #[test]
    fn csv_floats_use_seventeen_digits() {
        let t = table(&[(1, 0.1, "a,b".into())]);
        let csv = t.to_csv_string().unwrap();
        assert_eq!(csv, "k,x,label\n1,1.0000000000000001e-1,\"a,b\"\n");
    }

    #[test]
    fn file_round_trip_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(&[(1, -2.5e-300, "x".into()), (2, f64::MAX, "y z".into())]);
        for (name, format) in [("t.csv", OutputFormat::Csv), ("t.json", OutputFormat::Json)] {
            let path = dir.path().join("sub").join(name);
            t.write(&path, format).unwrap();
            assert_eq!(ResultTable::read(&path, format).unwrap(), t);
        }
        assert!(sidecar_path(&dir.path().join("sub/t.csv")).exists());
        assert!(!sidecar_path(&dir.path().join("sub/t.json")).exists());
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(rows in prop::collection::vec((any::<i64>(), -1e300f64..1e300, "[a-z ,\"]{0,8}"), 0..20)) {
            let t = table(&rows);
            let back = ResultTable::from_csv_parts(&t.to_csv_string().unwrap(), &t.sidecar_json()).unwrap();
            prop_assert_eq!(&back, &t);
            let back = ResultTable::from_json_str(&t.to_json_string()).unwrap();
            prop_assert_eq!(&back, &t);
        }
    }
}
