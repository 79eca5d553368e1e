//! Fixed-length per-sample embeddings in a neutral CSV layout
//! (`id,e0,e1,...,e{d-1}`), keyed by sample id.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::dataset::DatasetTable;
use crate::error::{Error, Result, RowDiagnostic};

/// Significant digits kept when writing values.
pub const EMBEDDING_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
    pub source_tag: String,
}

impl EmbeddingTable {
    pub fn new(dim: usize, source_tag: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
            source_tag: source_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{id}: vector has {} values, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{id}: non-finite embedding value"
            )));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::InvalidArgument(format!("duplicate id {id}")));
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    /// Stacks the vectors of `dataset` records in dataset order.
    pub fn align_to_dataset(&self, dataset: &DatasetTable) -> Result<DMatrix<f64>> {
        let missing: Vec<String> = dataset
            .records
            .iter()
            .filter(|r| !self.entries.contains_key(&r.id))
            .map(|r| r.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingIds {
                tag: self.source_tag.clone(),
                ids: missing,
            });
        }
        let n = dataset.len();
        Ok(DMatrix::from_fn(n, self.dim, |i, j| {
            self.entries[&dataset.records[i].id][j]
        }))
    }
}

/// Reads an embedding CSV; the source tag defaults to the file stem.
pub fn read_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_embedding_table(&bytes, path, tag)
}

pub(crate) fn parse_embedding_table(
    bytes: &[u8],
    path: &Path,
    tag: String,
) -> Result<EmbeddingTable> {
    let header_error = |message: String| Error::Header {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| header_error(e.to_string()))?
        .clone();
    let dim = header.len().saturating_sub(1);
    if header.get(0) != Some("id") || dim == 0 {
        return Err(header_error("expected `id,e0,e1,...`".into()));
    }
    if let Some((j, name)) = header
        .iter()
        .skip(1)
        .enumerate()
        .find(|(j, h)| *h != format!("e{j}"))
    {
        return Err(header_error(format!(
            "column {} is `{name}`, expected `e{j}`",
            j + 1
        )));
    }

    let mut table = EmbeddingTable::new(dim, tag)?;
    let mut bad = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                bad.push(RowDiagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line() as usize);
        let mut diag = |message: String| bad.push(RowDiagnostic { line, message });
        let id = row.get(0).unwrap_or("").to_string();
        if row.len() != dim + 1 {
            diag(format!(
                "{id}: expected {dim} values, found {}",
                row.len().saturating_sub(1)
            ));
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> =
            row.iter().skip(1).map(str::parse::<f64>).collect();
        let values = match values {
            Ok(v) => v,
            Err(_) => {
                diag(format!("{id}: non-numeric value"));
                continue;
            }
        };
        if let Err(e) = table.insert(id.clone(), values) {
            diag(match e {
                Error::InvalidArgument(m) => m,
                other => other.to_string(),
            });
        }
    }
    if !bad.is_empty() {
        return Err(Error::Rows {
            path: path.to_path_buf(),
            rows: bad,
        });
    }
    Ok(table)
}

/// Shortest decimal that round-trips the value rounded to `EMBEDDING_DIGITS` significant digits.
pub fn format_value(x: f64) -> String {
    let rounded: f64 = format!("{:.*e}", EMBEDDING_DIGITS - 1, x)
        .parse()
        .unwrap_or(x);
    let s = format!("{rounded:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

/// Canonical CSV bytes: header, then rows sorted by id.
pub fn embedding_table_csv(table: &EmbeddingTable) -> String {
    let mut out = String::from("id");
    for j in 0..table.dim {
        out.push_str(&format!(",e{j}"));
    }
    out.push('\n');
    for (id, v) in &table.entries {
        out.push_str(&csv_field(id));
        for &x in v {
            out.push(',');
            out.push_str(&format_value(x));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_embedding_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, embedding_table_csv(table)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ElastomerRecord;

    fn parse(text: &str) -> Result<EmbeddingTable> {
        parse_embedding_table(text.as_bytes(), Path::new("t.csv"), "t".into())
    }

    #[test]
    fn three_rows_dim_four() {
        let t = parse("id,e0,e1,e2,e3\na,1,2,3,4\nb,0,0,0,1e-3\nc,-1,-2,-3,-4\n").unwrap();
        assert_eq!((t.len(), t.dim()), (3, 4));
        assert_eq!(t.get("b").unwrap()[3], 1e-3);
    }

    #[test]
    fn ragged_row_is_named() {
        let err = parse("id,e0,e1,e2,e3\na,1,2,3,4\nb,1,2,3\n").unwrap_err();
        let Error::Rows { rows, .. } = &err else {
            panic!("{err}")
        };
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].line, 3);
        assert!(rows[0].message.starts_with("b:"), "{}", rows[0].message);
    }

    #[test]
    fn non_finite_and_duplicate_rejected() {
        assert!(parse("id,e0\na,NaN\n").is_err());
        assert!(parse("id,e0\na,inf\n").is_err());
        let err = parse("id,e0\na,1\na,2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate id a"), "{err}");
    }

    #[test]
    fn bad_header() {
        assert!(matches!(parse("id\n"), Err(Error::Header { .. })));
        assert!(matches!(parse("name,e0\n"), Err(Error::Header { .. })));
        assert!(matches!(parse("id,e1\n"), Err(Error::Header { .. })));
    }

    #[test]
    fn single_value_row() {
        let mut t = EmbeddingTable::new(1, "x").unwrap();
        t.insert("id", vec![0.5]).unwrap();
        assert_eq!(embedding_table_csv(&t), "id,e0\nid,0.5\n");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = EmbeddingTable::new(2, "x").unwrap();
        assert_eq!(embedding_table_csv(&t), "id,e0,e1\n");
        assert!(parse("id,e0,e1\n").unwrap().is_empty());
    }

    #[test]
    fn value_formatting() {
        assert_eq!(format_value(1.0), "1");
        assert_eq!(format_value(-0.1), "-0.1");
        assert_eq!(format_value(0.123456789123), "0.123456789");
        assert_eq!(format_value(1.0e-12), "1e-12");
        assert_eq!(format_value(123456789012.0), "123456789000");
    }

    fn record(id: &str) -> ElastomerRecord {
        ElastomerRecord {
            id: id.into(),
            smiles: "C".into(),
            k: 1.0,
            e_mpa: 1.0,
            source_url: String::new(),
        }
    }

    #[test]
    fn align_follows_dataset_order() {
        let t = parse("id,e0,e1\nb,3,4\na,1,2\n").unwrap();
        let ds = DatasetTable {
            records: vec![record("a"), record("b")],
            provenance: None,
        };
        let m = t.align_to_dataset(&ds).unwrap();
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(m.row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
    }

    #[test]
    fn align_lists_all_missing_ids() {
        let t = parse("id,e0\na,1\n").unwrap();
        let ds = DatasetTable {
            records: vec![record("a"), record("b"), record("c")],
            provenance: None,
        };
        match t.align_to_dataset(&ds).unwrap_err() {
            Error::MissingIds { tag, ids } => {
                assert_eq!(tag, "t");
                assert_eq!(ids, vec!["b", "c"]);
            }
            e => panic!("{e}"),
        }
    }
}
