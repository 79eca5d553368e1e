//! Curated elastomer dataset: CSV loading, validation and summary statistics.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::chem::parse_smiles;
use crate::error::{Error, Result, RowDiagnostic};

pub const DATASET_HEADER: [&str; 5] = [
    "id",
    "smiles",
    "dielectric_constant",
    "youngs_modulus_mpa",
    "source_url",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ElastomerRecord {
    pub id: String,
    pub smiles: String,
    /// Dielectric constant (dimensionless).
    pub k: f64,
    /// Young's modulus in MPa.
    pub e_mpa: f64,
    pub source_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub path: PathBuf,
    /// Lowercase hex SHA-256 of the file bytes.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub records: Vec<ElastomerRecord>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub record_id: String,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn rejected_ids(&self) -> HashSet<&str> {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Error)
            .map(|i| i.record_id.as_str())
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(
                f,
                "{}: {}: {}",
                issue.severity, issue.record_id, issue.message
            )?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Loads a dataset CSV. Any bad row fails the whole load, listing every bad row.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetTable> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut table = parse_dataset(&bytes, path)?;
    table.provenance = Some(Provenance {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    });
    Ok(table)
}

pub(crate) fn parse_dataset(bytes: &[u8], path: &Path) -> Result<DatasetTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| Error::Header {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found != DATASET_HEADER {
        return Err(Error::Header {
            path: path.to_path_buf(),
            message: format!(
                "expected `{}`, found `{}`",
                DATASET_HEADER.join(","),
                found.join(",")
            ),
        });
    }

    let mut records = Vec::new();
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(RowDiagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if row.len() != DATASET_HEADER.len() {
            problems.push(RowDiagnostic {
                line,
                message: format!("expected 5 fields, found {}", row.len()),
            });
            continue;
        }
        let number = |idx: usize, name: &str| -> std::result::Result<f64, String> {
            row[idx]
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("non-numeric {name} '{}'", &row[idx]))
        };
        let k = number(2, "dielectric_constant");
        let e = number(3, "youngs_modulus_mpa");
        let id = row[0].trim().to_string();
        let mut row_problems = Vec::new();
        if id.is_empty() {
            row_problems.push("empty id".to_string());
        } else if !seen.insert(id.clone()) {
            row_problems.push(format!("duplicate id '{id}'"));
        }
        if let Err(m) = &k {
            row_problems.push(m.clone());
        }
        if let Err(m) = &e {
            row_problems.push(m.clone());
        }
        if row_problems.is_empty() {
            records.push(ElastomerRecord {
                id,
                smiles: row[1].trim().to_string(),
                k: k.unwrap(),
                e_mpa: e.unwrap(),
                source_url: row[4].trim().to_string(),
            });
        } else {
            problems.extend(
                row_problems
                    .into_iter()
                    .map(|message| RowDiagnostic { line, message }),
            );
        }
    }
    if !problems.is_empty() {
        return Err(Error::Rows {
            path: path.to_path_buf(),
            rows: problems,
        });
    }
    Ok(DatasetTable {
        records,
        provenance: None,
    })
}

/// Writes records in the canonical CSV layout.
pub fn save_dataset(table: &DatasetTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, e.into());
    writer.write_record(DATASET_HEADER).map_err(io)?;
    for r in &table.records {
        writer
            .write_record([
                r.id.as_str(),
                r.smiles.as_str(),
                &format!("{:?}", r.k),
                &format!("{:?}", r.e_mpa),
                r.source_url.as_str(),
            ])
            .map_err(io)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl DatasetTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ElastomerRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Checks property values and SMILES parseability for every record.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let mut push = |id: &str, severity, message: String| {
            issues.push(Issue {
                record_id: id.to_string(),
                severity,
                message,
            })
        };
        for r in &self.records {
            if !r.k.is_finite() {
                push(
                    &r.id,
                    Severity::Error,
                    "non-finite dielectric constant".into(),
                );
            } else if r.k <= 0.0 {
                push(
                    &r.id,
                    Severity::Error,
                    "non-positive dielectric constant".into(),
                );
            }
            if !r.e_mpa.is_finite() {
                push(&r.id, Severity::Error, "non-finite modulus".into());
            } else if r.e_mpa <= 0.0 {
                push(&r.id, Severity::Error, "non-positive modulus".into());
            }
            if r.smiles.is_empty() {
                push(&r.id, Severity::Error, "empty SMILES".into());
            } else if let Err(e) = parse_smiles(&r.smiles) {
                push(&r.id, Severity::Error, format!("unparseable SMILES: {e}"));
            }
            if r.source_url.is_empty() {
                push(&r.id, Severity::Warning, "missing source URL".into());
            }
        }
        ValidationReport { issues }
    }

    /// Records without `error` issues, in file order.
    pub fn valid_subset(&self, report: &ValidationReport) -> DatasetTable {
        let rejected = report.rejected_ids();
        DatasetTable {
            records: self
                .records
                .iter()
                .filter(|r| !rejected.contains(r.id.as_str()))
                .cloned()
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn stats(&self) -> Result<DatasetStats> {
        dataset_stats(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

fn spread(values: impl Iterator<Item = f64>) -> Spread {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    Spread {
        min: v[0],
        max: v[n - 1],
        median,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub count: usize,
    pub k: Spread,
    pub e_mpa: Spread,
    k_values: Vec<f64>,
}

/// `numerator / denominator` kept as integers until rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub numerator: usize,
    pub denominator: usize,
}

impl Fraction {
    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl DatasetStats {
    /// Share of records with `k < threshold`.
    pub fn fraction_k_below(&self, threshold: f64) -> Fraction {
        Fraction {
            numerator: self.k_values.iter().filter(|&&k| k < threshold).count(),
            denominator: self.count,
        }
    }
}

pub fn dataset_stats(table: &DatasetTable) -> Result<DatasetStats> {
    if table.is_empty() {
        return Err(Error::InvalidArgument(
            "statistics of an empty dataset".into(),
        ));
    }
    Ok(DatasetStats {
        count: table.len(),
        k: spread(table.records.iter().map(|r| r.k)),
        e_mpa: spread(table.records.iter().map(|r| r.e_mpa)),
        k_values: table.records.iter().map(|r| r.k).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,smiles,dielectric_constant,youngs_modulus_mpa,source_url\n";

    fn parse(body: &str) -> Result<DatasetTable> {
        parse_dataset(format!("{HEADER}{body}").as_bytes(), Path::new("mem.csv"))
    }

    fn record(id: &str, smiles: &str, k: f64, e: f64) -> ElastomerRecord {
        ElastomerRecord {
            id: id.into(),
            smiles: smiles.into(),
            k,
            e_mpa: e,
            source_url: "https://example.org".into(),
        }
    }

    #[test]
    fn table_one_row() {
        let t = parse("a,*C(*)(C)C(=O)OCCCC.*c1ccc(N)c(N)c1*,168.0,5.3,https://x\n").unwrap();
        assert_eq!(
            t.records[0],
            ElastomerRecord {
                id: "a".into(),
                smiles: "*C(*)(C)C(=O)OCCCC.*c1ccc(N)c(N)c1*".into(),
                k: 168.0,
                e_mpa: 5.3,
                source_url: "https://x".into(),
            }
        );
    }

    #[test]
    fn header_only() {
        assert_eq!(parse("").unwrap().len(), 0);
    }

    #[test]
    fn quoted_fields() {
        let t = parse("\"a,1\",\"CC\",3.5,0.2,\"https://x?a=1,2\"\n").unwrap();
        assert_eq!(t.records[0].id, "a,1");
        assert_eq!(t.records[0].source_url, "https://x?a=1,2");
    }

    #[test]
    fn bad_header() {
        let e = parse_dataset(b"id,smiles,k,E,url\n", Path::new("x")).unwrap_err();
        assert!(matches!(e, Error::Header { .. }));
    }

    #[test]
    fn row_diagnostics() {
        let e = parse("a,CC,abc,1,u\nb,CC,1,1,u\nb,CC,2,x,u\nc,CC,1\n").unwrap_err();
        let Error::Rows { rows, .. } = e else {
            panic!("{e}")
        };
        let lines: Vec<usize> = rows.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 4, 4, 5]);
        assert!(rows[1].message.contains("duplicate id"));
    }

    #[test]
    fn validate_cases() {
        let table = DatasetTable {
            records: vec![
                record("bad", "[*]C(C)(C(=O)O[Ca]O(=O)C(C)[*]", 5.2, 0.24),
                record("good", "*CC(*)C(=O)OC", 5.2, 0.24),
                record("zero", "CC", 3.0, 0.0),
            ],
            provenance: None,
        };
        let report = table.validate();
        assert_eq!(report.issues.len(), 2);
        assert_eq!(report.issues[0].record_id, "bad");
        assert!(report.issues[0].message.starts_with("unparseable SMILES"));
        assert_eq!(report.issues[1].message, "non-positive modulus");
        assert_eq!(table.valid_subset(&report).records[0].id, "good");
        assert_eq!(table.validate(), report);
    }

    #[test]
    fn stats_fraction() {
        let one = DatasetTable {
            records: vec![record("a", "C", 5.0, 1.0)],
            provenance: None,
        };
        let s = one.stats().unwrap();
        assert_eq!(s.fraction_k_below(20.0).value(), 1.0);
        assert_eq!(s.fraction_k_below(0.0).value(), 0.0);
        let empty = DatasetTable {
            records: vec![],
            provenance: None,
        };
        assert!(empty.stats().is_err());
    }

    #[test]
    fn median_even() {
        let s = spread([4.0, 1.0, 3.0, 2.0].into_iter());
        assert_eq!((s.min, s.max, s.median), (1.0, 4.0, 2.5));
    }
}
