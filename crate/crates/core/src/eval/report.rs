use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::DatasetTable;
use crate::embedding::format_value;
use crate::error::{Error, Result, RowDiagnostic};

use super::experiment::{summarize, AlphaChoice, ExperimentResult, SummaryRow, TARGET_NAMES};
use super::metrics::TargetMetrics;
use super::svg;

pub const METRICS_HEADER: [&str; 5] = ["config", "seed", "target", "metric", "value"];
pub const PREDICTIONS_HEADER: [&str; 5] = ["id", "target", "y_true", "y_pred", "y_std"];
pub const BASELINE_CONFIG: &str = "constant-mean";
/// Threshold annotated on the dielectric-constant histogram.
pub const K_THRESHOLD: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub target: String,
    pub y_true: f64,
    pub y_pred: f64,
    pub y_std: f64,
}

/// Everything the plots and the comparison table are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportData {
    pub strategy: String,
    pub per_seed: Vec<(String, TargetMetrics)>,
    pub baseline: Option<TargetMetrics>,
    pub predictions: Vec<PredictionRow>,
    pub notes: Vec<String>,
}

impl ReportData {
    pub fn from_result(result: &ExperimentResult) -> Self {
        let mut notes = vec![
            format!(
                "samples: {} (excluded: {})",
                result.n_samples,
                excluded_list(&result.excluded)
            ),
            format!(
                "seeds: {}",
                result
                    .runs
                    .iter()
                    .map(|r| r.seed.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            format!("config sha256: {}", result.config_sha256),
        ];
        if let Some(sha) = &result.dataset_sha256 {
            notes.push(format!("dataset sha256: {sha}"));
        }
        notes.push(format!(
            "fold guard: {} folds, {} fits, {} rows fitted, {} held-out rows reached a fit",
            result.guard.folds,
            result.guard.fit_calls,
            result.guard.rows_fitted,
            result.guard.violations
        ));
        if let Some(alpha) = result.runs.first().and_then(|r| r.alpha.as_ref()) {
            notes.push(format!("late fusion: {}", alpha.describe()));
        }
        let first = &result.runs[0].predictions;
        let mut predictions = Vec::with_capacity(first.ids.len() * 2);
        for (i, id) in first.ids.iter().enumerate() {
            for (t, name) in TARGET_NAMES.iter().enumerate() {
                predictions.push(PredictionRow {
                    id: id.clone(),
                    target: name.to_string(),
                    y_true: first.y_true[i][t],
                    y_pred: first.y_pred[i][t],
                    y_std: first.y_std[i][t],
                });
            }
        }
        ReportData {
            strategy: result.strategy.name().to_string(),
            per_seed: result
                .runs
                .iter()
                .map(|r| (r.seed.to_string(), r.metrics))
                .collect(),
            baseline: Some(result.baseline),
            predictions,
            notes,
        }
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        summarize(&self.per_seed.iter().map(|(_, m)| *m).collect::<Vec<_>>())
    }
}

fn excluded_list(ids: &[String]) -> String {
    if ids.is_empty() {
        "none".into()
    } else {
        ids.join(", ")
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Rows {
            path: path.to_path_buf(),
            rows: vec![RowDiagnostic {
                line: 0,
                message: format!("{other:?}"),
            }],
        },
    }
}

/// Long-format metrics: per seed, then across-seed mean and std, then the baseline.
pub fn metrics_csv(result: &ExperimentResult) -> String {
    let mut out = METRICS_HEADER.join(",");
    out.push('\n');
    let name = result.strategy.name();
    for run in &result.runs {
        for (target, metric, value) in run.metrics.named() {
            let _ = writeln!(
                out,
                "{name},{},{target},{metric},{}",
                run.seed,
                format_value(value)
            );
        }
        if let Some(AlphaChoice::Pooled(s)) = &run.alpha {
            let _ = writeln!(
                out,
                "{name},{},mean,alpha,{}",
                run.seed,
                format_value(s.best_alpha)
            );
        }
    }
    for row in result.summary() {
        let _ = writeln!(
            out,
            "{name},mean,{},{},{}",
            row.target,
            row.metric,
            format_value(row.mean)
        );
    }
    for row in result.summary() {
        let _ = writeln!(
            out,
            "{name},std,{},{},{}",
            row.target,
            row.metric,
            format_value(row.std)
        );
    }
    for (target, metric, value) in result.baseline.named() {
        let _ = writeln!(
            out,
            "{BASELINE_CONFIG},loocv,{target},{metric},{}",
            format_value(value)
        );
    }
    out
}

/// Held-out predictions of the first seed.
pub fn predictions_csv(data: &ReportData) -> String {
    let mut out = PREDICTIONS_HEADER.join(",");
    out.push('\n');
    for p in &data.predictions {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.id,
            p.target,
            format_value(p.y_true),
            format_value(p.y_pred),
            format_value(p.y_std)
        );
    }
    out
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes metrics, predictions, plots and the comparison table into `out_dir`.
pub fn write_run_outputs(
    result: &ExperimentResult,
    dataset: &DatasetTable,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let data = ReportData::from_result(result);
    let mut written = Vec::new();
    write(
        out_dir.join("metrics.csv"),
        &metrics_csv(result),
        &mut written,
    )?;
    write(
        out_dir.join("predictions.csv"),
        &predictions_csv(&data),
        &mut written,
    )?;
    written.extend(render_report(&data, dataset, out_dir)?);
    Ok(written)
}

/// Plots and `comparison.md`.
pub fn render_report(
    data: &ReportData,
    dataset: &DatasetTable,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (target, file, label) in [
        ("k", "scatter_k.svg", "dielectric constant k"),
        ("E_MPa", "scatter_E.svg", "Young's modulus E (MPa)"),
    ] {
        let rows: Vec<&PredictionRow> = data
            .predictions
            .iter()
            .filter(|p| p.target == target)
            .collect();
        let actual: Vec<f64> = rows.iter().map(|p| p.y_true).collect();
        let pred: Vec<f64> = rows.iter().map(|p| p.y_pred).collect();
        let std: Vec<f64> = rows.iter().map(|p| p.y_std).collect();
        let title = format!("{}: held-out {label}", data.strategy);
        write(
            out_dir.join(file),
            &svg::scatter(&title, &actual, &pred, &std),
            &mut written,
        )?;
    }
    let k: Vec<f64> = dataset.records.iter().map(|r| r.k).collect();
    let e: Vec<f64> = dataset.records.iter().map(|r| r.e_mpa).collect();
    let note = if dataset.is_empty() {
        None
    } else {
        let f = dataset.stats()?.fraction_k_below(K_THRESHOLD);
        Some(format!(
            "k < {K_THRESHOLD}: {} of {} ({:.1}%)",
            f.numerator,
            f.denominator,
            100.0 * f.value()
        ))
    };
    let bins = ((k.len() as f64).sqrt().ceil() as usize).max(1);
    write(
        out_dir.join("hist_k.svg"),
        &svg::histogram("Dielectric constant", "k", &k, bins, note.as_deref()),
        &mut written,
    )?;
    write(
        out_dir.join("hist_E.svg"),
        &svg::histogram("Young's modulus", "E (MPa)", &e, bins, None),
        &mut written,
    )?;
    write(
        out_dir.join("comparison.md"),
        &comparison_markdown(data),
        &mut written,
    )?;
    Ok(written)
}

type RefRow = (&'static str, [(f64, f64); 6]);

/// Published single-modality results (k R2, E R2, mean R2, k RMSE, E RMSE, mean RMSE).
pub const REFERENCE_SINGLE: [RefRow; 5] = [
    (
        "Morgan fingerprint",
        [
            (0.362, 0.043),
            (0.800, 0.015),
            (0.581, 0.023),
            (34.070, 7.206),
            (0.654, 0.142),
            (17.362, 3.642),
        ],
    ),
    (
        "PolyBERT",
        [
            (0.459, 0.034),
            (0.824, 0.017),
            (0.641, 0.019),
            (31.150, 7.797),
            (0.601, 0.185),
            (15.875, 3.953),
        ],
    ),
    (
        "TransPolymer",
        [
            (0.561, 0.035),
            (0.835, 0.010),
            (0.698, 0.019),
            (28.336, 5.564),
            (0.599, 0.089),
            (14.467, 2.802),
        ],
    ),
    (
        "GIN",
        [
            (0.528, 0.039),
            (0.846, 0.010),
            (0.687, 0.021),
            (29.174, 6.600),
            (0.581, 0.067),
            (14.878, 3.303),
        ],
    ),
    (
        "Aligned average",
        [
            (0.624, 0.015),
            (0.892, 0.020),
            (0.758, 0.011),
            (26.829, 0.526),
            (0.489, 0.047),
            (13.659, 0.258),
        ],
    ),
];

/// Published fusion-strategy results, same column order.
pub const REFERENCE_FUSION: [RefRow; 5] = [
    (
        "Concatenation",
        [
            (0.383, 0.109),
            (0.701, 0.106),
            (0.542, 0.065),
            (34.270, 2.873),
            (0.809, 0.130),
            (17.539, 1.421),
        ],
    ),
    (
        "Averaging",
        [
            (0.481, 0.120),
            (0.811, 0.061),
            (0.646, 0.067),
            (31.346, 3.390),
            (0.645, 0.091),
            (15.996, 1.696),
        ],
    ),
    (
        "Aligned concatenation",
        [
            (0.608, 0.014),
            (0.895, 0.014),
            (0.752, 0.012),
            (27.386, 0.497),
            (0.484, 0.032),
            (13.935, 0.256),
        ],
    ),
    (
        "Aligned average",
        [
            (0.624, 0.015),
            (0.892, 0.020),
            (0.758, 0.011),
            (26.829, 0.526),
            (0.489, 0.047),
            (13.659, 0.258),
        ],
    ),
    (
        "Weighted late fusion (alpha 0.3)",
        [
            (0.537, 0.015),
            (0.841, 0.020),
            (0.689, 0.012),
            (29.775, 0.478),
            (0.595, 0.034),
            (15.185, 0.238),
        ],
    ),
];

const TABLE_HEAD: &str = "| Strategy | R2 k | R2 E | R2 mean | RMSE k | RMSE E (MPa) | RMSE mean |\n|---|---|---|---|---|---|---|\n";

fn column_order(rows: &[SummaryRow]) -> [(f64, f64); 6] {
    let find = |t: &str, m: &str| {
        rows.iter()
            .find(|r| r.target == t && r.metric == m)
            .map_or((f64::NAN, f64::NAN), |r| (r.mean, r.std))
    };
    [
        find("k", "r2"),
        find("E_MPa", "r2"),
        find("mean", "r2"),
        find("k", "rmse"),
        find("E_MPa", "rmse"),
        find("mean", "rmse"),
    ]
}

fn table_row(name: &str, cells: &[(f64, f64); 6]) -> String {
    let cells: Vec<String> = cells
        .iter()
        .map(|(m, s)| format!("{m:.3} ± {s:.3}"))
        .collect();
    format!("| {name} | {} |\n", cells.join(" | "))
}

pub fn comparison_markdown(data: &ReportData) -> String {
    let mut out = format!("# Evaluation: {}\n\n", data.strategy);
    out.push_str(
        "Protocol: pooled leave-one-out. Each sample is predicted once by a model fitted on all other \
         samples; R2 and RMSE are computed over the pooled held-out predictions for each seed. \
         Values are mean ± sample standard deviation across seeds. Feature scaling, PCA, alignment \
         heads and GPR hyperparameters are fitted inside each training fold.\n\n",
    );
    for note in &data.notes {
        let _ = writeln!(out, "- {note}");
    }
    out.push_str("\n## This run\n\n");
    out.push_str(TABLE_HEAD);
    if !data.per_seed.is_empty() {
        out.push_str(&table_row(&data.strategy, &column_order(&data.summary())));
    }
    if let Some(b) = &data.baseline {
        out.push_str(&table_row(
            "constant mean (baseline)",
            &column_order(&summarize(std::slice::from_ref(b))),
        ));
    }
    out.push_str("\n## Published reference values (paper-reported, not recomputed here)\n\n");
    out.push_str("Single modality:\n\n");
    out.push_str(TABLE_HEAD);
    for (name, cells) in &REFERENCE_SINGLE {
        out.push_str(&table_row(name, cells));
    }
    out.push_str("\nFusion strategies:\n\n");
    out.push_str(TABLE_HEAD);
    for (name, cells) in &REFERENCE_FUSION {
        out.push_str(&table_row(name, cells));
    }
    out
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let found = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Header {
            path: path.to_path_buf(),
            message: format!("expected {}", header.join(",")),
        });
    }
    reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn number(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Rows {
        path: path.to_path_buf(),
        rows: vec![RowDiagnostic {
            line,
            message: format!("'{field}' is not a number"),
        }],
    })
}

/// Rebuilds report inputs from a `metrics.csv` and `predictions.csv` pair.
pub fn read_report_inputs(metrics: &Path, predictions: &Path) -> Result<ReportData> {
    let mut strategy = String::new();
    let mut per_seed: Vec<(String, [f64; 4])> = Vec::new();
    let mut baseline = [f64::NAN; 4];
    let mut has_baseline = false;
    let slot = |target: &str, metric: &str| match (target, metric) {
        ("k", "r2") => Some(0),
        ("E_MPa", "r2") => Some(1),
        ("k", "rmse") => Some(2),
        ("E_MPa", "rmse") => Some(3),
        _ => None,
    };
    for (i, rec) in read_csv(metrics, &METRICS_HEADER)?.iter().enumerate() {
        let (config, seed, target, metric) = (&rec[0], &rec[1], &rec[2], &rec[3]);
        let value = number(metrics, i + 2, &rec[4])?;
        let Some(k) = slot(target, metric) else {
            continue;
        };
        if config == BASELINE_CONFIG {
            baseline[k] = value;
            has_baseline = true;
            continue;
        }
        if seed.parse::<u64>().is_err() {
            continue;
        }
        strategy = config.to_string();
        match per_seed.iter_mut().find(|(s, _)| s == seed) {
            Some((_, v)) => v[k] = value,
            None => {
                let mut v = [f64::NAN; 4];
                v[k] = value;
                per_seed.push((seed.to_string(), v));
            }
        }
    }
    if per_seed.is_empty() {
        return Err(Error::Rows {
            path: metrics.to_path_buf(),
            rows: vec![RowDiagnostic {
                line: 1,
                message: "no per-seed metric rows".into(),
            }],
        });
    }
    let rows = read_csv(predictions, &PREDICTIONS_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(PredictionRow {
                id: r[0].to_string(),
                target: r[1].to_string(),
                y_true: number(predictions, i + 2, &r[2])?,
                y_pred: number(predictions, i + 2, &r[3])?,
                y_std: number(predictions, i + 2, &r[4])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let to_metrics = |v: [f64; 4]| TargetMetrics::from_values([v[0], v[1]], [v[2], v[3]]);
    Ok(ReportData {
        strategy,
        per_seed: per_seed
            .into_iter()
            .map(|(s, v)| (s, to_metrics(v)))
            .collect(),
        baseline: has_baseline.then(|| to_metrics(baseline)),
        predictions: rows,
        notes: vec![format!("regenerated from {}", metrics.display())],
    })
}
