use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, Strategy};
use crate::dataset::{load_dataset, DatasetTable, ElastomerRecord};
use crate::error::{Error, Result};
use crate::fusion::{grid_search_alpha, AlphaSearch};
use crate::tabular::GprPrediction;

use super::features::{rows_to_matrix, FeatureSource};
use super::metrics::{mean_std, r_squared, rmse, TargetMetrics};
use super::pipeline::{blend_predictions, fit_pipeline, FittedPipeline, PipelineOutput};
use super::plan::{loocv_plan, FoldGuard, FoldPlan, GuardStats};

pub const TARGET_NAMES: [&str; 2] = ["k", "E_MPa"];

/// Valid records plus the ids that were dropped.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: DatasetTable,
    pub excluded: Vec<String>,
    pub y: DMatrix<f64>,
}

pub fn prepare_dataset(config: &RunConfig) -> Result<PreparedData> {
    let full = load_dataset(&config.dataset)?;
    let report = full.validate();
    for issue in &report.issues {
        log::warn!("{}: {}: {}", issue.severity, issue.record_id, issue.message);
    }
    let dataset = full.valid_subset(&report);
    let mut excluded: Vec<String> = report
        .rejected_ids()
        .into_iter()
        .map(String::from)
        .collect();
    excluded.sort();
    let y = targets(&dataset.records);
    Ok(PreparedData {
        dataset,
        excluded,
        y,
    })
}

pub fn targets(records: &[ElastomerRecord]) -> DMatrix<f64> {
    DMatrix::from_fn(records.len(), 2, |i, j| {
        if j == 0 {
            records[i].k
        } else {
            records[i].e_mpa
        }
    })
}

pub fn load_sources(config: &RunConfig, strategy: Strategy) -> Result<Vec<FeatureSource>> {
    strategy
        .modalities(config.fusion_modalities)
        .into_iter()
        .map(|m| FeatureSource::load(config, m))
        .collect()
}

/// Held-out predictions for every sample, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledPredictions {
    pub seed: u64,
    pub ids: Vec<String>,
    pub y_true: Vec<[f64; 2]>,
    pub y_pred: Vec<[f64; 2]>,
    pub y_std: Vec<[f64; 2]>,
}

impl PooledPredictions {
    fn from_matrices(seed: u64, ids: Vec<String>, y: &DMatrix<f64>, p: &GprPrediction) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| [m[(i, 0)], m[(i, 1)]]).collect();
        PooledPredictions {
            seed,
            ids,
            y_true: rows(y),
            y_pred: rows(&p.mean),
            y_std: rows(&p.std),
        }
    }

    pub fn metrics(&self) -> Result<TargetMetrics> {
        let col = |v: &[[f64; 2]], t: usize| v.iter().map(|r| r[t]).collect::<Vec<_>>();
        let mut r2 = [0.0; 2];
        let mut err = [0.0; 2];
        for t in 0..2 {
            let truth = col(&self.y_true, t);
            let pred = col(&self.y_pred, t);
            r2[t] = r_squared(&truth, &pred)?;
            err[t] = rmse(&truth, &pred)?;
        }
        Ok(TargetMetrics::from_values(r2, err))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaChoice {
    Fixed(f64),
    Pooled(AlphaSearch),
    /// One weight per outer fold.
    Nested(Vec<f64>),
}

impl AlphaChoice {
    pub fn describe(&self) -> String {
        match self {
            AlphaChoice::Fixed(a) => format!("fixed alpha = {a}"),
            AlphaChoice::Pooled(s) => format!(
                "alpha = {} chosen on pooled held-out predictions (optimistic: the same predictions are scored)",
                s.best_alpha
            ),
            AlphaChoice::Nested(a) => {
                let (m, s) = mean_std(a);
                format!("alpha chosen inside each training fold (nested leave-one-out), mean {m:.3} +/- {s:.3}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub predictions: PooledPredictions,
    pub metrics: TargetMetrics,
    pub alpha: Option<AlphaChoice>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub strategy: Strategy,
    pub config_sha256: String,
    pub dataset_sha256: Option<String>,
    pub n_samples: usize,
    pub excluded: Vec<String>,
    pub runs: Vec<SeedRun>,
    /// Leave-one-out with the training-fold mean as the prediction.
    pub baseline: TargetMetrics,
    pub guard: GuardStats,
    /// Records that took part, in evaluation order.
    #[serde(skip)]
    pub dataset: DatasetTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub target: &'static str,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
}

impl ExperimentResult {
    /// Mean and sample std across seeds, in `TargetMetrics::named` order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        summarize(&self.runs.iter().map(|r| r.metrics).collect::<Vec<_>>())
    }
}

pub fn summarize(per_seed: &[TargetMetrics]) -> Vec<SummaryRow> {
    (0..6)
        .map(|k| {
            let values: Vec<f64> = per_seed.iter().map(|m| m.named()[k].2).collect();
            let (mean, std) = mean_std(&values);
            let (target, metric, _) = per_seed[0].named()[k];
            SummaryRow {
                target,
                metric,
                mean,
                std,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentOptions {
    /// Worker threads for folds; 0 lets the pool pick.
    pub jobs: usize,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

struct FoldOutcome {
    output: PipelineOutput,
    alpha: Option<f64>,
    guard: GuardStats,
}

/// Fits and predicts every fold; results come back in fold order whatever the thread count.
fn run_folds(
    config: &RunConfig,
    strategy: Strategy,
    features: &[DMatrix<f64>],
    y: &DMatrix<f64>,
    plan: &FoldPlan,
    seed: u64,
    workers: &rayon::ThreadPool,
) -> Result<Vec<FoldOutcome>> {
    let outcomes: Vec<Result<FoldOutcome>> = workers.install(|| {
        plan.folds
            .par_iter()
            .enumerate()
            .map(|(i, fold)| {
                let guard = FoldGuard::new(i, vec![fold.test]);
                let fitted =
                    fit_pipeline(config, strategy, features, y, &fold.train, &guard, seed)?;
                let output = fitted.predict_rows(features, &[fold.test])?;
                Ok(FoldOutcome {
                    output,
                    alpha: fitted.alpha(),
                    guard: guard.stats(),
                })
            })
            .collect()
    });
    outcomes
        .into_iter()
        .enumerate()
        .map(|(fold, r)| {
            r.map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })
        })
        .collect()
}

fn stack(rows: impl Iterator<Item = DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = rows.map(|m| m.row(0).iter().copied().collect()).collect();
    rows_to_matrix(&rows)
}

fn stack_predictions<'a>(
    preds: impl Iterator<Item = &'a GprPrediction> + Clone,
) -> Result<GprPrediction> {
    Ok(GprPrediction {
        mean: stack(preds.clone().map(|p| p.mean.clone()))?,
        std: stack(preds.map(|p| p.std.clone()))?,
    })
}

fn pooled_seed_run(
    config: &RunConfig,
    strategy: Strategy,
    ids: &[String],
    y: &DMatrix<f64>,
    seed: u64,
    outcomes: &[FoldOutcome],
) -> Result<SeedRun> {
    let (prediction, alpha) = if strategy == Strategy::Late {
        let seq = stack_predictions(outcomes.iter().map(|o| match &o.output {
            PipelineOutput::Late { seq, .. } => seq,
            PipelineOutput::Joint(p) => p,
        }))?;
        let graph = stack_predictions(outcomes.iter().map(|o| match &o.output {
            PipelineOutput::Late { graph, .. } => graph,
            PipelineOutput::Joint(p) => p,
        }))?;
        if let Some(a) = config.late_fusion.alpha {
            (
                blend_predictions(&seq, &graph, a)?,
                Some(AlphaChoice::Fixed(a)),
            )
        } else if config.late_fusion.nested {
            let alphas: Vec<f64> = outcomes
                .iter()
                .map(|o| o.alpha.expect("nested fit selects alpha"))
                .collect();
            let mut mean = DMatrix::zeros(y.nrows(), 2);
            let mut std = DMatrix::zeros(y.nrows(), 2);
            for (i, o) in outcomes.iter().enumerate() {
                let p = o.output.resolve(None)?;
                mean.set_row(i, &p.mean.row(0));
                std.set_row(i, &p.std.row(0));
            }
            (
                GprPrediction { mean, std },
                Some(AlphaChoice::Nested(alphas)),
            )
        } else {
            let search = grid_search_alpha(&seq.mean, &graph.mean, y, &config.late_fusion.grid)?;
            (
                blend_predictions(&seq, &graph, search.best_alpha)?,
                Some(AlphaChoice::Pooled(search)),
            )
        }
    } else {
        let preds: Vec<GprPrediction> = outcomes
            .iter()
            .map(|o| o.output.resolve(None))
            .collect::<Result<_>>()?;
        (stack_predictions(preds.iter())?, None)
    };
    let predictions = PooledPredictions::from_matrices(seed, ids.to_vec(), y, &prediction);
    let metrics = predictions.metrics()?;
    Ok(SeedRun {
        seed,
        predictions,
        metrics,
        alpha,
    })
}

/// Leave-one-out with the training-fold mean as the prediction.
pub fn constant_mean_baseline(y: &DMatrix<f64>) -> Result<TargetMetrics> {
    let plan = loocv_plan(y.nrows())?;
    let mut pred = DMatrix::zeros(y.nrows(), y.ncols());
    for fold in &plan.folds {
        for t in 0..y.ncols() {
            pred[(fold.test, t)] =
                fold.train.iter().map(|&i| y[(i, t)]).sum::<f64>() / fold.train.len() as f64;
        }
    }
    let p = PooledPredictions::from_matrices(
        0,
        vec![String::new(); y.nrows()],
        y,
        &GprPrediction {
            std: DMatrix::zeros(y.nrows(), y.ncols()),
            mean: pred,
        },
    );
    p.metrics()
}

/// Pooled leave-one-out evaluation of one strategy for every seed.
pub fn run_experiment(
    config: &RunConfig,
    seeds: &[u64],
    options: ExperimentOptions,
) -> Result<ExperimentResult> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("no seeds to run".into()));
    }
    let strategy = config.strategy()?;
    let data = prepare_dataset(config)?;
    let plan = loocv_plan(data.dataset.len())?;
    let sources = load_sources(config, strategy)?;
    let features = sources
        .iter()
        .map(|s| s.matrix(&data.dataset))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = data.dataset.records.iter().map(|r| r.id.clone()).collect();
    let workers = pool(options.jobs)?;

    let mut runs: Vec<SeedRun> = Vec::with_capacity(seeds.len());
    let mut guard = GuardStats::default();
    for &seed in seeds {
        if let (false, Some(first)) = (strategy.is_aligned(), runs.first()) {
            // Nothing else in the pipeline draws random numbers.
            let mut run = first.clone();
            run.seed = seed;
            run.predictions.seed = seed;
            runs.push(run);
            continue;
        }
        log::info!("{strategy}: seed {seed}, {} folds", plan.folds.len());
        let outcomes = run_folds(config, strategy, &features, &data.y, &plan, seed, &workers)?;
        for o in &outcomes {
            guard += o.guard;
        }
        runs.push(pooled_seed_run(
            config, strategy, &ids, &data.y, seed, &outcomes,
        )?);
    }
    if guard.violations > 0 {
        return Err(Error::Leakage(format!(
            "{} fits saw held-out rows",
            guard.violations
        )));
    }
    Ok(ExperimentResult {
        strategy,
        config_sha256: config.fingerprint(),
        dataset_sha256: data.dataset.provenance.as_ref().map(|p| p.sha256.clone()),
        n_samples: data.dataset.len(),
        excluded: data.excluded.clone(),
        runs,
        baseline: constant_mean_baseline(&data.y)?,
        guard,
        dataset: data.dataset,
    })
}

/// A strategy fitted on every valid record, for predicting new inputs.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub strategy: Strategy,
    pub sources: Vec<FeatureSource>,
    pub pipeline: FittedPipeline,
    pub alpha: Option<f64>,
    pub dataset: DatasetTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointPrediction {
    pub k: f64,
    pub k_std: f64,
    pub e_mpa: f64,
    pub e_std: f64,
}

pub fn train_final_model(
    config: &RunConfig,
    seed: u64,
    options: ExperimentOptions,
) -> Result<TrainedModel> {
    config.validate()?;
    let strategy = config.strategy()?;
    let data = prepare_dataset(config)?;
    let sources = load_sources(config, strategy)?;
    let features = sources
        .iter()
        .map(|s| s.matrix(&data.dataset))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<usize> = (0..data.dataset.len()).collect();
    let guard = FoldGuard::new(0, Vec::new());
    let pipeline = fit_pipeline(config, strategy, &features, &data.y, &all, &guard, seed)?;
    let alpha = match (strategy, config.late_fusion.alpha) {
        (Strategy::Late, Some(a)) => Some(a),
        (Strategy::Late, None) => {
            // Same weight the pooled evaluation would report for this seed.
            let mut pooled = config.clone();
            pooled.late_fusion.nested = false;
            let plan = loocv_plan(data.dataset.len())?;
            let outcomes = run_folds(
                &pooled,
                strategy,
                &features,
                &data.y,
                &plan,
                seed,
                &pool(options.jobs)?,
            )?;
            let ids: Vec<String> = data.dataset.records.iter().map(|r| r.id.clone()).collect();
            match pooled_seed_run(&pooled, strategy, &ids, &data.y, seed, &outcomes)?.alpha {
                Some(AlphaChoice::Pooled(s)) => Some(s.best_alpha),
                _ => None,
            }
        }
        _ => None,
    };
    Ok(TrainedModel {
        strategy,
        sources,
        pipeline,
        alpha,
        dataset: data.dataset,
    })
}

impl TrainedModel {
    fn predict_features(&self, rows: Vec<Vec<f64>>) -> Result<PointPrediction> {
        let features = rows
            .into_iter()
            .map(|r| rows_to_matrix(&[r]))
            .collect::<Result<Vec<_>>>()?;
        let p = self.pipeline.predict(&features)?.resolve(self.alpha)?;
        Ok(PointPrediction {
            k: p.mean[(0, 0)],
            k_std: p.std[(0, 0)],
            e_mpa: p.mean[(0, 1)],
            e_std: p.std[(0, 1)],
        })
    }

    pub fn predict_id(&self, id: &str) -> Result<PointPrediction> {
        let record = self.dataset.get(id).ok_or_else(|| {
            Error::InvalidArgument(format!("id '{id}' is not a valid dataset record"))
        })?;
        let rows = self
            .sources
            .iter()
            .map(|s| s.record_vector(record))
            .collect::<Result<Vec<_>>>()?;
        self.predict_features(rows)
    }

    pub fn predict_smiles(&self, smiles: &str) -> Result<PointPrediction> {
        let rows = self
            .sources
            .iter()
            .map(|s| s.compute(smiles))
            .collect::<Result<Vec<_>>>()?;
        self.predict_features(rows)
    }
}
