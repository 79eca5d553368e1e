//! Leave-one-out evaluation, metrics and reports.

mod experiment;
mod features;
mod metrics;
mod pipeline;
mod plan;
mod report;
mod svg;

pub use experiment::{
    constant_mean_baseline, load_sources, prepare_dataset, run_experiment, summarize, targets,
    train_final_model, AlphaChoice, ExperimentOptions, ExperimentResult, PointPrediction,
    PooledPredictions, PreparedData, SeedRun, SummaryRow, TrainedModel, TARGET_NAMES,
};
pub use features::FeatureSource;
pub use metrics::{mean_std, r_squared, rmse, TargetMetrics};
pub use pipeline::{
    blend_predictions, fit_pipeline, target_transforms, Branch, FittedPipeline, PipelineOutput,
};
pub use plan::{loocv_plan, Fold, FoldGuard, FoldPlan, GuardStats};
pub use report::{
    comparison_markdown, metrics_csv, predictions_csv, read_report_inputs, render_report,
    write_run_outputs, PredictionRow, ReportData, BASELINE_CONFIG, K_THRESHOLD, METRICS_HEADER,
    PREDICTIONS_HEADER, REFERENCE_FUSION, REFERENCE_SINGLE,
};
