use nalgebra::DMatrix;

use crate::config::{RunConfig, Strategy};
use crate::error::{Error, Result};
use crate::fusion::{
    average_rows, concat_rows, grid_search_alpha, l2_normalize_rows, late_fuse, train_alignment,
    AlignmentHeads,
};
use crate::tabular::{
    fit_gpr, fit_pca, GprModel, GprPrediction, PcaModel, Standardizer, TargetTransform,
};

use super::plan::{select_rows, FoldGuard};

/// Standardize, then project onto principal components; both fitted on training rows.
#[derive(Debug, Clone)]
pub struct Branch {
    pub scaler: Standardizer,
    pub pca: PcaModel,
}

impl Branch {
    pub fn fit(
        x: &DMatrix<f64>,
        train: &[usize],
        guard: &FoldGuard,
        config: &RunConfig,
    ) -> Result<Self> {
        let xt = guard.fit_rows(x, train)?;
        let mut scaler = Standardizer::fit(&xt)?;
        scaler.freeze();
        let mut pca = fit_pca(&scaler.transform(&xt)?, config.pca)?;
        pca.freeze();
        Ok(Branch { scaler, pca })
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.pca.transform(&self.scaler.transform(x)?)
    }
}

#[derive(Debug, Clone)]
enum Fusion {
    Single,
    Concat,
    Average(usize),
    Aligned {
        heads: AlignmentHeads,
        average: bool,
    },
}

#[derive(Debug, Clone)]
enum Predictor {
    Joint {
        fusion: Fusion,
        gpr: GprModel,
    },
    Late {
        seq: GprModel,
        graph: GprModel,
        alpha: Option<f64>,
    },
}

/// A pipeline fitted on one training split.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub strategy: Strategy,
    pub branches: Vec<Branch>,
    predictor: Predictor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineOutput {
    Joint(GprPrediction),
    Late {
        seq: GprPrediction,
        graph: GprPrediction,
        alpha: Option<f64>,
    },
}

/// Weighted blend of two branch predictions; the spread assumes independent branch errors.
pub fn blend_predictions(
    seq: &GprPrediction,
    graph: &GprPrediction,
    alpha: f64,
) -> Result<GprPrediction> {
    let mean = late_fuse(&seq.mean, &graph.mean, alpha)?;
    let std = seq.std.zip_map(&graph.std, |s, g| {
        ((alpha * s).powi(2) + ((1.0 - alpha) * g).powi(2)).sqrt()
    });
    Ok(GprPrediction { mean, std })
}

impl PipelineOutput {
    /// Final prediction; `alpha` overrides the weight chosen at fit time.
    pub fn resolve(&self, alpha: Option<f64>) -> Result<GprPrediction> {
        match self {
            PipelineOutput::Joint(p) => Ok(p.clone()),
            PipelineOutput::Late {
                seq,
                graph,
                alpha: fitted,
            } => {
                let a = alpha.or(*fitted).ok_or_else(|| {
                    Error::InvalidArgument("late fusion weight has not been selected".into())
                })?;
                blend_predictions(seq, graph, a)
            }
        }
    }
}

pub fn target_transforms(config: &RunConfig) -> Vec<TargetTransform> {
    if config.log_k {
        vec![TargetTransform::Log, TargetTransform::Identity]
    } else {
        vec![TargetTransform::Identity, TargetTransform::Identity]
    }
}

/// `z` holds the already-projected training rows, in `train` order.
fn fit_regressor(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    train: &[usize],
    guard: &FoldGuard,
    config: &RunConfig,
) -> Result<GprModel> {
    let yt = guard.fit_rows(y, train)?;
    fit_gpr(z, &yt, &config.gpr, &target_transforms(config))
}

fn fuse(fusion: &Fusion, z: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    match fusion {
        Fusion::Single => Ok(z[0].clone()),
        Fusion::Concat => concat_rows(&z[0], &z[1]),
        Fusion::Average(m) => average_rows(
            &z[0].columns(0, *m).into_owned(),
            &z[1].columns(0, *m).into_owned(),
        ),
        Fusion::Aligned { heads, average } => {
            let a = l2_normalize_rows(&heads.seq.forward(&z[0])?);
            let b = l2_normalize_rows(&heads.graph.forward(&z[1])?);
            if *average {
                average_rows(&a, &b)
            } else {
                concat_rows(&a, &b)
            }
        }
    }
}

/// Fits a strategy on the `train` rows of `features` (one matrix per modality,
/// rows aligned with `y`). Every fit sees only rows accepted by `guard`.
pub fn fit_pipeline(
    config: &RunConfig,
    strategy: Strategy,
    features: &[DMatrix<f64>],
    y: &DMatrix<f64>,
    train: &[usize],
    guard: &FoldGuard,
    seed: u64,
) -> Result<FittedPipeline> {
    let expected = strategy.modalities(config.fusion_modalities).len();
    if features.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "pipeline '{strategy}' takes {expected} feature matrices, got {}",
            features.len()
        )));
    }
    let branches = features
        .iter()
        .map(|x| Branch::fit(x, train, guard, config))
        .collect::<Result<Vec<_>>>()?;
    let z_train = branches
        .iter()
        .zip(features)
        .map(|(b, x)| b.transform(&select_rows(x, train)?))
        .collect::<Result<Vec<_>>>()?;

    let predictor = match strategy {
        Strategy::Late => {
            let seq = fit_regressor(&z_train[0], y, train, guard, config)?;
            let graph = fit_regressor(&z_train[1], y, train, guard, config)?;
            let alpha = match config.late_fusion.alpha {
                Some(a) => Some(a),
                None if config.late_fusion.nested => {
                    Some(inner_alpha(config, features, y, train, guard, seed)?)
                }
                None => None,
            };
            Predictor::Late { seq, graph, alpha }
        }
        _ => {
            let fusion = match strategy {
                Strategy::Morgan | Strategy::Seq | Strategy::Gin => Fusion::Single,
                Strategy::Concat => Fusion::Concat,
                Strategy::Average => Fusion::Average(z_train[0].ncols().min(z_train[1].ncols())),
                Strategy::AlignedConcat | Strategy::AlignedAverage => {
                    guard.check(train)?;
                    let mut heads = AlignmentHeads::new(
                        z_train[0].ncols(),
                        z_train[1].ncols(),
                        config.alignment.d_z,
                        config.alignment.seed.wrapping_add(seed),
                    )?;
                    train_alignment(&mut heads, &z_train[0], &z_train[1], &config.alignment)?;
                    Fusion::Aligned {
                        heads,
                        average: strategy == Strategy::AlignedAverage,
                    }
                }
                Strategy::Late => unreachable!(),
            };
            let fused = fuse(&fusion, &z_train)?;
            let gpr = fit_regressor(&fused, y, train, guard, config)?;
            Predictor::Joint { fusion, gpr }
        }
    };
    Ok(FittedPipeline {
        strategy,
        branches,
        predictor,
    })
}

/// Leave-one-out inside the training split; picks the weight on the pooled inner predictions.
fn inner_alpha(
    config: &RunConfig,
    features: &[DMatrix<f64>],
    y: &DMatrix<f64>,
    train: &[usize],
    guard: &FoldGuard,
    seed: u64,
) -> Result<f64> {
    let mut inner = config.clone();
    inner.late_fusion.nested = false;
    inner.late_fusion.alpha = None;
    let n = train.len();
    let mut seq = DMatrix::zeros(n, y.ncols());
    let mut graph = DMatrix::zeros(n, y.ncols());
    for (k, &held) in train.iter().enumerate() {
        let inner_train: Vec<usize> = train.iter().copied().filter(|&r| r != held).collect();
        let inner_guard = guard.nested(&[held]);
        let fitted = fit_pipeline(
            &inner,
            Strategy::Late,
            features,
            y,
            &inner_train,
            &inner_guard,
            seed,
        )?;
        guard.absorb(&inner_guard);
        match fitted.predict_rows(features, &[held])? {
            PipelineOutput::Late {
                seq: s, graph: g, ..
            } => {
                seq.set_row(k, &s.mean.row(0));
                graph.set_row(k, &g.mean.row(0));
            }
            PipelineOutput::Joint(_) => unreachable!(),
        }
    }
    let truth = select_rows(y, train)?;
    Ok(grid_search_alpha(&seq, &graph, &truth, &config.late_fusion.grid)?.best_alpha)
}

impl FittedPipeline {
    pub fn alpha(&self) -> Option<f64> {
        match &self.predictor {
            Predictor::Late { alpha, .. } => *alpha,
            Predictor::Joint { .. } => None,
        }
    }

    /// Predicts from raw feature matrices (one per modality, same row count).
    pub fn predict(&self, features: &[DMatrix<f64>]) -> Result<PipelineOutput> {
        if features.len() != self.branches.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} feature matrices, got {}",
                self.branches.len(),
                features.len()
            )));
        }
        let z = self
            .branches
            .iter()
            .zip(features)
            .map(|(b, x)| b.transform(x))
            .collect::<Result<Vec<_>>>()?;
        match &self.predictor {
            Predictor::Joint { fusion, gpr } => {
                Ok(PipelineOutput::Joint(gpr.predict(&fuse(fusion, &z)?)?))
            }
            Predictor::Late { seq, graph, alpha } => Ok(PipelineOutput::Late {
                seq: seq.predict(&z[0])?,
                graph: graph.predict(&z[1])?,
                alpha: *alpha,
            }),
        }
    }

    pub fn predict_rows(
        &self,
        features: &[DMatrix<f64>],
        rows: &[usize],
    ) -> Result<PipelineOutput> {
        let selected = features
            .iter()
            .map(|x| select_rows(x, rows))
            .collect::<Result<Vec<_>>>()?;
        self.predict(&selected)
    }
}
