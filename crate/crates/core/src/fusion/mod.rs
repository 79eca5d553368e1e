//! Early fusion (concatenation, averaging, contrastively aligned heads) and
//! weighted late fusion of two modalities.

mod align;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::r_squared;

pub use align::{
    alignment_loss, alignment_loss_and_grad, contrastive_loss, contrastive_loss_and_grad,
    l2_normalize_rows, train_alignment, AlignmentConfig, AlignmentHeads, AlignmentReport,
    ProjectionHead,
};

pub fn fuse_concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

pub fn fuse_average(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "cannot average vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect())
}

/// Row-wise [`fuse_concat`].
pub fn concat_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "{} rows vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let (n, da) = a.shape();
    Ok(DMatrix::from_fn(n, da + b.ncols(), |i, j| {
        if j < da {
            a[(i, j)]
        } else {
            b[(i, j - da)]
        }
    }))
}

/// Row-wise [`fuse_average`].
pub fn average_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "cannot average {:?} and {:?} matrices",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.zip_map(b, |x, y| (x + y) / 2.0))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    Ok(())
}

/// `alpha * y_seq + (1 - alpha) * y_graph`, element-wise.
pub fn late_fuse(y_seq: &DMatrix<f64>, y_graph: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    if y_seq.shape() != y_graph.shape() {
        return Err(Error::Dimension(format!(
            "sequence predictions {:?} vs graph predictions {:?}",
            y_seq.shape(),
            y_graph.shape()
        )));
    }
    Ok(y_seq.zip_map(y_graph, |s, g| alpha * s + (1.0 - alpha) * g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LateFusionConfig {
    pub grid: Vec<f64>,
    /// Pick alpha inside each training fold instead of on pooled predictions.
    pub nested: bool,
    /// Skip the search and use this weight.
    pub alpha: Option<f64>,
}

impl Default for LateFusionConfig {
    fn default() -> Self {
        LateFusionConfig {
            grid: default_alpha_grid(),
            nested: false,
            alpha: None,
        }
    }
}

pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl LateFusionConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            check_alpha(a)?;
        }
        validate_grid(&self.grid)
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    for &a in grid {
        check_alpha(a)?;
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "alpha grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSearch {
    pub best_alpha: f64,
    /// `(alpha, mean R^2 over targets)` for every grid value.
    pub table: Vec<(f64, f64)>,
}

impl AlphaSearch {
    pub fn best_score(&self) -> f64 {
        self.table
            .iter()
            .find(|(a, _)| *a == self.best_alpha)
            .map(|(_, s)| *s)
            .unwrap_or(f64::NAN)
    }
}

/// Scores within this relative distance of the best count as ties.
pub const ALPHA_TIE_TOLERANCE: f64 = 1e-12;

/// Grid value maximizing the mean over targets of R^2; ties go to the smaller alpha.
pub fn grid_search_alpha(
    y_seq: &DMatrix<f64>,
    y_graph: &DMatrix<f64>,
    y_true: &DMatrix<f64>,
    grid: &[f64],
) -> Result<AlphaSearch> {
    validate_grid(grid)?;
    if y_true.shape() != y_seq.shape() {
        return Err(Error::Dimension(format!(
            "targets {:?} vs predictions {:?}",
            y_true.shape(),
            y_seq.shape()
        )));
    }
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &alpha in grid {
        let fused = late_fuse(y_seq, y_graph, alpha)?;
        let mut total = 0.0;
        for t in 0..y_true.ncols() {
            let truth: Vec<f64> = y_true.column(t).iter().copied().collect();
            let pred: Vec<f64> = fused.column(t).iter().copied().collect();
            total += r_squared(&truth, &pred)?;
        }
        let score = total / y_true.ncols() as f64;
        table.push((alpha, score));
        let improves = match best {
            None => true,
            Some((_, b)) => score > b + ALPHA_TIE_TOLERANCE * b.abs().max(1.0),
        };
        if improves {
            best = Some((alpha, score));
        }
    }
    let (best_alpha, _) = best.expect("grid is non-empty");
    Ok(AlphaSearch { best_alpha, table })
}
