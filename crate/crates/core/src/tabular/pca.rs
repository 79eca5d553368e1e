use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaSelection {
    /// Smallest count whose cumulative explained-variance ratio reaches the target.
    VarianceTarget(f64),
    Components(usize),
}

impl Default for PcaSelection {
    fn default() -> Self {
        PcaSelection::VarianceTarget(0.95)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `[d x m]`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Sample-covariance eigenvalues of the kept components, non-increasing.
    pub explained_variance: Vec<f64>,
    pub center: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
    frozen: bool,
}

pub fn fit_pca(x: &DMatrix<f64>, selection: PcaSelection) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("PCA input has no columns".into()));
    }
    let center: Vec<f64> = x
        .column_iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - center[j]);
    let denom = (n - 1) as f64;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;

    let svd = SVD::new(centered, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce right singular vectors".into()))?;
    let eigen: Vec<f64> = svd.singular_values.iter().map(|s| s * s / denom).collect();

    let cap = (n - 1).min(d).min(eigen.len());
    let m = match selection {
        PcaSelection::Components(m) => {
            if m == 0 {
                return Err(Error::InvalidArgument(
                    "PCA component count must be positive".into(),
                ));
            }
            m.min(cap)
        }
        PcaSelection::VarianceTarget(target) => {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "PCA variance target {target} outside (0, 1]"
                )));
            }
            if total_variance <= 0.0 {
                0
            } else {
                let mut cumulative = 0.0;
                let mut m = cap;
                for (i, &ev) in eigen.iter().take(cap).enumerate() {
                    cumulative += ev;
                    if cumulative / total_variance >= target - 1e-12 {
                        m = i + 1;
                        break;
                    }
                }
                m
            }
        }
    };
    if m == 0 || total_variance <= f64::MIN_POSITIVE {
        return Err(Error::Numerical(
            "PCA input rows are all equal; no component to keep".into(),
        ));
    }

    let mut components = DMatrix::zeros(d, m);
    for k in 0..m {
        let row = v_t.row(k);
        let pivot = row.iter().enumerate().fold((0, 0.0f64), |best, (j, &v)| {
            if v.abs() > best.1.abs() {
                (j, v)
            } else {
                best
            }
        });
        let sign = if pivot.1 < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(j, k)] = sign * row[j];
        }
    }
    Ok(PcaModel {
        components,
        explained_variance: eigen[..m].to_vec(),
        center,
        total_variance,
        frozen: false,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "PCA fitted on {} columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - self.center[j]);
        Ok(centered * &self.components)
    }

    /// Re-estimates on new rows with the same selection rule; refused once frozen.
    pub fn refit(&mut self, x: &DMatrix<f64>, selection: PcaSelection) -> Result<()> {
        if self.frozen {
            return Err(Error::Leakage("PCA model is frozen for this fold".into()));
        }
        *self = fit_pca(x, selection)?;
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let p = fit_pca(&x, PcaSelection::Components(2)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.components[(0, 0)] - h).abs() < 1e-12);
        assert!((p.components[(1, 0)] - h).abs() < 1e-12);
        assert!(p.explained_variance[1].abs() < 1e-12);
        let auto = fit_pca(&x, PcaSelection::default()).unwrap();
        assert_eq!(auto.n_components(), 1);
    }

    #[test]
    fn equal_rows_rejected() {
        let x = DMatrix::from_element(5, 3, 2.5);
        assert!(fit_pca(&x, PcaSelection::default()).is_err());
        assert!(fit_pca(&x, PcaSelection::Components(2)).is_err());
    }

    #[test]
    fn component_cap() {
        let x = DMatrix::from_fn(3, 5, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 + i as f64 * j as f64
        });
        let p = fit_pca(&x, PcaSelection::Components(5)).unwrap();
        assert_eq!(p.n_components(), 2);
        let q = fit_pca(&x, PcaSelection::VarianceTarget(1.0)).unwrap();
        assert!(q.n_components() <= 2);
    }

    #[test]
    fn frozen_refuses_refit() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        let mut p = fit_pca(&x, PcaSelection::Components(1)).unwrap();
        p.freeze();
        assert!(matches!(
            p.refit(&x, PcaSelection::Components(1)),
            Err(Error::Leakage(_))
        ));
    }
}
