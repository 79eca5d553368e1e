//! Independent per-target Gaussian processes with an RBF kernel and
//! hyperparameters picked from a log-spaced grid by marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest noise variance ever used.
pub const MIN_NOISE_VARIANCE: f64 = 1e-10;

/// `K_ij = signal_variance * exp(-|a_i - b_j|^2 / (2 lengthscale^2))`.
pub fn rbf_kernel(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lengthscale: f64,
    signal_variance: f64,
) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols(), "kernel inputs differ in width");
    let scale = -0.5 / (lengthscale * lengthscale);
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let d2: f64 = (0..a.ncols())
            .map(|k| (a[(i, k)] - b[(j, k)]).powi(2))
            .sum();
        signal_variance * (d2 * scale).exp()
    })
}

/// Hyperparameter grid: `lengthscale = 2^p * sqrt(m)` for `m` input columns,
/// `noise_variance = 10^q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprGrid {
    pub log2_lengthscale: Vec<f64>,
    pub log10_noise: Vec<f64>,
}

impl Default for GprGrid {
    fn default() -> Self {
        GprGrid {
            log2_lengthscale: (-5..=5).map(f64::from).collect(),
            log10_noise: (-4..=0).map(f64::from).collect(),
        }
    }
}

impl GprGrid {
    pub fn validate(&self) -> Result<()> {
        if self.log2_lengthscale.is_empty() || self.log10_noise.is_empty() {
            return Err(Error::Config(
                "GPR grid must list at least one lengthscale and one noise level".into(),
            ));
        }
        if self
            .log2_lengthscale
            .iter()
            .chain(&self.log10_noise)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config("GPR grid values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    #[default]
    Identity,
    /// Fit on `ln(y)`; predictions report the log-normal median and standard deviation.
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetGp {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Standardized training targets.
    pub y: DVector<f64>,
    /// Lower Cholesky factor of `K + noise_variance I`.
    pub l: DMatrix<f64>,
    /// `(K + noise_variance I)^-1 y`.
    pub alpha: DVector<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub log_marginal_likelihood: f64,
    pub transform: TargetTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GprModel {
    pub x: DMatrix<f64>,
    pub targets: Vec<TargetGp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GprPrediction {
    pub mean: DMatrix<f64>,
    pub std: DMatrix<f64>,
}

struct Standardized {
    y: DVector<f64>,
    mean: f64,
    scale: f64,
}

fn standardize_target(y: &[f64], transform: TargetTransform) -> Result<Standardized> {
    let values: Vec<f64> = match transform {
        TargetTransform::Identity => y.to_vec(),
        TargetTransform::Log => {
            if let Some(bad) = y.iter().find(|v| **v <= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "log target transform needs positive values, got {bad}"
                )));
            }
            y.iter().map(|v| v.ln()).collect()
        }
    };
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    Ok(Standardized {
        y: DVector::from_iterator(values.len(), values.iter().map(|v| (v - mean) / scale)),
        mean,
        scale,
    })
}

fn fit_target(
    x: &DMatrix<f64>,
    target: &Standardized,
    lengthscale: f64,
    noise_variance: f64,
    transform: TargetTransform,
) -> Option<TargetGp> {
    let n = x.nrows();
    let mut k = rbf_kernel(x, x, lengthscale, 1.0);
    for i in 0..n {
        k[(i, i)] += noise_variance;
    }
    let chol = Cholesky::<f64, Dyn>::new(k)?;
    let alpha = chol.solve(&target.y);
    let l = chol.unpack();
    let log_det_half: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * target.y.dot(&alpha)
        - log_det_half
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if !lml.is_finite() {
        return None;
    }
    Some(TargetGp {
        lengthscale,
        signal_variance: 1.0,
        noise_variance,
        y: target.y.clone(),
        l,
        alpha,
        y_mean: target.mean,
        y_scale: target.scale,
        log_marginal_likelihood: lml,
        transform,
    })
}

fn check_inputs(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    transforms: &[TargetTransform],
    min_rows: usize,
) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "{} input rows but {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < min_rows {
        return Err(Error::InvalidArgument(format!(
            "GPR needs at least {min_rows} training rows, got {}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::InvalidArgument(
            "GPR inputs and targets need at least one column".into(),
        ));
    }
    if !transforms.is_empty() && transforms.len() != y.ncols() {
        return Err(Error::Dimension(format!(
            "{} target transforms for {} targets",
            transforms.len(),
            y.ncols()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite GPR training data".into()));
    }
    Ok(())
}

fn transform_for(transforms: &[TargetTransform], t: usize) -> TargetTransform {
    transforms.get(t).copied().unwrap_or_default()
}

/// Grid-searched fit. Ties in log marginal likelihood go to the larger
/// lengthscale, then the larger noise variance.
pub fn fit_gpr(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &GprGrid,
    transforms: &[TargetTransform],
) -> Result<GprModel> {
    check_inputs(x, y, transforms, 3)?;
    grid.validate()?;
    let base = (x.ncols() as f64).sqrt();
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for &p in &grid.log2_lengthscale {
        for &q in &grid.log10_noise {
            candidates.push((2f64.powf(p) * base, 10f64.powf(q).max(MIN_NOISE_VARIANCE)));
        }
    }
    let mut targets = Vec::with_capacity(y.ncols());
    for t in 0..y.ncols() {
        let transform = transform_for(transforms, t);
        let column: Vec<f64> = y.column(t).iter().copied().collect();
        let target = standardize_target(&column, transform)?;
        let mut best: Option<TargetGp> = None;
        for &(ell, noise) in &candidates {
            let Some(fit) = fit_target(x, &target, ell, noise, transform) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    let key =
                        |g: &TargetGp| (g.log_marginal_likelihood, g.lengthscale, g.noise_variance);
                    let (lml, l, s) = key(&fit);
                    let (blml, bl, bs) = key(b);
                    lml > blml || (lml == blml && (l > bl || (l == bl && s > bs)))
                }
            };
            if better {
                best = Some(fit);
            }
        }
        targets.push(best.ok_or_else(|| {
            Error::Numerical(format!(
                "kernel matrix factorization failed at every grid point for target {t}"
            ))
        })?);
    }
    Ok(GprModel {
        x: x.clone(),
        targets,
    })
}

/// Fit with fixed hyperparameters (same for every target).
pub fn fit_gpr_fixed(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lengthscale: f64,
    noise_variance: f64,
    transforms: &[TargetTransform],
) -> Result<GprModel> {
    check_inputs(x, y, transforms, 1)?;
    if !(lengthscale > 0.0 && lengthscale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lengthscale {lengthscale} must be positive"
        )));
    }
    let noise = noise_variance.max(MIN_NOISE_VARIANCE);
    let mut targets = Vec::with_capacity(y.ncols());
    for t in 0..y.ncols() {
        let transform = transform_for(transforms, t);
        let column: Vec<f64> = y.column(t).iter().copied().collect();
        let target = standardize_target(&column, transform)?;
        targets.push(
            fit_target(x, &target, lengthscale, noise, transform).ok_or_else(|| {
                Error::Numerical(format!("kernel matrix factorization failed for target {t}"))
            })?,
        );
    }
    Ok(GprModel {
        x: x.clone(),
        targets,
    })
}

impl TargetGp {
    /// `max |(K + noise I) alpha - y|`, relative to `max |y|`.
    pub fn relative_residual(&self, x: &DMatrix<f64>) -> f64 {
        let mut k = rbf_kernel(x, x, self.lengthscale, self.signal_variance);
        for i in 0..x.nrows() {
            k[(i, i)] += self.noise_variance;
        }
        let r = k * &self.alpha - &self.y;
        let scale = self.y.amax();
        if scale == 0.0 {
            r.amax()
        } else {
            r.amax() / scale
        }
    }

    /// Posterior mean and latent-plus-noise variance in standardized units.
    pub fn predict_standardized(
        &self,
        x_train: &DMatrix<f64>,
        z: &DMatrix<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let k_star = rbf_kernel(x_train, z, self.lengthscale, self.signal_variance);
        let mean = k_star.tr_mul(&self.alpha);
        let v = self
            .l
            .solve_lower_triangular(&k_star)
            .expect("Cholesky factor has a positive diagonal");
        let mut variance = Vec::with_capacity(z.nrows());
        for j in 0..z.nrows() {
            let var = self.signal_variance - v.column(j).norm_squared() + self.noise_variance;
            if var < 0.0 {
                if var < -1e-10 {
                    log::warn!("clamped negative predictive variance {var:e}");
                }
                variance.push(0.0);
            } else {
                variance.push(var);
            }
        }
        (mean.iter().copied().collect(), variance)
    }
}

impl GprModel {
    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn predict(&self, z: &DMatrix<f64>) -> Result<GprPrediction> {
        if z.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "GPR fitted on {} columns, got {}",
                self.input_dim(),
                z.ncols()
            )));
        }
        let n = z.nrows();
        let t = self.targets.len();
        let mut mean = DMatrix::zeros(n, t);
        let mut std = DMatrix::zeros(n, t);
        for (ti, gp) in self.targets.iter().enumerate() {
            let (mu, var) = gp.predict_standardized(&self.x, z);
            for i in 0..n {
                let m = mu[i] * gp.y_scale + gp.y_mean;
                let s = var[i].sqrt() * gp.y_scale;
                match gp.transform {
                    TargetTransform::Identity => {
                        mean[(i, ti)] = m;
                        std[(i, ti)] = s;
                    }
                    TargetTransform::Log => {
                        mean[(i, ti)] = m.exp();
                        std[(i, ti)] = ((s * s).exp_m1() * (2.0 * m + s * s).exp()).sqrt();
                    }
                }
            }
        }
        Ok(GprPrediction { mean, std })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(rbf_kernel(&a, &a, 0.7, 2.5)[(0, 0)], 2.5);
        assert!((rbf_kernel(&a, &b, 1.0, 1.0)[(0, 0)] - 0.60653066).abs() < 1e-8);
        let mut last = f64::INFINITY;
        for d in [0.5, 1.0, 2.0, 4.0, 8.0, 40.0] {
            let c = DMatrix::from_row_slice(1, 2, &[d, 0.0]);
            let k = rbf_kernel(&a, &c, 1.0, 1.0)[(0, 0)];
            assert!(k < last);
            last = k;
        }
        assert!(last < 1e-100);
    }

    #[test]
    fn single_point_interpolates() {
        let x = DMatrix::from_row_slice(1, 1, &[0.3]);
        let y = DMatrix::from_row_slice(1, 1, &[4.2]);
        let m = fit_gpr_fixed(&x, &y, 1.0, 0.0, &[]).unwrap();
        let p = m.predict(&x).unwrap();
        assert!((p.mean[(0, 0)] - 4.2).abs() < 1e-6);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = DMatrix::from_row_slice(3, 1, &[1.0, 3.0, 2.0]);
        let m = fit_gpr_fixed(&x, &y, 0.5, 0.01, &[]).unwrap();
        let (mu, var) =
            m.targets[0].predict_standardized(&m.x, &DMatrix::from_row_slice(1, 1, &[1e3]));
        assert!(mu[0].abs() < 1e-12);
        assert!((var[0] - 1.01).abs() < 1e-12);
        let p = m.predict(&DMatrix::from_row_slice(1, 1, &[1e3])).unwrap();
        assert!((p.mean[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_tie_prefers_smoother_model() {
        // Constant targets standardize to zeros, so the data term vanishes and
        // only the determinant matters; all lengthscales giving K = I tie.
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1000.0, 2000.0]);
        let y = DMatrix::from_element(3, 1, 7.0);
        let grid = GprGrid {
            log2_lengthscale: vec![-3.0, -2.0, -1.0],
            log10_noise: vec![-4.0],
        };
        let m = fit_gpr(&x, &y, &grid, &[]).unwrap();
        assert_eq!(m.targets[0].lengthscale, 0.5);
    }

    #[test]
    fn log_transform_round_trips_training_targets() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = DMatrix::from_row_slice(3, 1, &[2.0, 50.0, 8.0]);
        let m = fit_gpr_fixed(&x, &y, 1.0, 1e-10, &[TargetTransform::Log]).unwrap();
        let p = m.predict(&x).unwrap();
        for i in 0..3 {
            assert!((p.mean[(i, 0)] / y[(i, 0)] - 1.0).abs() < 1e-4);
        }
        assert!(fit_gpr_fixed(&x, &(-y), 1.0, 0.1, &[TargetTransform::Log]).is_err());
    }

    #[test]
    fn input_checks() {
        let x = DMatrix::zeros(2, 1);
        let y = DMatrix::zeros(2, 1);
        assert!(fit_gpr(&x, &y, &GprGrid::default(), &[]).is_err());
        let x3 = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert!(fit_gpr(&x3, &y, &GprGrid::default(), &[]).is_err());
        let m = fit_gpr(
            &x3,
            &DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.5]),
            &GprGrid::default(),
            &[],
        )
        .unwrap();
        assert!(matches!(
            m.predict(&DMatrix::zeros(1, 2)),
            Err(Error::Dimension(_))
        ));
    }
}
