use serde::Serialize;

use crate::error::{Error, Result};

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "{} true values vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(Error::InvalidArgument("R^2 needs at least 2 values".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Numerical(
            "R^2 undefined: true values have zero variance".into(),
        ));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "{} true values vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("RMSE needs at least 1 value".into()));
    }
    let mse = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / y_true.len() as f64;
    Ok(mse.sqrt())
}

/// Metrics for one run over both targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetMetrics {
    pub r2_k: f64,
    pub r2_e: f64,
    pub rmse_k: f64,
    pub rmse_e: f64,
}

impl TargetMetrics {
    pub fn from_values(r2: [f64; 2], rmse: [f64; 2]) -> Self {
        TargetMetrics {
            r2_k: r2[0],
            r2_e: r2[1],
            rmse_k: rmse[0],
            rmse_e: rmse[1],
        }
    }

    pub fn mean_r2(&self) -> f64 {
        (self.r2_k + self.r2_e) / 2.0
    }

    pub fn mean_rmse(&self) -> f64 {
        (self.rmse_k + self.rmse_e) / 2.0
    }

    /// `(name, value)` pairs in report order.
    pub fn named(&self) -> [(&'static str, &'static str, f64); 6] {
        [
            ("k", "r2", self.r2_k),
            ("k", "rmse", self.rmse_k),
            ("E_MPa", "r2", self.r2_e),
            ("E_MPa", "rmse", self.rmse_e),
            ("mean", "r2", self.mean_r2()),
            ("mean", "rmse", self.mean_rmse()),
        ]
    }
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for a single value).
/// Identical values give exactly that value and 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    match values.first() {
        None => return (f64::NAN, 0.0),
        Some(&v) if values.iter().all(|&x| x == v) => return (v, 0.0),
        _ => {}
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
