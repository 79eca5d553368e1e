use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Lower bound applied to column standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-column z-scoring with population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    frozen: bool,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "standardizer needs at least 2 rows, got {n}"
            )));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            mean.push(m);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(Standardizer {
            mean,
            std,
            frozen: false,
        })
    }

    /// Re-estimates on new rows; refused once frozen.
    pub fn refit(&mut self, x: &DMatrix<f64>) -> Result<()> {
        if self.frozen {
            return Err(Error::Leakage(
                "standardizer is frozen for this fold".into(),
            ));
        }
        *self = Standardizer::fit(x)?;
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "standardizer fitted on {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.mean[j]) / self.std[j]
        }))
    }
}
