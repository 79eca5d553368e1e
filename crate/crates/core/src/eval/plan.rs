use std::cell::Cell;
use std::ops::AddAssign;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub n: usize,
    pub folds: Vec<Fold>,
}

/// One fold per sample; fold `i` holds out row `i`.
pub fn loocv_plan(n: usize) -> Result<FoldPlan> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "leave-one-out needs at least 3 samples, got {n}"
        )));
    }
    let folds = (0..n)
        .map(|test| Fold {
            train: (0..n).filter(|&i| i != test).collect(),
            test,
        })
        .collect();
    Ok(FoldPlan { n, folds })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GuardStats {
    pub folds: usize,
    pub fit_calls: usize,
    pub rows_fitted: usize,
    pub violations: usize,
}

impl AddAssign for GuardStats {
    fn add_assign(&mut self, o: Self) {
        self.folds += o.folds;
        self.fit_calls += o.fit_calls;
        self.rows_fitted += o.rows_fitted;
        self.violations += o.violations;
    }
}

/// Gatekeeper for every fit inside a fold: rows handed to a fit must not
/// include any held-out row.
#[derive(Debug)]
pub struct FoldGuard {
    fold: usize,
    held_out: Vec<usize>,
    fit_calls: Cell<usize>,
    rows_fitted: Cell<usize>,
    violations: Cell<usize>,
}

impl FoldGuard {
    pub fn new(fold: usize, held_out: Vec<usize>) -> Self {
        FoldGuard {
            fold,
            held_out,
            fit_calls: Cell::new(0),
            rows_fitted: Cell::new(0),
            violations: Cell::new(0),
        }
    }

    pub fn fold(&self) -> usize {
        self.fold
    }

    pub fn held_out(&self) -> &[usize] {
        &self.held_out
    }

    /// Guard for an inner split: holds out everything this guard does plus `extra`.
    pub fn nested(&self, extra: &[usize]) -> FoldGuard {
        let mut held_out = self.held_out.clone();
        held_out.extend_from_slice(extra);
        FoldGuard::new(self.fold, held_out)
    }

    pub fn check(&self, rows: &[usize]) -> Result<()> {
        self.fit_calls.set(self.fit_calls.get() + 1);
        self.rows_fitted.set(self.rows_fitted.get() + rows.len());
        if let Some(&leak) = rows.iter().find(|r| self.held_out.contains(r)) {
            self.violations.set(self.violations.get() + 1);
            return Err(Error::Leakage(format!(
                "fold {}: held-out row {leak} passed to a fit",
                self.fold
            )));
        }
        Ok(())
    }

    /// Checked row selection for fitting.
    pub fn fit_rows(&self, x: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
        self.check(rows)?;
        select_rows(x, rows)
    }

    pub fn stats(&self) -> GuardStats {
        GuardStats {
            folds: 1,
            fit_calls: self.fit_calls.get(),
            rows_fitted: self.rows_fitted.get(),
            violations: self.violations.get(),
        }
    }

    /// Folds counts from a nested guard into this one (fold count unchanged).
    pub fn absorb(&self, inner: &FoldGuard) {
        let s = inner.stats();
        self.fit_calls.set(self.fit_calls.get() + s.fit_calls);
        self.rows_fitted.set(self.rows_fitted.get() + s.rows_fitted);
        self.violations.set(self.violations.get() + s.violations);
    }
}

pub(crate) fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= x.nrows()) {
        return Err(Error::InvalidArgument(format!(
            "row {bad} out of range for {} rows",
            x.nrows()
        )));
    }
    Ok(x.select_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_shape() {
        let p = loocv_plan(4).unwrap();
        assert_eq!(p.folds.len(), 4);
        assert_eq!(p.folds[2].train, vec![0, 1, 3]);
        assert!(loocv_plan(2).is_err());
    }

    #[test]
    fn guard_counts_and_rejects() {
        let x = DMatrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64);
        let g = FoldGuard::new(1, vec![1]);
        let sub = g.fit_rows(&x, &[0, 2]).unwrap();
        assert_eq!(sub[(1, 0)], 4.0);
        assert!(matches!(g.fit_rows(&x, &[0, 1]), Err(Error::Leakage(_))));
        let s = g.stats();
        assert_eq!((s.fit_calls, s.rows_fitted, s.violations), (2, 4, 1));
        let inner = g.nested(&[3]);
        assert!(inner.check(&[3]).is_err());
        assert!(inner.check(&[1]).is_err());
        inner.check(&[0, 2]).unwrap();
    }
}
