//! Regression stack: standardization, PCA and Gaussian-process regression.

mod gpr;
mod pca;
mod standardize;

pub use gpr::{
    fit_gpr, fit_gpr_fixed, rbf_kernel, GprGrid, GprModel, GprPrediction, TargetGp,
    TargetTransform, MIN_NOISE_VARIANCE,
};
pub use pca::{fit_pca, PcaModel, PcaSelection};
pub use standardize::{Standardizer, STD_FLOOR};
