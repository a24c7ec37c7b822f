//! Experiment analytics: questionnaire scoring, cardiac reactivity,
//! repeated-measures ANOVA and session ordering.

mod anova;
mod latin;
mod scoring;
pub mod special;

use serde::Serialize;
use thiserror::Error;

pub use anova::{rm_anova, AnovaResult, Degeneracy};
pub use latin::{latin_square, latin_square_orders, order_label, position_counts};
pub use scoring::{
    score_panas, score_pxi, PanasResponse, PanasScore, PxiConstruct, PxiItem, PxiResponse, PxiScore,
    PANAS_ITEMS, PXI_ITEMS_PER_CONSTRUCT,
};

/// Significance level used for reporting.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{0}")]
    Item(String),
    #[error("{0}")]
    Shape(String),
    #[error("empty stressor sample set")]
    EmptySamples,
    #[error("invalid baseline {0}")]
    Baseline(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrResult {
    pub baseline_bpm: f64,
    pub stressor_mean_bpm: f64,
    pub reactivity_bpm: f64,
}

/// Mean stressor heart rate minus baseline. Negative values are allowed.
pub fn cardiac_reactivity(baseline: f64, stressor_samples: &[f64]) -> Result<CrResult, AnalysisError> {
    if !crate::adaptation::is_plausible(baseline) {
        return Err(AnalysisError::Baseline(baseline));
    }
    if stressor_samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    let mean = stressor_samples.iter().sum::<f64>() / stressor_samples.len() as f64;
    Ok(CrResult { baseline_bpm: baseline, stressor_mean_bpm: mean, reactivity_bpm: mean - baseline })
}
