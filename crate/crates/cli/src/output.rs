//! JSON documents written by the subcommands. Field order is declaration
//! order, so output is stable.

use clusterwise::em::{FitDiagnostics, FitResult, VarianceMode};
use clusterwise::model::map_partition;
use clusterwise::selection::SelectionResult;
use clusterwise::tuning::TuningResult;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub restarts: usize,
    pub empty_component: bool,
    pub variance_floored: bool,
    pub rank_deficient: bool,
}

impl From<&FitDiagnostics> for Diagnostics {
    fn from(d: &FitDiagnostics) -> Self {
        Self {
            restarts: d.restarts,
            empty_component: d.empty_component,
            variance_floored: d.variance_floored,
            rank_deficient: d.rank_deficient,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub method: String,
    pub g: usize,
    pub n: usize,
    pub response: String,
    pub regressors: Vec<String>,
    pub weights: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    pub loglik: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posteriors: Option<Vec<Vec<f64>>>,
    pub diagnostics: Diagnostics,
}

pub struct Columns<'a> {
    pub response: &'a str,
    pub regressors: Vec<String>,
}

pub fn posterior_rows(fit: &FitResult) -> Vec<Vec<f64>> {
    (0..fit.posteriors.n()).map(|i| fit.posteriors.row(i).to_vec()).collect()
}

impl FitOutput {
    pub fn new(method: &str, fit: &FitResult, cols: &Columns, k: Option<usize>, with_posteriors: bool) -> Self {
        let (c, target) = match fit.mode {
            VarianceMode::Constrained { c, target } => (Some(c), Some(target)),
            _ => (None, None),
        };
        Self {
            method: method.to_owned(),
            g: fit.n_components(),
            n: fit.posteriors.n(),
            response: cols.response.to_owned(),
            regressors: cols.regressors.clone(),
            weights: fit.params.weights().to_vec(),
            coefficients: fit.params.coefficients().to_vec(),
            variances: fit.params.variances().to_vec(),
            loglik: fit.loglik,
            n_iter: fit.n_iter,
            converged: fit.converged,
            degenerate: fit.degenerate,
            c,
            target,
            k,
            labels: map_partition(&fit.posteriors),
            posteriors: with_posteriors.then(|| posterior_rows(fit)),
            diagnostics: (&fit.diagnostics).into(),
        }
    }
}

/// Parameters read back by `fit --params-in`; extra fields are ignored.
#[derive(Debug, Deserialize)]
pub struct ParamsIn {
    pub weights: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct EvalOutput {
    pub n: usize,
    pub loglik: f64,
    pub labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posteriors: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize)]
pub struct CurveEntry {
    pub c: f64,
    pub criterion: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TuneOutput {
    pub method: String,
    pub g: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_partitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_test_size: Option<usize>,
    pub target: f64,
    pub chosen_c: f64,
    pub curve: Vec<CurveEntry>,
    pub fit: FitOutput,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_s: Option<f64>,
}

impl TuneOutput {
    pub fn curve(r: &TuningResult) -> Vec<CurveEntry> {
        r.curve.iter().map(|p| CurveEntry { c: p.c, criterion: p.criterion }).collect()
    }
}

#[derive(Debug, Serialize)]
pub struct Candidate {
    pub g: usize,
    pub loglik: f64,
    pub converged: bool,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Standard parameter count, evaluated at the fitted solution.
    pub bic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bic_modified: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub g: usize,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct SelectOutput {
    pub method: String,
    pub criterion: String,
    pub coef_count: String,
    pub chosen_g: usize,
    pub candidates: Vec<Candidate>,
    pub failed: Vec<Failure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_s: Option<f64>,
}

impl SelectOutput {
    pub fn new(method: &str, criterion: &str, coef_count: &str, r: &SelectionResult) -> Self {
        Self {
            method: method.to_owned(),
            criterion: criterion.to_owned(),
            coef_count: coef_count.to_owned(),
            chosen_g: r.chosen_g,
            candidates: r
                .per_g
                .iter()
                .map(|e| Candidate {
                    g: e.g,
                    loglik: e.fit.loglik,
                    converged: e.fit.converged,
                    degenerate: e.fit.degenerate,
                    c: e.c,
                    bic: e.bic,
                    bic_modified: e.bic_modified,
                })
                .collect(),
            failed: r.failed.iter().map(|(g, reason)| Failure { g: *g, reason: reason.clone() }).collect(),
            time_s: None,
        }
    }
}
