//! Data-driven choice of the scale balance `c`.
//!
//! Two tuners share one grid: cross-validated test log-likelihood over `M`
//! random train/test splits, and the k-deleted log-likelihood of the
//! full-data constrained fit, which drops the `k` largest per-observation
//! terms before scoring. The constraint interval is centred on the common
//! variance of a homoscedastic fit with the same number of components.

use rayon::prelude::*;

use crate::em::{multi_start_fit, variance_bounds, EmConfig, FitResult, VarianceMode};
use crate::error::{contract, Error, Result};
use crate::model::{individual_log_terms, log_likelihood, Dataset, MixtureParams};
use crate::rng::{derive_seed, rng_from_seed};

/// Candidate values of `c`, strictly increasing within `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CGrid {
    values: Vec<f64>,
}

impl CGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(contract("c grid is empty"));
        }
        if values.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return Err(contract("every c must lie in (0, 1]"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(contract("c grid must be strictly increasing"));
        }
        Ok(Self { values })
    }

    /// `count` geometrically spaced points from `lo` to 1 inclusive.
    pub fn geometric(lo: f64, count: usize) -> Result<Self> {
        if count < 2 || !(lo > 0.0 && lo < 1.0) {
            return Err(contract("geometric grid needs count >= 2 and 0 < lo < 1"));
        }
        let ratio = (1.0 / lo).ln() / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|j| lo * (ratio * j as f64).exp()).collect();
        values[0] = lo;
        values[count - 1] = 1.0;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for CGrid {
    /// Twenty geometric points on `[0.001, 1]`.
    fn default() -> Self {
        Self::geometric(0.001, 20).expect("static grid is valid")
    }
}

/// Cross-validation layout: `m_partitions` random splits, each holding out
/// `test_size` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub m_partitions: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl CvConfig {
    /// `M = n/5` splits with test sets of `max(n/10, G + P)` observations.
    pub fn for_data(n: usize, g: usize, p: usize, seed: u64) -> Self {
        let m = ((n as f64 / 5.0).round() as usize).max(1);
        let test = ((n as f64 / 10.0).round() as usize).max(g + p).max(1);
        Self { m_partitions: m, test_size: test, seed }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.m_partitions == 0 {
            return Err(contract("at least one CV partition is needed"));
        }
        if self.test_size == 0 || self.test_size >= n {
            return Err(contract(format!(
                "test size must lie in [1, n) (got {} with n = {n})",
                self.test_size
            )));
        }
        Ok(())
    }
}

/// One random train/test split (sorted index lists).
#[derive(Debug, Clone, PartialEq)]
pub struct CvFold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// The splits used by [`cv_criterion`]; fold `m` depends only on `(cv.seed, m)`.
pub fn cv_folds(n: usize, cv: &CvConfig) -> Result<Vec<CvFold>> {
    cv.validate(n)?;
    Ok((0..cv.m_partitions)
        .map(|m| {
            let mut rng = rng_from_seed(derive_seed(cv.seed, &[0xF01D, m as u64]));
            let mut idx: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
            let mut test = idx[..cv.test_size].to_vec();
            let mut train = idx[cv.test_size..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            CvFold { train, test }
        })
        .collect())
}

/// Which tuner produced a [`TuningResult`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuningMethod {
    CrossValidation,
    KDeleted { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub c: f64,
    /// `None` when the criterion could not be evaluated at this `c`.
    pub criterion: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    pub chosen_c: f64,
    pub curve: Vec<CurvePoint>,
    pub fit: FitResult,
    pub method: TuningMethod,
    /// Full-data target variance the final fit is centred on.
    pub target: f64,
}

/// Target variance plus whether it sits on the degeneracy floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetVariance {
    pub value: f64,
    pub floored: bool,
}

/// Common variance of the best homoscedastic fit with `g` components.
pub fn target_variance(data: &Dataset, g: usize, cfg: &EmConfig) -> Result<TargetVariance> {
    if data.n() <= data.p() {
        return Err(contract(format!(
            "target variance needs n > P (n = {}, P = {})",
            data.n(),
            data.p()
        )));
    }
    let fit = multi_start_fit(data, g, VarianceMode::Homoscedastic, cfg)?.best;
    if fit.diagnostics.empty_component {
        return Err(Error::NoValidResult("homoscedastic fit lost a component".into()));
    }
    Ok(TargetVariance {
        value: fit.params.variances()[0],
        floored: fit.diagnostics.variance_floored,
    })
}

/// Per-fold outcome of a cross-validated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub test_loglik: Option<f64>,
    pub params: Option<MixtureParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvEvaluation {
    /// Sum of test log-likelihoods over folds, with failed folds counted at
    /// the mean of the successful ones; `None` if fewer than 80% succeeded.
    pub value: Option<f64>,
    pub folds: Vec<FoldOutcome>,
}

impl CvEvaluation {
    pub fn n_failed(&self) -> usize {
        self.folds.iter().filter(|f| f.test_loglik.is_none()).count()
    }
}

/// A split with its datasets and training-set target variance.
struct PreparedFold {
    train: Dataset,
    test: Dataset,
    target: Option<f64>,
    seed: u64,
}

fn prepare_folds(data: &Dataset, g: usize, cv: &CvConfig, cfg: &EmConfig) -> Result<Vec<PreparedFold>> {
    let folds = cv_folds(data.n(), cv)?;
    Ok(folds
        .into_par_iter()
        .enumerate()
        .map(|(m, fold)| {
            let train = data.subset(&fold.train);
            let test = data.subset(&fold.test);
            let seed = derive_seed(cfg.seed, &[0xF17, m as u64]);
            let target = target_variance(&train, g, &cfg.clone().with_seed(seed))
                .ok()
                .map(|t| t.value);
            PreparedFold { train, test, target, seed }
        })
        .collect())
}

fn evaluate_on_folds(folds: &[PreparedFold], g: usize, c: f64, cfg: &EmConfig) -> CvEvaluation {
    let outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .map(|f| {
            let Some(target) = f.target else {
                return FoldOutcome { test_loglik: None, params: None };
            };
            let fitted = VarianceMode::constrained(c, target)
                .and_then(|mode| multi_start_fit(&f.train, g, mode, &cfg.clone().with_seed(f.seed)));
            match fitted {
                Ok(ms) if ms.best.is_usable() => {
                    let ll = log_likelihood(&f.test, &ms.best.params).ok();
                    FoldOutcome { test_loglik: ll, params: Some(ms.best.params) }
                }
                _ => FoldOutcome { test_loglik: None, params: None },
            }
        })
        .collect();
    let ok = outcomes.iter().filter(|o| o.test_loglik.is_some()).count();
    // failed folds are filled in at the mean of the others, so grid values
    // with different failure counts stay comparable
    let value = (ok * 5 >= outcomes.len() * 4).then(|| {
        let sum: f64 = outcomes.iter().filter_map(|o| o.test_loglik).sum();
        if ok == outcomes.len() {
            sum
        } else {
            sum * outcomes.len() as f64 / ok as f64
        }
    });
    CvEvaluation { value, folds: outcomes }
}

/// Cross-validated log-likelihood of the constrained estimator at `c`.
pub fn cv_criterion(data: &Dataset, g: usize, c: f64, cv: &CvConfig, cfg: &EmConfig) -> Result<CvEvaluation> {
    VarianceMode::constrained(c, 1.0)?;
    cfg.validate()?;
    let folds = prepare_folds(data, g, cv, cfg)?;
    Ok(evaluate_on_folds(&folds, g, c, cfg))
}

/// Grid index maximizing the criterion; ties go to the larger `c`.
fn argmax_curve(curve: &[CurvePoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in curve.iter().enumerate() {
        if let Some(v) = p.criterion {
            if best.is_none_or(|b| v >= curve[b].criterion.expect("best is valid")) {
                best = Some(i);
            }
        }
    }
    best
}

fn refit(data: &Dataset, g: usize, c: f64, target: f64, cfg: &EmConfig) -> Result<FitResult> {
    Ok(multi_start_fit(data, g, VarianceMode::constrained(c, target)?, cfg)?.best)
}

/// Cross-validated tuning: the same splits (and start seeds) are reused for
/// every grid value. The chosen `c` is refitted on the full data.
pub fn tune_c_cv(data: &Dataset, g: usize, grid: &CGrid, cv: &CvConfig, cfg: &EmConfig) -> Result<TuningResult> {
    cfg.validate()?;
    let folds = prepare_folds(data, g, cv, cfg)?;
    let curve: Vec<CurvePoint> = grid
        .values()
        .par_iter()
        .map(|&c| CurvePoint { c, criterion: evaluate_on_folds(&folds, g, c, cfg).value })
        .collect();
    let chosen = argmax_curve(&curve)
        .ok_or_else(|| Error::NoValidResult("cross-validation failed at every grid value".into()))?;
    let chosen_c = curve[chosen].c;
    let target = target_variance(data, g, cfg)?.value;
    let fit = refit(data, g, chosen_c, target, cfg)?;
    Ok(TuningResult { chosen_c, curve, fit, method: TuningMethod::CrossValidation, target })
}

/// Sum of `terms` minus its `k` largest entries.
///
/// The largest terms are subtracted one at a time from the full sum, so
/// `k_deleted_loglik(t, k + 1) == k_deleted_loglik(t, k) - t_(k+1)` holds
/// exactly. Equal terms are ordered by index.
pub fn k_deleted_loglik(terms: &[f64], k: usize) -> Result<f64> {
    if k >= terms.len() {
        return Err(contract(format!("k = {k} must be below n = {}", terms.len())));
    }
    let mut order: Vec<usize> = (0..terms.len()).collect();
    order.sort_by(|&a, &b| terms[b].total_cmp(&terms[a]).then(a.cmp(&b)));
    let mut value: f64 = terms.iter().sum();
    for &i in &order[..k] {
        value -= terms[i];
    }
    Ok(value)
}

/// Index of the root with the largest k-deleted log-likelihood; ties go to
/// the higher full log-likelihood, then to the lower index.
pub fn select_root_kdeleted_index(roots: &[FitResult], data: &Dataset, k: usize) -> Result<usize> {
    if roots.is_empty() {
        return Err(contract("no roots to select from"));
    }
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, root) in roots.iter().enumerate() {
        let terms = individual_log_terms(data, &root.params)?;
        let score = k_deleted_loglik(&terms, k)?;
        let full: f64 = terms.iter().sum();
        let better = match best {
            None => true,
            Some((_, s, f)) => score > s || (score == s && full > f),
        };
        if better {
            best = Some((i, score, full));
        }
    }
    Ok(best.expect("roots is non-empty").0)
}

/// The root with the largest k-deleted log-likelihood.
pub fn select_root_kdeleted<'a>(roots: &'a [FitResult], data: &Dataset, k: usize) -> Result<&'a FitResult> {
    select_root_kdeleted_index(roots, data, k).map(|i| &roots[i])
}

/// k-deleted tuning with the target computed from a homoscedastic fit.
pub fn tune_c_kdeleted(data: &Dataset, g: usize, grid: &CGrid, k: usize, cfg: &EmConfig) -> Result<TuningResult> {
    cfg.validate()?;
    let target = target_variance(data, g, cfg)?.value;
    tune_c_kdeleted_with_target(data, g, grid, k, target, cfg)
}

/// k-deleted tuning around a caller-supplied target variance.
pub fn tune_c_kdeleted_with_target(
    data: &Dataset,
    g: usize,
    grid: &CGrid,
    k: usize,
    target: f64,
    cfg: &EmConfig,
) -> Result<TuningResult> {
    if k >= data.n() {
        return Err(contract(format!("k = {k} must be below n = {}", data.n())));
    }
    let fits: Vec<(CurvePoint, Option<FitResult>)> = grid
        .values()
        .par_iter()
        .map(|&c| {
            let fit = VarianceMode::constrained(c, target)
                .and_then(|mode| multi_start_fit(data, g, mode, cfg))
                .ok()
                .map(|ms| ms.best)
                .filter(FitResult::is_usable);
            let criterion = fit.as_ref().and_then(|f| {
                individual_log_terms(data, &f.params)
                    .and_then(|t| k_deleted_loglik(&t, k))
                    .ok()
            });
            (CurvePoint { c, criterion }, fit)
        })
        .collect();
    let (curve, mut fits): (Vec<CurvePoint>, Vec<Option<FitResult>>) = fits.into_iter().unzip();
    let chosen = argmax_curve(&curve)
        .ok_or_else(|| Error::NoValidResult("constrained fit failed at every grid value".into()))?;
    let fit = fits[chosen].take().expect("valid criterion implies a fit");
    Ok(TuningResult {
        chosen_c: curve[chosen].c,
        curve,
        fit,
        method: TuningMethod::KDeleted { k },
        target,
    })
}

/// Symbolic choices of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KChoice {
    One,
    Two,
    /// Regressors times `G − 1`.
    JGm1,
    NOver10,
    NOver5,
    NOver2,
    NOver1_25,
    NOver1_11,
}

impl KChoice {
    pub const ALL: [KChoice; 8] = [
        KChoice::One,
        KChoice::Two,
        KChoice::JGm1,
        KChoice::NOver10,
        KChoice::NOver5,
        KChoice::NOver2,
        KChoice::NOver1_25,
        KChoice::NOver1_11,
    ];

    /// Short name used on the command line and in study output.
    pub fn token(self) -> &'static str {
        match self {
            KChoice::One => "1",
            KChoice::Two => "2",
            KChoice::JGm1 => "jg",
            KChoice::NOver10 => "n10",
            KChoice::NOver5 => "n5",
            KChoice::NOver2 => "n2",
            KChoice::NOver1_25 => "n125",
            KChoice::NOver1_11 => "n111",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.token() == s)
    }
}

impl Default for KChoice {
    fn default() -> Self {
        KChoice::NOver5
    }
}

/// Resolves a symbolic `k` for `n` observations, `p` design columns (intercept
/// included) and `g` components, clamped to `[0, n − 1]`.
pub fn default_k(n: usize, p: usize, g: usize, choice: KChoice) -> usize {
    let nf = n as f64;
    let raw = match choice {
        KChoice::One => 1.0,
        KChoice::Two => 2.0,
        KChoice::JGm1 => (p.saturating_sub(1) * g.saturating_sub(1)) as f64,
        KChoice::NOver10 => (nf / 10.0).round(),
        KChoice::NOver5 => (nf / 5.0).round(),
        KChoice::NOver2 => (nf / 2.0).round(),
        KChoice::NOver1_25 => (nf / 1.25).round(),
        KChoice::NOver1_11 => (nf / 1.11).round(),
    };
    (raw as usize).min(n.saturating_sub(1))
}

/// Whether every variance of `fit` lies inside the interval implied by `c`
/// and `target`, compared bit-exactly.
pub fn within_bounds(fit: &FitResult) -> bool {
    match fit.mode {
        VarianceMode::Constrained { c, target } => {
            let (lo, hi) = variance_bounds(c, target);
            fit.params.variances().iter().all(|&v| v >= lo && v <= hi)
        }
        _ => false,
    }
}
