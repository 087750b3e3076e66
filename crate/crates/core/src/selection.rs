//! Choosing the number of components with BIC.
//!
//! Unconstrained fits use the standard criterion. Constrained fits report
//! both the standard parameter count evaluated at the constrained solution
//! and a reduced count in which each scale contributes only `1 − c`.

use crate::em::{multi_start_fit, EmConfig, FitResult, VarianceMode};
use crate::error::{contract, Error, Result};
use crate::model::Dataset;
use crate::tuning::{default_k, tune_c_cv, tune_c_kdeleted, CGrid, CvConfig, KChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BicVariant {
    /// `−2 ℓ + η ln n` on an unconstrained fit.
    Standard,
    /// Same penalty, evaluated at a constrained solution.
    ConstrainedStandard,
    /// Scales counted as `(1 − c) · G`.
    ConstrainedModified,
}

/// How the regression coefficients enter the parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefCount {
    /// `G · P` coefficients, one vector per component.
    #[default]
    PerGroup,
    /// A single coefficient vector of length `P`.
    Literal,
}

/// Number of free parameters, `η` or `η*`.
pub fn count_free_params(g: usize, p: usize, variant: BicVariant, c: Option<f64>) -> Result<f64> {
    count_free_params_with(g, p, variant, c, CoefCount::PerGroup)
}

pub fn count_free_params_with(
    g: usize,
    p: usize,
    variant: BicVariant,
    c: Option<f64>,
    coef: CoefCount,
) -> Result<f64> {
    if g == 0 || p == 0 {
        return Err(contract("parameter count needs G >= 1 and P >= 1"));
    }
    let coefs = match coef {
        CoefCount::PerGroup => (g * p) as f64,
        CoefCount::Literal => p as f64,
    };
    let weights = (g - 1) as f64;
    let scales = match (variant, c) {
        (BicVariant::ConstrainedModified, Some(c)) if c > 0.0 && c <= 1.0 => (1.0 - c) * g as f64,
        (BicVariant::ConstrainedModified, _) => {
            return Err(contract("modified BIC needs a scale balance c in (0, 1]"));
        }
        (_, None) => g as f64,
        (_, Some(_)) => return Err(contract("only the modified BIC takes a scale balance")),
    };
    Ok(coefs + scales + weights)
}

/// BIC of a fit under the chosen variant.
pub fn bic(fit: &FitResult, data: &Dataset, variant: BicVariant) -> Result<f64> {
    bic_with(fit, data, variant, CoefCount::PerGroup)
}

pub fn bic_with(fit: &FitResult, data: &Dataset, variant: BicVariant, coef: CoefCount) -> Result<f64> {
    let c = match variant {
        BicVariant::ConstrainedModified => Some(
            fit.mode
                .scale_balance()
                .ok_or_else(|| contract("modified BIC requested for an unconstrained fit"))?,
        ),
        _ => None,
    };
    let eta = count_free_params_with(fit.n_components(), data.p(), variant, c, coef)?;
    Ok(-2.0 * fit.loglik + eta * (data.n() as f64).ln())
}

/// Estimator used at every candidate `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    HomN,
    HetN,
    ConC,
    ConK(KChoice),
}

impl Estimator {
    pub fn is_constrained(&self) -> bool {
        matches!(self, Estimator::ConC | Estimator::ConK(_))
    }

    pub fn label(&self) -> String {
        match self {
            Estimator::HomN => "HomN".into(),
            Estimator::HetN => "HetN".into(),
            Estimator::ConC => "ConC".into(),
            Estimator::ConK(k) => format!("ConK_{}", k.token()),
        }
    }
}

/// Everything an estimator needs besides the data.
#[derive(Debug, Clone)]
pub struct SelectionConfig {
    pub em: EmConfig,
    pub grid: CGrid,
    /// Cross-validation layout; `None` derives it from the data at each `G`.
    pub cv: Option<CvConfig>,
    /// Criterion used for constrained estimators.
    pub variant: BicVariant,
    pub coef_count: CoefCount,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            grid: CGrid::default(),
            cv: None,
            variant: BicVariant::ConstrainedModified,
            coef_count: CoefCount::PerGroup,
        }
    }
}

/// Fit and BIC values at one candidate `G`.
#[derive(Debug, Clone)]
pub struct GEntry {
    pub g: usize,
    pub fit: FitResult,
    /// Standard parameter count, at the (possibly constrained) solution.
    pub bic: f64,
    /// Reduced-scale count; constrained estimators only.
    pub bic_modified: Option<f64>,
    pub c: Option<f64>,
}

impl GEntry {
    pub fn criterion(&self, variant: BicVariant) -> f64 {
        match variant {
            BicVariant::ConstrainedModified => self.bic_modified.unwrap_or(self.bic),
            _ => self.bic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub per_g: Vec<GEntry>,
    pub chosen_g: usize,
    pub variant: BicVariant,
    /// Candidates that could not be fitted, with the reason.
    pub failed: Vec<(usize, String)>,
}

impl SelectionResult {
    /// Minimizer of the given criterion over fitted candidates; ties go to the
    /// smaller `G`.
    pub fn chosen_for(&self, variant: BicVariant) -> usize {
        choose(&self.per_g, variant)
    }

    pub fn entry(&self, g: usize) -> Option<&GEntry> {
        self.per_g.iter().find(|e| e.g == g)
    }
}

fn choose(entries: &[GEntry], variant: BicVariant) -> usize {
    let mut best = &entries[0];
    for e in &entries[1..] {
        if e.criterion(variant) < best.criterion(variant) {
            best = e;
        }
    }
    best.g
}

/// Fits one candidate `G` with the estimator and scores it.
pub fn fit_candidate(data: &Dataset, g: usize, method: Estimator, cfg: &SelectionConfig) -> Result<GEntry> {
    let p = data.p();
    let (fit, c) = match method {
        Estimator::HomN => (multi_start_fit(data, g, VarianceMode::Homoscedastic, &cfg.em)?.best, None),
        Estimator::HetN => (multi_start_fit(data, g, VarianceMode::Heteroscedastic, &cfg.em)?.best, None),
        Estimator::ConC => {
            let cv = cfg.cv.clone().unwrap_or_else(|| CvConfig::for_data(data.n(), g, p, cfg.em.seed));
            let r = tune_c_cv(data, g, &cfg.grid, &cv, &cfg.em)?;
            (r.fit, Some(r.chosen_c))
        }
        Estimator::ConK(choice) => {
            let k = default_k(data.n(), p, g, choice);
            let r = tune_c_kdeleted(data, g, &cfg.grid, k, &cfg.em)?;
            (r.fit, Some(r.chosen_c))
        }
    };
    if fit.diagnostics.empty_component {
        return Err(Error::NoValidResult(format!("G = {g}: component emptied on every restart")));
    }
    let standard = if method.is_constrained() {
        BicVariant::ConstrainedStandard
    } else {
        BicVariant::Standard
    };
    let bic_value = bic_with(&fit, data, standard, cfg.coef_count)?;
    let bic_modified = if method.is_constrained() {
        Some(bic_with(&fit, data, BicVariant::ConstrainedModified, cfg.coef_count)?)
    } else {
        None
    };
    Ok(GEntry { g, fit, bic: bic_value, bic_modified, c })
}

/// Fits every `G` in `g_range` and picks the BIC minimizer.
///
/// Constrained estimators select on `cfg.variant`; unconstrained ones always
/// use the standard criterion. Candidates that fail are reported in
/// `failed`; at least one must succeed.
pub fn select_num_components(
    data: &Dataset,
    g_range: std::ops::RangeInclusive<usize>,
    method: Estimator,
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    if g_range.is_empty() || *g_range.start() == 0 {
        return Err(contract("G range must be non-empty and start at 1 or more"));
    }
    let variant = if method.is_constrained() {
        cfg.variant
    } else {
        BicVariant::Standard
    };
    let mut per_g = Vec::new();
    let mut failed = Vec::new();
    for g in g_range {
        if data.n() <= g * data.p() {
            failed.push((g, format!("too few observations for G = {g}")));
            continue;
        }
        match fit_candidate(data, g, method, cfg) {
            Ok(e) => per_g.push(e),
            Err(e) => failed.push((g, e.to_string())),
        }
    }
    if per_g.is_empty() {
        return Err(Error::NoValidResult("no candidate G could be fitted".into()));
    }
    let chosen_g = choose(&per_g, variant);
    Ok(SelectionResult { per_g, chosen_g, variant, failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{FitDiagnostics, VarianceMode};
    use crate::model::{MixtureParams, Posteriors};

    #[test]
    fn parameter_counts() {
        assert_eq!(count_free_params(1, 4, BicVariant::Standard, None).unwrap(), 5.0);
        assert_eq!(count_free_params(2, 4, BicVariant::ConstrainedModified, Some(1.0)).unwrap(), 9.0);
        assert_eq!(count_free_params(3, 4, BicVariant::Standard, None).unwrap(), 17.0);
        assert_eq!(count_free_params(3, 4, BicVariant::ConstrainedStandard, None).unwrap(), 17.0);
        assert_eq!(
            count_free_params_with(3, 4, BicVariant::Standard, None, CoefCount::Literal).unwrap(),
            9.0
        );
        assert!((count_free_params(2, 4, BicVariant::ConstrainedModified, Some(0.25)).unwrap() - 10.5).abs() < 1e-15);
        assert!(count_free_params(2, 4, BicVariant::ConstrainedModified, None).is_err());
        assert!(count_free_params(2, 4, BicVariant::Standard, Some(0.5)).is_err());
    }

    fn fixed_fit(loglik: f64, g: usize, p: usize, mode: VarianceMode) -> FitResult {
        let params = MixtureParams::new(vec![1.0 / g as f64; g], vec![vec![0.0; p]; g], vec![1.0; g]).unwrap();
        FitResult {
            params,
            posteriors: Posteriors::from_rows(&[vec![1.0 / g as f64; g]]).unwrap(),
            loglik,
            loglik_trace: vec![loglik],
            converged: true,
            n_iter: 1,
            degenerate: false,
            mode,
            diagnostics: FitDiagnostics::default(),
        }
    }

    fn dummy_data(n: usize, p: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| std::iter::once(1.0).chain((1..p).map(|j| (i * j) as f64)).collect())
            .collect();
        Dataset::from_rows(vec![0.0; n], &rows, true).unwrap()
    }

    #[test]
    fn bic_arithmetic() {
        let data = dummy_data(100, 4);
        let fit = fixed_fit(-100.0, 1, 4, VarianceMode::Homoscedastic);
        let v = bic(&fit, &data, BicVariant::Standard).unwrap();
        assert!((v - (200.0 + 5.0 * 100f64.ln())).abs() < 1e-12);
        assert!((v - 223.03).abs() < 0.005);
    }

    #[test]
    fn modified_minus_standard_is_c_g_ln_n() {
        let data = dummy_data(100, 4);
        let fit = fixed_fit(-250.0, 2, 4, VarianceMode::constrained(1.0, 2.0).unwrap());
        let s = bic(&fit, &data, BicVariant::ConstrainedStandard).unwrap();
        let m = bic(&fit, &data, BicVariant::ConstrainedModified).unwrap();
        assert!((s - m - 2.0 * 100f64.ln()).abs() < 1e-9);
        for c in [1e-3, 0.2, 0.9] {
            let fit = fixed_fit(-250.0, 3, 4, VarianceMode::constrained(c, 2.0).unwrap());
            assert!(bic(&fit, &data, BicVariant::ConstrainedModified).unwrap() < bic(&fit, &data, BicVariant::ConstrainedStandard).unwrap());
        }
    }

    #[test]
    fn modified_on_unconstrained_fit_is_error() {
        let data = dummy_data(10, 2);
        let fit = fixed_fit(-10.0, 2, 2, VarianceMode::Heteroscedastic);
        assert!(matches!(bic(&fit, &data, BicVariant::ConstrainedModified), Err(Error::Contract(_))));
    }

    #[test]
    fn bic_increases_with_parameter_count() {
        let data = dummy_data(50, 3);
        let mut last = f64::NEG_INFINITY;
        for g in 1..5 {
            let v = bic(&fixed_fit(-80.0, g, 3, VarianceMode::Heteroscedastic), &data, BicVariant::Standard).unwrap();
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn ties_choose_smaller_g() {
        let data = dummy_data(10, 2);
        let entries: Vec<GEntry> = [(1, 5.0), (2, 3.0), (3, 3.0)]
            .into_iter()
            .map(|(g, b)| GEntry {
                g,
                fit: fixed_fit(-1.0, g, 2, VarianceMode::Homoscedastic),
                bic: b,
                bic_modified: None,
                c: None,
            })
            .collect();
        assert_eq!(choose(&entries, BicVariant::Standard), 2);
        let _ = data;
    }
}
