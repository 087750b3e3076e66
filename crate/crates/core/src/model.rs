//! Probabilistic model of a finite mixture of Gaussian linear regressions.
//!
//! Every density is evaluated in log space. Mixture densities go through
//! [`log_sum_exp`] so that component log-densities far below the `f64`
//! exponent range (heteroscedastic runs close to collapse) never produce
//! `NaN` or `-inf` before the degeneracy detector sees them.

use std::f64::consts::PI;

use crate::error::{contract, domain, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Response vector plus design matrix.
///
/// The design matrix is stored row-major, `n × p`. When `has_intercept` is set
/// column 0 holds the constant 1 and the remaining `p - 1` columns are
/// regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<f64>,
    p: usize,
    has_intercept: bool,
}

impl Dataset {
    /// Builds a dataset from a response and flat row-major design matrix.
    pub fn from_flat(y: Vec<f64>, x: Vec<f64>, p: usize, has_intercept: bool) -> Result<Self> {
        let n = y.len();
        if n == 0 || p == 0 {
            return Err(contract(format!("dataset needs n >= 1 and p >= 1 (got n={n}, p={p})")));
        }
        if x.len() != n * p {
            return Err(contract(format!(
                "design matrix has {} entries, expected n*p = {}",
                x.len(),
                n * p
            )));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(contract("response contains non-finite values"));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(contract("design matrix contains non-finite values"));
        }
        if has_intercept && x.chunks_exact(p).any(|row| row[0] != 1.0) {
            return Err(contract("intercept flag set but column 0 is not identically 1"));
        }
        Ok(Self { y, x, p, has_intercept })
    }

    /// Builds a dataset from design rows (each row already containing any
    /// intercept column).
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>], has_intercept: bool) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(contract("design rows have unequal lengths"));
        }
        if rows.len() != y.len() {
            return Err(contract(format!(
                "{} design rows for {} responses",
                rows.len(),
                y.len()
            )));
        }
        let x = rows.iter().flatten().copied().collect();
        Self::from_flat(y, x, p, has_intercept)
    }

    /// Builds a dataset from regressor rows, prepending an intercept column.
    pub fn with_intercept(y: Vec<f64>, regressors: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = regressors
            .iter()
            .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
            .collect();
        Self::from_rows(y, &rows, true)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of design columns, intercept included.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of regressors, i.e. design columns excluding the intercept.
    pub fn n_regressors(&self) -> usize {
        if self.has_intercept {
            self.p - 1
        } else {
            self.p
        }
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Flat row-major design matrix.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Unbiased sample variance of the response (0 when n = 1).
    pub fn response_variance(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let mean = self.y.iter().sum::<f64>() / n as f64;
        self.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    /// Dataset restricted to the given observation indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut y = Vec::with_capacity(indices.len());
        let mut x = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            y.push(self.y[i]);
            x.extend_from_slice(self.row(i));
        }
        Self { y, x, p: self.p, has_intercept: self.has_intercept }
    }

    /// Copy with the response multiplied by `factor`.
    pub fn scale_response(&self, factor: f64) -> Self {
        Self {
            y: self.y.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Mixing proportions, per-component regression coefficients and variances.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    weights: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, coefficients: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let g = weights.len();
        if g == 0 {
            return Err(contract("mixture needs at least one component"));
        }
        if coefficients.len() != g || variances.len() != g {
            return Err(contract(format!(
                "component counts disagree: {} weights, {} coefficient rows, {} variances",
                g,
                coefficients.len(),
                variances.len()
            )));
        }
        let p = coefficients[0].len();
        if p == 0 || coefficients.iter().any(|b| b.len() != p) {
            return Err(contract("coefficient rows must share one non-zero length"));
        }
        if coefficients.iter().flatten().any(|b| !b.is_finite()) {
            return Err(contract("non-finite regression coefficient"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(contract("mixing weights must be finite and strictly positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(contract(format!("mixing weights sum to {total}, expected 1")));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(contract("component variances must be finite and strictly positive"));
        }
        Ok(Self { weights, coefficients, variances })
    }

    /// Assembly without validation; used on M-step output whose invariants
    /// hold by construction or are checked by the caller.
    pub(crate) fn from_parts(weights: Vec<f64>, coefficients: Vec<Vec<f64>>, variances: Vec<f64>) -> Self {
        Self { weights, coefficients, variances }
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficients[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Reorders components so that new component `j` is old component `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            weights: order.iter().map(|&g| self.weights[g]).collect(),
            coefficients: order.iter().map(|&g| self.coefficients[g].clone()).collect(),
            variances: order.iter().map(|&g| self.variances[g]).collect(),
        }
    }
}

/// Posterior membership probabilities, `n × G`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    z: Vec<f64>,
    n: usize,
    g: usize,
}

impl Posteriors {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let g = rows.first().map_or(0, Vec::len);
        if g == 0 || rows.iter().any(|r| r.len() != g) {
            return Err(contract("posterior rows must share one non-zero length"));
        }
        let z: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(z, rows.len(), g)
    }

    pub fn from_flat(z: Vec<f64>, n: usize, g: usize) -> Result<Self> {
        if n == 0 || g == 0 || z.len() != n * g {
            return Err(contract(format!("posterior matrix of {} entries is not {n} x {g}", z.len())));
        }
        if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(contract("posterior entries must lie in [0, 1]"));
        }
        if z.chunks_exact(g).any(|row| (row.iter().sum::<f64>() - 1.0).abs() > 1e-12) {
            return Err(contract("posterior rows must sum to 1"));
        }
        Ok(Self { z, n, g })
    }

    pub(crate) fn from_parts(z: Vec<f64>, n: usize, g: usize) -> Self {
        Self { z, n, g }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.g
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.g..(i + 1) * self.g]
    }

    pub fn get(&self, i: usize, g: usize) -> f64 {
        self.z[i * self.g + g]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.z
    }

    /// Responsibility mass of every component.
    pub fn column_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.g];
        for row in self.z.chunks_exact(self.g) {
            for (m, v) in mass.iter_mut().zip(row) {
                *m += v;
            }
        }
        mass
    }

    /// Reorders columns so that new column `j` is old column `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut z = Vec::with_capacity(self.z.len());
        for row in self.z.chunks_exact(self.g) {
            z.extend(order.iter().map(|&g| row[g]));
        }
        Self { z, n: self.n, g: self.g }
    }
}

/// `ln Σ exp(v)` without overflow or spurious underflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Gaussian log-density of `yi` around the linear predictor `xi · beta`.
pub fn component_log_density(yi: f64, xi: &[f64], beta: &[f64], var: f64) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(domain(format!("variance must be positive and finite, got {var}")));
    }
    if xi.len() != beta.len() {
        return Err(contract(format!(
            "regressor vector has length {}, coefficients {}",
            xi.len(),
            beta.len()
        )));
    }
    if !yi.is_finite() || xi.iter().chain(beta).any(|v| !v.is_finite()) {
        return Err(contract("non-finite input to component density"));
    }
    let resid = yi - dot(xi, beta);
    Ok(-0.5 * (2.0 * PI * var).ln() - resid * resid / (2.0 * var))
}

/// Log of the mixture density at one observation.
pub fn mixture_log_density(yi: f64, xi: &[f64], params: &MixtureParams) -> Result<f64> {
    if xi.len() != params.n_coefficients() {
        return Err(contract(format!(
            "observation has {} design entries, parameters expect {}",
            xi.len(),
            params.n_coefficients()
        )));
    }
    let kernel = LogDensityKernel::new(params);
    let mut buf = vec![0.0; params.n_components()];
    Ok(kernel.joint_log_terms(yi, xi, &mut buf))
}

/// Log-likelihood of the whole sample.
pub fn log_likelihood(data: &Dataset, params: &MixtureParams) -> Result<f64> {
    Ok(individual_log_terms(data, params)?.iter().sum())
}

/// Per-observation log mixture densities `ln f(y_i | x_i; ψ)`.
pub fn individual_log_terms(data: &Dataset, params: &MixtureParams) -> Result<Vec<f64>> {
    check_dims(data, params)?;
    let kernel = LogDensityKernel::new(params);
    let mut buf = vec![0.0; params.n_components()];
    Ok((0..data.n())
        .map(|i| kernel.joint_log_terms(data.y()[i], data.row(i), &mut buf))
        .collect())
}

/// MAP partition; ties go to the smallest component index.
pub fn map_partition(post: &Posteriors) -> Vec<usize> {
    (0..post.n())
        .map(|i| {
            let row = post.row(i);
            let mut best = 0;
            for (g, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = g;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn check_dims(data: &Dataset, params: &MixtureParams) -> Result<()> {
    if data.p() != params.n_coefficients() {
        return Err(contract(format!(
            "dataset has {} design columns, parameters have {} coefficients",
            data.p(),
            params.n_coefficients()
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Precomputed per-component constants for repeated density evaluation.
pub(crate) struct LogDensityKernel<'a> {
    params: &'a MixtureParams,
    log_norm: Vec<f64>,
    inv_two_var: Vec<f64>,
}

impl<'a> LogDensityKernel<'a> {
    pub(crate) fn new(params: &'a MixtureParams) -> Self {
        let log_norm = params
            .weights
            .iter()
            .zip(&params.variances)
            .map(|(w, v)| w.ln() - 0.5 * (LN_2PI + v.ln()))
            .collect();
        let inv_two_var = params.variances.iter().map(|v| 0.5 / v).collect();
        Self { params, log_norm, inv_two_var }
    }

    /// Fills `out[g] = ln p_g + ln φ_g(yi | xi)` and returns their log-sum-exp.
    #[inline]
    pub(crate) fn joint_log_terms(&self, yi: f64, xi: &[f64], out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (g, slot) in out.iter_mut().enumerate() {
            let resid = yi - dot(xi, &self.params.coefficients[g]);
            let v = self.log_norm[g] - resid * resid * self.inv_two_var[g];
            *slot = v;
            if v > max {
                max = v;
            }
        }
        if !max.is_finite() {
            return max;
        }
        let mut acc = 0.0;
        for v in out.iter() {
            acc += (v - max).exp();
        }
        max + acc.ln()
    }

    /// Fills `out` with posterior probabilities and returns the log-sum-exp.
    #[inline]
    pub(crate) fn posterior_row(&self, yi: f64, xi: &[f64], out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (g, slot) in out.iter_mut().enumerate() {
            let resid = yi - dot(xi, &self.params.coefficients[g]);
            let v = self.log_norm[g] - resid * resid * self.inv_two_var[g];
            *slot = v;
            if v > max {
                max = v;
            }
        }
        if !max.is_finite() {
            return max;
        }
        let mut acc = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            acc += *v;
        }
        let inv = 1.0 / acc;
        for v in out.iter_mut() {
            *v *= inv;
        }
        max + acc.ln()
    }
}
