//! EM estimation under homoscedastic, heteroscedastic and constrained
//! variance regimes, with random multi-start and degeneracy handling.
//!
//! The constrained M-step projects each raw component variance onto
//! `[target·√c, target/√c]`. Because the regression coefficients of the
//! M-step do not depend on the variances, and the expected complete-data
//! log-likelihood is unimodal in each variance, the projection is the exact
//! constrained maximizer and every EM step is an ascent step.

mod wls;

pub use wls::{wls_solve, WlsSolution};

use rand::Rng as _;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::model::{check_dims, Dataset, LogDensityKernel, MixtureParams, Posteriors};
use crate::rng::{derive_seed, rng_from_seed};
use wls::WlsWorkspace;

/// Variance regime of the M-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceMode {
    /// One variance shared by all components.
    Homoscedastic,
    /// Unrestricted per-component variances.
    Heteroscedastic,
    /// Per-component variances bounded to `[target·√c, target/√c]`.
    Constrained { c: f64, target: f64 },
}

impl VarianceMode {
    pub fn constrained(c: f64, target: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(contract(format!("scale balance c must lie in (0, 1], got {c}")));
        }
        if !(target > 0.0) || !target.is_finite() {
            return Err(contract(format!("target variance must be positive, got {target}")));
        }
        Ok(Self::Constrained { c, target })
    }

    /// `c` for constrained modes.
    pub fn scale_balance(&self) -> Option<f64> {
        match *self {
            Self::Constrained { c, .. } => Some(c),
            _ => None,
        }
    }

    /// Admissible variance interval for constrained modes.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Constrained { c, target } => Some(variance_bounds(c, target)),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Constrained { c, target } => Self::constrained(c, target).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// `(target·√c, target/√c)`.
pub fn variance_bounds(c: f64, target: f64) -> (f64, f64) {
    let s = c.sqrt();
    (target * s, target / s)
}

/// Hathaway's condition: every pairwise variance ratio is at least `c`.
pub fn satisfies_ratio_constraint(variances: &[f64], c: f64, tol: f64) -> bool {
    let min = variances.iter().copied().fold(f64::INFINITY, f64::min);
    let max = variances.iter().copied().fold(0.0, f64::max);
    min / max >= c - tol
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Convergence threshold on the per-observation log-likelihood change.
    pub rel_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Components with responsibility mass below `min_weight · n` are empty.
    pub min_weight: f64,
    /// Absolute variance floor; `None` means `1e-12 ×` the response variance.
    pub degeneracy_floor: Option<f64>,
    /// Reseeded restarts after an empty component before giving up.
    pub max_restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            n_starts: 10,
            seed: DEFAULT_SEED,
            min_weight: 1e-6,
            degeneracy_floor: None,
            max_restarts: 3,
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_190_412;

impl EmConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.n_starts == 0 {
            return Err(contract("max_iter and n_starts must be positive"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(contract("rel_tol must lie in (0, 1)"));
        }
        if !(self.min_weight > 0.0) {
            return Err(contract("min_weight must be positive"));
        }
        if let Some(f) = self.degeneracy_floor {
            if !(f > 0.0) {
                return Err(contract("degeneracy floor must be positive"));
            }
        }
        Ok(())
    }

    /// Variance floor used for `data`.
    pub fn floor_for(&self, data: &Dataset) -> f64 {
        self.degeneracy_floor.unwrap_or_else(|| {
            let v = data.response_variance();
            if v > 0.0 {
                1e-12 * v
            } else {
                1e-12
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    /// Reseeded restarts triggered by empty components.
    pub restarts: usize,
    /// The run ended on an empty component it could not recover from.
    pub empty_component: bool,
    /// A homoscedastic variance was raised to the degeneracy floor.
    pub variance_floored: bool,
    /// Some weighted design was rank deficient during the run.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MixtureParams,
    pub posteriors: Posteriors,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub degenerate: bool,
    pub mode: VarianceMode,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn n_components(&self) -> usize {
        self.params.n_components()
    }

    /// Usable as an estimate: not degenerate and not aborted on an empty component.
    pub fn is_usable(&self) -> bool {
        !self.degenerate && !self.diagnostics.empty_component
    }
}

/// Best-of-starts fit plus every local maximizer that was found.
#[derive(Debug, Clone)]
pub struct MultiStartFit {
    pub best: FitResult,
    pub starts: Vec<FitResult>,
    /// Index of `best` in `starts`.
    pub best_index: usize,
}

impl MultiStartFit {
    pub fn n_degenerate(&self) -> usize {
        self.starts.iter().filter(|f| f.degenerate).count()
    }
}

/// E-step: posterior membership probabilities at `params`.
pub fn e_step(data: &Dataset, params: &MixtureParams) -> Result<Posteriors> {
    check_dims(data, params)?;
    let g = params.n_components();
    let mut z = vec![0.0; data.n() * g];
    let ll = e_step_into(data, params, &mut z);
    if !ll.is_finite() {
        return Err(contract("log-likelihood is not finite at these parameters"));
    }
    Ok(Posteriors::from_parts(z, data.n(), g))
}

/// Fills `z` and returns the log-likelihood at `params`.
fn e_step_into(data: &Dataset, params: &MixtureParams, z: &mut [f64]) -> f64 {
    let g = params.n_components();
    let kernel = LogDensityKernel::new(params);
    let mut ll = 0.0;
    for (i, row) in z.chunks_exact_mut(g).enumerate() {
        ll += kernel.posterior_row(data.y()[i], data.row(i), row);
    }
    ll
}

/// Flags raised by one M-step.
#[derive(Debug, Default, Clone, Copy)]
struct MStepFlags {
    floored: bool,
    rank_deficient: bool,
}

struct MStepWorkspace {
    wls: WlsWorkspace,
    weights: Vec<f64>,
}

impl MStepWorkspace {
    fn new(n: usize, p: usize) -> Self {
        Self { wls: WlsWorkspace::new(n, p), weights: vec![0.0; n] }
    }
}

/// M-step for one variance regime.
pub fn m_step(data: &Dataset, post: &Posteriors, mode: VarianceMode, min_weight: f64) -> Result<MixtureParams> {
    if post.n() != data.n() {
        return Err(contract(format!(
            "posteriors have {} rows for {} observations",
            post.n(),
            data.n()
        )));
    }
    mode.validate()?;
    let mut ws = MStepWorkspace::new(data.n(), data.p());
    m_step_with(data, post.as_flat(), post.n_components(), mode, min_weight, 0.0, &mut ws).map(|(p, _)| p)
}

fn m_step_with(
    data: &Dataset,
    z: &[f64],
    g: usize,
    mode: VarianceMode,
    min_weight: f64,
    floor: f64,
    ws: &mut MStepWorkspace,
) -> Result<(MixtureParams, MStepFlags)> {
    let n = data.n();
    let p = data.p();
    let threshold = min_weight * n as f64;
    let mut flags = MStepFlags::default();

    let mut mass = vec![0.0; g];
    for row in z.chunks_exact(g) {
        for (m, v) in mass.iter_mut().zip(row) {
            *m += v;
        }
    }
    if let Some((component, &m)) = mass.iter().enumerate().find(|(_, &m)| !(m >= threshold)) {
        return Err(Error::EmptyComponent { component, mass: m, threshold });
    }

    let mut coefficients = Vec::with_capacity(g);
    let mut rss = vec![0.0; g];
    for k in 0..g {
        for (w, row) in ws.weights.iter_mut().zip(z.chunks_exact(g)) {
            *w = row[k];
        }
        let mut beta = vec![0.0; p];
        flags.rank_deficient |= ws.wls.solve(data.x(), data.y(), &ws.weights, &mut beta)?;
        rss[k] = ws.wls.rss.unwrap_or_else(|| {
            let mut s = 0.0;
            for i in 0..n {
                let r = data.y()[i] - crate::model::dot(data.row(i), &beta);
                s += ws.weights[i] * r * r;
            }
            s
        });
        coefficients.push(beta);
    }

    let weights: Vec<f64> = mass.iter().map(|m| m / n as f64).collect();
    let variances = match mode {
        VarianceMode::Heteroscedastic => rss.iter().zip(&mass).map(|(s, m)| s / m).collect(),
        VarianceMode::Homoscedastic => {
            let mut common = rss.iter().sum::<f64>() / n as f64;
            if common < floor {
                common = floor;
                flags.floored = true;
            }
            vec![common; g]
        }
        VarianceMode::Constrained { c, target } => {
            let (lo, hi) = variance_bounds(c, target);
            rss.iter().zip(&mass).map(|(s, m)| (s / m).clamp(lo, hi)).collect()
        }
    };
    Ok((MixtureParams::from_parts(weights, coefficients, variances), flags))
}

/// Random initial posteriors: each row drawn from a flat Dirichlet.
///
/// Redraws up to 100 times until every column carries at least
/// `min_weight · n` mass; failing that, component `g` is handed observation `g`
/// outright.
pub fn init_random(n: usize, g: usize, seed: u64, min_weight: f64) -> Result<Posteriors> {
    if g == 0 || n < g {
        return Err(contract(format!("random start needs n >= G >= 1 (n={n}, G={g})")));
    }
    let mut rng = rng_from_seed(seed);
    let threshold = min_weight * n as f64;
    let mut z = vec![0.0; n * g];
    for _ in 0..100 {
        for row in z.chunks_exact_mut(g) {
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = rng.sample::<f64, _>(Exp1);
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let post = Posteriors::from_parts(z.clone(), n, g);
        if post.column_mass().iter().all(|&m| m >= threshold) {
            return Ok(post);
        }
    }
    for k in 0..g {
        let row = &mut z[k * g..(k + 1) * g];
        row.fill(0.0);
        row[k] = 1.0;
    }
    Ok(Posteriors::from_parts(z, n, g))
}

enum RunOutcome {
    Finished(FitResult),
    /// Empty component hit; carries the last valid iterate if any.
    Empty(Option<FitResult>),
}

fn run_em(data: &Dataset, init: &Posteriors, mode: VarianceMode, cfg: &EmConfig, floor: f64) -> Result<RunOutcome> {
    let n = data.n();
    let g = init.n_components();
    let mut ws = MStepWorkspace::new(n, data.p());
    let mut z = init.as_flat().to_vec();
    let mut z_next = vec![0.0; n * g];
    let mut trace: Vec<f64> = Vec::new();
    let mut diag = FitDiagnostics::default();
    let mut current: Option<(MixtureParams, f64)> = None;
    let mut converged = false;
    let mut degenerate = false;
    let tol = cfg.rel_tol * n as f64;

    for _ in 0..cfg.max_iter {
        let (params, flags) = match m_step_with(data, &z, g, mode, cfg.min_weight, floor, &mut ws) {
            Ok(v) => v,
            Err(Error::EmptyComponent { .. }) => {
                return Ok(RunOutcome::Empty(current.map(|(params, ll)| {
                    diag.empty_component = true;
                    FitResult {
                        params,
                        posteriors: Posteriors::from_parts(z, n, g),
                        loglik: ll,
                        n_iter: trace.len(),
                        loglik_trace: trace,
                        converged: false,
                        degenerate: false,
                        mode,
                        diagnostics: diag,
                    }
                })));
            }
            Err(e) => return Err(e),
        };
        diag.variance_floored |= flags.floored;
        diag.rank_deficient |= flags.rank_deficient;

        if matches!(mode, VarianceMode::Heteroscedastic) && params.variances().iter().any(|&v| !(v >= floor)) {
            degenerate = true;
            if current.is_none() {
                // collapse on the very first step: report the floored iterate
                let variances = params.variances().iter().map(|v| v.max(floor)).collect();
                let floored =
                    MixtureParams::from_parts(params.weights().to_vec(), params.coefficients().to_vec(), variances);
                let ll = e_step_into(data, &floored, &mut z_next);
                std::mem::swap(&mut z, &mut z_next);
                trace.push(ll);
                current = Some((floored, ll));
            }
            break;
        }

        let ll = e_step_into(data, &params, &mut z_next);
        if !ll.is_finite() {
            degenerate = true;
            if current.is_none() {
                return Err(contract("log-likelihood not finite at the first iterate"));
            }
            break;
        }
        std::mem::swap(&mut z, &mut z_next);
        let prev = trace.last().copied();
        trace.push(ll);
        current = Some((params, ll));
        if let Some(prev) = prev {
            if (ll - prev).abs() <= tol {
                converged = true;
                break;
            }
        }
    }

    let (params, loglik) = current.expect("at least one iteration ran");
    Ok(RunOutcome::Finished(FitResult {
        params,
        posteriors: Posteriors::from_parts(z, n, g),
        loglik,
        n_iter: trace.len(),
        loglik_trace: trace,
        converged: converged && !degenerate,
        degenerate,
        mode,
        diagnostics: diag,
    }))
}

/// EM from the given initial posteriors.
///
/// An empty component triggers up to `cfg.max_restarts` reseeded restarts;
/// after that the last valid iterate is returned with
/// `diagnostics.empty_component` set and `converged == false`.
pub fn fit_em(data: &Dataset, init: &Posteriors, mode: VarianceMode, cfg: &EmConfig) -> Result<FitResult> {
    cfg.validate()?;
    mode.validate()?;
    if init.n() != data.n() {
        return Err(contract(format!(
            "initial posteriors have {} rows for {} observations",
            init.n(),
            data.n()
        )));
    }
    let floor = cfg.floor_for(data);
    let g = init.n_components();
    let mut start = init.clone();
    let mut last_partial = None;
    for restart in 0..=cfg.max_restarts {
        match run_em(data, &start, mode, cfg, floor)? {
            RunOutcome::Finished(mut fit) => {
                fit.diagnostics.restarts = restart;
                return Ok(fit);
            }
            RunOutcome::Empty(partial) => {
                if partial.is_some() {
                    last_partial = partial;
                }
                if restart < cfg.max_restarts {
                    let seed = derive_seed(cfg.seed, &[0xE3_17, restart as u64]);
                    start = init_random(data.n(), g, seed, cfg.min_weight)?;
                }
            }
        }
    }
    match last_partial {
        Some(mut fit) => {
            fit.diagnostics.restarts = cfg.max_restarts;
            Ok(fit)
        }
        None => Err(Error::NoValidResult(format!(
            "component emptied on every attempt ({} restarts)",
            cfg.max_restarts
        ))),
    }
}

/// Seed of start `s` under `base`.
pub fn start_seed(base: u64, s: usize) -> u64 {
    derive_seed(base, &[0x57A7, s as u64])
}

/// Best of `cfg.n_starts` random starts.
///
/// The winner is the usable start with the highest log-likelihood (ties to the
/// lower start index). If no start is usable, the best non-failed start is
/// returned, carrying its `degenerate` flag. A single component is
/// initialization-free, so G = 1 runs one start.
pub fn multi_start_fit(data: &Dataset, g: usize, mode: VarianceMode, cfg: &EmConfig) -> Result<MultiStartFit> {
    cfg.validate()?;
    mode.validate()?;
    if g == 0 || data.n() < g {
        return Err(contract(format!("need n >= G >= 1 (n={}, G={g})", data.n())));
    }
    let n_starts = if g == 1 { 1 } else { cfg.n_starts };
    let results: Vec<Result<FitResult>> = (0..n_starts)
        .into_par_iter()
        .map(|s| {
            let seed = start_seed(cfg.seed, s);
            let init = init_random(data.n(), g, seed, cfg.min_weight)?;
            let start_cfg = EmConfig { seed, ..cfg.clone() };
            fit_em(data, &init, mode, &start_cfg)
        })
        .collect();

    let mut starts = Vec::with_capacity(n_starts);
    let mut last_err = None;
    for r in results {
        match r {
            Ok(f) => starts.push(f),
            Err(e) => last_err = Some(e),
        }
    }
    if starts.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::NoValidResult("no start produced a fit".into())));
    }
    let pick = |pred: &dyn Fn(&FitResult) -> bool| {
        let mut best: Option<usize> = None;
        for (i, f) in starts.iter().enumerate() {
            if pred(f) && best.is_none_or(|b| f.loglik > starts[b].loglik) {
                best = Some(i);
            }
        }
        best
    };
    let best_index = pick(&|f| f.is_usable())
        .or_else(|| pick(&|f| !f.diagnostics.empty_component))
        .or_else(|| pick(&|_| true))
        .expect("starts is non-empty");
    Ok(MultiStartFit { best: starts[best_index].clone(), starts, best_index })
}
