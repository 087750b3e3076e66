//! Synthetic data generation and the Monte Carlo comparison study.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::Rng as _;
use rand_distr::{Gamma, StandardNormal};
use rayon::prelude::*;

use crate::em::{multi_start_fit, EmConfig, FitResult, VarianceMode};
use crate::error::{contract, Result};
use crate::metrics::{adjusted_rand, param_mse};
use crate::model::{map_partition, Dataset, MixtureParams};
use crate::rng::{derive_seed, rng_from_seed};
use crate::selection::{select_num_components, BicVariant, Estimator, SelectionConfig};
use crate::tuning::{default_k, tune_c_cv, tune_c_kdeleted, CGrid, CvConfig};

/// Number of non-intercept regressors in every design.
pub const N_REGRESSORS: usize = 3;
pub const COEF_HALF_WIDTH: f64 = 1.5;
pub const VARIANCE_SHAPE: f64 = 3.0;
pub const VARIANCE_SCALE: f64 = 1.0;
pub const DEFAULT_REPLICATIONS: usize = 50;
pub const DEFAULT_STUDY_SEED: u64 = 61_014;

#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub name: String,
    pub n: usize,
    pub proportions: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub replications: usize,
    pub n_starts: usize,
    pub seed: u64,
}

impl SimDesign {
    pub fn new(name: impl Into<String>, n: usize, proportions: Vec<f64>, intercepts: Vec<f64>) -> Result<Self> {
        let d = Self {
            name: name.into(),
            n,
            proportions,
            intercepts,
            replications: DEFAULT_REPLICATIONS,
            n_starts: 10,
            seed: DEFAULT_STUDY_SEED,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n_components(&self) -> usize {
        self.proportions.len()
    }

    /// Scenario label including the sample size, e.g. `g2-even-n100`.
    pub fn id(&self) -> String {
        format!("{}-n{}", self.name, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.proportions.len();
        if g == 0 {
            return Err(contract("design needs at least one component"));
        }
        if self.proportions.iter().any(|&w| !(w > 0.0)) || (self.proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(contract("design proportions must be positive and sum to 1"));
        }
        if self.intercepts.len() != g {
            return Err(contract("one intercept per component required"));
        }
        if self.n < 10 * g {
            return Err(contract(format!("design needs n >= {}", 10 * g)));
        }
        if self.n_starts == 0 {
            return Err(contract("design needs at least one start"));
        }
        Ok(())
    }
}

const SCENARIOS: [(&str, &[f64]); 6] = [
    ("g2-even", &[0.5, 0.5]),
    ("g2-20-80", &[0.2, 0.8]),
    ("g3-20-40-40", &[0.2, 0.4, 0.4]),
    ("g3-20-30-50", &[0.2, 0.3, 0.5]),
    ("g4-even", &[0.25, 0.25, 0.25, 0.25]),
    ("g4-10-20-30-40", &[0.1, 0.2, 0.3, 0.4]),
];

pub const SCENARIO_SIZES: [usize; 2] = [100, 200];

fn intercepts_for(g: usize) -> Vec<f64> {
    (0..g).map(|j| ((j + 2) * (j + 2)) as f64).collect()
}

/// Named proportion vector at sample size `n`.
pub fn scenario(name: &str, n: usize) -> Result<SimDesign> {
    let (_, props) = SCENARIOS
        .iter()
        .find(|(s, _)| *s == name)
        .ok_or_else(|| contract(format!("unknown scenario {name:?}")))?;
    SimDesign::new(name, n, props.to_vec(), intercepts_for(props.len()))
}

/// The twelve standard designs: six proportion vectors at two sample sizes.
pub fn scenarios() -> Vec<SimDesign> {
    SCENARIO_SIZES
        .iter()
        .flat_map(|&n| SCENARIOS.iter().map(move |(name, _)| scenario(name, n).expect("built-in scenario")))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimSample {
    pub data: Dataset,
    pub truth: MixtureParams,
    pub labels: Vec<usize>,
}

/// Draws replication `rep` of a design. Deterministic in `(design.seed, rep)`.
pub fn gen_dataset(design: &SimDesign, rep: usize) -> Result<SimSample> {
    design.validate()?;
    let g = design.n_components();
    let p = N_REGRESSORS + 1;
    let mut rng = rng_from_seed(derive_seed(design.seed, &[0x5175, design.n as u64, g as u64, rep as u64]));

    let coef_law = Uniform::new(-COEF_HALF_WIDTH, COEF_HALF_WIDTH).expect("valid bounds");
    let coefficients: Vec<Vec<f64>> = design
        .intercepts
        .iter()
        .map(|&b0| std::iter::once(b0).chain((0..N_REGRESSORS).map(|_| coef_law.sample(&mut rng))).collect())
        .collect();
    let gamma = Gamma::new(VARIANCE_SHAPE, 1.0 / VARIANCE_SCALE).expect("valid gamma");
    let variances: Vec<f64> = (0..g).map(|_| 1.0 / gamma.sample(&mut rng)).collect();
    let classes = WeightedIndex::new(&design.proportions).map_err(|e| contract(e.to_string()))?;

    let mut y = Vec::with_capacity(design.n);
    let mut x = Vec::with_capacity(design.n * p);
    let mut labels = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let z = classes.sample(&mut rng);
        let row: Vec<f64> = std::iter::once(1.0)
            .chain((0..N_REGRESSORS).map(|_| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mean: f64 = row.iter().zip(&coefficients[z]).map(|(a, b)| a * b).sum();
        let noise: f64 = rng.sample(StandardNormal);
        y.push(mean + variances[z].sqrt() * noise);
        x.extend_from_slice(&row);
        labels.push(z);
    }
    let truth = MixtureParams::new(design.proportions.clone(), coefficients, variances)?;
    Ok(SimSample { data: Dataset::from_flat(y, x, p, true)?, truth, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    /// Fit at the true number of components.
    FixedG,
    /// Choose `G` in `1..=G* + 2` by BIC.
    SelectG,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub methods: Vec<Estimator>,
    pub mode: StudyMode,
    pub grid: CGrid,
    /// Template for fitting; seed and start count come from the design.
    pub em: EmConfig,
    pub record_time: bool,
}

impl StudyConfig {
    pub fn new(methods: Vec<Estimator>, mode: StudyMode) -> Self {
        Self { methods, mode, grid: CGrid::default(), em: EmConfig::default(), record_time: false }
    }

    /// Method labels in record order. Constrained methods under `SelectG`
    /// yield a second, starred label scored with the reduced-scale BIC.
    pub fn labels(&self) -> Vec<String> {
        self.methods
            .iter()
            .flat_map(|m| {
                let mut v = vec![m.label()];
                if self.mode == StudyMode::SelectG && m.is_constrained() {
                    v.push(format!("{}*", m.label()));
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub scenario: String,
    pub rep: usize,
    pub method: String,
    pub mse_beta: Option<f64>,
    pub mse_sigma2: Option<f64>,
    pub adj_rand: Option<f64>,
    pub time_s: Option<f64>,
    pub c: Option<f64>,
    pub chosen_g: Option<usize>,
    /// True number of components of the design.
    pub true_g: usize,
    pub error: Option<String>,
}

impl Record {
    fn empty(design: &SimDesign, rep: usize, method: String) -> Self {
        Self {
            scenario: design.id(),
            rep,
            method,
            mse_beta: None,
            mse_sigma2: None,
            adj_rand: None,
            time_s: None,
            c: None,
            chosen_g: None,
            true_g: design.n_components(),
            error: None,
        }
    }

    fn failed(design: &SimDesign, rep: usize, method: String, msg: String) -> Self {
        Self { error: Some(msg), ..Self::empty(design, rep, method) }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StudyResult {
    pub records: Vec<Record>,
}

impl StudyResult {
    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.error.is_some())
    }
}

fn em_for(design: &SimDesign, rep: usize, template: &EmConfig) -> EmConfig {
    EmConfig {
        n_starts: design.n_starts,
        seed: derive_seed(design.seed, &[0xF17F, design.n as u64, design.n_components() as u64, rep as u64]),
        ..template.clone()
    }
}

fn fit_fixed(data: &Dataset, g: usize, method: Estimator, grid: &CGrid, em: &EmConfig) -> Result<(FitResult, Option<f64>)> {
    Ok(match method {
        Estimator::HomN => (multi_start_fit(data, g, VarianceMode::Homoscedastic, em)?.best, None),
        Estimator::HetN => (multi_start_fit(data, g, VarianceMode::Heteroscedastic, em)?.best, None),
        Estimator::ConC => {
            let cv = CvConfig::for_data(data.n(), g, data.p(), em.seed);
            let r = tune_c_cv(data, g, grid, &cv, em)?;
            (r.fit, Some(r.chosen_c))
        }
        Estimator::ConK(choice) => {
            let k = default_k(data.n(), data.p(), g, choice);
            let r = tune_c_kdeleted(data, g, grid, k, em)?;
            (r.fit, Some(r.chosen_c))
        }
    })
}

fn run_fixed(design: &SimDesign, rep: usize, sample: &SimSample, method: Estimator, cfg: &StudyConfig) -> Record {
    let label = method.label();
    let em = em_for(design, rep, &cfg.em);
    let start = Instant::now();
    let outcome = fit_fixed(&sample.data, design.n_components(), method, &cfg.grid, &em);
    let elapsed = start.elapsed().as_secs_f64();
    let scored = outcome.and_then(|(fit, c)| {
        let (mse_beta, mse_sigma2) = param_mse(&sample.truth, &fit.params)?;
        let ari = adjusted_rand(&sample.labels, &map_partition(&fit.posteriors))?;
        Ok((mse_beta, mse_sigma2, ari, c))
    });
    match scored {
        Ok((mse_beta, mse_sigma2, ari, c)) => Record {
            mse_beta: Some(mse_beta),
            mse_sigma2: Some(mse_sigma2),
            adj_rand: Some(ari),
            time_s: cfg.record_time.then_some(elapsed),
            c,
            ..Record::empty(design, rep, label)
        },
        Err(e) => Record::failed(design, rep, label, e.to_string()),
    }
}

fn run_select(design: &SimDesign, rep: usize, sample: &SimSample, method: Estimator, cfg: &StudyConfig) -> Vec<Record> {
    let scfg = SelectionConfig {
        em: em_for(design, rep, &cfg.em),
        grid: cfg.grid.clone(),
        cv: None,
        variant: BicVariant::ConstrainedStandard,
        coef_count: Default::default(),
    };
    let g_max = design.n_components() + 2;
    let start = Instant::now();
    let outcome = select_num_components(&sample.data, 1..=g_max, method, &scfg);
    let elapsed = start.elapsed().as_secs_f64();
    let mut variants = vec![(method.label(), if method.is_constrained() { BicVariant::ConstrainedStandard } else { BicVariant::Standard })];
    if method.is_constrained() {
        variants.push((format!("{}*", method.label()), BicVariant::ConstrainedModified));
    }
    variants
        .into_iter()
        .map(|(label, variant)| {
            let sel = match &outcome {
                Ok(s) => s,
                Err(e) => return Record::failed(design, rep, label, e.to_string()),
            };
            let g = sel.chosen_for(variant);
            let entry = sel.entry(g).expect("chosen G has an entry");
            let (mse_beta, mse_sigma2) = if g == design.n_components() {
                match param_mse(&sample.truth, &entry.fit.params) {
                    Ok((b, s)) => (Some(b), Some(s)),
                    Err(_) => (None, None),
                }
            } else {
                (None, None)
            };
            match adjusted_rand(&sample.labels, &map_partition(&entry.fit.posteriors)) {
                Ok(ari) => Record {
                    mse_beta,
                    mse_sigma2,
                    adj_rand: Some(ari),
                    time_s: cfg.record_time.then_some(elapsed),
                    c: entry.c,
                    chosen_g: Some(g),
                    ..Record::empty(design, rep, label)
                },
                Err(e) => Record::failed(design, rep, label, e.to_string()),
            }
        })
        .collect()
}

fn run_replication(design: &SimDesign, rep: usize, cfg: &StudyConfig) -> Vec<Record> {
    let sample = match gen_dataset(design, rep) {
        Ok(s) => s,
        Err(e) => {
            return cfg
                .labels()
                .into_iter()
                .map(|l| Record::failed(design, rep, l, e.to_string()))
                .collect();
        }
    };
    cfg.methods
        .iter()
        .flat_map(|&m| match cfg.mode {
            StudyMode::FixedG => vec![run_fixed(design, rep, &sample, m, cfg)],
            StudyMode::SelectG => run_select(design, rep, &sample, m, cfg),
        })
        .collect()
}

/// Runs every design and method. Replications run concurrently; records are
/// ordered by design, replication, then method. Failures become records with
/// `error` set.
pub fn run_study(designs: &[SimDesign], cfg: &StudyConfig) -> Result<StudyResult> {
    if designs.is_empty() {
        return Err(contract("study needs at least one design"));
    }
    if cfg.methods.is_empty() {
        return Err(contract("study needs at least one method"));
    }
    for d in designs {
        d.validate()?;
    }
    cfg.em.validate()?;
    let jobs: Vec<(&SimDesign, usize)> =
        designs.iter().flat_map(|d| (0..d.replications).map(move |r| (d, r))).collect();
    let records = jobs
        .par_iter()
        .map(|&(d, r)| run_replication(d, r, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(StudyResult { records })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_replications_csv<W: Write>(records: &[Record], mut w: W) -> io::Result<()> {
    writeln!(w, "scenario,rep,method,mse_beta,mse_sigma2,adj_rand,time_s,c,chosen_g")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.rep,
            r.method,
            opt(r.mse_beta),
            opt(r.mse_sigma2),
            opt(r.adj_rand),
            opt(r.time_s),
            opt(r.c),
            opt(r.chosen_g)
        )?;
    }
    Ok(())
}

/// Means over the successful records of one scenario and method.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub scenario: String,
    pub method: String,
    pub n_records: usize,
    pub n_failed: usize,
    pub mse_beta: Option<f64>,
    pub mse_sigma2: Option<f64>,
    pub adj_rand: Option<f64>,
    pub time_s: Option<f64>,
    pub c: Option<f64>,
    /// Share of records whose chosen `G` equals the true one.
    pub correct_g: Option<f64>,
    pub g_histogram: BTreeMap<usize, usize>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Groups records by scenario and method, in order of first appearance.
pub fn aggregate(records: &[Record]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.scenario.clone(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(scenario, method)| {
            let group: Vec<&Record> =
                records.iter().filter(|r| r.scenario == scenario && r.method == method).collect();
            let ok: Vec<&Record> = group.iter().copied().filter(|r| r.error.is_none()).collect();
            let mut g_histogram = BTreeMap::new();
            for r in &ok {
                if let Some(g) = r.chosen_g {
                    *g_histogram.entry(g).or_insert(0) += 1;
                }
            }
            let with_g = ok.iter().filter(|r| r.chosen_g.is_some()).count();
            let correct = ok.iter().filter(|r| r.chosen_g == Some(r.true_g)).count();
            Aggregate {
                n_records: group.len(),
                n_failed: group.len() - ok.len(),
                mse_beta: mean(ok.iter().map(|r| r.mse_beta)),
                mse_sigma2: mean(ok.iter().map(|r| r.mse_sigma2)),
                adj_rand: mean(ok.iter().map(|r| r.adj_rand)),
                time_s: mean(ok.iter().map(|r| r.time_s)),
                c: mean(ok.iter().map(|r| r.c)),
                correct_g: (with_g > 0).then(|| correct as f64 / with_g as f64),
                g_histogram,
                scenario,
                method,
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(aggs: &[Aggregate], mut w: W) -> io::Result<()> {
    writeln!(w, "scenario,method,n_records,n_failed,mse_beta,mse_sigma2,adj_rand,time_s,c,correct_g")?;
    for a in aggs {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            a.scenario,
            a.method,
            a.n_records,
            a.n_failed,
            opt(a.mse_beta),
            opt(a.mse_sigma2),
            opt(a.adj_rand),
            opt(a.time_s),
            opt(a.c),
            opt(a.correct_g)
        )?;
    }
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Plain-text tables of the aggregates, one block per scenario, followed by
/// histograms of the chosen `G` when present.
pub fn summarize(aggs: &[Aggregate]) -> String {
    let mut out = String::new();
    let mut scenarios: Vec<&str> = Vec::new();
    for a in aggs {
        if !scenarios.contains(&a.scenario.as_str()) {
            scenarios.push(&a.scenario);
        }
    }
    for s in scenarios {
        let rows: Vec<&Aggregate> = aggs.iter().filter(|a| a.scenario == s).collect();
        let _ = writeln!(out, "{s}");
        let _ = writeln!(
            out,
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>6}",
            "method", "mse_beta", "mse_sigma2", "adj_rand", "time_s", "c", "correct_g", "failed"
        );
        for a in &rows {
            let _ = writeln!(
                out,
                "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>6}",
                a.method,
                cell(a.mse_beta),
                cell(a.mse_sigma2),
                cell(a.adj_rand),
                cell(a.time_s),
                cell(a.c),
                cell(a.correct_g),
                a.n_failed
            );
        }
        for a in rows.iter().filter(|a| !a.g_histogram.is_empty()) {
            let bins: Vec<String> = a.g_histogram.iter().map(|(g, k)| format!("G={g}:{k}")).collect();
            let _ = writeln!(out, "  {:<10} {}", a.method, bins.join(" "));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_scenarios() {
        let all = scenarios();
        assert_eq!(all.len(), 12);
        let ids: Vec<String> = all.iter().map(|d| d.id()).collect();
        assert!(ids.contains(&"g3-20-30-50-n200".to_string()));
        assert_eq!(scenario("g4-even", 100).unwrap().intercepts, vec![4.0, 9.0, 16.0, 25.0]);
        assert!(scenario("nope", 100).is_err());
    }

    #[test]
    fn class_shares_follow_proportions() {
        let mut d = scenario("g2-even", 100).unwrap();
        d.n = 100_000;
        let s = gen_dataset(&d, 0).unwrap();
        let share = s.labels.iter().filter(|&&z| z == 0).count() as f64 / d.n as f64;
        assert!((share - 0.5).abs() < 0.01, "share {share}");
    }

    #[test]
    fn intercepts_fixed_in_truth() {
        let d = scenario("g3-20-40-40", 100).unwrap();
        let s = gen_dataset(&d, 3).unwrap();
        let col0: Vec<f64> = s.truth.coefficients().iter().map(|b| b[0]).collect();
        assert_eq!(col0, vec![4.0, 9.0, 16.0]);
        for b in s.truth.coefficients() {
            assert!(b[1..].iter().all(|v| v.abs() < COEF_HALF_WIDTH));
        }
        assert_eq!(s.data.p(), 4);
        assert!(s.data.has_intercept());
    }

    #[test]
    fn inverse_gamma_mean() {
        let d = SimDesign::new("one", 10, vec![1.0], vec![0.0]).unwrap();
        let reps = 100_000;
        let total: f64 = (0..reps).map(|r| gen_dataset(&d, r).unwrap().truth.variances()[0]).sum();
        let m = total / reps as f64;
        assert!((m - VARIANCE_SCALE / (VARIANCE_SHAPE - 1.0)).abs() < 0.02, "mean {m}");
    }

    #[test]
    fn generation_is_reproducible() {
        let d = scenario("g2-20-80", 100).unwrap();
        let a = gen_dataset(&d, 5).unwrap();
        let b = gen_dataset(&d, 5).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.truth, b.truth);
        assert_ne!(gen_dataset(&d, 6).unwrap().data, a.data);
    }

    #[test]
    fn labels_match_generating_component() {
        let mut d = SimDesign::new("far", 200, vec![0.5, 0.5], vec![0.0, 1000.0]).unwrap();
        d.seed = 9;
        let s = gen_dataset(&d, 0).unwrap();
        for (i, &z) in s.labels.iter().enumerate() {
            let resid: Vec<f64> = s
                .truth
                .coefficients()
                .iter()
                .map(|b| (s.data.y()[i] - s.data.row(i).iter().zip(b).map(|(a, c)| a * c).sum::<f64>()).abs())
                .collect();
            assert!(resid[z] < resid[1 - z]);
        }
    }

    fn rec(method: &str, g: Option<usize>, ari: f64) -> Record {
        Record {
            scenario: "s".into(),
            rep: 0,
            method: method.into(),
            mse_beta: Some(ari * 2.0),
            mse_sigma2: None,
            adj_rand: Some(ari),
            time_s: None,
            c: None,
            chosen_g: g,
            true_g: 3,
            error: None,
        }
    }

    #[test]
    fn correct_g_proportion_by_hand() {
        let records = vec![
            rec("A", Some(3), 1.0),
            rec("A", Some(2), 0.5),
            rec("A", Some(3), 0.9),
            rec("A", Some(4), 0.7),
            rec("A", Some(3), 0.8),
        ];
        let aggs = aggregate(&records);
        assert_eq!(aggs.len(), 1);
        assert_eq!(aggs[0].correct_g, Some(3.0 / 5.0));
        assert_eq!(aggs[0].g_histogram, BTreeMap::from([(2, 1), (3, 3), (4, 1)]));
        assert!((aggs[0].adj_rand.unwrap() - 3.9 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn single_record_aggregate_equals_record() {
        let aggs = aggregate(&[rec("B", None, 0.25)]);
        assert_eq!(aggs[0].adj_rand, Some(0.25));
        assert_eq!(aggs[0].mse_beta, Some(0.5));
        assert_eq!(aggs[0].correct_g, None);
        assert_eq!(summarize(&[]), "");
    }

    #[test]
    fn small_study_counts_and_determinism() {
        let mut d = scenario("g2-even", 100).unwrap();
        d.replications = 2;
        d.n_starts = 2;
        let mut cfg = StudyConfig::new(vec![Estimator::HomN], StudyMode::FixedG);
        cfg.grid = CGrid::new(vec![0.5, 1.0]).unwrap();
        let a = run_study(std::slice::from_ref(&d), &cfg).unwrap();
        assert_eq!(a.records.len(), 2);
        let b = run_study(&[d], &cfg).unwrap();
        assert_eq!(a.records, b.records);
        let mut buf = Vec::new();
        write_replications_csv(&a.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scenario,rep,method,mse_beta,mse_sigma2,adj_rand,time_s,c,chosen_g\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
