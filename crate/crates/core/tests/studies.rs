//! Seeded repetition studies. Each runs a handful of full tuning or
//! selection passes and checks a directional outcome.

use std::time::{Duration, Instant};

use clusterwise::em::EmConfig;
use clusterwise::model::Dataset;
use clusterwise::rng::rng_from_seed;
use clusterwise::selection::Estimator;
use clusterwise::simulation::{aggregate, run_study, scenario, StudyConfig, StudyMode};
use clusterwise::tuning::{default_k, tune_c_cv, tune_c_kdeleted, CGrid, CvConfig, KChoice};
use rand::Rng;
use rand_distr::StandardNormal;

/// Two regression lines with given standard deviations, random membership.
fn two_groups(n: usize, seed: u64, sd: (f64, f64)) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut y = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let e: f64 = rng.sample(StandardNormal);
        let v = if rng.random_bool(0.5) {
            4.0 + 1.0 * x[0] - 0.5 * x[1] + sd.0 * e
        } else {
            9.0 - 0.5 * x[0] + 1.0 * x[1] + sd.1 * e
        };
        xs.push(x.to_vec());
        y.push(v);
    }
    Dataset::with_intercept(y, &xs).unwrap()
}

struct Tuned {
    conc: f64,
    conk: f64,
    conc_time: Duration,
    conk_time: Duration,
}

fn tune_both(data: &Dataset, g: usize, seed: u64) -> Tuned {
    let cfg = EmConfig::default().with_seed(seed);
    let grid = CGrid::default();
    let cv = CvConfig::for_data(data.n(), g, data.p(), seed);
    let t0 = Instant::now();
    let conc = tune_c_cv(data, g, &grid, &cv, &cfg).unwrap().chosen_c;
    let conc_time = t0.elapsed();
    let k = default_k(data.n(), data.p(), g, KChoice::NOver5);
    let t0 = Instant::now();
    let conk = tune_c_kdeleted(data, g, &grid, k, &cfg).unwrap().chosen_c;
    let conk_time = t0.elapsed();
    Tuned { conc, conk, conc_time, conk_time }
}

#[test]
fn homoscedastic_truth_keeps_c_large_and_tuners_agree() {
    let runs: Vec<Tuned> = (0..10).map(|r| tune_both(&two_groups(200, 500 + r, (1.0, 1.0)), 2, r)).collect();
    let large = runs.iter().filter(|t| t.conc >= 0.3).count();
    assert!(large >= 8, "chosen c >= 0.3 in only {large} of 10: {:?}", runs.iter().map(|t| t.conc).collect::<Vec<_>>());
    // the grid's decades are [0.001, 0.01), [0.01, 0.1) and [0.1, 1]
    let decade = |c: f64| c.log10().floor().min(-1.0);
    let same_decade = runs.iter().filter(|t| decade(t.conc) == decade(t.conk)).count();
    assert!(same_decade >= 7, "same decade in only {same_decade} of 10");
}

#[test]
fn unequal_variances_push_c_down() {
    let runs: Vec<Tuned> = (0..10).map(|r| tune_both(&two_groups(200, 900 + r, (0.4, 2.0)), 2, r)).collect();
    let small = runs.iter().filter(|t| t.conc <= 0.2).count();
    assert!(small >= 8, "chosen c <= 0.2 in only {small} of 10: {:?}", runs.iter().map(|t| t.conc).collect::<Vec<_>>());
}

#[test]
fn kdeleted_tuning_is_faster_than_cross_validation() {
    let d = scenario("g3-20-30-50", 200).unwrap();
    let (mut cv, mut kd) = (Duration::ZERO, Duration::ZERO);
    for r in 0..3 {
        let s = clusterwise::simulation::gen_dataset(&d, r).unwrap();
        let t = tune_both(&s.data, 3, r as u64);
        cv += t.conc_time;
        kd += t.conk_time;
    }
    assert!(kd.as_secs_f64() * 2.0 <= cv.as_secs_f64(), "k-deleted {kd:?} vs cv {cv:?}");
}

#[test]
fn selection_on_two_separated_components() {
    let mut d = scenario("g2-even", 200).unwrap();
    d.seed = 77;
    d.replications = 20;
    let cfg = StudyConfig::new(vec![Estimator::ConC, Estimator::HetN], StudyMode::SelectG);
    let result = run_study(&[d], &cfg).unwrap();
    let aggs = aggregate(&result.records);
    let share = |m: &str| aggs.iter().find(|a| a.method == m).unwrap().correct_g.unwrap();
    let conc_hits = result.records.iter().filter(|r| r.method == "ConC" && r.chosen_g == Some(2)).count();
    assert!(conc_hits >= 18, "ConC chose G = 2 in {conc_hits} of 20");
    assert!(share("HetN") <= 0.7, "HetN correct share {}", share("HetN"));
}

#[test]
fn constrained_fit_beats_homoscedastic_on_cluster_recovery() {
    let mut d = scenario("g3-20-30-50", 200).unwrap();
    d.replications = 20;
    let cfg = StudyConfig::new(vec![Estimator::ConC, Estimator::HomN], StudyMode::FixedG);
    let aggs = aggregate(&run_study(&[d], &cfg).unwrap().records);
    let ari = |m: &str| aggs.iter().find(|a| a.method == m).unwrap().adj_rand.unwrap();
    assert!(ari("ConC") > ari("HomN"), "ConC {} vs HomN {}", ari("ConC"), ari("HomN"));
}

