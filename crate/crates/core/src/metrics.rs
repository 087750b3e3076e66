//! Cluster-recovery and parameter-accuracy metrics.

use std::collections::BTreeMap;

use crate::error::{contract, Result};
use crate::model::MixtureParams;

/// Largest component count for which label alignment is attempted.
pub const MAX_ALIGN_COMPONENTS: usize = 8;

fn pairs(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

/// Hubert–Arabie adjusted Rand index between two labelings.
///
/// Returns 1 when the chance-corrected denominator vanishes, which only
/// happens when both partitions are all-singletons or both are one block.
pub fn adjusted_rand<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(contract(format!("label vectors differ in length ({} vs {})", a.len(), b.len())));
    }
    let n = a.len() as u64;
    if n < 2 {
        return Err(contract("adjusted Rand index needs at least two observations"));
    }
    let mut table: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<&B, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: u64 = table.values().map(|&m| pairs(m)).sum();
    let sum_a: u64 = rows.values().map(|&m| pairs(m)).sum();
    let sum_b: u64 = cols.values().map(|&m| pairs(m)).sum();
    Ok(ari_from_counts(index, sum_a, sum_b, pairs(n)))
}

/// ARI from pair counts: same-in-both, same-in-a, same-in-b, total pairs.
pub fn ari_from_counts(index: u64, sum_a: u64, sum_b: u64, total: u64) -> f64 {
    let expected = sum_a as f64 * sum_b as f64 / total as f64;
    let max = 0.5 * (sum_a as f64 + sum_b as f64);
    let denom = max - expected;
    if denom == 0.0 {
        return 1.0;
    }
    (index as f64 - expected) / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelAlignment {
    /// `permutation[e]` is the true component matched to estimated component `e`.
    pub permutation: Vec<usize>,
    /// Total squared coefficient error under the permutation.
    pub cost: f64,
}

fn check_pair(truth: &MixtureParams, est: &MixtureParams) -> Result<()> {
    if truth.n_components() != est.n_components() || truth.n_coefficients() != est.n_coefficients() {
        return Err(contract(format!(
            "cannot align {}x{} estimate with {}x{} truth",
            est.n_components(),
            est.n_coefficients(),
            truth.n_components(),
            truth.n_coefficients()
        )));
    }
    if truth.n_components() > MAX_ALIGN_COMPONENTS {
        return Err(contract(format!(
            "label alignment supports at most {MAX_ALIGN_COMPONENTS} components"
        )));
    }
    Ok(())
}

/// Permutation of estimated components minimizing total squared coefficient
/// error, by exhaustive search. Ties keep the lexicographically first
/// permutation.
pub fn align_labels(truth: &MixtureParams, est: &MixtureParams) -> Result<LabelAlignment> {
    check_pair(truth, est)?;
    let g = truth.n_components();
    // cost[e][t]
    let cost: Vec<Vec<f64>> = est
        .coefficients()
        .iter()
        .map(|be| {
            truth
                .coefficients()
                .iter()
                .map(|bt| be.iter().zip(bt).map(|(a, b)| (a - b).powi(2)).sum())
                .collect()
        })
        .collect();
    let mut best = LabelAlignment { permutation: (0..g).collect(), cost: f64::INFINITY };
    let mut perm: Vec<usize> = (0..g).collect();
    loop {
        let c: f64 = perm.iter().enumerate().map(|(e, &t)| cost[e][t]).sum();
        if c < best.cost {
            best = LabelAlignment { permutation: perm.clone(), cost: c };
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best)
}

/// Advances to the next lexicographic permutation; false after the last one.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Mean squared error of coefficients (over all G·P entries) and variances
/// (over G components), after label alignment.
pub fn param_mse(truth: &MixtureParams, est: &MixtureParams) -> Result<(f64, f64)> {
    let align = align_labels(truth, est)?;
    let g = truth.n_components();
    let p = truth.n_coefficients();
    let mut beta = 0.0;
    let mut sigma = 0.0;
    for (e, &t) in align.permutation.iter().enumerate() {
        for (a, b) in est.coefficients()[e].iter().zip(&truth.coefficients()[t]) {
            beta += (a - b).powi(2);
        }
        sigma += (est.variances()[e] - truth.variances()[t]).powi(2);
    }
    Ok((beta / (g * p) as f64, sigma / g as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_ari(a: &[i32], b: &[i32]) -> f64 {
        let n = a.len();
        let (mut both, mut sa, mut sb) = (0u64, 0u64, 0u64);
        for i in 0..n {
            for j in (i + 1)..n {
                let x = a[i] == a[j];
                let y = b[i] == b[j];
                both += (x && y) as u64;
                sa += x as u64;
                sb += y as u64;
            }
        }
        ari_from_counts(both, sa, sb, (n * (n - 1) / 2) as u64)
    }

    #[test]
    fn identical_partitions_score_one() {
        let a = [0, 0, 1, 1, 2, 2, 2];
        assert_eq!(adjusted_rand(&a, &a).unwrap(), 1.0);
        let relabeled = [5, 5, 3, 3, 9, 9, 9];
        assert_eq!(adjusted_rand(&a, &relabeled).unwrap(), 1.0);
    }

    #[test]
    fn single_block_scores_zero() {
        let a = [1, 1, 1, 1, 1, 1];
        let b = [0, 1, 0, 2, 2, 1];
        assert_eq!(adjusted_rand(&a, &b).unwrap(), 0.0);
        assert_eq!(brute_force_ari(&a, &b), 0.0);
    }

    #[test]
    fn crossed_four_point_example() {
        let a = [1, 1, 2, 2];
        let b = [1, 2, 1, 2];
        // pairs: none agree in both; sum_a = 2, sum_b = 2, total 6
        // expected = 4/6, max = 2, ARI = (0 - 2/3) / (2 - 2/3) = -0.5
        let v = adjusted_rand(&a, &b).unwrap();
        assert_eq!(v, brute_force_ari(&a, &b));
        assert!((v + 0.5).abs() < 1e-15);
    }

    #[test]
    fn short_input_rejected() {
        assert!(adjusted_rand(&[1], &[1]).is_err());
        assert!(adjusted_rand(&[1, 2], &[1]).is_err());
    }

    fn params(coefs: Vec<Vec<f64>>, vars: Vec<f64>) -> MixtureParams {
        let g = coefs.len();
        MixtureParams::new(vec![1.0 / g as f64; g], coefs, vars).unwrap()
    }

    #[test]
    fn alignment_examples() {
        let truth = params(vec![vec![4.0, 1.0], vec![9.0, -1.0], vec![16.0, 0.5]], vec![0.5, 1.0, 0.3]);
        let a = align_labels(&truth, &truth).unwrap();
        assert_eq!(a.permutation, vec![0, 1, 2]);
        assert_eq!(a.cost, 0.0);

        let swapped = truth.permuted(&[2, 0, 1]);
        let a = align_labels(&truth, &swapped).unwrap();
        assert_eq!(a.permutation, vec![2, 0, 1]);
        assert_eq!(a.cost, 0.0);

        let shifted = params(
            truth.permuted(&[1, 2, 0]).coefficients().iter().map(|b| b.iter().map(|v| v + 0.1).collect()).collect(),
            vec![1.0, 0.3, 0.5],
        );
        let a = align_labels(&truth, &shifted).unwrap();
        assert_eq!(a.permutation, vec![1, 2, 0]);
        assert!((a.cost - 3.0 * 2.0 * 0.01).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        let truth = params(vec![vec![4.0, 1.0], vec![9.0, -1.0]], vec![0.5, 1.0]);
        assert_eq!(param_mse(&truth, &truth).unwrap(), (0.0, 0.0));
        let off = params(vec![vec![9.2, -0.8], vec![4.2, 1.2]], vec![1.0, 0.5]);
        let (b, s) = param_mse(&truth, &off).unwrap();
        assert!((b - 0.04).abs() < 1e-12);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn too_many_components_rejected() {
        let truth = params((0..9).map(|i| vec![i as f64]).collect(), vec![1.0; 9]);
        assert!(align_labels(&truth, &truth).is_err());
    }

    #[test]
    fn permutations_are_enumerated_in_order() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }
}
