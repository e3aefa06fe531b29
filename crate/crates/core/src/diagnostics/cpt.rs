//! Classification permutation tests of within-pair dose randomization.
//!
//! A logistic classifier without intercept learns to tell the far member
//! from the near member using within-pair covariate differences. Every
//! pair contributes the row `x_far - x_near` labelled 1 and its negation
//! labelled 0, so both rows are classified correctly or both wrongly.
//!
//! Random draws are keyed by the pair's unit ids rather than its position,
//! which makes every p-value invariant to reordering the pairs.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::gamma_from_gamma_cap;
use crate::logistic::fit_logistic;
use crate::model::MatchedDesign;
use crate::seed::mix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptResult {
    /// Observed classification accuracy (held-out, averaged over splits, for
    /// the biased test).
    pub accuracy: f64,
    /// Null accuracies; for the biased test, `n_perm` draws per split in
    /// split order.
    pub null: Vec<f64>,
    pub p_value: f64,
    /// Odds bound under which the null was generated; 1 for the plain test.
    pub gamma_cap: f64,
    pub n_perm: usize,
    pub n_splits: usize,
    /// The logistic fit on the observed labels separated the classes.
    pub separated: bool,
    /// Per-split p-values before aggregation (empty for the plain test).
    #[serde(default)]
    pub split_p_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaCapResult {
    /// Smallest odds bound (to a relative 1e-4) at which the biased test
    /// no longer rejects.
    #[serde(rename = "Gamma")]
    pub gamma_cap: f64,
    /// Dose-scaled sensitivity parameter whose largest pair odds equal
    /// `gamma_cap`.
    pub gamma: f64,
    pub p_value: f64,
}

/// FNV-1a over both ids, separated by a zero byte.
fn pair_key(near: &str, far: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in near.bytes().chain(core::iter::once(0)).chain(far.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn unit_uniform(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct PairData {
    diffs: Vec<Vec<f64>>,
    keys: Vec<u64>,
}

impl PairData {
    fn new(design: &MatchedDesign, min_pairs: usize) -> Result<Self> {
        if design.n_pairs() < min_pairs {
            return Err(Error::InsufficientData(alloc::format!(
                "need at least {min_pairs} pairs"
            )));
        }
        let p = design.pairs[0].near.x.len();
        if p == 0 {
            return Err(Error::InvalidArgument("no covariates to classify on".into()));
        }
        let diffs = design
            .pairs
            .iter()
            .map(|q| q.far.x.iter().zip(&q.near.x).map(|(a, b)| a - b).collect())
            .collect();
        let keys = design.pairs.iter().map(|q| pair_key(&q.near.id, &q.far.id)).collect();
        Ok(PairData { diffs, keys })
    }
}

/// Fits the symmetrized classifier on `rows` with per-row orientation
/// `signs`; returns the coefficients and whether the fit separated.
fn train(rows: &[&[f64]], signs: &[f64]) -> (Vec<f64>, bool) {
    let n = rows.len();
    let p = rows[0].len();
    let mut x = DMatrix::<f64>::zeros(2 * n, p);
    let mut y = alloc::vec![0.0; 2 * n];
    for (i, (row, &s)) in rows.iter().zip(signs).enumerate() {
        for k in 0..p {
            x[(i, k)] = s * row[k];
            x[(n + i, k)] = -s * row[k];
        }
        y[i] = 1.0;
    }
    let fit = fit_logistic(&x, &y);
    (fit.coef.iter().copied().collect(), fit.separated)
}

fn score(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Accuracy in half-points: 2 per correct pair, 1 per pair on the boundary.
fn half_points(s: f64) -> u64 {
    if s > 0.0 {
        2
    } else if s == 0.0 {
        1
    } else {
        0
    }
}

fn in_sample_points(rows: &[&[f64]], signs: &[f64]) -> (u64, bool) {
    let (beta, separated) = train(rows, signs);
    let pts = rows
        .iter()
        .zip(signs)
        .map(|(r, &s)| half_points(s * score(r, &beta)))
        .sum();
    (pts, separated)
}

fn check_n_perm(n_perm: usize) -> Result<()> {
    if n_perm < 99 {
        return Err(Error::InvalidArgument(alloc::format!(
            "n_perm must be at least 99, got {n_perm}"
        )));
    }
    Ok(())
}

/// Plain CPT: in-sample accuracy against label flips with probability 1/2.
///
/// `p = (1 + #{null >= observed}) / (1 + n_perm)`. Separation on the observed
/// labels is reported in [`CptResult::separated`] rather than as an error,
/// since perfect classification is exactly the evidence the test looks for.
pub fn cpt(design: &MatchedDesign, n_perm: usize, seed: u64) -> Result<CptResult> {
    check_n_perm(n_perm)?;
    let data = PairData::new(design, 2)?;
    let rows: Vec<&[f64]> = data.diffs.iter().map(Vec::as_slice).collect();
    let i = rows.len();
    let (obs, separated) = in_sample_points(&rows, &alloc::vec![1.0; i]);
    let denom = (2 * i) as f64;
    let mut null = Vec::with_capacity(n_perm);
    let mut exceed = 0usize;
    let mut signs = alloc::vec![0.0; i];
    for r in 0..n_perm {
        for (s, &k) in signs.iter_mut().zip(&data.keys) {
            *s = if mix(&[seed, r as u64, k]) & 1 == 1 { -1.0 } else { 1.0 };
        }
        let (pts, _) = in_sample_points(&rows, &signs);
        exceed += (pts >= obs) as usize;
        null.push(pts as f64 / denom);
    }
    Ok(CptResult {
        accuracy: obs as f64 / denom,
        null,
        p_value: (1 + exceed) as f64 / (1 + n_perm) as f64,
        gamma_cap: 1.0,
        n_perm,
        n_splits: 1,
        separated,
        split_p_values: Vec::new(),
    })
}

/// Sample-splitting CPT under the biased null with odds bound `gamma_cap`.
///
/// For each split, half the pairs train the classifier and the other half
/// are scored. Under the null each held-out pair agrees with the
/// classifier's prediction with probability `gamma_cap / (1 + gamma_cap)`,
/// the allocation least favourable to rejection. With several splits the
/// reported p-value is twice the mean split p-value, capped at 1.
pub fn biased_cpt(
    design: &MatchedDesign,
    gamma_cap: f64,
    n_perm: usize,
    n_splits: usize,
    seed: u64,
) -> Result<CptResult> {
    check_n_perm(n_perm)?;
    if !(gamma_cap >= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "odds bound must be at least 1, got {gamma_cap}"
        )));
    }
    if n_splits == 0 {
        return Err(Error::InvalidArgument("n_splits must be positive".into()));
    }
    let data = PairData::new(design, 4)?;
    let agree = if gamma_cap.is_infinite() {
        1.0
    } else {
        gamma_cap / (1.0 + gamma_cap)
    };
    let i = data.diffs.len();
    let mut null = Vec::with_capacity(n_perm * n_splits);
    let mut split_p = Vec::with_capacity(n_splits);
    let mut acc_sum = 0.0;
    let mut separated = false;
    for s in 0..n_splits {
        let mut order: Vec<usize> = (0..i).collect();
        order.sort_by_key(|&j| (mix(&[seed, 0x5eed, s as u64, data.keys[j]]), j));
        let (train_idx, test_idx) = order.split_at(i / 2);
        let rows: Vec<&[f64]> = train_idx.iter().map(|&j| data.diffs[j].as_slice()).collect();
        let (beta, sep) = train(&rows, &alloc::vec![1.0; rows.len()]);
        separated |= sep;
        let scores: Vec<f64> = test_idx.iter().map(|&j| score(&data.diffs[j], &beta)).collect();
        let obs: u64 = scores.iter().map(|&sc| half_points(sc)).sum();
        let denom = (2 * test_idx.len()) as f64;
        acc_sum += obs as f64 / denom;
        let mut exceed = 0usize;
        for r in 0..n_perm {
            let pts: u64 = test_idx
                .iter()
                .zip(&scores)
                .map(|(&j, &sc)| {
                    if sc == 0.0 {
                        1
                    } else {
                        let u = unit_uniform(mix(&[seed, s as u64, r as u64, data.keys[j]]));
                        if u < agree {
                            2
                        } else {
                            0
                        }
                    }
                })
                .sum();
            exceed += (pts >= obs) as usize;
            null.push(pts as f64 / denom);
        }
        split_p.push((1 + exceed) as f64 / (1 + n_perm) as f64);
    }
    let mean_p = split_p.iter().sum::<f64>() / n_splits as f64;
    let p_value = if n_splits == 1 { mean_p } else { (2.0 * mean_p).min(1.0) };
    Ok(CptResult {
        accuracy: acc_sum / n_splits as f64,
        null,
        p_value,
        gamma_cap,
        n_perm,
        n_splits,
        separated,
        split_p_values: split_p,
    })
}

/// Smallest odds bound at which [`biased_cpt`] stops rejecting at `alpha`,
/// found by doubling then bisection. The p-value is monotone in the bound
/// for a fixed seed, so the search is well defined.
pub fn gamma_cap_search(
    design: &MatchedDesign,
    alpha: f64,
    n_perm: usize,
    n_splits: usize,
    seed: u64,
) -> Result<GammaCapResult> {
    crate::inference::check_alpha(alpha)?;
    let p_at = |g: f64| biased_cpt(design, g, n_perm, n_splits, seed).map(|r| r.p_value);
    let done = |g: f64, p: f64| -> Result<GammaCapResult> {
        Ok(GammaCapResult {
            gamma_cap: g,
            gamma: gamma_from_gamma_cap(g, design)?,
            p_value: p,
        })
    };
    let p1 = p_at(1.0)?;
    if p1 > alpha {
        return done(1.0, p1);
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    let mut p_hi = p_at(hi)?;
    while p_hi <= alpha {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidArgument(
                "test rejects at every odds bound up to 1e12".into(),
            ));
        }
        p_hi = p_at(hi)?;
    }
    while hi / lo - 1.0 > 1e-4 {
        let mid = libm::sqrt(lo * hi);
        let p = p_at(mid)?;
        if p > alpha {
            hi = mid;
            p_hi = p;
        } else {
            lo = mid;
        }
    }
    done(hi, p_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatchedPair, Unit};
    use alloc::format;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Pairs with `p` standard normal covariates; the first covariate of the
    /// far member is raised with probability `q` (0.5 means randomized).
    fn design(seed: u64, n_pairs: usize, p: usize, q: f64) -> MatchedDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = (0..n_pairs)
            .map(|k| {
                let mut a: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                let mut b: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                // Far member is the one with the larger first covariate w.p. q.
                if (a[0] > b[0]) != (rng.random::<f64>() < q) {
                    core::mem::swap(&mut a, &mut b);
                }
                MatchedPair::new(
                    Unit::new(format!("n{k}"), b, 1.0, false, 0.0).unwrap(),
                    Unit::new(format!("f{k}"), a, 2.0, false, 0.0).unwrap(),
                )
                .unwrap()
            })
            .collect();
        MatchedDesign::from_pairs(pairs)
    }

    #[test]
    fn dose_as_covariate_gives_smallest_p() {
        let pairs = (0..40)
            .map(|k| {
                let lo = k as f64;
                MatchedPair::new(
                    Unit::new(format!("a{k}"), vec![lo, 0.3 * lo], lo, false, 0.0).unwrap(),
                    Unit::new(format!("b{k}"), vec![lo + 5.0, 0.1], lo + 5.0, false, 0.0).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let r = cpt(&MatchedDesign::from_pairs(pairs), 499, 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.separated);
        assert_eq!(r.p_value, 1.0 / 500.0);
    }

    #[test]
    fn p_value_formula_and_range() {
        let d = design(1, 60, 2, 0.5);
        let r = cpt(&d, 199, 7).unwrap();
        assert_eq!(r.null.len(), 199);
        let exceed = r.null.iter().filter(|&&a| a >= r.accuracy).count();
        assert_eq!(r.p_value, (1 + exceed) as f64 / 200.0);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn invariant_to_pair_order_and_affine_rescaling() {
        let d = design(2, 80, 3, 0.6);
        let base = cpt(&d, 199, 11).unwrap();
        let mut shuffled = d.clone();
        shuffled.pairs.reverse();
        shuffled.pairs.swap(3, 40);
        assert_eq!(cpt(&shuffled, 199, 11).unwrap().p_value, base.p_value);
        let mut scaled = d.clone();
        for p in &mut scaled.pairs {
            for u in [&mut p.near, &mut p.far] {
                u.x[1] = 3.0 * u.x[1] - 7.0;
            }
        }
        assert_eq!(cpt(&scaled, 199, 11).unwrap().p_value, base.p_value);
        let b = biased_cpt(&d, 1.5, 199, 3, 5).unwrap();
        assert_eq!(biased_cpt(&shuffled, 1.5, 199, 3, 5).unwrap().p_value, b.p_value);
    }

    #[test]
    fn too_few_permutations_rejected() {
        let d = design(3, 10, 1, 0.5);
        assert!(cpt(&d, 50, 0).is_err());
        assert!(biased_cpt(&d, 0.5, 199, 1, 0).is_err());
    }

    #[test]
    fn biased_p_monotone_in_gamma() {
        let d = design(4, 200, 2, 0.8);
        let mut last = 0.0;
        for g in [1.0, 1.2, 1.5, 2.0, 3.0, 5.0, 10.0, f64::INFINITY] {
            let p = biased_cpt(&d, g, 199, 2, 9).unwrap().p_value;
            assert!(p >= last, "gamma {g}: {p} < {last}");
            last = p;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn biased_level_at_true_odds() {
        // Far member favoured by the first covariate with odds exactly 2.
        let g = 2.0;
        let reps = 200;
        let rejections = (0..reps)
            .filter(|&s| {
                let d = design(1000 + s, 200, 2, g / (1.0 + g));
                biased_cpt(&d, g, 99, 1, s).unwrap().p_value <= 0.05
            })
            .count();
        assert!(rejections as f64 / reps as f64 <= 0.05 + 0.03, "{rejections}");
    }

    #[test]
    fn biased_power_exceeds_level() {
        let g = 2.0;
        let reps = 100;
        let q = 4.0 / 5.0; // odds 2g
        let power = (0..reps)
            .filter(|&s| biased_cpt(&design(5000 + s, 300, 2, q), g, 99, 1, s).unwrap().p_value <= 0.05)
            .count();
        assert!(power as f64 / reps as f64 > 0.2, "{power}");
    }

    #[test]
    fn gamma_cap_search_brackets_the_turn() {
        let d = design(6, 300, 2, 0.85);
        let res = gamma_cap_search(&d, 0.05, 199, 1, 2).unwrap();
        assert!(res.gamma_cap > 1.0);
        assert!(biased_cpt(&d, res.gamma_cap, 199, 1, 2).unwrap().p_value > 0.05);
        assert!(biased_cpt(&d, res.gamma_cap / 1.001, 199, 1, 2).unwrap().p_value <= 0.05);
    }
}
