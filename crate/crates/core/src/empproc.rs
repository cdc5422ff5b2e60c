//! Multiplier empirical process over the half-line indicator class
//! F = {x -> 1{x > u} : u in [0, 1]} on X ~ Uniform[0, 1]: a direct Monte
//! Carlo estimate of E[Z_n(F)] with the inner sup computed exactly, and the
//! chaining-free bound via conditional Gaussian mean widths.
//!
//! Half-lines select suffixes of the sample sorted by X, so the sup over the
//! whole class is an exact running maximum over the n + 1 suffix partial
//! sums (including the empty suffix), at O(n log n) per replicate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randvec::{BaseLaw, CovarianceSpec, DistributionFamily};
use crate::rng::{tree_sum, SeedStream};

/// Multiplier law: standard normal, or Student t with three moments scaled
/// to unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiDist {
    Normal,
    StudentT3,
}

impl XiDist {
    fn family(&self) -> DistributionFamily {
        let base = match self {
            XiDist::Normal => BaseLaw::Gaussian,
            XiDist::StudentT3 => BaseLaw::StudentT { df: 3.0 },
        };
        DistributionFamily::new(base, CovarianceSpec::diagonal(vec![1.0]).unwrap())
            .expect("fixed one-dimensional family")
    }

    pub fn name(&self) -> &'static str {
        match self {
            XiDist::Normal => "normal",
            XiDist::StudentT3 => "student_t(3)",
        }
    }
}

/// Exact sup over half-lines of |n^{-1/2} sum_i w_i 1{x_i > u}|: the running
/// maximum of the suffix partial sums of w sorted by x, including the empty
/// suffix. Suffixes accumulate tail-first (largest x inward), which fixes
/// the floating-point association for oracle comparisons.
fn exact_halfline_sup(pairs: &mut [(f64, f64)]) -> f64 {
    let n = pairs.len();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0_f64;
    let mut best = 0.0_f64; // empty suffix
    for &(_, w) in pairs.iter().rev() {
        acc = w + acc;
        best = best.max(acc.abs());
    }
    best / (n as f64).sqrt()
}

/// Public entry to the exact O(n log n) sup for oracle comparisons.
pub fn halfline_sup(pairs: &[(f64, f64)]) -> f64 {
    let mut copy = pairs.to_vec();
    exact_halfline_sup(&mut copy)
}

/// The same sup by direct enumeration of all n + 1 cut points, summing each
/// suffix tail-first so it reproduces the fast path bit for bit. O(n^2),
/// for oracle tests only.
pub fn brute_force_halfline_sup(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = 0.0_f64;
    for k in 0..=n {
        let mut acc = 0.0_f64;
        for i in (k..n).rev() {
            acc = sorted[i].1 + acc;
        }
        best = best.max(acc.abs());
    }
    best / (n as f64).sqrt()
}

/// Number of distinct subsets {i : x_i > u} as u ranges over the reals:
/// one per distinct sample value, plus the full set. Weak VC-major dimension
/// one demands log of this count stay below log(2en).
pub fn halfline_subset_count(xs: &[f64]) -> usize {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len() + 1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZnEstimate {
    pub n: usize,
    pub reps: usize,
    pub zhat: f64,
    pub se: f64,
    pub xi: XiDist,
    pub seed: u64,
}

/// Monte Carlo estimate of E[Z_n(F)] = E sup_u |n^{-1/2} sum xi_i 1{X_i > u}|
/// with X_i ~ Uniform[0, 1] and xi_i independent unit-variance multipliers.
pub fn estimate_zn(n: usize, xi: XiDist, reps: usize, seed: u64) -> Result<ZnEstimate> {
    if n == 0 {
        return Err(Error::invalid("n", "sample size must be positive"));
    }
    if reps < 100 {
        return Err(Error::invalid("reps", "estimation needs at least 100 replicates"));
    }
    let family = xi.family();
    let streams = SeedStream::new(seed, "empproc-zn");
    let draws: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = streams.replicate_rng(rep as u64);
            let mut pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let x: f64 = rng.gen();
                    let w = family.standardized_draw(&mut rng);
                    (x, w)
                })
                .collect();
            exact_halfline_sup(&mut pairs)
        })
        .collect();
    let (zhat, se) = mean_and_se(&draws);
    Ok(ZnEstimate {
        n,
        reps,
        zhat,
        se,
        xi,
        seed,
    })
}

fn mean_and_se(draws: &[f64]) -> (f64, f64) {
    let reps = draws.len() as f64;
    let mean = tree_sum(draws) / reps;
    let sq: Vec<f64> = draws.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = tree_sum(&sq) / (reps - 1.0);
    (mean, (var / reps).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub n: usize,
    pub reps: usize,
    pub width: f64,
    pub se: f64,
    /// For half-lines the u-integrand of the chaining-free display does not
    /// depend on u (every slice class C_u is again the half-line suffixes),
    /// so the integral over u in [0, 1] equals the single width; it is
    /// computed once instead of on a u-grid.
    pub u_independent: bool,
    pub seed: u64,
}

/// Estimates the conditional Gaussian mean width
/// E sup_u |n^{-1/2} sum_i g_i sigma(X_i) 1{X_i > u}| with g_i standard
/// normal, which for half-lines equals the u-integral in the chaining-free
/// bound on E[Z_n(F)].
pub fn gaussian_width_bound(
    n: usize,
    sigma_fn: &(dyn Fn(f64) -> f64 + Sync),
    reps: usize,
    seed: u64,
) -> Result<WidthEstimate> {
    if n == 0 {
        return Err(Error::invalid("n", "sample size must be positive"));
    }
    if reps < 100 {
        return Err(Error::invalid("reps", "estimation needs at least 100 replicates"));
    }
    let streams = SeedStream::new(seed, "empproc-width");
    let draws: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = streams.replicate_rng(rep as u64);
            let mut pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let x: f64 = rng.gen();
                    let g: f64 = StandardNormal.sample(&mut rng);
                    (x, g * sigma_fn(x))
                })
                .collect();
            exact_halfline_sup(&mut pairs)
        })
        .collect();
    let (width, se) = mean_and_se(&draws);
    Ok(WidthEstimate {
        n,
        reps,
        width,
        se,
        u_independent: true,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_multipliers_give_zero() {
        // sigma = 0 kills every suffix sum exactly.
        let est = gaussian_width_bound(16, &|_| 0.0, 200, 3).unwrap();
        assert_eq!(est.width, 0.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn single_point_class_is_absolute_normal_moment() {
        // n = 1: the sup is |xi| (cut below the point) vs 0 (empty suffix),
        // so the mean is E|Z| = sqrt(2/pi).
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        let z = estimate_zn(1, XiDist::Normal, 100_000, 5).unwrap();
        assert!(
            (z.zhat - expected).abs() <= 3.0 * z.se,
            "zhat {} vs {expected} (se {})",
            z.zhat,
            z.se
        );
        let w = gaussian_width_bound(1, &|_| 1.0, 100_000, 7).unwrap();
        assert!(
            (w.width - expected).abs() <= 3.0 * w.se,
            "width {} vs {expected}",
            w.width
        );
    }

    #[test]
    fn exact_sup_matches_brute_force_bitwise() {
        let streams = SeedStream::new(11, "oracle-check");
        for rep in 0..1_000u64 {
            let mut rng = streams.replicate_rng(rep);
            let n = 1 + (rng.gen::<u64>() % 64) as usize;
            let heavy = rep % 2 == 0;
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let x: f64 = rng.gen();
                    let w: f64 = if heavy {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * z * z // heavy-tailed, sign-varying weights
                    } else {
                        StandardNormal.sample(&mut rng)
                    };
                    (x, w)
                })
                .collect();
            let mut fast_input = pairs.clone();
            let fast = exact_halfline_sup(&mut fast_input);
            let brute = brute_force_halfline_sup(&pairs);
            assert_eq!(fast.to_bits(), brute.to_bits(), "rep {rep}, n = {n}");
        }
    }

    #[test]
    fn entropy_invariant_holds_for_every_sample() {
        let streams = SeedStream::new(13, "entropy-check");
        for rep in 0..200u64 {
            let mut rng = streams.replicate_rng(rep);
            let n = 1 + (rng.gen::<u64>() % 128) as usize;
            let xs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let count = halfline_subset_count(&xs);
            assert!(count <= n + 1);
            // d = 1 entropy display: log|E_u| <= d log(2en/d).
            let bound = (2.0 * std::f64::consts::E * n as f64).ln();
            assert!((count as f64).ln() <= bound, "n = {n}, count = {count}");
        }
        // Ties collapse subsets: duplicated values count once.
        assert_eq!(halfline_subset_count(&[0.5, 0.5, 0.5]), 2);
    }

    #[test]
    fn zhat_trend_nondecreasing_in_n() {
        let mut prev: Option<ZnEstimate> = None;
        for n in [16usize, 256, 4096] {
            let est = estimate_zn(n, XiDist::StudentT3, 4_000, 17).unwrap();
            if let Some(p) = &prev {
                assert!(
                    est.zhat + 3.0 * (est.se + p.se) >= p.zhat,
                    "n = {n}: {} after {}",
                    est.zhat,
                    p.zhat
                );
            }
            prev = Some(est);
        }
    }

    #[test]
    fn normal_multipliers_match_gaussian_width() {
        // With xi standard normal and sigma = 1 the two statistics share one
        // distribution, so the estimates must agree within combined noise.
        let n = 64;
        let z = estimate_zn(n, XiDist::Normal, 20_000, 19).unwrap();
        let w = gaussian_width_bound(n, &|_| 1.0, 20_000, 23).unwrap();
        assert!(
            (z.zhat - w.width).abs() <= 3.0 * (z.se + w.se),
            "zhat {} vs width {}",
            z.zhat,
            w.width
        );
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(
            estimate_zn(0, XiDist::Normal, 1_000, 0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            estimate_zn(4, XiDist::Normal, 10, 0),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| estimate_zn(32, XiDist::StudentT3, 2_000, 29).unwrap())
        };
        let one = run(1);
        let eight = run(8);
        assert_eq!(one.zhat.to_bits(), eight.zhat.to_bits());
        assert_eq!(one.se.to_bits(), eight.se.to_bits());
    }
}
