//! Smooth indicator approximation of the l-infinity ball: the softmax F_beta,
//! the quintic bump g0, and phi_{r,eps}, with analytic first derivatives and
//! empirical certification of the derivative-sum bounds and the ratio
//! stability band.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Parameters of one smooth indicator phi_{r,eps} on R^p. The inverse
/// temperature beta = 2 log(2p)/eps is derived at construction and stored so
/// that beta * eps = 2 log(2p) exactly as computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothMaxParams {
    pub r: f64,
    pub eps: f64,
    pub p: usize,
    pub beta: f64,
}

impl SmoothMaxParams {
    pub fn new(r: f64, eps: f64, p: usize) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::invalid("r", "radius must be a finite nonnegative real"));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::invalid("eps", "smoothing width must be positive and finite"));
        }
        if p == 0 {
            return Err(Error::invalid("p", "dimension must be >= 1"));
        }
        let beta = 2.0 * (2.0 * p as f64).ln() / eps;
        Ok(SmoothMaxParams { r, eps, p, beta })
    }
}

/// Softmax F_beta(z) = (1/beta) log sum_j exp(beta z_j), shift-by-max so the
/// largest exponent is exactly 0. Satisfies
/// max_j z_j <= F_beta(z) <= max_j z_j + log(len)/beta.
pub fn f_beta(z: &[f64], beta: f64) -> f64 {
    let zmax = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = z.iter().map(|&v| (beta * (v - zmax)).exp()).sum();
    zmax + sum.ln() / beta
}

/// Quintic bump g0(t) = 30 1{0<=t<=1} int_t^1 s^2(1-s)^2 ds: 1 on t <= 0,
/// 0 on t >= 1, Horner-evaluated in between, C^2 at the seams.
pub fn g0(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else if t <= 0.5 {
        // 30 (1/30 - t^3/3 + t^4/2 - t^5/5) = 1 + t^3 (-10 + 15 t - 6 t^2)
        1.0 + t * t * t * (-10.0 + t * (15.0 - 6.0 * t))
    } else {
        // Mirror form in u = 1 - t avoids cancellation near the right seam:
        // g0(t) = u^3 (10 - 15 u + 6 u^2).
        let u = 1.0 - t;
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// g0'(t) = -30 t^2 (1-t)^2 on [0,1], zero elsewhere.
pub fn g0_prime(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let u = t * (1.0 - t);
        -30.0 * u * u
    }
}

/// Internal evaluation state at one point x: the bump argument t and the
/// softmax weights of z_x = (x, -x) (weights are shift-invariant, so the
/// -r shift of the definition does not enter them).
struct EvalState {
    t: f64,
    /// weights[j] for j < p belong to x_j, weights[j + p] to -x_j.
    weights: Vec<f64>,
}

fn eval_state(x: &[f64], params: &SmoothMaxParams) -> EvalState {
    let p = params.p;
    debug_assert_eq!(x.len(), p);
    let beta = params.beta;
    let zmax = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.abs()));
    let mut weights = Vec::with_capacity(2 * p);
    let mut sum = 0.0;
    for &v in x {
        let w = (beta * (v - zmax)).exp();
        weights.push(w);
        sum += w;
    }
    for &v in x {
        let w = (beta * (-v - zmax)).exp();
        weights.push(w);
        sum += w;
    }
    for w in &mut weights {
        *w /= sum;
    }
    let f = zmax + sum.ln() / beta - params.r; // F_beta(z_x - r 1)
    let t = 2.0 * (f - params.eps / 2.0) / params.eps;
    EvalState { t, weights }
}

/// phi_{r,eps}(x) = g0(2 (F_beta(z_x - r 1) - eps/2)/eps), z_x = (x, -x).
/// Exactly 1 when ||x||_inf <= r and exactly 0 when ||x||_inf > r + eps.
pub fn phi_r_eps(x: &[f64], params: &SmoothMaxParams) -> f64 {
    let ninf = x.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    if ninf <= params.r {
        return 1.0;
    }
    if ninf > params.r + params.eps {
        return 0.0;
    }
    g0(eval_state(x, params).t)
}

/// Analytic gradient: d_j phi = g0'(t) (2/eps) (w_j - w_{j+p}) with softmax
/// weights w of (x, -x).
pub fn phi_gradient(x: &[f64], params: &SmoothMaxParams) -> Vec<f64> {
    let state = eval_state(x, params);
    let scale = g0_prime(state.t) * 2.0 / params.eps;
    (0..params.p)
        .map(|j| scale * (state.weights[j] - state.weights[j + params.p]))
        .collect()
}

/// First-derivative envelope D_j(x) = (2 sup|g0'| / eps) (w_j + w_{j+p})
/// = (3.75/eps)(w_j + w_{j+p}).
///
/// This dominates |d_j phi| pointwise and sums to exactly 3.75/eps. The
/// tighter pointwise bound carrying |g0'(t)| is NOT a valid envelope for the
/// ratio-stability property: its ratio under perturbation is unbounded near
/// the seams t in {0, 1} where g0' vanishes, so no constant can hold. With
/// sup|g0'| frozen, the ratio is a pure softmax pair-mass ratio, bounded by
/// exp(2 beta ||w||_inf) = exp(4 log(2p) ||w||_inf / eps).
pub fn envelope_d(x: &[f64], params: &SmoothMaxParams) -> Vec<f64> {
    let state = eval_state(x, params);
    let scale = 1.875 * 2.0 / params.eps;
    (0..params.p)
        .map(|j| scale * (state.weights[j] + state.weights[j + params.p]))
        .collect()
}

/// One certified quantity at one sample point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertRow {
    pub sample_id: usize,
    pub quantity: String,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeCertification {
    pub params: SmoothMaxParams,
    pub c0: f64,
    pub samples: usize,
    pub rows: Vec<CertRow>,
    /// Max over samples of observed / bound, per derivative order (1, 2, 3).
    pub max_ratio: [f64; 3],
    pub pass: bool,
}

/// Draws a point whose sup-norm is uniform on [r - eps, r + 2 eps]
/// (clamped below at 0), i.e. concentrated where phi actually varies.
fn sample_band_point<R: Rng + ?Sized>(rng: &mut R, params: &SmoothMaxParams) -> Vec<f64> {
    let lo = (params.r - params.eps).max(0.0);
    let hi = params.r + 2.0 * params.eps;
    let target = lo + (hi - lo) * rng.gen::<f64>();
    let mut v: Vec<f64> = (0..params.p)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let ninf = v.iter().fold(0.0_f64, |m, &c| m.max(c.abs()));
    if ninf > 0.0 {
        for c in &mut v {
            *c *= target / ninf;
        }
    }
    v
}

/// Certifies the Lemma-2.3 derivative-sum bounds empirically:
/// sum_j |d_j phi| <= C0/eps (analytic), sum_{jk} |d_{jk} phi| <=
/// C0 log(ep)/eps^2 and sum_{jkl} |d_{jkl} phi| <= C0 log^2(ep)/eps^3
/// (central finite differences; exact enumeration of index sets when p <= 8,
/// otherwise unbiased importance sampling of columns and pairs proportional
/// to the softmax pair mass, which carries essentially all derivative mass).
pub fn certify_derivative_bounds(
    params: &SmoothMaxParams,
    c0: f64,
    samples: usize,
    seed: u64,
) -> Result<DerivativeCertification> {
    if samples < 100 {
        return Err(Error::invalid("samples", "certification needs at least 100 samples"));
    }
    let eps = params.eps;
    let h = 1e-4 * eps;
    let scale = params.r + eps;
    if scale + h == scale {
        return Err(Error::StepUnderflow { step: h, scale });
    }
    let p = params.p;
    let le = 1.0 + (p as f64).ln();
    let bound1 = c0 / eps;
    let bound2 = c0 * le / (eps * eps);
    let bound3 = c0 * le * le / (eps * eps * eps);
    let exhaustive = p <= 8;
    let n_cols = if exhaustive { p } else { 8 };
    let n_pairs = if exhaustive { p * p } else { 16 };
    let streams = SeedStream::new(seed, "smoothmax-derivative-cert");

    let per_sample: Vec<[f64; 3]> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.replicate_rng(i as u64);
            let x = sample_band_point(&mut rng, params);
            let s1: f64 = phi_gradient(&x, params).iter().map(|g| g.abs()).sum();

            // Importance distribution over columns: the softmax pair mass
            // m_k = w_k + w_{k+p}. Every derivative entry in column k carries
            // a weight factor, so mass-proportional sampling keeps the
            // scaled-up estimate low-variance; columns with exactly zero mass
            // have exactly zero derivative columns and are never drawn.
            let state = eval_state(&x, params);
            let mass: Vec<f64> = (0..p)
                .map(|k| state.weights[k] + state.weights[k + p])
                .collect();
            let heaviest = (0..p)
                .max_by(|&a, &b| mass[a].total_cmp(&mass[b]))
                .unwrap();
            let draw_col = |rng: &mut rand_chacha::ChaCha12Rng| -> usize {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (k, &m) in mass.iter().enumerate() {
                    acc += m;
                    if u <= acc {
                        return k;
                    }
                }
                heaviest
            };

            // Hessian column sums by central differences of the analytic
            // gradient: exhaustive for small p, importance-sampled otherwise.
            let mut s2 = 0.0;
            let cols: Vec<(usize, f64)> = if exhaustive {
                (0..p).map(|k| (k, 1.0)).collect()
            } else {
                (0..n_cols)
                    .map(|_| {
                        let k = draw_col(&mut rng);
                        (k, 1.0 / (n_cols as f64 * mass[k]))
                    })
                    .collect()
            };
            for &(k, iw) in &cols {
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                let gp = phi_gradient(&xp, params);
                let gm = phi_gradient(&xm, params);
                let col: f64 = (0..p)
                    .map(|j| ((gp[j] - gm[j]) / (2.0 * h)).abs())
                    .sum();
                s2 += iw * col;
            }

            // Third-derivative sums: second-order differences of the gradient
            // over (k, l) pairs. Diagonal entries scale like mass[k] while
            // off-diagonal entries scale like mass[k] * mass[l], so they get
            // separate importance estimates: k ~ mass for the diagonal and
            // (k, l) ~ mass x mass restricted to k != l (a draw with k == l
            // contributes zero, keeping the off-diagonal estimate unbiased).
            let mut s3 = 0.0;
            let pairs: Vec<(usize, usize, f64)> = if exhaustive {
                (0..p)
                    .flat_map(|k| (0..p).map(move |l| (k, l, 1.0)))
                    .collect()
            } else {
                let mut v: Vec<(usize, usize, f64)> = (0..n_cols)
                    .map(|_| {
                        let k = draw_col(&mut rng);
                        (k, k, 1.0 / (n_cols as f64 * mass[k]))
                    })
                    .collect();
                for _ in 0..n_pairs {
                    let k = draw_col(&mut rng);
                    let l = draw_col(&mut rng);
                    if k != l {
                        v.push((k, l, 1.0 / (n_pairs as f64 * mass[k] * mass[l])));
                    }
                }
                v
            };
            for &(k, l, iw) in &pairs {
                let mut xpp = x.clone();
                xpp[k] += h;
                xpp[l] += h;
                let mut xpm = x.clone();
                xpm[k] += h;
                xpm[l] -= h;
                let mut xmp = x.clone();
                xmp[k] -= h;
                xmp[l] += h;
                let mut xmm = x.clone();
                xmm[k] -= h;
                xmm[l] -= h;
                let gpp = phi_gradient(&xpp, params);
                let gpm = phi_gradient(&xpm, params);
                let gmp = phi_gradient(&xmp, params);
                let gmm = phi_gradient(&xmm, params);
                let cell: f64 = (0..p)
                    .map(|j| ((gpp[j] - gpm[j] - gmp[j] + gmm[j]) / (4.0 * h * h)).abs())
                    .sum();
                s3 += iw * cell;
            }
            [s1, s2, s3]
        })
        .collect();

    let mut rows = Vec::with_capacity(3 * samples);
    let mut max_ratio = [0.0_f64; 3];
    for (i, sums) in per_sample.iter().enumerate() {
        for (q, (&observed, bound)) in sums
            .iter()
            .zip([bound1, bound2, bound3])
            .enumerate()
        {
            let name = ["grad_sum", "hessian_sum", "third_sum"][q];
            max_ratio[q] = max_ratio[q].max(observed / bound);
            rows.push(CertRow {
                sample_id: i,
                quantity: name.to_string(),
                observed,
                bound,
                pass: observed <= bound,
            });
        }
    }
    let pass = max_ratio.iter().all(|&r| r <= 1.0);
    Ok(DerivativeCertification {
        params: params.clone(),
        c0,
        samples,
        rows,
        max_ratio,
        pass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityCertification {
    pub params: SmoothMaxParams,
    pub frak_c: f64,
    pub pairs: usize,
    /// (x, w) pairs where at least one coordinate was checked.
    pub checked: usize,
    /// Pairs skipped entirely because every envelope was below the floor.
    pub skipped: usize,
    pub violations: usize,
    /// Max over all checked coordinates of |log D(x+w)/D(x)| minus the band
    /// half-width frak_c log(ep) ||w||/eps; <= 0 iff zero violations.
    pub max_log_ratio_excess: f64,
    pub pass: bool,
}

/// Certifies the ratio stability band for the first-derivative envelope:
/// for random (x, w) with ||w||_inf <= eps/log(ep), checks
/// exp(-frak_c log(ep) ||w||/eps) <= D_j(x+w)/D_j(x) <= exp(+...) at every j
/// where both envelope values exceed a floor (the envelope vanishes on the
/// plateaus, where the ratio is undefined; those coordinates are skipped).
pub fn certify_stability(
    params: &SmoothMaxParams,
    frak_c: f64,
    pairs: usize,
    seed: u64,
) -> Result<StabilityCertification> {
    if pairs < 100 {
        return Err(Error::invalid("pairs", "certification needs at least 100 pairs"));
    }
    let eps = params.eps;
    let p = params.p;
    let le = 1.0 + (p as f64).ln();
    let w_cap = eps / le;
    // Envelope floor: far below any value attainable where the bump is
    // active, but above underflow noise.
    let floor = 1e-10 * 2.0 / eps;
    let streams = SeedStream::new(seed, "smoothmax-stability-cert");

    #[derive(Clone, Copy)]
    struct PairOutcome {
        checked: bool,
        excess: f64,
    }

    let outcomes: Vec<PairOutcome> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.replicate_rng(i as u64);
            let x = sample_band_point(&mut rng, params);
            let w: Vec<f64> = (0..p)
                .map(|_| w_cap * (2.0 * rng.gen::<f64>() - 1.0))
                .collect();
            let w_norm = w.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            let half_width = frak_c * le * w_norm / eps;
            let d0 = envelope_d(&x, params);
            let xw: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + b).collect();
            let d1 = envelope_d(&xw, params);
            let mut checked = false;
            let mut excess = f64::NEG_INFINITY;
            for j in 0..p {
                if d0[j] > floor && d1[j] > floor {
                    checked = true;
                    let log_ratio = (d1[j] / d0[j]).ln().abs();
                    excess = excess.max(log_ratio - half_width);
                }
            }
            PairOutcome { checked, excess }
        })
        .collect();

    let checked = outcomes.iter().filter(|o| o.checked).count();
    let skipped = pairs - checked;
    let max_log_ratio_excess = outcomes
        .iter()
        .filter(|o| o.checked)
        .map(|o| o.excess)
        .fold(f64::NEG_INFINITY, f64::max);
    let violations = outcomes
        .iter()
        .filter(|o| o.checked && o.excess > 0.0)
        .count();
    Ok(StabilityCertification {
        params: params.clone(),
        frak_c,
        pairs,
        checked,
        skipped,
        violations,
        max_log_ratio_excess,
        pass: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn f_beta_hand_values() {
        // All coordinates equal a -> a + log(len)/beta exactly.
        let z = vec![0.7; 6];
        assert_relative_eq!(f_beta(&z, 3.0), 0.7 + 6.0_f64.ln() / 3.0, epsilon = 1e-15);
        // p=1-style pair (0, 1) at beta = 1 -> log(1 + e).
        assert_relative_eq!(
            f_beta(&[0.0, 1.0], 1.0),
            (1.0 + std::f64::consts::E).ln(),
            epsilon = 1e-15
        );
        // beta -> infinity recovers the max.
        assert_relative_eq!(f_beta(&[0.3, -2.0, 0.9], 1e6), 0.9, epsilon = 1e-6);
        // Overflow safety at huge arguments.
        assert!(f_beta(&[700.0, 710.0], 5.0).is_finite());
    }

    #[test]
    fn f_beta_bracket_random() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let len = 1 + rng.gen_range(0..6);
            let z: Vec<f64> = (0..len).map(|_| 10.0 * (rng.gen::<f64>() - 0.5)).collect();
            let beta = 0.1 + 10.0 * rng.gen::<f64>();
            let zmax = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let f = f_beta(&z, beta);
            assert!(f >= zmax - 1e-12);
            assert!(f <= zmax + (len as f64).ln() / beta + 1e-12);
        }
    }

    #[test]
    fn g0_hand_values() {
        assert_eq!(g0(0.0), 1.0);
        assert_eq!(g0(1.0), 0.0);
        assert_eq!(g0(-3.0), 1.0);
        assert_eq!(g0(2.0), 0.0);
        assert_relative_eq!(g0(0.5), 0.5, epsilon = 1e-15);
        assert_relative_eq!(g0_prime(0.5), -1.875, epsilon = 1e-15);
        // Seam continuity of value and derivative.
        assert!((g0(1e-9) - 1.0).abs() < 1e-15);
        assert!(g0(1.0 - 1e-9).abs() < 1e-15);
        assert!(g0_prime(1e-9).abs() < 1e-15);
    }

    #[test]
    fn phi_exact_regimes_and_interior() {
        let params = SmoothMaxParams::new(1.0, 0.5, 1).unwrap();
        assert_eq!(phi_r_eps(&[0.0], &params), 1.0);
        assert_eq!(phi_r_eps(&[1.0], &params), 1.0);
        assert_eq!(phi_r_eps(&[2.0], &params), 0.0); // r + 2 eps
        // Interior value against a direct evaluation of the definition.
        let x = [1.25];
        let z = [x[0] - 1.0, -x[0] - 1.0];
        let f = f_beta(&z, params.beta);
        let direct = g0(2.0 * (f - 0.25) / 0.5);
        let v = phi_r_eps(&x, &params);
        assert!(v > 0.0 && v < 1.0);
        assert_relative_eq!(v, direct, epsilon = 1e-14);
    }

    #[test]
    fn sandwich_property_random() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let mut violations = 0usize;
        for _ in 0..100_000 {
            let p = 1 + rng.gen_range(0..8);
            let r = 2.0 * rng.gen::<f64>();
            let eps = 0.01 + rng.gen::<f64>();
            let params = SmoothMaxParams::new(r, eps, p).unwrap();
            let x: Vec<f64> = (0..p).map(|_| 4.0 * (rng.gen::<f64>() - 0.5)).collect();
            let ninf = x.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            let v = phi_r_eps(&x, &params);
            if !(0.0..=1.0).contains(&v) {
                violations += 1;
            }
            if ninf <= r && v != 1.0 {
                violations += 1;
            }
            if ninf > r + eps && v != 0.0 {
                violations += 1;
            }
        }
        assert_eq!(violations, 0);
    }

    #[test]
    fn phi_monotone_along_rays() {
        let params = SmoothMaxParams::new(1.0, 0.4, 3).unwrap();
        let dir = [0.6, -0.8, 0.3];
        let mut prev = 1.0;
        for i in 0..200 {
            let s = i as f64 * 0.02;
            let x: Vec<f64> = dir.iter().map(|d| d * s).collect();
            let v = phi_r_eps(&x, &params);
            assert!(v <= prev + 1e-12, "phi not nonincreasing at s={s}");
            prev = v;
        }
    }

    #[test]
    fn analytic_gradient_matches_central_difference() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = 1 + rng.gen_range(0..6);
            let params = SmoothMaxParams::new(1.0, 0.5, p).unwrap();
            let mut x = sample_band_point(&mut rng, &params);
            // Stay away from the seams t in {0, 1}.
            let t = eval_state(&x, &params).t;
            if !(0.05..=0.95).contains(&t) {
                continue;
            }
            let h = 1e-6 * params.eps;
            let grad = phi_gradient(&x, &params);
            for j in 0..p {
                let orig = x[j];
                x[j] = orig + h;
                let fp = g0(eval_state(&x, &params).t);
                x[j] = orig - h;
                let fm = g0(eval_state(&x, &params).t);
                x[j] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let denom = grad[j].abs().max(1e-3);
                assert!(
                    (grad[j] - fd).abs() / denom < 1e-5,
                    "p={p} j={j}: analytic {} vs fd {}",
                    grad[j],
                    fd
                );
            }
        }
    }

    #[test]
    fn gradient_sum_bounded_by_375_over_eps() {
        // sum_j |d_j phi| <= 2 sup|g0'| / eps = 3.75/eps, strictly below the
        // default C0 = 5.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..2_000 {
            let p = 1 + rng.gen_range(0..32);
            let eps = 0.05 + rng.gen::<f64>();
            let params = SmoothMaxParams::new(1.0, eps, p).unwrap();
            let x = sample_band_point(&mut rng, &params);
            let s: f64 = phi_gradient(&x, &params).iter().map(|g| g.abs()).sum();
            assert!(s <= 3.75 / eps + 1e-9);
        }
    }

    #[test]
    fn plateau_derivatives_vanish() {
        let params = SmoothMaxParams::new(2.0, 0.5, 4).unwrap();
        let x = [0.1, -0.2, 0.3, 0.0]; // ||x|| well below r - eps
        assert!(phi_gradient(&x, &params).iter().all(|&g| g == 0.0));
        // The envelope stays positive everywhere and sums to 3.75/eps.
        let d = envelope_d(&x, &params);
        assert!(d.iter().all(|&v| v > 0.0));
        let sum: f64 = d.iter().sum();
        assert_relative_eq!(sum, 3.75 / params.eps, epsilon = 1e-12);
        assert!(phi_gradient(&x, &params)
            .iter()
            .zip(&d)
            .all(|(g, dv)| g.abs() <= *dv));
    }

    #[test]
    fn derivative_certification_runs_and_first_order_passes() {
        let params = SmoothMaxParams::new(1.0, 0.5, 4).unwrap();
        let cert = certify_derivative_bounds(&params, 5.0, 200, 42).unwrap();
        assert_eq!(cert.rows.len(), 3 * 200);
        // First-order analytic bound can never fail at C0 = 5.
        assert!(cert.max_ratio[0] <= 3.75 / 5.0 + 1e-12);
        assert!(cert.max_ratio[1].is_finite() && cert.max_ratio[2].is_finite());
        // Determinism.
        let again = certify_derivative_bounds(&params, 5.0, 200, 42).unwrap();
        assert_eq!(again.max_ratio, cert.max_ratio);
    }

    #[test]
    fn certification_rejects_degenerate_inputs() {
        let params = SmoothMaxParams::new(1.0, 0.5, 4).unwrap();
        assert!(certify_derivative_bounds(&params, 5.0, 10, 0).is_err());
        let tiny = SmoothMaxParams::new(1.0, 1e-300, 4).unwrap();
        assert!(matches!(
            certify_derivative_bounds(&tiny, 5.0, 200, 0),
            Err(Error::StepUnderflow { .. })
        ));
        assert!(certify_stability(&params, 1.0, 10, 0).is_err());
    }

    #[test]
    fn stability_zero_perturbation_is_inside_band() {
        let params = SmoothMaxParams::new(1.0, 0.5, 4).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = sample_band_point(&mut rng, &params);
            let d = envelope_d(&x, &params);
            let d_again = envelope_d(&x, &params);
            for j in 0..4 {
                assert_eq!(d[j], d_again[j]);
            }
        }
    }

    #[test]
    fn stability_certification_default_point() {
        // The recorded default: p = 4, r = 1, eps = 0.5 at the frozen
        // frak_c = 4. The pair-mass envelope ratio is exactly a softmax mass
        // ratio, bounded by exp(2 beta ||w||) = exp(4 log(2p) ||w|| / eps)
        // <= exp(4 log(ep) ||w|| / eps), so frak_c = 4 holds provably.
        let params = SmoothMaxParams::new(1.0, 0.5, 4).unwrap();
        let cert = certify_stability(&params, crate::DEFAULT_FRAK_C, 10_000, 2024).unwrap();
        assert_eq!(cert.pairs, 10_000);
        assert!(cert.checked > 0);
        assert_eq!(
            cert.violations, 0,
            "max excess {}",
            cert.max_log_ratio_excess
        );
        assert!(cert.pass);
        // Band shrinks to equality as w -> 0: excess stays <= 0 but finite.
        assert!(cert.max_log_ratio_excess <= 0.0);
    }

    #[test]
    fn stability_fails_at_unit_constant() {
        // Recorded calibration fact that forced the frak_c = 4 freeze: at
        // frak_c = 1 the softmax mass ratio exp(4 log(2p) ||w|| / eps)
        // escapes the band for most perturbations as soon as p > 1.
        let params = SmoothMaxParams::new(1.0, 0.5, 4).unwrap();
        let cert = certify_stability(&params, 1.0, 10_000, 2024).unwrap();
        assert!(cert.violations > 5_000, "violations {}", cert.violations);
        assert!(!cert.pass);
        assert!(cert.max_log_ratio_excess > 1.0);
    }
}
