//! Simultaneous post-selection inference for fixed-design linear regression:
//! submodel enumeration, restricted-isometry constants, Monte Carlo
//! simulation of the max-|t| statistic over all submodels of size at most k,
//! and the closed-form width and non-uniform bounds.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Default ceiling on the number of enumerated submodels.
pub const DEFAULT_SUBMODEL_CAP: usize = 100_000;

/// Fixed design with cached Gram matrix n^{-1} X^T X.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if n == 0 || d == 0 {
            return Err(Error::invalid("x", "design needs at least one row and one column"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x", "design entries must be finite"));
        }
        let gram = x.transpose() * &x / n as f64;
        Ok(DesignMatrix { x, gram })
    }

    /// Headerless row-major data, each inner slice one observation.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("rows", "design needs at least one row"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows", "all design rows must share one width"));
        }
        let n = rows.len();
        Ok(Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))?)
    }

    /// The orthonormal-Gram design: n = d rows with x_i = sqrt(d) e_i. The
    /// cached Gram is pinned to the exact identity this design represents,
    /// since fl(sqrt(d))^2 / d can be an ulp away from 1.
    pub fn orthonormal(d: usize) -> Result<Self> {
        let s = (d as f64).sqrt();
        let mut design =
            Self::new(DMatrix::from_fn(d, d, |i, j| if i == j { s } else { 0.0 }))?;
        design.gram = DMatrix::identity(d, d);
        Ok(design)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn gram_submodel(&self, model: &[usize]) -> DMatrix<f64> {
        let s = model.len();
        DMatrix::from_fn(s, s, |a, b| self.gram[(model[a], model[b])])
    }
}

/// All nonempty M with |M| <= k, ordered by cardinality and
/// lexicographically within each cardinality. Refuses (with the count) when
/// sum_{j<=k} C(d, j) exceeds the cap: the guarantee quantifies over every
/// submodel, so silent subsampling would be unsound.
pub fn enumerate_submodels(d: usize, k: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    if d == 0 {
        return Err(Error::invalid("d", "need at least one covariate"));
    }
    if k == 0 || k > d {
        return Err(Error::invalid("k", "model size bound must satisfy 1 <= k <= d"));
    }
    // Count first so the refusal does not allocate the doomed enumeration.
    let mut count: u128 = 0;
    let mut binom: u128 = 1; // C(d, 0)
    for j in 1..=k {
        binom = binom * (d - j + 1) as u128 / j as u128;
        count += binom;
    }
    if count > cap as u128 {
        return Err(Error::SubmodelCapExceeded {
            count,
            cap: cap as u64,
        });
    }

    let mut models = Vec::with_capacity(count as usize);
    for size in 1..=k {
        let mut current: Vec<usize> = (0..size).collect();
        loop {
            models.push(current.clone());
            // Next combination in lexicographic order.
            let mut i = size;
            while i > 0 {
                i -= 1;
                if current[i] < d - (size - i) {
                    current[i] += 1;
                    for j in i + 1..size {
                        current[j] = current[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    current.clear();
                }
            }
            if current.is_empty() {
                break;
            }
        }
    }
    Ok(models)
}

/// Restricted isometry constant of the design over submodels of size <= k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RipOutcome {
    /// kappa = max over |M| <= k of max(lambda_max(Omega_M) - 1,
    /// 1 - lambda_min(Omega_M)), strictly below 1.
    Kappa(f64),
    /// The isometry bound fails (kappa >= 1, including singular Omega_M);
    /// the first offending submodel is named.
    Violated { kappa: f64, offending: Vec<usize> },
}

pub fn rip_kappa(design: &DesignMatrix, k: usize, cap: usize) -> Result<RipOutcome> {
    let models = enumerate_submodels(design.d(), k, cap)?;
    let mut kappa = 0.0_f64;
    for model in &models {
        let omega = design.gram_submodel(model);
        // Diagonal Omega_M (orthogonal or singleton submodels) has its
        // diagonal as exact eigenvalues; the iterative eigensolver would
        // smear them by an ulp and break the exact kappa = 0 case.
        let s = model.len();
        let is_diagonal =
            (0..s).all(|a| (0..s).all(|b| a == b || omega[(a, b)] == 0.0));
        let eig: Vec<f64> = if is_diagonal {
            (0..s).map(|a| omega[(a, a)]).collect()
        } else {
            omega.symmetric_eigenvalues().iter().copied().collect()
        };
        let lo = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let hi = eig.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let contribution = (hi - 1.0).max(1.0 - lo);
        if !contribution.is_finite() || contribution >= 1.0 {
            return Ok(RipOutcome::Violated {
                kappa: contribution,
                offending: model.clone(),
            });
        }
        kappa = kappa.max(contribution);
    }
    Ok(RipOutcome::Kappa(kappa))
}

/// Error variances Var(Y_i): one per observation or a shared scalar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum VarY {
    Scalar(f64),
    PerObservation(Vec<f64>),
}

impl VarY {
    fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        let v = match self {
            VarY::Scalar(s) => vec![*s; n],
            VarY::PerObservation(v) => {
                if v.len() != n {
                    return Err(Error::invalid("var_y", "needs one variance per observation"));
                }
                v.clone()
            }
        };
        if v.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("var_y", "variances must be positive and finite"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoSIResult {
    pub k: usize,
    pub n_models: usize,
    /// Sample median of max_{|M| <= k, j} |G_{j,M}|.
    pub mu_posi: f64,
    /// (alpha, empirical (1 - alpha) quantile) pairs, sorted by alpha.
    pub quantile: Vec<(f64, f64)>,
    pub kappa: RipOutcome,
    pub reps: usize,
    pub seed: u64,
}

impl PoSIResult {
    pub fn quantile_at(&self, alpha: f64) -> Option<f64> {
        self.quantile
            .iter()
            .find(|(a, _)| *a == alpha)
            .map(|(_, q)| *q)
    }
}

/// Simulates the simultaneous t-statistic max_{|M| <= k, j} |G_{j,M}| with
/// G_{j,M} = n^{-1/2} sum_i g_i (Omega_M^{-1} x_{i,M})(j) / sigma_M(j) and
/// g_i independent centered Gaussians of variance Var(Y_i). The studentizer
/// sigma_M(j) is the exact standard deviation of sqrt(n)(beta_hat - beta)(j)
/// computed from the design and Var(Y_i). Per-model coefficient matrices are
/// precomputed once and shared across replicates.
pub fn simulate_max_t(
    design: &DesignMatrix,
    k: usize,
    var_y: &VarY,
    reps: usize,
    seed: u64,
    alphas: &[f64],
) -> Result<PoSIResult> {
    if reps < 100 {
        return Err(Error::invalid("reps", "simulation needs at least 100 replicates"));
    }
    if alphas.iter().any(|&a| !(0.0 < a && a < 1.0)) {
        return Err(Error::invalid("alpha", "levels must lie strictly between 0 and 1"));
    }
    let n = design.n();
    let nf = n as f64;
    let variances = var_y.resolve(n)?;
    let models = enumerate_submodels(design.d(), k, DEFAULT_SUBMODEL_CAP)?;
    let kappa = rip_kappa(design, k, DEFAULT_SUBMODEL_CAP)?;

    // Per model, an |M| x n coefficient matrix C with
    // C[j][i] = (Omega_M^{-1} x_{i,M})(j) / (sqrt(n) sigma_M(j)), so the
    // statistic for one replicate is max_M ||C g||_inf.
    let mut coeffs: Vec<DMatrix<f64>> = Vec::with_capacity(models.len());
    for model in &models {
        let s = model.len();
        let omega = design.gram_submodel(model);
        let chol = omega.clone().cholesky().ok_or(Error::SingularSubmodel {
            model: model.clone(),
        })?;
        // Columns Omega_M^{-1} x_{i,M}, one per observation.
        let mut a = DMatrix::zeros(s, n);
        for i in 0..n {
            let xi = DVector::from_fn(s, |j, _| design.x[(i, model[j])]);
            a.set_column(i, &chol.solve(&xi));
        }
        // Var(sqrt(n)(beta_hat - beta))_jj = n^{-1} sum_i a_i(j)^2 Var(Y_i).
        for j in 0..s {
            let sigma2: f64 =
                (0..n).map(|i| a[(j, i)] * a[(j, i)] * variances[i]).sum::<f64>() / nf;
            if !(sigma2 > 0.0) || !sigma2.is_finite() {
                return Err(Error::SingularSubmodel {
                    model: model.clone(),
                });
            }
            let scale = 1.0 / (nf.sqrt() * sigma2.sqrt());
            for i in 0..n {
                a[(j, i)] *= scale;
            }
        }
        coeffs.push(a);
    }

    let sds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let streams = SeedStream::new(seed, "posi-max-t");
    let mut draws: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = streams.replicate_rng(rep as u64);
            let g = DVector::from_fn(n, |i, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sds[i] * z
            });
            coeffs
                .iter()
                .map(|c| (c * &g).iter().fold(0.0_f64, |m, &v| m.max(v.abs())))
                .fold(0.0_f64, f64::max)
        })
        .collect();
    draws.sort_by(f64::total_cmp);

    let quantile_of = |alpha: f64| -> f64 {
        // Empirical (1 - alpha) quantile: smallest order statistic with at
        // least (1 - alpha) of the mass at or below it.
        let idx = (((1.0 - alpha) * reps as f64).ceil() as usize).clamp(1, reps) - 1;
        draws[idx]
    };
    let mut sorted_alphas = alphas.to_vec();
    sorted_alphas.sort_by(f64::total_cmp);
    sorted_alphas.dedup();
    let quantile: Vec<(f64, f64)> = sorted_alphas.iter().map(|&a| (a, quantile_of(a))).collect();
    let mu_posi = quantile_of(0.5);

    Ok(PoSIResult {
        k,
        n_models: models.len(),
        mu_posi,
        quantile,
        kappa,
        reps,
        seed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthBound {
    pub value: f64,
    /// The RIP width bound's C(kappa) is only known to tend to 1 as
    /// kappa -> 0; it is applied at C = 1, so the kappa term is approximate.
    pub c_kappa_approximate: bool,
}

/// mu_PoSI <= sqrt(2 log(2d)) + C(kappa) kappa sqrt(2k log(6d/k)) at C = 1.
pub fn posi_width_bound(kappa: f64, d: usize, k: usize) -> Result<WidthBound> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::invalid("kappa", "RIP constant must lie in [0, 1)"));
    }
    if d == 0 || k == 0 || k > d {
        return Err(Error::invalid("k", "need 1 <= k <= d"));
    }
    let base = (2.0 * (2.0 * d as f64).ln()).sqrt();
    let rip = kappa * (2.0 * k as f64 * (6.0 * d as f64 / k as f64).ln()).sqrt();
    Ok(WidthBound {
        value: base + rip,
        c_kappa_approximate: kappa > 0.0,
    })
}

/// Non-uniform many-approximate-means bound: for any delta > 0 and m >= 0,
/// r^m Delta_bar(r) <= 2[(5/4)^m Delta^psi + 5^m Phi_AC0^psi delta^{m+1}]
///                    + Phi_ACm^psi delta + r^m P(||R_n|| > delta).
pub fn mam_bound(
    delta_psi_nm: f64,
    phi_ac0_psi: f64,
    phi_acm_psi: f64,
    delta: f64,
    m: u32,
    r: f64,
    tail_rn: f64,
) -> Result<f64> {
    for (name, v) in [
        ("delta_psi_nm", delta_psi_nm),
        ("phi_ac0_psi", phi_ac0_psi),
        ("phi_acm_psi", phi_acm_psi),
        ("r", r),
        ("tail_rn", tail_rn),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, "must be a finite nonnegative real"));
        }
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid("delta", "smoothing radius must be positive"));
    }
    let mf = m as i32;
    Ok(2.0 * (1.25_f64.powi(mf) * delta_psi_nm + 5.0_f64.powi(mf) * phi_ac0_psi * delta.powi(mf + 1))
        + phi_acm_psi * delta
        + r.powi(mf) * tail_rn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussmax::norm_cdf;
    use approx::assert_relative_eq;

    #[test]
    fn enumerate_small_cases() {
        assert_eq!(
            enumerate_submodels(2, 2, 100).unwrap(),
            vec![vec![0], vec![1], vec![0, 1]]
        );
        assert_eq!(enumerate_submodels(5, 1, 100).unwrap().len(), 5);
        assert_eq!(enumerate_submodels(10, 10, 100_000).unwrap().len(), 1023);
    }

    #[test]
    fn enumerate_orders_within_size_lexicographically() {
        let models = enumerate_submodels(4, 2, 100).unwrap();
        assert_eq!(
            models,
            vec![
                vec![0],
                vec![1],
                vec![2],
                vec![3],
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3],
            ]
        );
    }

    #[test]
    fn enumerate_refuses_over_cap_with_count() {
        match enumerate_submodels(30, 15, 100_000) {
            Err(Error::SubmodelCapExceeded { count, cap }) => {
                assert!(count > cap as u128);
                assert_eq!(cap, 100_000);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn rip_orthonormal_is_exactly_zero() {
        let design = DesignMatrix::orthonormal(4).unwrap();
        assert_eq!(rip_kappa(&design, 4, 1000).unwrap(), RipOutcome::Kappa(0.0));
    }

    #[test]
    fn rip_equicorrelated_pair_equals_rho() {
        // Two standardized columns with sample correlation rho: Omega on the
        // full model has eigenvalues 1 +- rho.
        let rho: f64 = 0.3;
        let a = ((1.0 + rho) / 2.0).sqrt();
        let b = ((1.0 - rho) / 2.0).sqrt();
        let x = DMatrix::from_row_slice(
            2,
            2,
            &[
                std::f64::consts::SQRT_2 * a,
                std::f64::consts::SQRT_2 * a,
                std::f64::consts::SQRT_2 * b,
                -std::f64::consts::SQRT_2 * b,
            ],
        );
        let design = DesignMatrix::new(x).unwrap();
        assert_relative_eq!(design.gram()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(design.gram()[(0, 1)], rho, epsilon = 1e-12);
        // Single columns are standardized, so k = 1 contributes nothing
        // beyond the rounding of the reconstructed unit diagonal.
        match rip_kappa(&design, 1, 100).unwrap() {
            RipOutcome::Kappa(k) => assert!(k <= 1e-12, "kappa {k}"),
            other => panic!("unexpected {other:?}"),
        }
        match rip_kappa(&design, 2, 100).unwrap() {
            RipOutcome::Kappa(k) => assert_relative_eq!(k, rho, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rip_monotone_in_k() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[
                1.2, 0.4, 0.1, -0.9, 1.1, 0.3, 0.7, -0.8, 1.4, -1.0, -0.6, -0.2,
            ],
        );
        let design = DesignMatrix::new(x).unwrap();
        let value = |k: usize| match rip_kappa(&design, k, 100).unwrap() {
            RipOutcome::Kappa(v) => v,
            RipOutcome::Violated { kappa, .. } => kappa,
        };
        assert!(value(1) <= value(2));
        assert!(value(2) <= value(3));
    }

    #[test]
    fn rip_duplicated_column_is_violated_with_offender() {
        // Identical standardized columns: Omega = [[1,1],[1,1]] is singular.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        let design = DesignMatrix::new(x).unwrap();
        match rip_kappa(&design, 2, 100).unwrap() {
            RipOutcome::Violated { kappa, offending } => {
                assert!(kappa >= 1.0);
                assert_eq!(offending, vec![0, 1]);
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn orthogonal_design_quantile_matches_closed_form() {
        // max(|Z1|, |Z2|) with independent standard normals: the 95%
        // quantile solves (2 Phi(q) - 1)^2 = 0.95.
        let design = DesignMatrix::orthonormal(2).unwrap();
        let result =
            simulate_max_t(&design, 2, &VarY::Scalar(1.0), 200_000, 77, &[0.05]).unwrap();
        assert_eq!(result.n_models, 3);
        assert_eq!(result.kappa, RipOutcome::Kappa(0.0));
        let q = result.quantile_at(0.05).unwrap();
        assert!((q - 2.2365).abs() <= 0.02, "q95 = {q}");
    }

    #[test]
    fn single_covariate_median_is_normal_abs_median() {
        let design = DesignMatrix::orthonormal(1).unwrap();
        let result =
            simulate_max_t(&design, 1, &VarY::Scalar(1.0), 100_000, 7, &[0.5]).unwrap();
        // median|Z| = Phi^{-1}(0.75) = 0.67449.
        assert!((result.mu_posi - 0.67449).abs() < 0.01, "mu = {}", result.mu_posi);
        // mu_posi is the alpha = 0.5 quantile by construction.
        assert_eq!(result.mu_posi, result.quantile_at(0.5).unwrap());
        let fold = 2.0 * norm_cdf(result.mu_posi) - 1.0;
        assert!((fold - 0.5).abs() < 0.01);
    }

    #[test]
    fn quantiles_nonincreasing_in_alpha() {
        let design = DesignMatrix::orthonormal(3).unwrap();
        let result = simulate_max_t(
            &design,
            2,
            &VarY::Scalar(2.0),
            20_000,
            19,
            &[0.01, 0.05, 0.1, 0.25, 0.5],
        )
        .unwrap();
        for w in result.quantile.windows(2) {
            assert!(w[0].1 >= w[1].1, "{:?}", result.quantile);
        }
    }

    #[test]
    fn studentization_makes_result_scale_invariant() {
        let x = DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.5, -1.2, 0.9, 0.4, -1.5, -0.7, 0.3],
        );
        let design = DesignMatrix::new(x).unwrap();
        let base =
            simulate_max_t(&design, 2, &VarY::Scalar(1.0), 50_000, 23, &[0.05]).unwrap();
        let scaled =
            simulate_max_t(&design, 2, &VarY::Scalar(4.0), 50_000, 23, &[0.05]).unwrap();
        let q1 = base.quantile_at(0.05).unwrap();
        let q4 = scaled.quantile_at(0.05).unwrap();
        let se = 3.0 / (50_000.0_f64).sqrt();
        assert!((q1 - q4).abs() <= 3.0 * se, "q1 = {q1}, q4 = {q4}");
    }

    #[test]
    fn duplicated_column_simulation_names_model() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        let design = DesignMatrix::new(x).unwrap();
        match simulate_max_t(&design, 2, &VarY::Scalar(1.0), 1_000, 0, &[0.05]) {
            Err(Error::SingularSubmodel { model }) => assert_eq!(model, vec![0, 1]),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn per_observation_variances_validated() {
        let design = DesignMatrix::orthonormal(2).unwrap();
        assert!(matches!(
            simulate_max_t(
                &design,
                1,
                &VarY::PerObservation(vec![1.0]),
                1_000,
                0,
                &[0.05]
            ),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            simulate_max_t(
                &design,
                1,
                &VarY::PerObservation(vec![1.0, -1.0]),
                1_000,
                0,
                &[0.05]
            ),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn width_bound_closed_forms_and_monotonicity() {
        let b = posi_width_bound(0.0, 2, 2).unwrap();
        assert_relative_eq!(b.value, (2.0 * 4.0_f64.ln()).sqrt(), epsilon = 1e-12);
        assert!((b.value - 1.6651).abs() < 1e-4);
        assert!(!b.c_kappa_approximate);

        let with_rip = posi_width_bound(0.3, 2, 2).unwrap();
        assert!(with_rip.value > b.value);
        assert!(with_rip.c_kappa_approximate);
        assert!(
            posi_width_bound(0.5, 8, 4).unwrap().value
                > posi_width_bound(0.5, 8, 2).unwrap().value
        );
        assert!(matches!(
            posi_width_bound(1.0, 2, 2),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn width_bound_dominates_simulated_median_on_orthonormal_designs() {
        for d in [2usize, 8, 32] {
            let design = DesignMatrix::orthonormal(d).unwrap();
            let result =
                simulate_max_t(&design, 2.min(d), &VarY::Scalar(1.0), 20_000, 31, &[0.5])
                    .unwrap();
            let bound = posi_width_bound(0.0, d, 2.min(d)).unwrap().value;
            assert!(
                bound >= result.mu_posi,
                "d = {d}: bound {bound} < mu {}",
                result.mu_posi
            );
        }
    }

    #[test]
    fn mam_bound_arithmetic() {
        // All inputs 1 at m = 1: 2[5/4 + 5] + 1 + 1 = 14.5.
        assert_relative_eq!(
            mam_bound(1.0, 1.0, 1.0, 1.0, 1, 1.0, 1.0).unwrap(),
            14.5,
            epsilon = 1e-12
        );
        // m = 0 packaging: 2[Delta + Phi delta] + Phi delta + tail.
        assert_relative_eq!(
            mam_bound(0.25, 2.0, 2.0, 0.1, 0, 3.0, 0.05).unwrap(),
            2.0 * (0.25 + 2.0 * 0.1) + 2.0 * 0.1 + 0.05,
            epsilon = 1e-12
        );
        // delta -> 0 leaves 2 (5/4)^m Delta + r^m tail.
        let tiny = mam_bound(0.5, 7.0, 7.0, 1e-12, 2, 2.0, 0.125).unwrap();
        assert_relative_eq!(
            tiny,
            2.0 * 1.5625 * 0.5 + 4.0 * 0.125,
            epsilon = 1e-9
        );
        assert!(matches!(
            mam_bound(-0.1, 1.0, 1.0, 1.0, 0, 1.0, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            mam_bound(0.1, 1.0, 1.0, 0.0, 0, 1.0, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn simulation_deterministic_across_worker_counts() {
        let design = DesignMatrix::orthonormal(3).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                simulate_max_t(&design, 2, &VarY::Scalar(1.0), 5_000, 43, &[0.05]).unwrap()
            })
        };
        let one = run(1);
        let eight = run(8);
        assert_eq!(one.mu_posi.to_bits(), eight.mu_posi.to_bits());
        assert_eq!(
            one.quantile_at(0.05).unwrap().to_bits(),
            eight.quantile_at(0.05).unwrap().to_bits()
        );
    }
}
