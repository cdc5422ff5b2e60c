//! Cramer-type large-deviation constants: the explicit B, Pi-tilde, Pi, M,
//! frak_B0 chain, the admissible radius range, and the ratio bound
//! 1.02 M (r+1) n^{-1/6}, plus the sub-Weibull corollary form.

use serde::{Deserialize, Serialize};

use super::rates::{log_ep, RateBundle, RateTerm, TheoremTag, ValidityRecord};
use super::ConstantBundle;
use crate::error::{Error, Result};
use crate::randvec::PseudoMoments;

/// The evaluated large-deviation constants for one (H, family, n) context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CramerConstants {
    /// B = 2 (1 + sigma_max^{-2}) / H.
    pub b: f64,
    pub pi_tilde: f64,
    /// Pi = max of pi_tilde and four explicit branches.
    pub pi: f64,
    /// M = max of 2 Pi and four explicit branches; scales the ratio bound.
    pub big_m: f64,
    /// frak_B0 = min of five explicit branches; sets the admissible radius.
    pub frak_b0: f64,
    /// Admissibility threshold on (r+1) n^{-1/6}:
    /// frak_B0 exp(-3 M^{1/4} (mu+1)^{-17/16} log(en) n^{-5/32}).
    pub admissible_threshold: f64,
    pub mu: f64,
    pub n: u64,
}

impl CramerConstants {
    /// frak_B_s = frak_B0 (1 + 17 M^{1/4} / (6 (mu+1)^{17/16} n^{5/32}))^{-s},
    /// the radius budget left after s recursion steps.
    pub fn frak_b_s(&self, s: f64) -> f64 {
        let growth = 1.0
            + 17.0 * self.big_m.powf(0.25)
                / (6.0 * (self.mu + 1.0).powf(17.0 / 16.0) * (self.n as f64).powf(5.0 / 32.0));
        self.frak_b0 * growth.powf(-s)
    }
}

/// One queried radius with its ratio bound and admissibility status.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CramerQuery {
    pub r: f64,
    /// 1.02 M (r+1) n^{-1/6}.
    pub bound: f64,
    /// Whether (r+1) n^{-1/6} <= admissible_threshold.
    pub admissible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CramerReport {
    pub constants: CramerConstants,
    pub queries: Vec<CramerQuery>,
    pub bundle: RateBundle,
}

/// Evaluates the large-deviation constant chain for iid summands whose
/// variation measure satisfies int exp(H ||x||) |zeta|(dx) <= 4 (asserted by
/// the caller). Each r in `r_queries` gets a ratio bound; radii outside the
/// admissible range are returned with `admissible = false`, never dropped.
#[allow(clippy::too_many_arguments)]
pub fn cramer_constants(
    h: f64,
    pm: &dyn PseudoMoments,
    mu: f64,
    p: usize,
    n: u64,
    c0: f64,
    frak_c: f64,
    bundle: &ConstantBundle,
    r_queries: &[f64],
) -> Result<CramerReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid("H", "exponential-moment scale must be positive and finite"));
    }
    if n < 4 {
        return Err(Error::invalid("n", "the large-deviation bound requires n >= 4"));
    }
    let l_n = pm.l_n()?;
    if !(l_n > 0.0) {
        return Err(Error::DegeneratePseudoMoment);
    }
    let sigma_max = bundle.sigma_max;
    let phi2 = bundle.phi2;
    let phi4 = bundle.phi4;
    let phi_ac0 = bundle.phi_ac_at(0.0);

    let nf = n as f64;
    let le = log_ep(p);
    let len = 1.0 + nf.ln(); // log(en)
    let c2 = c0 * le;
    let c3 = c0 * le * le;
    let ec = frak_c.exp();

    let b = 2.0 * (1.0 + sigma_max.powi(-2)) / h;

    let pi_tilde = 4.0
        + 12.0 * phi_ac0 * (8.0 * c3 * l_n * ec).powf(1.0 / 3.0)
        + 20.0 * phi_ac0 * le * (8.0 * c0 * nf).ln() / (h * nf.powf(1.0 / 3.0))
        + 5.1 * le / (c0 * nf.powf(5.0 / 6.0));

    // (24 C2 / (Phi_4^5 H^2))^{4/11} in log space: Phi_4^5 can overflow.
    let pi_branch5 = ((4.0 / 11.0)
        * ((24.0 * c2).ln() - 5.0 * phi4.ln() - 2.0 * h.ln()))
    .exp();
    let pi = pi_tilde
        .max((132.0 * phi2).powf(4.0 / 3.0))
        .max(19.0 * c3 * l_n * ec / phi4)
        .max((37.0 * c3 * l_n * ec).powf(4.0 / 7.0))
        .max(pi_branch5);

    // (48 C2)^{10/23} / (Phi_4^{32} H^{20})^{1/23} in log space.
    let m_branch3 = ((10.0 * (48.0 * c2).ln() - 32.0 * phi4.ln() - 20.0 * h.ln()) / 23.0).exp();
    let big_m = (2.0 * pi)
        .max((112.0 * phi2 + 83.0 * c3 * l_n).powf(4.0 / 3.0))
        .max(m_branch3)
        .max(36.0 * (c3 * l_n * phi2).powf(2.0 / 3.0))
        .max((124.0 * c3 * l_n).powi(2) / ((mu + 1.0).powf(17.0 / 8.0) * nf.powf(5.0 / 16.0)));

    // frak_B0: the Phi_4^4 products computed in log space; the frak_c branch
    // degenerates to +inf when frak_c = 0 and is then excluded by the min.
    let b1 = (-(phi4.powi(4) * pi).ln() / 3.0).exp() / 3.0;
    let b2 = (-(4.0 / 15.0) * (phi4.powi(4) * big_m).ln()).exp() / 4.0;
    let b3 = len.powf(-1.0 / 3.0) / (2.0 * (phi4 * b).powf(1.0 / 3.0));
    let b4 = pi.powf(1.0 / 9.0) * len.powf(-4.0 / 9.0) / (2.0 * (b * le).powf(4.0 / 9.0));
    let b5 = big_m.powf(1.0 / 8.0) * len.powf(-0.5) / (6.0 * frak_c * b * le).sqrt();
    let frak_b0 = b1.min(b2).min(b3).min(b4).min(b5);

    let admissible_threshold = frak_b0
        * (-3.0 * big_m.powf(0.25) * (mu + 1.0).powf(-17.0 / 16.0) * len * nf.powf(-5.0 / 32.0))
            .exp();

    let constants = CramerConstants {
        b,
        pi_tilde,
        pi,
        big_m,
        frak_b0,
        admissible_threshold,
        mu,
        n,
    };

    let queries: Vec<CramerQuery> = r_queries
        .iter()
        .map(|&r| CramerQuery {
            r,
            bound: 1.02 * big_m * (r + 1.0) / nf.powf(1.0 / 6.0),
            admissible: (r + 1.0) / nf.powf(1.0 / 6.0) <= admissible_threshold,
        })
        .collect();

    let mut echo = std::collections::BTreeMap::new();
    for (k, v) in [
        ("n", nf),
        ("p", p as f64),
        ("h", h),
        ("mu", mu),
        ("c0", c0),
        ("frak_c", frak_c),
        ("l_n", l_n),
        ("sigma_min", bundle.sigma_min),
        ("sigma_max", sigma_max),
        ("phi2", phi2),
        ("phi4", phi4),
        ("phi_ac0", phi_ac0),
        ("b", b),
        ("pi_tilde", pi_tilde),
        ("pi", pi),
        ("big_m", big_m),
        ("frak_b0", frak_b0),
        ("num_queries", queries.len() as f64),
    ] {
        echo.insert(k.to_string(), v);
    }
    for (i, q) in queries.iter().enumerate() {
        echo.insert(format!("r_{i}"), q.r);
    }
    let terms: Vec<RateTerm> = queries
        .iter()
        .map(|q| RateTerm {
            name: format!("ratio_bound_r={}", q.r),
            value: q.bound,
            formula: "1.02*M*(r+1)/n^{1/6}".to_string(),
        })
        .collect();
    let total: f64 = terms.iter().map(|t| t.value).sum();
    let rate_bundle = RateBundle {
        theorem: TheoremTag::T51,
        terms,
        total,
        inputs_echo: echo,
        vacuous: total > 1.0,
        validity: Some(ValidityRecord {
            constraint: "(r+1)*n^{-1/6} <= frak_b0*exp(-3*M^{1/4}*(mu+1)^{-17/16}*log(en)*n^{-5/32})"
                .to_string(),
            satisfied: queries.iter().all(|q| q.admissible),
        }),
    };

    Ok(CramerReport {
        constants,
        queries,
        bundle: rate_bundle,
    })
}

pub(super) fn reevaluate_t51(bundle: &RateBundle) -> Result<RateBundle> {
    let e = |k: &str| -> Result<f64> {
        bundle
            .inputs_echo
            .get(k)
            .copied()
            .ok_or(Error::GuardViolated(format!("inputs_echo is missing key `{k}`")))
    };
    let num_queries = e("num_queries")? as usize;
    let mut r_queries = Vec::with_capacity(num_queries);
    for i in 0..num_queries {
        r_queries.push(e(&format!("r_{i}"))?);
    }
    let sigma_min = e("sigma_min")?;
    let sigma_max = e("sigma_max")?;
    let cb = ConstantBundle {
        phi0: 1.0 / 6.0,
        phi1: 1.0 / (sigma_max * sigma_max),
        phi2: e("phi2")?,
        phi3: 20.0,
        phi4: e("phi4")?,
        phi_ac: vec![(0.0, e("phi_ac0")?)],
        mu: e("mu")?,
        sigma_min,
        sigma_max,
        theta_policy: super::ThetaPolicy::Numeric,
    };
    let pm = crate::randvec::FixedPseudoMoments {
        l_n: e("l_n")?,
        m_n: 0.0,
        lbar: 0.0,
        nu: 0.0,
    };
    let report = cramer_constants(
        e("h")?,
        &pm,
        e("mu")?,
        e("p")? as usize,
        e("n")? as u64,
        e("c0")?,
        e("frak_c")?,
        &cb,
        &r_queries,
    )?;
    Ok(report.bundle)
}

/// The sub-Weibull large-deviation bound with its two validity guards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubWeibullLdBound {
    /// Theta_1 (log(ep))^{8/3} (r+1) n^{-1/6}.
    pub bound: f64,
    /// n >= (log(ep))^{64/15} (log(en))^{32/5} (mu+1)^{-34/5}.
    pub sample_size_ok: bool,
    /// (r+1) n^{-1/6} <= Theta_2 (log(ep+n))^{-28/9}.
    pub radius_ok: bool,
    pub bundle: RateBundle,
}

/// Evaluates the sub-Weibull corollary of the large-deviation theorem. The
/// wrapper constants Theta_1, Theta_2 are configuration parameters (default 1)
/// echoed into the bundle; the bound itself does not depend on alpha, which
/// only gates applicability to 1 <= alpha <= 2.
#[allow(clippy::too_many_arguments)]
pub fn cramer_subweibull_c52(
    k_p: f64,
    alpha: f64,
    sigma_min: f64,
    sigma_max: f64,
    mu: f64,
    p: usize,
    n: u64,
    r: f64,
    theta1: f64,
    theta2: f64,
) -> Result<SubWeibullLdBound> {
    if !(alpha >= 1.0 && alpha <= 2.0) {
        return Err(Error::invalid("alpha", "this corollary requires 1 <= alpha <= 2"));
    }
    if !(k_p >= 1.0) {
        return Err(Error::invalid("K_p", "Orlicz bound must satisfy K_p >= 1"));
    }
    if !(sigma_min > 0.0 && sigma_min <= sigma_max) {
        return Err(Error::invalid("sigma_min", "must satisfy 0 < sigma_min <= sigma_max"));
    }
    if !(mu >= 0.0) {
        return Err(Error::invalid("mu", "median must be >= 0"));
    }
    let nf = n as f64;
    let le = log_ep(p);
    let len = 1.0 + nf.ln();
    let bound = theta1 * le.powf(8.0 / 3.0) * (r + 1.0) / nf.powf(1.0 / 6.0);
    let sample_size_ok =
        nf >= le.powf(64.0 / 15.0) * len.powf(32.0 / 5.0) * (mu + 1.0).powf(-34.0 / 5.0);
    let radius_ok = (r + 1.0) / nf.powf(1.0 / 6.0)
        <= theta2 * (std::f64::consts::E * p as f64 + nf).ln().powf(-28.0 / 9.0);

    let mut echo = std::collections::BTreeMap::new();
    for (k, v) in [
        ("k_p", k_p),
        ("alpha", alpha),
        ("sigma_min", sigma_min),
        ("sigma_max", sigma_max),
        ("mu", mu),
        ("p", p as f64),
        ("n", nf),
        ("r", r),
        ("theta1", theta1),
        ("theta2", theta2),
    ] {
        echo.insert(k.to_string(), v);
    }
    let bundle = RateBundle {
        theorem: TheoremTag::C52,
        terms: vec![RateTerm {
            name: "ratio_bound".to_string(),
            value: bound,
            formula: "Theta1*(log(ep))^{8/3}*(r+1)/n^{1/6}".to_string(),
        }],
        total: bound,
        inputs_echo: echo,
        vacuous: bound > 1.0,
        validity: Some(ValidityRecord {
            constraint: "n >= (log ep)^{64/15}(log en)^{32/5}(mu+1)^{-34/5} and (r+1)n^{-1/6} <= Theta2*(log(ep+n))^{-28/9}"
                .to_string(),
            satisfied: sample_size_ok && radius_ok,
        }),
    };
    Ok(SubWeibullLdBound {
        bound,
        sample_size_ok,
        radius_ok,
        bundle,
    })
}

pub(super) fn reevaluate_c52(bundle: &RateBundle) -> Result<RateBundle> {
    let e = |k: &str| -> Result<f64> {
        bundle
            .inputs_echo
            .get(k)
            .copied()
            .ok_or(Error::GuardViolated(format!("inputs_echo is missing key `{k}`")))
    };
    Ok(cramer_subweibull_c52(
        e("k_p")?,
        e("alpha")?,
        e("sigma_min")?,
        e("sigma_max")?,
        e("mu")?,
        e("p")? as usize,
        e("n")? as u64,
        e("r")?,
        e("theta1")?,
        e("theta2")?,
    )?
    .bundle)
}
