//! Closed-form evaluation of every explicit constant in the theory:
//! the Gaussian tail/band constants Phi_0..Phi_4, the anti-concentration
//! constants Phi_AC,m, the envelope constant K(lambda), the per-theorem rate
//! bundles, and the Cramer large-deviation constants.

mod cramer;
mod rates;

pub use cramer::{cramer_constants, cramer_subweibull_c52, CramerConstants, CramerQuery, CramerReport, SubWeibullLdBound};
pub use rates::*;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How symbolic wrapper constants (the Theta's) are resolved.
///
/// `Numeric` evaluates the explicit proof branches, replacing the symbolic
/// wrapper with the numerically computed supremum. `Unit` sets every
/// anti-concentration constant to 1, which is only useful for hand audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaPolicy {
    Numeric,
    Unit,
}

impl Default for ThetaPolicy {
    fn default() -> Self {
        ThetaPolicy::Numeric
    }
}

/// Evaluated constants for a Gaussian supremum with median `mu` and
/// coordinate standard deviations in [sigma_min, sigma_max].
///
/// Roles: P(||Y|| > r) >= phi0 exp(-phi1 r^2);
/// band P(r-eps <= ||Y|| <= r+eps) <= phi2 eps (1+r) P(||Y|| > r-eps);
/// ratio P(||Y|| > r-eps) <= phi3 exp(phi4 (r+1) eps) P(||Y|| > r);
/// r^m P(band) <= phi_ac(m) eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantBundle {
    pub phi0: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub phi4: f64,
    /// (m, Phi_AC,m) pairs for every requested order m.
    pub phi_ac: Vec<(f64, f64)>,
    pub mu: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub theta_policy: ThetaPolicy,
}

impl ConstantBundle {
    /// Envelope constant K(lambda) = 2 sigma^{-1} (2.6 + lambda/sigma) with
    /// sigma = sigma_min.
    pub fn k_of(&self, lambda: f64) -> f64 {
        2.0 / self.sigma_min * (2.6 + lambda / self.sigma_min)
    }

    /// Phi_AC,m for a requested m (computed on demand if not cached).
    pub fn phi_ac_at(&self, m: f64) -> f64 {
        self.phi_ac
            .iter()
            .find(|(mm, _)| *mm == m)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| phi_ac_m(self.mu, self.sigma_min, self.sigma_max, m, self.theta_policy))
    }
}

/// Band constant Phi_2 = max{51(mu+4.1 s_max)/s_min^2, 32 pi (mu+2.6 s_min)^2/s_min^4}.
pub fn phi2_constant(mu: f64, sigma_min: f64, sigma_max: f64) -> f64 {
    let b1 = 51.0 * (mu + 4.1 * sigma_max) / (sigma_min * sigma_min);
    let b2 = 32.0 * std::f64::consts::PI * (mu + 2.6 * sigma_min).powi(2) / sigma_min.powi(4);
    b1.max(b2)
}

/// Ratio constant Phi_4.
pub fn phi4_constant(mu: f64, sigma_min: f64, sigma_max: f64) -> f64 {
    let s2max = sigma_max * sigma_max;
    let s2min = sigma_min * sigma_min;
    1.0 + 56.0 * (mu + 1.5 * sigma_max) * (mu + 4.1 * sigma_max) / (s2max * s2min)
        + 32.0 * std::f64::consts::PI * (2.6 * sigma_min + mu).powi(2)
            * (s2min + 32.0 * sigma_min * mu + 12.0 * mu * mu)
            / sigma_min.powi(6)
}

/// Anti-concentration constant Phi_AC,m: the maximum of the explicit
/// small-r branch 3^{m+1} (mu + 2 sigma_max)^{m+1} / sigma_min^2 and the
/// numerically evaluated large-r branch
/// sup_{r >= 3(mu+sigma_max)} 2 Phi_2 r^m (r+1) e^{-r^2/(18 sigma_max^2)}
/// e^{-9(mu+sigma_max)^2/(32 sigma_max^2)}.
pub fn phi_ac_m(mu: f64, sigma_min: f64, sigma_max: f64, m: f64, policy: ThetaPolicy) -> f64 {
    if policy == ThetaPolicy::Unit {
        return 1.0;
    }
    let small = 3.0_f64.powf(m + 1.0) * (mu + 2.0 * sigma_max).powf(m + 1.0)
        / (sigma_min * sigma_min);

    let phi2 = phi2_constant(mu, sigma_min, sigma_max);
    let s2 = sigma_max * sigma_max;
    let r0 = 3.0 * (mu + sigma_max);
    // h(r) = r^m (r+1) exp(-r^2/(18 s2)); (log h)'(r) = m/r + 1/(r+1) - r/(9 s2)
    // is strictly decreasing, so h has a single interior maximum; the sup over
    // [r0, inf) sits at max(root, r0). The root is found by bisection.
    let g = |r: f64| -> f64 {
        let mterm = if m == 0.0 { 0.0 } else { m / r };
        mterm + 1.0 / (r + 1.0) - r / (9.0 * s2)
    };
    let argmax = if g(r0) <= 0.0 {
        r0
    } else {
        let mut lo = r0;
        let mut hi = r0.max(1.0);
        while g(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let h = argmax.powf(m) * (argmax + 1.0) * (-argmax * argmax / (18.0 * s2)).exp();
    let large = 2.0 * phi2 * h * (-9.0 * (mu + sigma_max).powi(2) / (32.0 * s2)).exp();

    small.max(large)
}

/// Evaluates Phi_0..Phi_4, Phi_AC,m for each m in `m_list`, and K(lambda)
/// for the Gaussian supremum described by (mu, sigma_min, sigma_max).
pub fn anticonc_constants(
    mu: f64,
    sigma_min: f64,
    sigma_max: f64,
    m_list: &[f64],
) -> Result<ConstantBundle> {
    anticonc_constants_with_policy(mu, sigma_min, sigma_max, m_list, ThetaPolicy::Numeric)
}

pub fn anticonc_constants_with_policy(
    mu: f64,
    sigma_min: f64,
    sigma_max: f64,
    m_list: &[f64],
    theta_policy: ThetaPolicy,
) -> Result<ConstantBundle> {
    if !(sigma_min > 0.0) || !sigma_min.is_finite() {
        return Err(Error::invalid("sigma_min", "must be positive and finite"));
    }
    if sigma_min > sigma_max {
        return Err(Error::invalid("sigma_min", "must be <= sigma_max"));
    }
    if !(mu >= 0.0) {
        return Err(Error::invalid("mu", "median must be >= 0"));
    }
    let phi_ac = m_list
        .iter()
        .map(|&m| (m, phi_ac_m(mu, sigma_min, sigma_max, m, theta_policy)))
        .collect();
    Ok(ConstantBundle {
        phi0: 1.0 / 6.0,
        phi1: 1.0 / (sigma_max * sigma_max),
        phi2: phi2_constant(mu, sigma_min, sigma_max),
        phi3: 20.0,
        phi4: phi4_constant(mu, sigma_min, sigma_max),
        phi_ac,
        mu,
        sigma_min,
        sigma_max,
        theta_policy,
    })
}
