//! Per-theorem rate bundles: the explicit delta_{n,m} upper bounds with their
//! term-by-term decomposition and a full inputs echo, so every total is
//! exactly recomputable from the echoed inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randvec::{FixedPseudoMoments, PseudoMoments};

/// Which result a bundle evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremTag {
    /// Uniform CLT with truncated second pseudo-moment.
    T31,
    /// Finite (2+tau)-moment rate, tau >= 1 branch.
    E32,
    /// Finite (2+tau)-moment rate, tau < 1 branch.
    APPA,
    /// n^{-1/6} rate via the direct expansion argument.
    P32,
    /// Optimal iid uniform rate, tau >= 1.
    T33,
    /// Non-uniform (weighted) CLT, explicit constants.
    T34,
    /// Optimal non-uniform iid rate.
    T35,
    /// Sub-Weibull uniform corollary.
    C36,
    /// Sub-Weibull non-uniform corollary.
    C37,
    /// Moment-difference bound.
    RMK38,
    /// Cramer-type large deviation constants.
    T51,
    /// Sub-Weibull Cramer corollary.
    C52,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateTerm {
    pub name: String,
    pub value: f64,
    pub formula: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidityRecord {
    pub constraint: String,
    pub satisfied: bool,
}

/// A theorem's bound, decomposed term by term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateBundle {
    pub theorem: TheoremTag,
    pub terms: Vec<RateTerm>,
    /// Sum of the term values.
    pub total: f64,
    /// Every input needed to recompute the bundle, keyed by name.
    pub inputs_echo: BTreeMap<String, f64>,
    /// Bounds above 1 are reported as-is with this flag (never clamped).
    pub vacuous: bool,
    pub validity: Option<ValidityRecord>,
}

impl RateBundle {
    fn assemble(
        theorem: TheoremTag,
        terms: Vec<RateTerm>,
        inputs_echo: BTreeMap<String, f64>,
        validity: Option<ValidityRecord>,
    ) -> Self {
        let total: f64 = terms.iter().map(|t| t.value).sum();
        RateBundle {
            theorem,
            terms,
            total,
            inputs_echo,
            vacuous: total > 1.0,
            validity,
        }
    }

    fn echo(&self, key: &str) -> Result<f64> {
        self.inputs_echo
            .get(key)
            .copied()
            .ok_or(Error::GuardViolated(format!(
                "inputs_echo is missing key `{key}`"
            )))
    }
}

fn term(name: &str, value: f64, formula: &str) -> RateTerm {
    RateTerm {
        name: name.to_string(),
        value,
        formula: formula.to_string(),
    }
}

pub(crate) fn log_ep(p: usize) -> f64 {
    1.0 + (p as f64).ln()
}

fn echo_map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect()
}

/// eps_n of the uniform CLT: (2 e^{2c} C0 log^2(ep) L_n)^{1/3} / n^{1/6}.
fn eps_n_t31(l_n: f64, p: usize, n: u64, c0: f64, frak_c: f64) -> f64 {
    let le = log_ep(p);
    (2.0 * (2.0 * frak_c).exp() * c0 * le * le * l_n).powf(1.0 / 3.0) / (n as f64).powf(1.0 / 6.0)
}

/// delta_{n,0} <= 4 Phi_AC,0 eps_n + 2 C0 log(ep) M_n(eps_n)/eps_n^2
///             + log^{1/3}(ep) Lbar_{n,0} / (n^{1/3} L_n^{4/3} (2 e^{5c} C0)^{1/3}).
pub fn rate_uniform_t31(
    pm: &dyn PseudoMoments,
    p: usize,
    n: u64,
    c0: f64,
    frak_c: f64,
    phi_ac0: f64,
) -> Result<RateBundle> {
    let l_n = pm.l_n()?;
    if !(l_n > 0.0) {
        return Err(Error::DegeneratePseudoMoment);
    }
    let eps_n = eps_n_t31(l_n, p, n, c0, frak_c);
    let m_n = pm.m_n(eps_n)?;
    let lbar0 = pm.lbar(0.0)?;
    let le = log_ep(p);
    let nf = n as f64;
    let t1 = 4.0 * phi_ac0 * eps_n;
    let t2 = 2.0 * c0 * le * m_n / (eps_n * eps_n);
    let t3 = le.powf(1.0 / 3.0) * lbar0
        / (nf.powf(1.0 / 3.0) * l_n.powf(4.0 / 3.0) * (2.0 * (5.0 * frak_c).exp() * c0).powf(1.0 / 3.0));
    Ok(RateBundle::assemble(
        TheoremTag::T31,
        vec![
            term("smoothing", t1, "4*phi_ac0*eps_n"),
            term("lindeberg_truncation", t2, "2*C0*log(ep)*M_n(eps_n)/eps_n^2"),
            term(
                "third_moment",
                t3,
                "log(ep)^{1/3}*Lbar_n0/(n^{1/3}*L_n^{4/3}*(2*e^{5c}*C0)^{1/3})",
            ),
        ],
        echo_map(&[
            ("n", nf),
            ("p", p as f64),
            ("c0", c0),
            ("frak_c", frak_c),
            ("phi_ac0", phi_ac0),
            ("l_n", l_n),
            ("lbar_n0", lbar0),
            ("m_n_at_eps_n", m_n),
            ("eps_n", eps_n),
        ]),
        None,
    ))
}

/// The two-branch finite (2+tau)-moment rate. tau >= 1 uses L_n; tau < 1 uses
/// the truncated L_{n,tau}. `slack` is the configured structural constant
/// standing in for the hidden universal factor.
pub fn rate_finite_moment(
    pm: &dyn PseudoMoments,
    p: usize,
    n: u64,
    tau: f64,
    phi_ac0: f64,
    slack: f64,
) -> Result<RateBundle> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "must be positive"));
    }
    let nu = pm.nu(2.0 + tau)?;
    let le = log_ep(p);
    let nf = n as f64;
    let n_pow = nf.powf(tau / (6.0 + 2.0 * tau));
    if tau < 1.0 {
        let l_tau = pm.l_n_tau(tau)?;
        let common = le.powf((tau + 1.0) / (tau + 2.0)) / n_pow;
        let t1 = slack * phi_ac0 * l_tau.powf(1.0 / (2.0 + tau)) * common;
        let t2 = slack * (phi_ac0 * nu).powf((2.0 + tau) / (3.0 + tau)) * common;
        return Ok(RateBundle::assemble(
            TheoremTag::APPA,
            vec![
                term(
                    "truncated_main",
                    t1,
                    "slack*phi_ac0*L_{n,tau}^{1/(2+tau)}*log(ep)^{(tau+1)/(tau+2)}/n^{tau/(6+2tau)}",
                ),
                term(
                    "moment",
                    t2,
                    "slack*(phi_ac0*nu_{2+tau})^{(2+tau)/(3+tau)}*log(ep)^{(tau+1)/(tau+2)}/n^{tau/(6+2tau)}",
                ),
            ],
            echo_map(&[
                ("n", nf),
                ("p", p as f64),
                ("tau", tau),
                ("phi_ac0", phi_ac0),
                ("slack", slack),
                ("l_n_tau", l_tau),
                ("nu_2_tau", nu),
            ]),
            None,
        ));
    }
    let l_n = pm.l_n()?;
    if !(l_n > 0.0) {
        return Err(Error::DegeneratePseudoMoment);
    }
    let t1 = slack * phi_ac0 * (le * le * l_n).powf(1.0 / 3.0) / nf.powf(1.0 / 6.0);
    let t2 = slack
        * (phi_ac0 * nu).powf((2.0 + tau) / (3.0 + tau))
        * le.powf((tau + 1.0) / (tau + 3.0))
        / n_pow;
    Ok(RateBundle::assemble(
        TheoremTag::E32,
        vec![
            term(
                "main",
                t1,
                "slack*phi_ac0*(log^2(ep)*L_n)^{1/3}/n^{1/6}",
            ),
            term(
                "moment",
                t2,
                "slack*(phi_ac0*nu_{2+tau})^{(2+tau)/(3+tau)}*log(ep)^{(tau+1)/(tau+3)}/n^{tau/(6+2tau)}",
            ),
        ],
        echo_map(&[
            ("n", nf),
            ("p", p as f64),
            ("tau", tau),
            ("phi_ac0", phi_ac0),
            ("slack", slack),
            ("l_n", l_n),
            ("nu_2_tau", nu),
        ]),
        None,
    ))
}

/// delta_{n,0} <= 2^{-(n-1)} + 8 Phi_AC,0 nu_3 (C0 log^2(ep))^{1/3} / n^{1/6}.
pub fn rate_prop32(nu3: f64, p: usize, n: u64, phi_ac0: f64, c0: f64) -> Result<RateBundle> {
    if !(nu3.is_finite() && nu3 >= 0.0) {
        return Err(Error::invalid("nu3", "must be a finite nonnegative real"));
    }
    let le = log_ep(p);
    let nf = n as f64;
    let t1 = (2.0_f64).powf(-(nf - 1.0));
    let t2 = 8.0 * phi_ac0 * nu3 * (c0 * le * le).powf(1.0 / 3.0) / nf.powf(1.0 / 6.0);
    Ok(RateBundle::assemble(
        TheoremTag::P32,
        vec![
            term("geometric", t1, "2^{-(n-1)}"),
            term("main", t2, "8*phi_ac0*nu_3*(C0*log^2(ep))^{1/3}/n^{1/6}"),
        ],
        echo_map(&[
            ("n", nf),
            ("p", p as f64),
            ("phi_ac0", phi_ac0),
            ("c0", c0),
            ("nu_3", nu3),
        ]),
        None,
    ))
}

/// Optimal iid rate for tau >= 1:
/// delta_{n,0} <= slack*[2^{-n} + Phi_AC,0 (L_n^2 log^4(ep)/n)^{1/6}
///              + Phi_AC,0 nu_{2+tau} log(ep)^{(tau+1)/(tau+2)}/n^{tau/(4+2tau)}].
pub fn rate_optimal_t33(
    pm: &dyn PseudoMoments,
    p: usize,
    n: u64,
    tau: f64,
    phi_ac0: f64,
    slack: f64,
) -> Result<RateBundle> {
    if tau < 1.0 {
        return Err(Error::GuardViolated(
            "this rate requires tau >= 1; use rate_finite_moment for tau < 1".into(),
        ));
    }
    let l_n = pm.l_n()?;
    if !(l_n > 0.0) {
        return Err(Error::DegeneratePseudoMoment);
    }
    let nu = pm.nu(2.0 + tau)?;
    let le = log_ep(p);
    let nf = n as f64;
    let t1 = slack * (2.0_f64).powf(-nf);
    let t2 = slack * phi_ac0 * (l_n * l_n * le.powi(4) / nf).powf(1.0 / 6.0);
    let t3 = slack * phi_ac0 * nu * le.powf((tau + 1.0) / (tau + 2.0))
        / nf.powf(tau / (4.0 + 2.0 * tau));
    Ok(RateBundle::assemble(
        TheoremTag::T33,
        vec![
            term("geometric", t1, "slack*2^{-n}"),
            term("main", t2, "slack*phi_ac0*(L_n^2*log^4(ep)/n)^{1/6}"),
            term(
                "moment",
                t3,
                "slack*phi_ac0*nu_{2+tau}*log(ep)^{(tau+1)/(tau+2)}/n^{tau/(4+2tau)}",
            ),
        ],
        echo_map(&[
            ("n", nf),
            ("p", p as f64),
            ("tau", tau),
            ("phi_ac0", phi_ac0),
            ("slack", slack),
            ("l_n", l_n),
            ("nu_2_tau", nu),
        ]),
        None,
    ))
}

/// The five-term non-uniform bound, evaluated verbatim (powers of 2 included).
/// `tail_sup` is the caller-supplied bound on
/// sup_{r >= r_nm} max_k r^m P(||U_{n,k}|| >= r).
#[allow(clippy::too_many_arguments)]
pub fn rate_nonuniform_t34(
    pm: &dyn PseudoMoments,
    p: usize,
    n: u64,
    m: f64,
    r_nm: f64,
    tail_sup: Option<f64>,
    phi_acm: f64,
    phi_ac0: f64,
    c0: f64,
    frak_c: f64,
) -> Result<RateBundle> {
    if !(m > 0.0) {
        return Err(Error::invalid("m", "weight order must be positive"));
    }
    if !(r_nm > 0.0) {
        return Err(Error::invalid("r_nm", "split radius must be positive"));
    }
    let tail_sup = tail_sup.ok_or(Error::MissingInput("tail_sup"))?;
    let l_n = pm.l_n()?;
    if !(l_n > 0.0) {
        return Err(Error::DegeneratePseudoMoment);
    }
    let eps_n = eps_n_t31(l_n, p, n, c0, frak_c);
    let m_n = pm.m_n((2.0_f64).powf(2.0 * m / 3.0) * eps_n)?;
    let lbar_m = pm.lbar(m)?;
    let le = log_ep(p);
    let nf = n as f64;
    let t1 = (2.0_f64).powf(2.0 * m * m / 3.0 + 8.0 * m / 3.0 + 1.0)
        * eps_n.powf(m + 1.0)
        * phi_ac0;
    let t2 = ((2.0_f64).powf(2.0 * m / 3.0 + 1.0) + 2.0) * phi_acm * eps_n;
    let t3 = 2.0 * c0 * le * r_nm.powf(m) * m_n / (eps_n * eps_n);
    let t4 = r_nm.powf(m) * lbar_m / (l_n * (2.0_f64).powf(m) * frak_c.exp())
        * (le / (nf * (2.0_f64).powf(2.0 * m + 1.0) * (2.0 * frak_c).exp() * c0 * l_n))
            .powf((m + 1.0) / 3.0);
    let t5 = tail_sup;
    Ok(RateBundle::assemble(
        TheoremTag::T34,
        vec![
            term(
                "smoothing_power",
                t1,
                "2^{2m^2/3+8m/3+1}*eps_n^{m+1}*phi_ac0",
            ),
            term("anticonc", t2, "(2^{2m/3+1}+2)*phi_acm*eps_n"),
            term(
                "lindeberg_truncation",
                t3,
                "2*C0*log(ep)*r_nm^m*M_n(2^{2m/3}eps_n)/eps_n^2",
            ),
            term(
                "third_moment",
                t4,
                "r_nm^m*Lbar_nm/(L_n*2^m*e^c)*(log(ep)/(n*2^{2m+1}*e^{2c}*C0*L_n))^{(m+1)/3}",
            ),
            term("tail_sup", t5, "sup_{r>=r_nm} max_k r^m P(||U_nk||>=r)"),
        ],
        echo_map(&[
            ("n", nf),
            ("p", p as f64),
            ("m", m),
            ("r_nm", r_nm),
            ("tail_sup", tail_sup),
            ("phi_acm", phi_acm),
            ("phi_ac0", phi_ac0),
            ("c0", c0),
            ("frak_c", frak_c),
            ("l_n", l_n),
            ("lbar_nm", lbar_m),
            ("m_n_at_scaled_eps", m_n),
            ("eps_n", eps_n),
        ]),
        None,
    ))
}

/// Optimal non-uniform iid rate for m >= 1, tau >= m:
/// delta_{n,m} <= 2^{m/2}(nu_m/2^{n/2})^m + 2^{2+2m} eps_n^m + 2.4 Phi_AC,m eps_n.
pub fn rate_nonuniform_t35(
    pm: &dyn PseudoMoments,
    p: usize,
    n: u64,
    m: f64,
    tau: f64,
    phi_acm: f64,
    c0: f64,
    frak_c: f64,
) -> Result<RateBundle> {
    if !(m >= 1.0) {
        return Err(Error::invalid("m", "requires m >= 1"));
    }
    if tau < m {
        return Err(Error::GuardViolated(format!(
            "requires tau >= m; got tau = {tau}, m = {m}"
        )));
    }
    let l_n = pm.l_n()?;
    if !(l_n > 0.0) {
        return Err(Error::DegeneratePseudoMoment);
    }
    let nu_m = pm.nu(m)?;
    let nu_2t = pm.nu(2.0 + tau)?;
    let le = log_ep(p);
    let nf = n as f64;
    let branch1 = ((2.0_f64).powf(2.0 + 1.5 * m) * c0 * frak_c.exp() * l_n * le * le)
        .powf(1.0 / 3.0)
        / nf.powf(1.0 / 6.0);
    let branch2 = nu_2t
        * ((2.0_f64).powf(3.0 + 2.5 * m) * c0 * le.powf(tau + 1.0)).powf(1.0 / (2.0 + tau))
        / nf.powf(tau / (4.0 + 2.0 * tau));
    let eps_n = branch1.max(branch2);
    let t1 = (2.0_f64).powf(m / 2.0) * (nu_m * (2.0_f64).powf(-nf / 2.0)).powf(m);
    let t2 = (2.0_f64).powf(2.0 + 2.0 * m) * eps_n.powf(m);
    let t3 = 2.4 * phi_acm * eps_n;
    Ok(RateBundle::assemble(
        TheoremTag::T35,
        vec![
            term("geometric", t1, "2^{m/2}*(nu_m/2^{n/2})^m"),
            term("smoothing_power", t2, "2^{2+2m}*eps_n^m"),
            term("anticonc", t3, "2.4*phi_acm*eps_n"),
        ],
        echo_map(&[
            ("n", nf),
            ("p", p as f64),
            ("m", m),
            ("tau", tau),
            ("phi_acm", phi_acm),
            ("c0", c0),
            ("frak_c", frak_c),
            ("l_n", l_n),
            ("nu_m", nu_m),
            ("nu_2_tau", nu_2t),
            ("eps_n", eps_n),
        ]),
        None,
    ))
}

/// Which sub-Weibull corollary display to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubWeibullKind {
    /// Uniform, any alpha, guard on log(n^{3/2}/...).
    C36a,
    /// Uniform, shared covariance, guard alpha*log(n/log(ep)) >= 3.
    C36b,
    /// Non-uniform, 1 < alpha <= 2.
    C37a,
    /// Non-uniform, 0 < alpha <= 1.
    C37b,
    /// Non-uniform optimal, shared covariance.
    C37c,
}

impl SubWeibullKind {
    fn code(self) -> f64 {
        match self {
            SubWeibullKind::C36a => 0.0,
            SubWeibullKind::C36b => 1.0,
            SubWeibullKind::C37a => 2.0,
            SubWeibullKind::C37b => 3.0,
            SubWeibullKind::C37c => 4.0,
        }
    }

    fn from_code(code: f64) -> Result<Self> {
        Ok(match code as i64 {
            0 => SubWeibullKind::C36a,
            1 => SubWeibullKind::C36b,
            2 => SubWeibullKind::C37a,
            3 => SubWeibullKind::C37b,
            4 => SubWeibullKind::C37c,
            _ => return Err(Error::invalid("kind_code", "unknown sub-Weibull kind")),
        })
    }
}

/// Inputs shared by the sub-Weibull corollaries. The Theta fields are the
/// resolved symbolic wrapper constants (default 1, echoed in every bundle).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubWeibullParams {
    pub kind: SubWeibullKind,
    pub k_p: f64,
    pub alpha: f64,
    pub p: usize,
    pub n: u64,
    pub m: f64,
    pub sigma_max: f64,
    pub phi_ac0: f64,
    pub phi_acm: f64,
    pub theta: f64,
    pub theta_alpha: f64,
    pub theta_m: f64,
    pub theta_alpha_m: f64,
    pub c0: f64,
    pub frak_c: f64,
}

/// Evaluates the selected sub-Weibull corollary display, enforcing its guard.
pub fn rate_subweibull(params: &SubWeibullParams, pm: &dyn PseudoMoments) -> Result<RateBundle> {
    let SubWeibullParams {
        kind,
        k_p,
        alpha,
        p,
        n,
        m,
        sigma_max,
        phi_ac0,
        phi_acm,
        theta,
        theta_alpha,
        theta_m,
        theta_alpha_m,
        c0,
        frak_c,
    } = *params;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::invalid("alpha", "sub-Weibull index must lie in (0, 2]"));
    }
    if !(k_p >= 1.0) {
        return Err(Error::invalid("K_p", "Orlicz bound must satisfy K_p >= 1"));
    }
    let le = log_ep(p);
    let nf = n as f64;
    let l_n = pm.l_n()?;
    if !(l_n > 0.0) {
        return Err(Error::DegeneratePseudoMoment);
    }
    let mut echo = echo_map(&[
        ("kind_code", kind.code()),
        ("k_p", k_p),
        ("alpha", alpha),
        ("p", p as f64),
        ("n", nf),
        ("m", m),
        ("sigma_max", sigma_max),
        ("phi_ac0", phi_ac0),
        ("phi_acm", phi_acm),
        ("theta", theta),
        ("theta_alpha", theta_alpha),
        ("theta_m", theta_m),
        ("theta_alpha_m", theta_alpha_m),
        ("c0", c0),
        ("frak_c", frak_c),
        ("l_n", l_n),
    ]);

    let main_uniform = theta * phi_ac0 * (l_n * le * le).powf(1.0 / 3.0) / nf.powf(1.0 / 6.0);
    match kind {
        SubWeibullKind::C36a => {
            let guard_arg =
                nf.powf(1.5) / (k_p * theta_alpha * phi_ac0 * le.powf(2.0 + 1.0 / alpha));
            let guard = guard_arg.ln();
            if !(guard >= 4.0) {
                return Err(Error::GuardViolated(format!(
                    "requires log(n^{{3/2}}/(K_p*Theta_a*phi_ac0*log(ep)^{{2+1/a}})) >= 4; got {guard:.4}"
                )));
            }
            let inner = theta_alpha * nf.powf(1.5) / (phi_ac0 * le.powf(2.0 + 1.0 / alpha));
            let t2 = theta_alpha * k_p * phi_ac0 * le.powf(1.0 + 1.0 / alpha) / nf.sqrt()
                * inner.ln().powf(1.0 / alpha);
            Ok(RateBundle::assemble(
                TheoremTag::C36,
                vec![
                    term("main", main_uniform, "Theta*phi_ac0*(L_n*log^2(ep))^{1/3}/n^{1/6}"),
                    term(
                        "subweibull_tail",
                        t2,
                        "Theta_a*K_p*phi_ac0*log(ep)^{1+1/a}*n^{-1/2}*log^{1/a}(Theta_a*n^{3/2}/(phi_ac0*log(ep)^{2+1/a}))",
                    ),
                ],
                echo,
                Some(ValidityRecord {
                    constraint: "log(n^{3/2}/(K_p*Theta_a*phi_ac0*log(ep)^{2+1/a})) >= 4".into(),
                    satisfied: true,
                }),
            ))
        }
        SubWeibullKind::C36b => {
            let guard = alpha * (nf / le).ln();
            if !(guard >= 3.0) {
                return Err(Error::GuardViolated(format!(
                    "requires alpha*log(n/log(ep)) >= 3; got {guard:.4}"
                )));
            }
            let t2 = theta_alpha * k_p * phi_ac0 * le.powf(1.0 + 1.0 / alpha) / nf.sqrt()
                * (nf / le).ln().powf(1.0 / alpha);
            Ok(RateBundle::assemble(
                TheoremTag::C36,
                vec![
                    term("main", main_uniform, "Theta*phi_ac0*(L_n*log^2(ep))^{1/3}/n^{1/6}"),
                    term(
                        "subweibull_tail",
                        t2,
                        "Theta_a*K_p*phi_ac0*log(ep)^{1+1/a}*n^{-1/2}*log^{1/a}(n/log(ep))",
                    ),
                ],
                echo,
                Some(ValidityRecord {
                    constraint: "alpha*log(n/log(ep)) >= 3".into(),
                    satisfied: true,
                }),
            ))
        }
        SubWeibullKind::C37a | SubWeibullKind::C37b => {
            if kind == SubWeibullKind::C37a && alpha <= 1.0 {
                return Err(Error::invalid("alpha", "this branch requires 1 < alpha <= 2"));
            }
            if kind == SubWeibullKind::C37b && alpha > 1.0 {
                return Err(Error::invalid("alpha", "this branch requires 0 < alpha <= 1"));
            }
            let guard_rhs =
                theta * k_p.powi(3) / l_n * (2.0 * std::f64::consts::E * le).powf(1.0 + 3.0 / alpha);
            if !(nf >= guard_rhs) {
                return Err(Error::GuardViolated(format!(
                    "requires n >= Theta*K_p^3*L_n^{{-1}}*(2e*log(ep))^{{1+3/a}}; needs n >= {guard_rhs:.4}"
                )));
            }
            let lepn = 1.0 + (p as f64 * nf).ln();
            let t1 = theta_m * phi_acm * (l_n * l_n * le.powi(4) / nf).powf(1.0 / 6.0);
            let t2 = if kind == SubWeibullKind::C37a {
                theta_alpha_m
                    * (k_p.powf((2.0 * m + 1.0) * alpha) * lepn.powi(4)
                        / (nf * l_n.powf((m + 1.0) * alpha / 3.0)))
                    .powf(1.0 / (alpha - 1.0))
            } else {
                theta_alpha_m * k_p.powf(3.0 + m) / l_n
                    * (k_p.powi(3) * lepn.powf(1.25 + 3.0 / alpha) / (nf * l_n))
                        .powf(12.0 / alpha + 2.0 * m)
            };
            let log_pow = if kind == SubWeibullKind::C37a {
                lepn.powi(4)
            } else {
                lepn.powf(1.0 + 3.0 / alpha)
            };
            let t3 = theta_m
                * k_p.powf(m)
                * sigma_max.powf(m + 1.0)
                * (log_pow / (nf * l_n)).powf((m + 1.0) / 3.0);
            let t4 = theta_m * k_p.powf(m + 2.0) / (sigma_max * sigma_max * nf.powf(2.0 / 3.0));
            echo.insert("log_epn".into(), lepn);
            Ok(RateBundle::assemble(
                TheoremTag::C37,
                vec![
                    term("main", t1, "Theta_m*phi_acm*(L_n^2*log^4(ep)/n)^{1/6}"),
                    term("heavy_tail", t2, "alpha-dependent heavy-tail term"),
                    term("third_moment", t3, "Theta_m*K_p^m*sigma_max^{m+1}*(log-power/(n*L_n))^{(m+1)/3}"),
                    term("deep_tail", t4, "Theta_m*K_p^{m+2}/(sigma_max^2*n^{2/3})"),
                ],
                echo,
                Some(ValidityRecord {
                    constraint: "n >= Theta*K_p^3*L_n^{-1}*(2e*log(ep))^{1+3/alpha}".into(),
                    satisfied: true,
                }),
            ))
        }
        SubWeibullKind::C37c => {
            if !(m >= 1.0) {
                return Err(Error::invalid("m", "this display requires m >= 1"));
            }
            let guard = alpha * ((2.0_f64).powf(3.0 + 2.5 * m) * nf / le).ln();
            if !(guard >= m + 2.0) {
                return Err(Error::GuardViolated(format!(
                    "requires alpha*log(2^{{3+5m/2}}*n/log(ep)) >= m+2; got {guard:.4}"
                )));
            }
            let nu_m = pm.nu(m)?;
            let branch1 = ((2.0_f64).powf(2.0 + 1.5 * m) * c0 * frak_c.exp() * l_n * le * le)
                .powf(1.0 / 3.0)
                / nf.powf(1.0 / 6.0);
            let branch2 = theta_alpha_m
                * (std::f64::consts::E * alpha).powf(1.0 / alpha)
                * le.powf(1.0 + 1.0 / alpha)
                / nf.sqrt()
                * (2.0 * c0 * nf / le).ln().powf(1.0 / alpha);
            let eps_n = branch1.max(branch2);
            let t1 = (2.0_f64).powf(m / 2.0) * (nu_m * (2.0_f64).powf(-nf / 2.0)).powf(m);
            let t2 = (2.0_f64).powf(2.0 + 2.0 * m) * eps_n.powf(m);
            let t3 = 2.4 * phi_acm * eps_n;
            echo.insert("nu_m".into(), nu_m);
            echo.insert("eps_n".into(), eps_n);
            Ok(RateBundle::assemble(
                TheoremTag::C37,
                vec![
                    term("geometric", t1, "2^{m/2}*(nu_m/2^{n/2})^m"),
                    term("smoothing_power", t2, "2^{2+2m}*eps_n^m"),
                    term("anticonc", t3, "2.4*phi_acm*eps_n"),
                ],
                echo,
                Some(ValidityRecord {
                    constraint: "alpha*log(2^{3+5m/2}*n/log(ep)) >= m+2".into(),
                    satisfied: true,
                }),
            ))
        }
    }
}

/// Heavy-tail correction in the simplified sub-Weibull remark:
/// 0 for alpha > 1, ((log(ep))^{5/4+3/alpha}/n)^{(m+1)/3} for alpha in (0, 1].
pub fn subweibull_simplified_correction(alpha: f64, p: usize, n: u64, m: f64) -> f64 {
    if alpha > 1.0 {
        0.0
    } else {
        (log_ep(p).powf(1.25 + 3.0 / alpha) / n as f64).powf((m + 1.0) / 3.0)
    }
}

/// How beta in the moment-difference bound is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    Explicit(f64),
    /// beta = 1/log(mu); valid only for mu > 1.
    PaperDefault,
}

/// |E||S_n||^m - E||U_{n,0}||^m| <= slack*[m mu (L_n log^2(ep))^{1/3}/n^{1/6}
///   + (m/beta) mu^{m+beta+1} (L_n log^2(ep))^{1/3}/n^{1/6}].
pub fn moment_diff_bound(
    m: f64,
    beta_choice: BetaChoice,
    mu: f64,
    pm: &dyn PseudoMoments,
    p: usize,
    n: u64,
    slack: f64,
) -> Result<RateBundle> {
    if !(m >= 1.0) {
        return Err(Error::invalid("m", "moment order must be >= 1"));
    }
    let beta = match beta_choice {
        BetaChoice::Explicit(b) => {
            if !(b > 0.0) {
                return Err(Error::invalid("beta", "must be positive"));
            }
            b
        }
        BetaChoice::PaperDefault => {
            if !(mu > 1.0) {
                return Err(Error::invalid(
                    "beta",
                    "the default beta = 1/log(mu) requires mu > 1 (log(mu) <= 0 otherwise)",
                ));
            }
            1.0 / mu.ln()
        }
    };
    let l_n = pm.l_n()?;
    let le = log_ep(p);
    let rate = (l_n * le * le).powf(1.0 / 3.0) / (n as f64).powf(1.0 / 6.0);
    let t1 = slack * m * mu * rate;
    let t2 = slack * (m / beta) * mu.powf(m + beta + 1.0) * rate;
    Ok(RateBundle::assemble(
        TheoremTag::RMK38,
        vec![
            term("uniform_part", t1, "slack*m*mu*(L_n*log^2(ep))^{1/3}/n^{1/6}"),
            term(
                "weighted_part",
                t2,
                "slack*(m/beta)*mu^{m+beta+1}*(L_n*log^2(ep))^{1/3}/n^{1/6}",
            ),
        ],
        echo_map(&[
            ("n", n as f64),
            ("p", p as f64),
            ("m", m),
            ("beta", beta),
            ("mu", mu),
            ("slack", slack),
            ("l_n", l_n),
        ]),
        None,
    ))
}

/// Recomputes a bundle purely from its inputs echo. Serialization round-trips
/// therefore reproduce the total to the last bit.
pub fn reevaluate(bundle: &RateBundle) -> Result<RateBundle> {
    let e = |k: &str| bundle.echo(k);
    let n = e("n")? as u64;
    let p = e("p")? as usize;
    match bundle.theorem {
        TheoremTag::T31 => {
            let pm = FixedPseudoMoments {
                l_n: e("l_n")?,
                m_n: e("m_n_at_eps_n")?,
                lbar: e("lbar_n0")?,
                nu: 0.0,
            };
            rate_uniform_t31(&pm, p, n, e("c0")?, e("frak_c")?, e("phi_ac0")?)
        }
        TheoremTag::E32 => {
            let pm = FixedPseudoMoments {
                l_n: e("l_n")?,
                m_n: 0.0,
                lbar: 0.0,
                nu: e("nu_2_tau")?,
            };
            rate_finite_moment(&pm, p, n, e("tau")?, e("phi_ac0")?, e("slack")?)
        }
        TheoremTag::APPA => {
            let pm = FixedPseudoMoments {
                l_n: e("l_n_tau")?,
                m_n: 0.0,
                lbar: 0.0,
                nu: e("nu_2_tau")?,
            };
            rate_finite_moment(&pm, p, n, e("tau")?, e("phi_ac0")?, e("slack")?)
        }
        TheoremTag::P32 => rate_prop32(e("nu_3")?, p, n, e("phi_ac0")?, e("c0")?),
        TheoremTag::T33 => {
            let pm = FixedPseudoMoments {
                l_n: e("l_n")?,
                m_n: 0.0,
                lbar: 0.0,
                nu: e("nu_2_tau")?,
            };
            rate_optimal_t33(&pm, p, n, e("tau")?, e("phi_ac0")?, e("slack")?)
        }
        TheoremTag::T34 => {
            let pm = FixedPseudoMoments {
                l_n: e("l_n")?,
                m_n: e("m_n_at_scaled_eps")?,
                lbar: e("lbar_nm")?,
                nu: 0.0,
            };
            rate_nonuniform_t34(
                &pm,
                p,
                n,
                e("m")?,
                e("r_nm")?,
                Some(e("tail_sup")?),
                e("phi_acm")?,
                e("phi_ac0")?,
                e("c0")?,
                e("frak_c")?,
            )
        }
        TheoremTag::T35 => {
            // nu differs per order; rebuild via a two-value table.
            let pm = TwoNuMoments {
                l_n: e("l_n")?,
                m: e("m")?,
                nu_m: e("nu_m")?,
                tau: e("tau")?,
                nu_2_tau: e("nu_2_tau")?,
            };
            rate_nonuniform_t35(
                &pm,
                p,
                n,
                e("m")?,
                e("tau")?,
                e("phi_acm")?,
                e("c0")?,
                e("frak_c")?,
            )
        }
        TheoremTag::C36 | TheoremTag::C37 => {
            let kind = SubWeibullKind::from_code(e("kind_code")?)?;
            let pm = FixedPseudoMoments {
                l_n: e("l_n")?,
                m_n: 0.0,
                lbar: 0.0,
                nu: bundle.inputs_echo.get("nu_m").copied().unwrap_or(0.0),
            };
            let params = SubWeibullParams {
                kind,
                k_p: e("k_p")?,
                alpha: e("alpha")?,
                p,
                n,
                m: e("m")?,
                sigma_max: e("sigma_max")?,
                phi_ac0: e("phi_ac0")?,
                phi_acm: e("phi_acm")?,
                theta: e("theta")?,
                theta_alpha: e("theta_alpha")?,
                theta_m: e("theta_m")?,
                theta_alpha_m: e("theta_alpha_m")?,
                c0: e("c0")?,
                frak_c: e("frak_c")?,
            };
            rate_subweibull(&params, &pm)
        }
        TheoremTag::RMK38 => {
            let pm = FixedPseudoMoments {
                l_n: e("l_n")?,
                m_n: 0.0,
                lbar: 0.0,
                nu: 0.0,
            };
            moment_diff_bound(
                e("m")?,
                BetaChoice::Explicit(e("beta")?),
                e("mu")?,
                &pm,
                p,
                n,
                e("slack")?,
            )
        }
        TheoremTag::T51 => super::cramer::reevaluate_t51(bundle),
        TheoremTag::C52 => super::cramer::reevaluate_c52(bundle),
    }
}

/// Pseudo-moment table that distinguishes nu_m from nu_{2+tau} (used when
/// re-evaluating bundles that consumed two different nu orders).
struct TwoNuMoments {
    l_n: f64,
    m: f64,
    nu_m: f64,
    tau: f64,
    nu_2_tau: f64,
}

impl PseudoMoments for TwoNuMoments {
    fn l_n(&self) -> Result<f64> {
        Ok(self.l_n)
    }
    fn l_n_tau(&self, _tau: f64) -> Result<f64> {
        Ok(self.l_n)
    }
    fn m_n(&self, _phi: f64) -> Result<f64> {
        Ok(0.0)
    }
    fn lbar(&self, _m: f64) -> Result<f64> {
        Ok(0.0)
    }
    fn nu(&self, q: f64) -> Result<f64> {
        if (q - self.m).abs() < 1e-12 {
            Ok(self.nu_m)
        } else if (q - 2.0 - self.tau).abs() < 1e-12 {
            Ok(self.nu_2_tau)
        } else {
            Err(Error::MissingInput("nu at an unechoed order"))
        }
    }
}
