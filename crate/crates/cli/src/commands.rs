//! Subcommand execution: each runner materializes its defaults into the
//! config, validates, calls the core engines, and returns a JSON result
//! plus an optional plot-ready CSV table.

use std::path::Path;

use serde_json::{json, Value};

use hdclt_core::constants::{
    anticonc_constants_with_policy, cramer_constants, cramer_subweibull_c52, phi_ac_m,
    rate_finite_moment, rate_nonuniform_t34, rate_nonuniform_t35, rate_optimal_t33, rate_prop32,
    rate_subweibull, rate_uniform_t31, SubWeibullKind, SubWeibullParams,
};
use hdclt_core::empproc::{estimate_zn, gaussian_width_bound, XiDist};
use hdclt_core::experiments::{
    estimate_cramer_ratio, estimate_delta, estimate_moment_diff, lindeberg_path, GridPolicy,
};
use hdclt_core::posi::{simulate_max_t, DesignMatrix, RipOutcome, VarY};
use hdclt_core::randvec::{FamilyPseudoMoments, FixedPseudoMoments, PseudoMoments};
use hdclt_core::smoothmax::{certify_derivative_bounds, certify_stability, SmoothMaxParams};
use hdclt_core::{Error, DEFAULT_C0, DEFAULT_FRAK_C, DEFAULT_SLACK};

use crate::config::Cfg;

/// A plot-ready table with a fixed header.
pub struct Csv {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub struct CommandOutput {
    pub result: Value,
    pub csv: Option<Csv>,
}

pub enum CliError {
    /// Aggregated schema violations (named key + reason each).
    Invalid,
    /// A core engine rejected the run.
    Engine(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Engine(e)
    }
}

type CmdResult = Result<CommandOutput, CliError>;

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn bail_on_issues(cfg: &Cfg) -> Result<(), CliError> {
    if cfg.issues().is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid)
    }
}

/// Pseudo-moments: pinned values when any `pm.*` key is present (all four
/// materialize defaults), otherwise Monte Carlo bounds from the configured
/// family at the run's seed.
fn pseudo_moments(cfg: &mut Cfg, n: usize, seed: u64) -> Option<Box<dyn PseudoMoments>> {
    let use_family = cfg.has("family.base") && !cfg.has("pm.l_n");
    if use_family {
        cfg.default_value("pm.mc_reps", 20_000);
        let family = cfg.family()?;
        let reps = cfg.usize_of("pm.mc_reps");
        Some(Box::new(
            FamilyPseudoMoments::new(family, n, seed).with_mc_reps(reps),
        ))
    } else {
        cfg.default_value("pm.l_n", 1.0);
        cfg.default_value("pm.m_n", 0.1);
        cfg.default_value("pm.lbar", 1.0);
        cfg.default_value("pm.nu", 1.0);
        Some(Box::new(FixedPseudoMoments {
            l_n: cfg.f64_of("pm.l_n"),
            m_n: cfg.f64_of("pm.m_n"),
            lbar: cfg.f64_of("pm.lbar"),
            nu: cfg.f64_of("pm.nu"),
        }))
    }
}

pub fn run_constants(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("n", 1_000);
    cfg.default_value("p", 1);
    cfg.default_value("m", 1.0);
    cfg.default_value("tau", 1.0);
    cfg.default_value("r", 1.0);
    cfg.default_value("c0", DEFAULT_C0);
    cfg.default_value("frak_c", DEFAULT_FRAK_C);
    cfg.default_value("slack", DEFAULT_SLACK);
    cfg.default_value("theta_policy", "numeric");
    cfg.default_value("mu", 1.0);
    cfg.default_value("sigma_min", 1.0);
    cfg.default_value("sigma_max", 1.0);

    let theorem = cfg.str_of("theorem").to_uppercase();
    let n = cfg.u64_of("n");
    let p = cfg.usize_of("p");
    let m = cfg.f64_of("m");
    let tau = cfg.f64_of("tau");
    let r = cfg.f64_of("r");
    let c0 = cfg.f64_of("c0");
    let frak_c = cfg.f64_of("frak_c");
    let slack = cfg.f64_of("slack");
    let policy = cfg.theta_policy("theta_policy");
    let mu = cfg.f64_of("mu");
    let sigma_min = cfg.f64_of("sigma_min");
    let sigma_max = cfg.f64_of("sigma_max");
    let seed = cfg.u64_of("seed");

    if theorem == "T35" && (m < 1.0 || tau < m) {
        cfg.issue(
            "tau",
            format!(
                "Theorem 3.5 needs m >= 1 and tau >= m (got m = {m}, tau = {tau}). \
                 Fix m ≥ 1 and τ ≥ m."
            ),
        );
    }
    let pm = pseudo_moments(cfg, n as usize, seed);
    bail_on_issues(cfg)?;
    let pm = pm.expect("validated above");

    let phi_ac0 = phi_ac_m(mu, sigma_min, sigma_max, 0.0, policy);
    let phi_acm = phi_ac_m(mu, sigma_min, sigma_max, m, policy);

    let subweibull = |cfg: &mut Cfg, kind: SubWeibullKind| -> Result<SubWeibullParams, CliError> {
        cfg.default_value("k_p", 1.0);
        cfg.default_value("alpha", 1.0);
        cfg.default_value("theta", 1.0);
        cfg.default_value("theta_alpha", 1.0);
        cfg.default_value("theta_m", 1.0);
        cfg.default_value("theta_alpha_m", 1.0);
        let params = SubWeibullParams {
            kind,
            k_p: cfg.f64_of("k_p"),
            alpha: cfg.f64_of("alpha"),
            p,
            n,
            m,
            sigma_max,
            phi_ac0,
            phi_acm,
            theta: cfg.f64_of("theta"),
            theta_alpha: cfg.f64_of("theta_alpha"),
            theta_m: cfg.f64_of("theta_m"),
            theta_alpha_m: cfg.f64_of("theta_alpha_m"),
            c0,
            frak_c,
        };
        bail_on_issues(cfg)?;
        Ok(params)
    };

    let bundle = match theorem.as_str() {
        "T31" => rate_uniform_t31(pm.as_ref(), p, n, c0, frak_c, phi_ac0)?,
        "E32" => rate_finite_moment(pm.as_ref(), p, n, tau, phi_ac0, slack)?,
        "P32" => rate_prop32(pm.nu(3.0)?, p, n, phi_ac0, c0)?,
        "T33" => rate_optimal_t33(pm.as_ref(), p, n, tau, phi_ac0, slack)?,
        "T34" => {
            let tail_sup = cfg.opt_f64("tail_sup");
            bail_on_issues(cfg)?;
            rate_nonuniform_t34(pm.as_ref(), p, n, m, r, tail_sup, phi_acm, phi_ac0, c0, frak_c)?
        }
        "T35" => rate_nonuniform_t35(pm.as_ref(), p, n, m, tau, phi_acm, c0, frak_c)?,
        "C36A" => rate_subweibull(&subweibull(cfg, SubWeibullKind::C36a)?, pm.as_ref())?,
        "C36B" => rate_subweibull(&subweibull(cfg, SubWeibullKind::C36b)?, pm.as_ref())?,
        "C37A" => rate_subweibull(&subweibull(cfg, SubWeibullKind::C37a)?, pm.as_ref())?,
        "C37B" => rate_subweibull(&subweibull(cfg, SubWeibullKind::C37b)?, pm.as_ref())?,
        "C37C" => rate_subweibull(&subweibull(cfg, SubWeibullKind::C37c)?, pm.as_ref())?,
        "T51" => {
            cfg.default_value("h", 1.0);
            cfg.default_value("r_queries", "0.5,1,2");
            let h = cfg.f64_of("h");
            let r_queries = cfg.f64_list("r_queries");
            bail_on_issues(cfg)?;
            let bundle =
                anticonc_constants_with_policy(mu, sigma_min, sigma_max, &[m], policy)?;
            let report = cramer_constants(
                h,
                pm.as_ref(),
                mu,
                p,
                n,
                c0,
                frak_c,
                &bundle,
                &r_queries,
            )?;
            let mut rows = vec![
                vec!["b".into(), fmt(report.constants.b)],
                vec!["pi_tilde".into(), fmt(report.constants.pi_tilde)],
                vec!["pi".into(), fmt(report.constants.pi)],
                vec!["big_m".into(), fmt(report.constants.big_m)],
                vec!["frak_b0".into(), fmt(report.constants.frak_b0)],
                vec![
                    "admissible_threshold".into(),
                    fmt(report.constants.admissible_threshold),
                ],
            ];
            for q in &report.queries {
                rows.push(vec![format!("bound(r={})", q.r), fmt(q.bound)]);
            }
            return Ok(CommandOutput {
                result: serde_json::to_value(&report).expect("serializable report"),
                csv: Some(Csv {
                    header: vec!["name", "value"],
                    rows,
                }),
            });
        }
        "C52" => {
            cfg.default_value("k_p", 1.0);
            cfg.default_value("alpha", 1.0);
            cfg.default_value("theta1", 1.0);
            cfg.default_value("theta2", 1.0);
            let k_p = cfg.f64_of("k_p");
            let alpha = cfg.f64_of("alpha");
            let theta1 = cfg.f64_of("theta1");
            let theta2 = cfg.f64_of("theta2");
            bail_on_issues(cfg)?;
            let ld = cramer_subweibull_c52(
                k_p, alpha, sigma_min, sigma_max, mu, p, n, r, theta1, theta2,
            )?;
            return Ok(CommandOutput {
                result: serde_json::to_value(&ld).expect("serializable bound"),
                csv: Some(Csv {
                    header: vec!["name", "value"],
                    rows: vec![
                        vec!["bound".into(), fmt(ld.bound)],
                        vec!["sample_size_ok".into(), ld.sample_size_ok.to_string()],
                        vec!["radius_ok".into(), ld.radius_ok.to_string()],
                    ],
                }),
            });
        }
        other => {
            cfg.issue(
                "theorem",
                format!(
                    "`{other}` is not one of T31, E32, P32, T33, T34, T35, \
                     C36A, C36B, C37A, C37B, C37C, T51, C52"
                ),
            );
            return Err(CliError::Invalid);
        }
    };

    let mut rows = vec![
        vec!["total".into(), fmt(bundle.total)],
        vec!["vacuous".into(), bundle.vacuous.to_string()],
    ];
    for t in &bundle.terms {
        rows.push(vec![t.name.clone(), fmt(t.value)]);
    }
    Ok(CommandOutput {
        result: serde_json::to_value(&bundle).expect("serializable bundle"),
        csv: Some(Csv {
            header: vec!["name", "value"],
            rows,
        }),
    })
}

pub fn run_anticonc(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("mu", 1.0);
    cfg.default_value("sigma_min", 1.0);
    cfg.default_value("sigma_max", 1.0);
    cfg.default_value("m_list", "0,1,2");
    cfg.default_value("theta_policy", "numeric");
    let mu = cfg.f64_of("mu");
    let sigma_min = cfg.f64_of("sigma_min");
    let sigma_max = cfg.f64_of("sigma_max");
    let m_list = cfg.f64_list("m_list");
    let policy = cfg.theta_policy("theta_policy");
    bail_on_issues(cfg)?;

    let bundle = anticonc_constants_with_policy(mu, sigma_min, sigma_max, &m_list, policy)?;
    let mut rows = vec![
        vec!["phi0".into(), fmt(bundle.phi0)],
        vec!["phi1".into(), fmt(bundle.phi1)],
        vec!["phi2".into(), fmt(bundle.phi2)],
        vec!["phi3".into(), fmt(bundle.phi3)],
        vec!["phi4".into(), fmt(bundle.phi4)],
    ];
    for (m, v) in &bundle.phi_ac {
        rows.push(vec![format!("phi_ac({m})"), fmt(*v)]);
    }
    Ok(CommandOutput {
        result: serde_json::to_value(&bundle).expect("serializable bundle"),
        csv: Some(Csv {
            header: vec!["name", "value"],
            rows,
        }),
    })
}

pub fn run_smoothmax_check(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("p", 4);
    cfg.default_value("r", 1.0);
    cfg.default_value("eps", 0.5);
    cfg.default_value("c0", DEFAULT_C0);
    cfg.default_value("frak_c", DEFAULT_FRAK_C);
    cfg.default_value("samples", 1_000);
    cfg.default_value("pairs", 1_000);
    let p = cfg.usize_of("p");
    let r = cfg.f64_of("r");
    let eps = cfg.f64_of("eps");
    let c0 = cfg.f64_of("c0");
    let frak_c = cfg.f64_of("frak_c");
    let samples = cfg.usize_of("samples");
    let pairs = cfg.usize_of("pairs");
    let seed = cfg.u64_of("seed");
    bail_on_issues(cfg)?;

    let params = SmoothMaxParams::new(r, eps, p)?;
    let deriv = certify_derivative_bounds(&params, c0, samples, seed)?;
    let stab = certify_stability(&params, frak_c, pairs, seed)?;

    let mut rows: Vec<Vec<String>> = deriv
        .rows
        .iter()
        .map(|row| {
            vec![
                row.sample_id.to_string(),
                row.quantity.clone(),
                fmt(row.observed),
                fmt(row.bound),
                row.pass.to_string(),
            ]
        })
        .collect();
    rows.push(vec![
        stab.pairs.to_string(),
        "stability_max_log_ratio_excess".into(),
        fmt(stab.max_log_ratio_excess),
        "0".into(),
        stab.pass.to_string(),
    ]);
    Ok(CommandOutput {
        result: json!({
            "derivative": serde_json::to_value(&deriv).expect("serializable"),
            "stability": serde_json::to_value(&stab).expect("serializable"),
        }),
        csv: Some(Csv {
            header: vec!["sample_id", "quantity", "observed", "bound", "pass"],
            rows,
        }),
    })
}

pub fn run_simulate_delta(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("n", 100);
    cfg.default_value("m", 0);
    cfg.default_value("reps", 10_000);
    cfg.default_value("levels", 512);
    cfg.default_value("family.base", "gaussian");
    let family = cfg.family();
    let n = cfg.usize_of("n");
    let m = cfg.u64_of("m") as u32;
    let reps = cfg.usize_of("reps");
    let levels = cfg.usize_of("levels");
    let seed = cfg.u64_of("seed");
    bail_on_issues(cfg)?;
    let family = family.expect("validated above");

    let est = estimate_delta(&family, n, m, reps, &GridPolicy { levels }, seed)?;
    let rows = est
        .rows
        .iter()
        .map(|row| {
            vec![
                fmt(row.r),
                fmt(row.f_s),
                fmt(row.f_u),
                fmt(row.gap),
                fmt(row.se),
            ]
        })
        .collect();
    Ok(CommandOutput {
        result: json!({
            "m": est.m,
            "n": est.n,
            "p": est.p,
            "reps": est.reps,
            "delta_hat": est.delta_hat,
            "argmax_r": est.argmax_r,
            "se_at_argmax": est.se_at_argmax,
            "exact_gaussian_side": est.exact_gaussian_side,
            "truncation_tail_bound": est.truncation_tail_bound,
            "family_id": est.family_id,
            "seed": est.seed,
            "grid_points": est.rows.len(),
        }),
        csv: Some(Csv {
            header: vec!["r", "f_s", "f_u", "gap", "se"],
            rows,
        }),
    })
}

pub fn run_lindeberg(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("n", 100);
    cfg.default_value("r", 1.0);
    cfg.default_value("reps", 10_000);
    let family = cfg.family();
    let n = cfg.usize_of("n");
    cfg.default_value(
        "k_list",
        format!("0,{},{},{},{n}", n / 4, n / 2, 3 * n / 4),
    );
    let r = cfg.f64_of("r");
    let reps = cfg.usize_of("reps");
    let k_list = cfg.usize_list("k_list");
    let seed = cfg.u64_of("seed");
    bail_on_issues(cfg)?;
    let family = family.expect("validated above");

    let path = lindeberg_path(&family, n, &k_list, r, reps, seed)?;
    let rows = path
        .deltas
        .iter()
        .map(|(k, d, se)| vec![k.to_string(), fmt(*d), fmt(*se)])
        .collect();
    Ok(CommandOutput {
        result: serde_json::to_value(&path).expect("serializable path"),
        csv: Some(Csv {
            header: vec!["k", "delta", "se"],
            rows,
        }),
    })
}

pub fn run_large_dev(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("n", 400);
    cfg.default_value("reps", 100_000);
    cfg.default_value("r_list", "0.5,1,2");
    let family = cfg.family();
    let n = cfg.usize_of("n");
    let reps = cfg.usize_of("reps");
    let r_list = cfg.f64_list("r_list");
    let seed = cfg.u64_of("seed");
    bail_on_issues(cfg)?;
    let family = family.expect("validated above");

    let mut rows = Vec::with_capacity(r_list.len());
    let mut results = Vec::with_capacity(r_list.len());
    for &r in &r_list {
        let ratio = estimate_cramer_ratio(&family, n, r, reps, seed)?;
        rows.push(vec![
            fmt(ratio.r),
            ratio.ratio_hat.map(fmt).unwrap_or_default(),
            ratio.se.map(fmt).unwrap_or_default(),
            ratio.resolvable.to_string(),
            fmt(ratio.tail_prob_gaussian),
            ratio.exact_denominator.to_string(),
        ]);
        results.push(serde_json::to_value(&ratio).expect("serializable ratio"));
    }
    Ok(CommandOutput {
        result: Value::Array(results),
        csv: Some(Csv {
            header: vec![
                "r",
                "ratio_hat",
                "se",
                "resolvable",
                "tail_prob_gaussian",
                "exact_denominator",
            ],
            rows,
        }),
    })
}

pub fn run_moments(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("n", 100);
    cfg.default_value("reps", 10_000);
    cfg.default_value("m_list", "1,2");
    let family = cfg.family();
    let n = cfg.usize_of("n");
    let reps = cfg.usize_of("reps");
    let m_list = cfg.usize_list("m_list");
    let seed = cfg.u64_of("seed");
    bail_on_issues(cfg)?;
    let family = family.expect("validated above");

    let mut rows = Vec::with_capacity(m_list.len());
    let mut results = Vec::with_capacity(m_list.len());
    for &m in &m_list {
        let diff = estimate_moment_diff(&family, n, m as u32, reps, seed)?;
        rows.push(vec![m.to_string(), fmt(diff.diff_hat), fmt(diff.se)]);
        results.push(serde_json::to_value(&diff).expect("serializable diff"));
    }
    Ok(CommandOutput {
        result: Value::Array(results),
        csv: Some(Csv {
            header: vec!["m", "diff_hat", "se"],
            rows,
        }),
    })
}

/// Headerless n x d numeric CSV.
fn read_design(path: &Path) -> Result<DesignMatrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Engine(Error::invalid("design", e.to_string())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Engine(Error::invalid("design", e.to_string())))?;
        let row: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| {
            CliError::Engine(Error::invalid("design", format!("non-numeric entry: {e}")))
        })?);
    }
    Ok(DesignMatrix::from_rows(&rows)?)
}

pub fn run_posi(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("k", 1);
    cfg.default_value("alpha", "0.05");
    cfg.default_value("reps", 10_000);
    cfg.default_value("var_y", 1.0);
    let design_path = cfg.str_of("design");
    let k = cfg.usize_of("k");
    let alphas = cfg.f64_list("alpha");
    let reps = cfg.usize_of("reps");
    let var_y = cfg.f64_of("var_y");
    let seed = cfg.u64_of("seed");
    bail_on_issues(cfg)?;

    let design = read_design(Path::new(&design_path))?;
    let result = simulate_max_t(&design, k, &VarY::Scalar(var_y), reps, seed, &alphas)?;
    let kappa = match &result.kappa {
        RipOutcome::Kappa(v) => json!(v),
        RipOutcome::Violated { kappa, offending } => json!({
            "violated": true,
            "kappa": kappa,
            "offending": offending,
        }),
    };
    Ok(CommandOutput {
        result: json!({
            "mu_posi": result.mu_posi,
            "quantiles": result.quantile,
            "kappa": kappa,
            "n_models": result.n_models,
            "k": result.k,
            "reps": result.reps,
            "seed": result.seed,
        }),
        csv: None,
    })
}

pub fn run_empproc(cfg: &mut Cfg) -> CmdResult {
    cfg.default_value("n_list", "16,64,256");
    cfg.default_value("xi", "normal");
    cfg.default_value("reps", 2_000);
    let n_list = cfg.usize_list("n_list");
    let reps = cfg.usize_of("reps");
    let seed = cfg.u64_of("seed");
    let xi = match cfg.str_of("xi").as_str() {
        "normal" => XiDist::Normal,
        "student_t3" => XiDist::StudentT3,
        other => {
            cfg.issue("xi", format!("`{other}` is not one of normal, student_t3"));
            XiDist::Normal
        }
    };
    bail_on_issues(cfg)?;

    let mut rows = Vec::with_capacity(n_list.len());
    let mut results = Vec::with_capacity(n_list.len());
    for &n in &n_list {
        let z = estimate_zn(n, xi, reps, seed)?;
        let w = gaussian_width_bound(n, &|_| 1.0, reps, seed)?;
        rows.push(vec![
            n.to_string(),
            fmt(z.zhat),
            fmt(z.se),
            fmt(w.width),
            fmt(w.se),
        ]);
        results.push(json!({
            "n": n,
            "zhat": z.zhat,
            "se": z.se,
            "width": w.width,
            "se_width": w.se,
            "u_independent": w.u_independent,
        }));
    }
    Ok(CommandOutput {
        result: Value::Array(results),
        csv: Some(Csv {
            header: vec!["n", "zhat", "se", "width", "se_width"],
            rows,
        }),
    })
}
