//! Batch driver for the high-dimensional CLT laboratory.
//!
//! Every run resolves a flat key-value config (file keys overridden by CLI
//! flags, defaults materialized), executes one subcommand, and writes a JSON
//! summary embedding the full resolved config plus, for grid experiments, a
//! plot-ready CSV. Re-running an emitted config reproduces the artifacts
//! byte for byte; the worker count never affects outputs.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use commands::{CliError, CommandOutput, Csv};
use config::Cfg;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "hdclt", version, about = "Numerical laboratory for high-dimensional CLT bounds")]
struct Cli {
    /// Root RNG seed (default 0; echoed into every summary).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the Monte Carlo engines. Outputs never depend on
    /// this value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory for artifacts (default current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Data artifact format for scalar subcommands: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,

    /// Flat key-value config file; CLI flags override its keys.
    #[arg(long, global = true)]
    inputs: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

/// Distribution family and covariance flags shared by the experiment
/// subcommands; each overrides the matching `family.*` / `covariance.*` key.
#[derive(Args)]
struct FamilyArgs {
    /// gaussian | rademacher | laplace | subweibull | student_t
    #[arg(long)]
    family: Option<String>,
    /// Sub-Weibull index (family.alpha).
    #[arg(long)]
    alpha: Option<f64>,
    /// Student-t degrees of freedom (family.df).
    #[arg(long)]
    df: Option<f64>,
    /// Dimension (covariance.p).
    #[arg(long)]
    p: Option<usize>,
    /// diagonal | equicorrelated (covariance.kind).
    #[arg(long)]
    cov: Option<String>,
    /// Equicorrelation coefficient (covariance.rho).
    #[arg(long)]
    rho: Option<f64>,
    /// Common coordinate variance (covariance.sigma2).
    #[arg(long)]
    sigma2: Option<f64>,
}

impl FamilyArgs {
    fn overlay(&self, cfg: &mut Cfg) {
        cfg.override_flag("family.base", self.family.as_deref());
        cfg.override_flag("family.alpha", self.alpha);
        cfg.override_flag("family.df", self.df);
        cfg.override_flag("covariance.p", self.p);
        cfg.override_flag("covariance.kind", self.cov.as_deref());
        cfg.override_flag("covariance.rho", self.rho);
        cfg.override_flag("covariance.sigma2", self.sigma2);
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate one theorem's explicit rate/constant bundle.
    Constants {
        /// T31 | E32 | P32 | T33 | T34 | T35 | C36A..C37C | T51 | C52
        #[arg(long)]
        theorem: Option<String>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long = "frak-c")]
        frak_c: Option<f64>,
        /// Shorthand for --format json.
        #[arg(long)]
        json: bool,
        /// Shorthand for --format csv.
        #[arg(long)]
        csv: bool,
    },
    /// Anti-concentration constant bundle Phi_0..Phi_4, Phi_AC,m.
    Anticonc {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long = "sigma-min")]
        sigma_min: Option<f64>,
        #[arg(long = "sigma-max")]
        sigma_max: Option<f64>,
        /// Comma-separated orders m (m_list).
        #[arg(long = "m-list")]
        m_list: Option<String>,
        /// numeric | unit
        #[arg(long = "theta-policy")]
        theta_policy: Option<String>,
    },
    /// Certify the smooth-max derivative-sum and ratio-stability bounds.
    SmoothmaxCheck {
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long = "frak-c")]
        frak_c: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Monte Carlo estimate of the weighted CLT distance delta_{n,m}.
    SimulateDelta {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        reps: Option<usize>,
        /// Number of pooled quantile grid levels.
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Discrepancy along the Lindeberg interpolation path.
    Lindeberg {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated interpolation indices k (k_list).
        #[arg(long = "k-list")]
        k_list: Option<String>,
    },
    /// Cramer-type tail ratio estimates on a radius grid.
    LargeDev {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated radii (r_list).
        #[arg(long = "r-list")]
        r_list: Option<String>,
    },
    /// Sup-norm moment differences |E||S_n||^m - E||Y||^m|.
    Moments {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated moment orders (m_list).
        #[arg(long = "m-list")]
        m_list: Option<String>,
    },
    /// Post-selection max-|t| simulation over all submodels of size <= k.
    Posi {
        /// Headerless n x d numeric CSV design matrix.
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated miscoverage levels (alpha).
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        /// Common response variance (var_y).
        #[arg(long = "var-y")]
        var_y: Option<f64>,
    },
    /// Multiplier empirical process mean and Gaussian width bound.
    Empproc {
        /// Comma-separated sample sizes (n_list).
        #[arg(long = "n-list")]
        n_list: Option<String>,
        /// normal | student_t3
        #[arg(long)]
        xi: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Constants { .. } => "constants",
            Cmd::Anticonc { .. } => "anticonc",
            Cmd::SmoothmaxCheck { .. } => "smoothmax-check",
            Cmd::SimulateDelta { .. } => "simulate-delta",
            Cmd::Lindeberg { .. } => "lindeberg",
            Cmd::LargeDev { .. } => "large-dev",
            Cmd::Moments { .. } => "moments",
            Cmd::Posi { .. } => "posi",
            Cmd::Empproc { .. } => "empproc",
        }
    }

    fn overlay(&self, cfg: &mut Cfg) {
        match self {
            Cmd::Constants {
                theorem,
                n,
                p,
                m,
                tau,
                r,
                c0,
                frak_c,
                json,
                csv,
            } => {
                cfg.override_flag("theorem", theorem.as_deref());
                cfg.override_flag("n", *n);
                cfg.override_flag("p", *p);
                cfg.override_flag("m", *m);
                cfg.override_flag("tau", *tau);
                cfg.override_flag("r", *r);
                cfg.override_flag("c0", *c0);
                cfg.override_flag("frak_c", *frak_c);
                if *json {
                    cfg.override_flag("format", Some("json"));
                }
                if *csv {
                    cfg.override_flag("format", Some("csv"));
                }
            }
            Cmd::Anticonc {
                mu,
                sigma_min,
                sigma_max,
                m_list,
                theta_policy,
            } => {
                cfg.override_flag("mu", *mu);
                cfg.override_flag("sigma_min", *sigma_min);
                cfg.override_flag("sigma_max", *sigma_max);
                cfg.override_flag("m_list", m_list.as_deref());
                cfg.override_flag("theta_policy", theta_policy.as_deref());
            }
            Cmd::SmoothmaxCheck {
                p,
                r,
                eps,
                c0,
                frak_c,
                samples,
                pairs,
            } => {
                cfg.override_flag("p", *p);
                cfg.override_flag("r", *r);
                cfg.override_flag("eps", *eps);
                cfg.override_flag("c0", *c0);
                cfg.override_flag("frak_c", *frak_c);
                cfg.override_flag("samples", *samples);
                cfg.override_flag("pairs", *pairs);
            }
            Cmd::SimulateDelta {
                family,
                n,
                m,
                reps,
                levels,
            } => {
                family.overlay(cfg);
                cfg.override_flag("n", *n);
                cfg.override_flag("m", *m);
                cfg.override_flag("reps", *reps);
                cfg.override_flag("levels", *levels);
            }
            Cmd::Lindeberg {
                family,
                n,
                r,
                reps,
                k_list,
            } => {
                family.overlay(cfg);
                cfg.override_flag("n", *n);
                cfg.override_flag("r", *r);
                cfg.override_flag("reps", *reps);
                cfg.override_flag("k_list", k_list.as_deref());
            }
            Cmd::LargeDev {
                family,
                n,
                reps,
                r_list,
            } => {
                family.overlay(cfg);
                cfg.override_flag("n", *n);
                cfg.override_flag("reps", *reps);
                cfg.override_flag("r_list", r_list.as_deref());
            }
            Cmd::Moments {
                family,
                n,
                reps,
                m_list,
            } => {
                family.overlay(cfg);
                cfg.override_flag("n", *n);
                cfg.override_flag("reps", *reps);
                cfg.override_flag("m_list", m_list.as_deref());
            }
            Cmd::Posi {
                design,
                k,
                alpha,
                reps,
                var_y,
            } => {
                cfg.override_flag("design", design.as_ref().map(|p| p.display()));
                cfg.override_flag("k", *k);
                cfg.override_flag("alpha", alpha.as_deref());
                cfg.override_flag("reps", *reps);
                cfg.override_flag("var_y", *var_y);
            }
            Cmd::Empproc { n_list, xi, reps } => {
                cfg.override_flag("n_list", n_list.as_deref());
                cfg.override_flag("xi", xi.as_deref());
                cfg.override_flag("reps", *reps);
            }
        }
    }

    fn run(&self, cfg: &mut Cfg) -> Result<CommandOutput, CliError> {
        match self {
            Cmd::Constants { .. } => commands::run_constants(cfg),
            Cmd::Anticonc { .. } => commands::run_anticonc(cfg),
            Cmd::SmoothmaxCheck { .. } => commands::run_smoothmax_check(cfg),
            Cmd::SimulateDelta { .. } => commands::run_simulate_delta(cfg),
            Cmd::Lindeberg { .. } => commands::run_lindeberg(cfg),
            Cmd::LargeDev { .. } => commands::run_large_dev(cfg),
            Cmd::Moments { .. } => commands::run_moments(cfg),
            Cmd::Posi { .. } => commands::run_posi(cfg),
            Cmd::Empproc { .. } => commands::run_empproc(cfg),
        }
    }
}

fn error_record(kind: &str, detail: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "kind": kind, "detail": detail },
    })
}

fn write_csv(path: &Path, csv: &Csv) -> std::io::Result<()> {
    let mut body = format!("# hdclt-csv-schema {SCHEMA_VERSION}\n");
    body.push_str(&csv.header.join(","));
    body.push('\n');
    for row in &csv.rows {
        body.push_str(&row.join(","));
        body.push('\n');
    }
    std::fs::write(path, body)
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(workers) = cli.workers {
        if workers > 0 {
            // Best effort: the pool can only be set once per process, and
            // outputs do not depend on it.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global();
        }
    }

    let mut cfg = match &cli.inputs {
        Some(path) => match Cfg::from_file(path) {
            Ok(c) => c,
            Err(issue) => {
                eprintln!(
                    "{}",
                    serde_json::to_string_pretty(&error_record(
                        "invalid_config",
                        json!({ "issues": [issue] })
                    ))
                    .expect("serializable error")
                );
                return ExitCode::from(2);
            }
        },
        None => Cfg::default(),
    };

    let name = cli.cmd.name();
    // Global keys: flags override the file; defaults materialize last.
    cfg.override_flag("seed", cli.seed);
    cfg.override_flag("workers", cli.workers);
    cfg.override_flag("out", cli.out.as_ref().map(|p| p.display()));
    cfg.override_flag("format", cli.format.as_deref());
    cli.cmd.overlay(&mut cfg);
    cfg.default_value("seed", 0);
    cfg.default_value("workers", 0);
    cfg.default_value("out", ".");
    cfg.default_value("format", "csv");
    if let Some(sub) = cfg.opt_str("subcommand") {
        if sub != name {
            cfg.issue(
                "subcommand",
                format!("config was emitted for `{sub}`, not `{name}`"),
            );
        }
    }
    cfg.default_value("subcommand", name);
    let format = cfg.str_of("format");
    if format != "csv" && format != "json" {
        cfg.issue("format", format!("`{format}` is not one of csv, json"));
    }

    let outcome = if cfg.issues().is_empty() {
        cli.cmd.run(&mut cfg)
    } else {
        Err(CliError::Invalid)
    };

    let output = match outcome {
        Ok(o) => o,
        Err(CliError::Invalid) => {
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&error_record(
                    "invalid_config",
                    json!({ "issues": cfg.issues() })
                ))
                .expect("serializable error")
            );
            return ExitCode::from(2);
        }
        Err(CliError::Engine(e)) => {
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&error_record(
                    "engine",
                    json!({ "message": e.to_string() })
                ))
                .expect("serializable error")
            );
            return ExitCode::from(1);
        }
    };

    let out_dir = PathBuf::from(cfg.resolved().get("out").cloned().unwrap_or_else(|| ".".into()));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!(
            "{}",
            serde_json::to_string_pretty(&error_record(
                "io",
                json!({ "message": format!("cannot create {}: {e}", out_dir.display()) })
            ))
            .expect("serializable error")
        );
        return ExitCode::from(1);
    }

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "subcommand": name,
        "config": cfg.resolved(),
        "result": output.result,
    });
    let summary_text =
        serde_json::to_string_pretty(&summary).expect("serializable summary") + "\n";
    let mut wrote: Vec<String> = Vec::new();

    let json_path = out_dir.join(format!("{name}.json"));
    if let Err(e) = std::fs::write(&json_path, &summary_text) {
        eprintln!(
            "{}",
            serde_json::to_string_pretty(&error_record(
                "io",
                json!({ "message": format!("cannot write {}: {e}", json_path.display()) })
            ))
            .expect("serializable error")
        );
        return ExitCode::from(1);
    }
    wrote.push(json_path.display().to_string());

    // Grid subcommands always get their plot-ready CSV; the scalar bundle
    // subcommands emit one only when the csv format is selected.
    let scalar = matches!(name, "constants" | "anticonc");
    if let Some(csv) = &output.csv {
        if !scalar || format == "csv" {
            let csv_path = out_dir.join(format!("{name}.csv"));
            if let Err(e) = write_csv(&csv_path, csv) {
                eprintln!(
                    "{}",
                    serde_json::to_string_pretty(&error_record(
                        "io",
                        json!({ "message": format!("cannot write {}: {e}", csv_path.display()) })
                    ))
                    .expect("serializable error")
                );
                return ExitCode::from(1);
            }
            wrote.push(csv_path.display().to_string());
        }
    }

    println!("{summary_text}");
    for path in &wrote {
        eprintln!("wrote {path}");
    }
    ExitCode::SUCCESS
}
