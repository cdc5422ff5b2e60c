//! Flat key-value configuration with typed accessors and aggregated
//! validation. Keys use at most one nesting level (`family.base`,
//! `covariance.p`); CLI flags override file keys; every default is
//! materialized into the map so the emitted summary is re-runnable as-is.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use serde::Serialize;

use hdclt_core::constants::ThetaPolicy;
use hdclt_core::randvec::{BaseLaw, CovarianceSpec, DistributionFamily};

/// One named validation failure.
#[derive(Debug, Clone, Serialize)]
pub struct Issue {
    pub key: String,
    pub reason: String,
}

/// Resolved configuration: a flat string map plus the issues accumulated
/// while reading it. Validation is aggregated — every bad key is reported,
/// not just the first.
#[derive(Debug, Clone, Default)]
pub struct Cfg {
    map: BTreeMap<String, String>,
    issues: Vec<Issue>,
}

impl Cfg {
    /// Parses `key = value` lines; `#` starts a comment; blank lines are
    /// skipped. Unknown keys are kept (they are harmless and round-trip).
    pub fn from_file(path: &Path) -> Result<Self, Issue> {
        let text = std::fs::read_to_string(path).map_err(|e| Issue {
            key: "inputs".into(),
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut cfg = Cfg::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    cfg.map.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => {
                    return Err(Issue {
                        key: format!("inputs:{}", lineno + 1),
                        reason: format!("expected `key = value`, got `{line}`"),
                    })
                }
            }
        }
        Ok(cfg)
    }

    /// Inserts `value` only when the key is absent (defaults materialize).
    pub fn default_value(&mut self, key: &str, value: impl Display) {
        self.map
            .entry(key.to_string())
            .or_insert_with(|| value.to_string());
    }

    /// Overrides the key from a CLI flag when the flag was given.
    pub fn override_flag(&mut self, key: &str, flag: Option<impl Display>) {
        if let Some(v) = flag {
            self.map.insert(key.to_string(), v.to_string());
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn issue(&mut self, key: &str, reason: impl Into<String>) {
        self.issues.push(Issue {
            key: key.to_string(),
            reason: reason.into(),
        });
    }

    pub fn issues(&self) -> &[Issue] {
        &self.issues
    }

    /// The resolved map, for embedding into the JSON summary.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    pub fn str_of(&mut self, key: &str) -> String {
        match self.map.get(key) {
            Some(v) => v.clone(),
            None => {
                self.issue(key, "missing required key");
                String::new()
            }
        }
    }

    pub fn opt_str(&self, key: &str) -> Option<String> {
        self.map.get(key).cloned()
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let raw = match self.map.get(key) {
            Some(v) => v.clone(),
            None => {
                self.issue(key, "missing required key");
                return None;
            }
        };
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.issue(key, format!("`{raw}` is not a valid {what}"));
                None
            }
        }
    }

    pub fn f64_of(&mut self, key: &str) -> f64 {
        self.parse::<f64>(key, "number").unwrap_or(f64::NAN)
    }

    pub fn u64_of(&mut self, key: &str) -> u64 {
        self.parse::<u64>(key, "nonnegative integer").unwrap_or(0)
    }

    pub fn usize_of(&mut self, key: &str) -> usize {
        self.parse::<usize>(key, "nonnegative integer").unwrap_or(0)
    }

    pub fn opt_f64(&mut self, key: &str) -> Option<f64> {
        if self.has(key) {
            Some(self.f64_of(key))
        } else {
            None
        }
    }

    pub fn f64_list(&mut self, key: &str) -> Vec<f64> {
        let raw = self.str_of(key);
        let mut out = Vec::new();
        for piece in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match piece.parse::<f64>() {
                Ok(v) => out.push(v),
                Err(_) => self.issue(key, format!("list entry `{piece}` is not a number")),
            }
        }
        if out.is_empty() {
            self.issue(key, "list must contain at least one entry");
        }
        out
    }

    pub fn usize_list(&mut self, key: &str) -> Vec<usize> {
        let raw = self.str_of(key);
        let mut out = Vec::new();
        for piece in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match piece.parse::<usize>() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.issue(key, format!("list entry `{piece}` is not a nonnegative integer"))
                }
            }
        }
        if out.is_empty() {
            self.issue(key, "list must contain at least one entry");
        }
        out
    }

    pub fn theta_policy(&mut self, key: &str) -> ThetaPolicy {
        match self.str_of(key).as_str() {
            "numeric" | "" => ThetaPolicy::Numeric,
            "unit" => ThetaPolicy::Unit,
            other => {
                self.issue(key, format!("`{other}` is not one of numeric, unit"));
                ThetaPolicy::Numeric
            }
        }
    }

    /// Materializes the family/covariance defaults and builds the family.
    /// Keys: family.base, family.alpha, family.df, covariance.kind,
    /// covariance.p, covariance.rho, covariance.sigma2,
    /// covariance.variances.
    pub fn family(&mut self) -> Option<DistributionFamily> {
        self.default_value("family.base", "gaussian");
        self.default_value("covariance.kind", "diagonal");
        self.default_value("covariance.p", 1);
        self.default_value("covariance.sigma2", 1.0);

        let base = match self.str_of("family.base").as_str() {
            "gaussian" => Some(BaseLaw::Gaussian),
            "rademacher" => Some(BaseLaw::Rademacher),
            "laplace" => Some(BaseLaw::Laplace),
            "subweibull" => {
                self.default_value("family.alpha", 1.0);
                Some(BaseLaw::SubWeibull {
                    alpha: self.f64_of("family.alpha"),
                })
            }
            "student_t" => {
                self.default_value("family.df", 5.0);
                Some(BaseLaw::StudentT {
                    df: self.f64_of("family.df"),
                })
            }
            other => {
                self.issue(
                    "family.base",
                    format!(
                        "`{other}` is not one of gaussian, rademacher, laplace, subweibull, student_t"
                    ),
                );
                None
            }
        };

        let p = self.usize_of("covariance.p");
        let cov = match self.str_of("covariance.kind").as_str() {
            "diagonal" => {
                let vars = if self.has("covariance.variances") {
                    self.f64_list("covariance.variances")
                } else {
                    vec![self.f64_of("covariance.sigma2"); p.max(1)]
                };
                CovarianceSpec::diagonal(vars)
            }
            "equicorrelated" => {
                self.default_value("covariance.rho", 0.5);
                CovarianceSpec::equicorrelated(
                    self.f64_of("covariance.rho"),
                    self.f64_of("covariance.sigma2"),
                    p,
                )
            }
            other => {
                self.issue(
                    "covariance.kind",
                    format!("`{other}` is not one of diagonal, equicorrelated"),
                );
                return None;
            }
        };
        let cov = match cov {
            Ok(c) => c,
            Err(e) => {
                self.issue("covariance", e.to_string());
                return None;
            }
        };
        match DistributionFamily::new(base?, cov) {
            Ok(f) => Some(f),
            Err(e) => {
                self.issue("family", e.to_string());
                None
            }
        }
    }
}
