//! Sampleable mean-zero distribution families with matched Gaussian partners.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::SeedStream;

use super::cov::{CovFactor, CovarianceSpec};

/// Base law for a standardized (mean-zero, unit-variance) coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaseLaw {
    Gaussian,
    Rademacher,
    /// Symmetrized Weibull tails: X = s * E^{1/alpha} / sqrt(Gamma(1+2/alpha))
    /// with s a fair sign and E unit exponential; alpha in (0, 2].
    SubWeibull { alpha: f64 },
    Laplace,
    /// Student t with df > 2, rescaled to unit variance.
    StudentT { df: f64 },
}

impl BaseLaw {
    pub fn name(&self) -> String {
        match self {
            BaseLaw::Gaussian => "gaussian".into(),
            BaseLaw::Rademacher => "rademacher".into(),
            BaseLaw::SubWeibull { alpha } => format!("subweibull({alpha})"),
            BaseLaw::Laplace => "laplace".into(),
            BaseLaw::StudentT { df } => format!("student_t({df})"),
        }
    }
}

/// An iid sequence of mean-zero random vectors in R^p: standardized base-law
/// coordinates pushed through a covariance square root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionFamily {
    pub base: BaseLaw,
    pub covariance: CovarianceSpec,
}

impl DistributionFamily {
    pub fn new(base: BaseLaw, covariance: CovarianceSpec) -> Result<Self> {
        match &base {
            BaseLaw::SubWeibull { alpha } => {
                if !(*alpha > 0.0 && *alpha <= 2.0) {
                    return Err(Error::invalid("alpha", "sub-Weibull index must lie in (0, 2]"));
                }
            }
            BaseLaw::StudentT { df } => {
                if !(*df > 2.0) {
                    return Err(Error::invalid(
                        "df",
                        "student_t needs df > 2 for a finite variance",
                    ));
                }
            }
            _ => {}
        }
        Ok(DistributionFamily { base, covariance })
    }

    pub fn p(&self) -> usize {
        self.covariance.dim()
    }

    pub fn is_gaussian(&self) -> bool {
        self.base == BaseLaw::Gaussian
    }

    /// The Gaussian family with identical covariance.
    pub fn matched_gaussian(&self) -> DistributionFamily {
        DistributionFamily {
            base: BaseLaw::Gaussian,
            covariance: self.covariance.clone(),
        }
    }

    /// One standardized coordinate draw (mean zero, unit variance).
    pub fn standardized_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.base {
            BaseLaw::Gaussian => StandardNormal.sample(rng),
            BaseLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            BaseLaw::SubWeibull { alpha } => {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let e: f64 = -(1.0 - rng.gen::<f64>()).ln();
                sign * e.powf(1.0 / alpha) / gamma(1.0 + 2.0 / alpha).sqrt()
            }
            BaseLaw::Laplace => {
                // Inverse CDF; scale b = 1/sqrt(2) gives unit variance.
                let u: f64 = rng.gen::<f64>() - 0.5;
                let b = std::f64::consts::FRAC_1_SQRT_2;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            BaseLaw::StudentT { df } => {
                let t = rand_distr::StudentT::new(*df).expect("df validated at construction");
                let raw: f64 = t.sample(rng);
                raw / (df / (df - 2.0)).sqrt()
            }
        }
    }

    /// Fill one row (one vector X_i) using the supplied generator.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R, factor: &CovFactor, out: &mut [f64]) {
        for z in out.iter_mut() {
            *z = self.standardized_draw(rng);
        }
        factor.apply(out);
    }

    /// n independent rows, row-major (n x p). Row i uses the dedicated
    /// sub-stream (replicate, row = i), so output is bit-identical for a
    /// given (family, n, seed stream) regardless of parallelism.
    pub fn sample_matrix(&self, n: usize, streams: &SeedStream, replicate: u64) -> Result<Vec<f64>> {
        let p = self.p();
        let factor = self.covariance.factor()?;
        let mut out = vec![0.0; n * p];
        for (i, row) in out.chunks_exact_mut(p).enumerate() {
            let mut rng = streams.row_rng(replicate, i as u64);
            self.sample_row(&mut rng, &factor, row);
        }
        Ok(out)
    }

    /// E|xi|^q for a standardized coordinate, in closed form.
    /// Errors when the moment diverges (student_t with q >= df).
    pub fn coord_abs_moment(&self, q: f64) -> Result<f64> {
        debug_assert!(q >= 0.0);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        Ok(match &self.base {
            BaseLaw::Gaussian => {
                2.0_f64.powf(q / 2.0) * gamma((q + 1.0) / 2.0) / sqrt_pi
            }
            BaseLaw::Rademacher => 1.0,
            BaseLaw::SubWeibull { alpha } => {
                gamma(1.0 + q / alpha) / gamma(1.0 + 2.0 / alpha).powf(q / 2.0)
            }
            BaseLaw::Laplace => std::f64::consts::FRAC_1_SQRT_2.powf(q) * gamma(q + 1.0),
            BaseLaw::StudentT { df } => {
                if q >= *df {
                    return Err(Error::MomentDiverges {
                        q,
                        family: self.base.name(),
                    });
                }
                let raw = df.powf(q / 2.0) * gamma((q + 1.0) / 2.0) * gamma((df - q) / 2.0)
                    / (sqrt_pi * gamma(df / 2.0));
                raw / (df / (df - 2.0)).powf(q / 2.0)
            }
        })
    }

    /// P(|xi| > t) for a standardized coordinate, t >= 0.
    pub fn coord_tail(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match &self.base {
            BaseLaw::Gaussian => libm::erfc(t / std::f64::consts::SQRT_2),
            BaseLaw::Rademacher => {
                if t < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            BaseLaw::SubWeibull { alpha } => {
                let c = gamma(1.0 + 2.0 / alpha).sqrt();
                (-(c * t).powf(*alpha)).exp()
            }
            BaseLaw::Laplace => (-t * std::f64::consts::SQRT_2).exp().min(1.0),
            BaseLaw::StudentT { df } => {
                let scaled = t * (df / (df - 2.0)).sqrt();
                let dist = statrs::distribution::StudentsT::new(0.0, 1.0, *df)
                    .expect("df validated at construction");
                use statrs::distribution::ContinuousCDF;
                2.0 * (1.0 - dist.cdf(scaled))
            }
        }
    }
}
