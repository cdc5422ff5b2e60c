//! Sampleable high-dimensional distribution families with matched Gaussian
//! counterparts, and computable upper bounds on the pseudo-moment functionals
//! that drive every rate bound.

mod cov;
mod family;
mod pseudo;

pub use cov::{CovFactor, CovarianceSpec};
pub use family::{BaseLaw, DistributionFamily};
pub use pseudo::{
    orlicz_bound, FamilyPseudoMoments, FixedPseudoMoments, MomentMethod, PseudoMomentReport,
    PseudoMoments,
};
