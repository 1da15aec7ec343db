//! Local influence analysis on statistical perturbation manifolds.
//!
//! A perturbation scheme `ω` attached to a model `p(Y | θ)` turns the family
//! `{p(Y | θ, ω)}` into a manifold with a Fisher metric, a skewness tensor and
//! a family of α-connections. The crate builds that geometry ([`geometry`]),
//! checks whether the perturbation is appropriate (metric proportional to the
//! identity at the null point) and repairs it when it is not, and computes the
//! first- and second-order influence measures FI, SI and SSI together with the
//! classical normal and conformal curvatures ([`measures`]).
//!
//! [`models`] fits the supported base models (i.i.d., location-scale, linear
//! regression, linear mixed models) and provides every built-in perturbation
//! scheme with closed-form geometry. [`oracle`] holds the independent numerical
//! cross-checks (Monte Carlo metrics, finite-difference probes, geodesic
//! residuals, reparametrization harness).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod likelihood;
pub mod linalg;
pub mod measures;
pub mod models;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod tensor;

pub use error::{InfluenceError, Result};
pub use geometry::{
    appropriateness_report, geodesic_trace, geometry_at, path_distance, rescale_perturbation, tangent_length,
    AppropriatenessVerdict, GeometryAtPoint, PerturbedModel, SampledPath,
};
pub use measures::{influence_report, InfluenceReport, ObjectiveProbe};
pub use tensor::Tensor3;
