//! Bernoulli first-passage percolation on the triangular lattice.
//!
//! The crate simulates site configurations where each site of the triangular
//! lattice is independently open (blue, weight 0) with probability `p` or
//! closed (yellow, weight 1) with probability `1 - p`, and provides exact
//! combinatorial machinery on top of those configurations:
//!
//! * [`lattice`] - sites, finite regions, boundary operators, circuits;
//! * [`config`] - seeded coupling fields, thresholded configurations, and a
//!   binary file format for both;
//! * [`fpp`] - passage times, geodesics, and annulus crossing times via
//!   deterministic 0-1 breadth-first search;
//! * [`circuits`] - disjoint circuit decompositions of annuli, cluster
//!   boundary loops, the color-switch transformation, and arm events;
//! * [`clustergraph`] - cluster partitions, cluster-adjacency graphs, loop
//!   graphs, double circuits, and finite-component audits;
//! * [`nearcritical`] - crossing probabilities, finite-size correlation
//!   lengths, and coupled off-critical sweeps;
//! * [`cle`] - the nesting-rate functions of the scaling limit (log-mgf,
//!   Legendre transform, nesting exponent);
//! * [`harness`] - experiment specs, deterministic parallel campaigns, and
//!   CSV/JSON artifact output.

pub mod cle;
pub mod circuits;
pub mod clustergraph;
pub mod config;
mod error;
pub mod fpp;
pub mod harness;
pub mod lattice;
pub mod nearcritical;
mod util;

pub use error::{DecodeError, Error, Result};

/// Closed-form constants the simulations are expected to reproduce.
pub mod consts {
    /// Density of disjoint circuits around a point per unit of `log` scale,
    /// `1 / (2 * sqrt(3) * pi)`; also the growth rate of point-to-boundary
    /// passage times divided by `log n`.
    pub const CIRCUIT_DENSITY: f64 = 0.091_888_149_236_965_35;

    /// Growth rate of point-to-point passage times divided by `log n`,
    /// `1 / (sqrt(3) * pi)`, twice [`CIRCUIT_DENSITY`].
    pub const POINT_DENSITY: f64 = 0.183_776_298_473_930_7;

    /// Growth rate of the passage-time variance divided by `log n`,
    /// `2 / (3 * sqrt(3) * pi) - 1 / (2 * pi * pi)`.
    pub const VARIANCE_DENSITY: f64 = 0.071_856_940_494_784_9;

    /// Polynomial decay exponent of the one-arm event at criticality, `5/48`.
    pub const ONE_ARM_EXPONENT: f64 = 5.0 / 48.0;

    /// Slope of the log-mgf of the nesting law at the origin,
    /// `2 * sqrt(3) * pi`, the reciprocal of [`CIRCUIT_DENSITY`].
    pub const NESTING_MGF_SLOPE: f64 = 10.882_796_185_405_306;
}

#[cfg(test)]
mod consts_tests {
    use super::consts::*;

    #[test]
    fn closed_forms_match_their_digits() {
        let pi = std::f64::consts::PI;
        let s3 = 3.0f64.sqrt();
        assert!((CIRCUIT_DENSITY - 1.0 / (2.0 * s3 * pi)).abs() < 1e-16);
        assert!((POINT_DENSITY - 1.0 / (s3 * pi)).abs() < 1e-16);
        assert!((POINT_DENSITY - 2.0 * CIRCUIT_DENSITY).abs() < 1e-16);
        assert!((VARIANCE_DENSITY - (2.0 / (3.0 * s3 * pi) - 1.0 / (2.0 * pi * pi))).abs() < 1e-16);
        assert!((NESTING_MGF_SLOPE - 2.0 * s3 * pi).abs() < 1e-12);
        assert!((NESTING_MGF_SLOPE * CIRCUIT_DENSITY - 1.0).abs() < 1e-15);
    }
}
