//! Secure MU-MISO downlink optimization with a flexible cylindrical array.
//!
//! A transmitter with `M` rotatable rings of `N` antennas serves `K` users
//! while an eavesdropper listens to user 1's stream. The library jointly
//! optimizes transmit beamforming, the artificial-noise covariance, and the
//! antenna placement (ring angles and heights) under secrecy, power, and
//! spacing constraints, by block coordinate descent:
//!
//! * closed-form fractional-programming auxiliary updates ([`fp`]),
//! * a semidefinite relaxation with constructive rank-one recovery for the
//!   beams and AN covariance ([`beamform`], backed by the [`conic`] solver),
//! * Nesterov-accelerated projected gradient ascent over antenna positions
//!   with a successive-convex-approximation secrecy projection
//!   ([`placement`]),
//!
//! orchestrated by [`bcd`] and driven at scale by the Monte Carlo
//! experiment [`harness`] and the `fcla` CLI.
//!
//! Monte Carlo trials run data-parallel through `rayon` when the default
//! `parallel` feature is enabled; disabling it falls back to sequential
//! execution with byte-identical outputs.

// validation guards use `!(x > 0.0)` so NaN input is rejected along with
// out-of-range values; the suggested partial_cmp form obscures that
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcd;
pub mod beamform;
pub mod channel;
pub mod fp;
pub mod harness;
pub mod kv;
pub mod metrics;
pub mod placement;
pub mod scenario;

/// Execution mode for embarrassingly parallel trial batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    /// Use the rayon pool when the `parallel` feature is on; otherwise
    /// degrades to sequential.
    Parallel,
    Sequential,
}

impl ExecMode {
    pub fn effective_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Maps `f` over `0..n`, preserving index order in the output regardless of
/// scheduling.
pub fn run_indexed<T, F>(n: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..n).map(f).collect()
}
