//! Sifting, error and visibility estimation, decoy-state bounds and secret
//! key rates.

mod decoy;
mod keyrate;
mod sifting;
mod stats;

pub use decoy::{decoy_estimate, ClassObservation, DecoyEstimate, DecoyInput, VACUUM_ERROR_RATE};
pub use keyrate::{
    bb84_secret_fraction, key_rate_bb84, key_rate_cow, key_rate_dps, DistributedPhaseInputs,
    EveBound, KeyRateReport, OptimisticDefault,
};
pub use sifting::{
    estimate_visibility, sift_bb84, sift_cow, sift_dps, Bb84Truth, COW_DATA, COW_MONITOR_MINUS,
    COW_MONITOR_PLUS,
};
pub use stats::{BasisCounts, ClassCounts, Estimate, InterferenceCounts, SiftedStats};
