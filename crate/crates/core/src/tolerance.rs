//! Numerical thresholds.
//!
//! Rank decisions use `rank`: an eigenvalue counts as zero iff it is below
//! `rank * max(1, largest)`. Values between that threshold and ten times it
//! are refused rather than guessed.

use serde::{Deserialize, Serialize};

/// Relative rank threshold applied to eigenvalues (squared singular values).
pub const RANK: f64 = 1e-10;

/// Width multiplier of the dead zone above the rank threshold.
pub const DEAD_ZONE: f64 = 10.0;

/// Square-zero tolerance relative to the squared operator norm.
pub const FLAT: f64 = 1e-12;

/// Pairwise inner products of Hodge summands.
pub const ORTH: f64 = 1e-10;

/// Least-squares consistency in the spectral-sequence zig-zag.
pub const ZIGZAG: f64 = 1e-8;

/// Maximum distance of a log-log slope from its rounded integer.
pub const SLOPE: f64 = 0.1;

/// Maximum distance of the extrapolated Str(N P_t) from an integer.
pub const GRADING: f64 = 1e-3;

/// Cap on the number of exterior generators.
pub const GENERATOR_CAP: usize = 6;

/// Cap on the condition number of random Gram matrices.
pub const GRAM_CONDITION: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rank: f64,
    pub flat: f64,
    pub orth: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: RANK,
            flat: FLAT,
            orth: ORTH,
        }
    }
}

/// Residual bounds used by the theorem verifiers.
pub mod bounds {
    pub const VOLUME_RATIO: f64 = 1e-9;
    pub const MAIN_THEOREM: f64 = 1e-6;
    pub const FARBER: f64 = 1e-6;
    pub const GAMMA: f64 = 1e-4;
    pub const GERM_INTERCEPT: f64 = 1e-3;
    pub const SCALING: f64 = 1e-12;
    pub const VARIATION: f64 = 1e-5;
    pub const METRIC_INDEPENDENCE: f64 = 1e-7;
    pub const GAUGE: f64 = 1e-8;
    pub const H0_CONSISTENCY: f64 = 1e-10;
    pub const CONJECTURE: f64 = 1e-6;
}
