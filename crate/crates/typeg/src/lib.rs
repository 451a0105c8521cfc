//! Multivariate type-G Matérn-SPDE random fields.
//!
//! This crate simulates, estimates, and predicts multivariate random
//! fields defined as stationary solutions of systems of stochastic
//! partial differential equations driven by normal-variance-mixture
//! (type-G) noise. It provides:
//!
//! - finite-element discretisation of the operator system on interval
//!   meshes (d = 1) and planar triangulations (d = 2) ([`mesh`], [`fem`]);
//! - the dependence-matrix parametrisation separating cross-correlations
//!   from higher-moment (non-Gaussian) structure ([`model`]);
//! - four noise constructions based on inverse-Gaussian variance mixing,
//!   from a single global mixing scalar to independent per-dimension
//!   mixing fields ([`noise`]);
//! - GIG/IG/NIG densities and samplers ([`dists`]);
//! - exact simulation of fields and observations, plus analytic and
//!   quadrature oracles for covariances and characteristic functions
//!   ([`simulate`]);
//! - a Gibbs sampler with explicit GIG conditionals, analytic gradients
//!   of the integrated likelihood, and stochastic-gradient maximum
//!   likelihood ([`inference`]);
//! - kriging prediction, Rao-Blackwellised CRPS scoring, and a
//!   leave-one-out cross-validation harness ([`predict`]).
//!
//! The `typeg-cli` crate wires these pieces into the `simulate`, `fit`,
//! `predict`, `cv`, `score`, `cov`, and `cf` commands; the book under
//! `book/` walks through the concepts with runnable snippets.

pub mod data;
pub mod dists;
pub mod error;
pub mod fem;
pub mod inference;
pub mod mesh;
pub mod model;
pub mod noise;
#[doc(hidden)]
pub mod oracles;
pub mod predict;
pub mod quad;
pub mod simulate;
pub mod sparse;
pub mod special;

pub use error::{Error, Result};

/// Deterministic RNG from a seed, used everywhere randomness is needed.
pub fn rng_from_seed(seed: u64) -> rand_chacha::ChaCha12Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha12Rng::seed_from_u64(seed)
}

/// Derive a child RNG seed for substream `index` from a base seed.
///
/// Replicate loops and cross-validation folds draw from per-index
/// substreams so results do not depend on the parallel schedule.
pub fn substream_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finaliser over the pair.
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(doctest)]
mod book {
    //! The guide chapters double as doc-tests so the book snippets and the
    //! library cannot drift apart.
    #[doc = include_str!("../../../book/src/meshes.md")]
    mod meshes {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
}
