//! Learned pick refinement for a multi-suction package picker.
//!
//! The pipeline runs scene → sensor frame → perception → candidate picks →
//! features → success scoring, and on top of it training-pair generation,
//! the autoregressive refinement chain, the iterative optimizer and the A/B
//! harness. Every random choice is drawn from a named substream of a master
//! seed (see [`rng::derive_seed`]), so results do not depend on thread
//! scheduling.

pub mod error;
pub mod datagen;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod learn;
pub mod optimize;
pub mod pick;
pub mod rng;
pub mod scene;
pub mod success;

pub use error::{Error, Result};

/// Version written into every file this crate produces; readers reject
/// anything else.
pub const FORMAT_VERSION: u32 = 1;

/// Order-preserving map, parallel when the `parallel` feature is on.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
