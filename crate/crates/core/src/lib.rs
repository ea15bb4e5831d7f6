//! Sparse channel estimation for near-field XL-MIMO links.
//!
//! The crate models a Tx/Rx pair of uniform linear arrays whose LoS path sits
//! in the Fresnel region: besides per-side spherical curvature, the LoS
//! channel carries a Tx/Rx coupling window that raises its rank. Channels are
//! estimated from `T x T` compressed pilot observations with a unified
//! LoS/NLoS orthogonal matching pursuit.

pub mod analysis;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod sensing;
pub mod sweep;

pub use error::{Error, Result};
pub use linalg::C64;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order always follows input order.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
