//! Batch helpers for independent work items: encoding many screens, running
//! many replay sessions on separate devices.
//!
//! With the `parallel` feature (on by default) [`par_map`] spreads items over
//! the rayon thread pool; without it it runs in order on the calling thread.
//! Results keep input order either way.

use crate::gui::{encode_gui, EncodedGui, ViewNode};

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

/// Always runs in order on the calling thread.
pub fn map_sequential<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// Whether [`par_map`] uses threads in this build.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

pub fn encode_all(trees: &[ViewNode]) -> Vec<EncodedGui> {
    par_map(trees.iter().collect(), encode_gui)
}

pub fn encode_all_sequential(trees: &[ViewNode]) -> Vec<EncodedGui> {
    map_sequential(trees.iter().collect(), encode_gui)
}
