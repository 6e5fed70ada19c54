//! Index-ordered parallel map. Results come back in index order regardless of
//! the thread count, so reductions over them are deterministic.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Calls `f(i, plane)` for each contiguous plane of `out`.
#[cfg(feature = "parallel")]
pub fn for_each_plane<F: Fn(usize, &mut [f64]) + Sync + Send>(out: &mut [f64], plane: usize, f: F) {
    use rayon::prelude::*;
    out.par_chunks_mut(plane).enumerate().for_each(|(i, p)| f(i, p));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_plane<F: Fn(usize, &mut [f64]) + Sync + Send>(out: &mut [f64], plane: usize, f: F) {
    out.chunks_mut(plane).enumerate().for_each(|(i, p)| f(i, p));
}
