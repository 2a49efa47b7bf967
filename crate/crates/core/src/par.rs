//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the hot loops fan out over rayon;
//! without it they run as plain iterators. Results are identical either way:
//! outputs are collected in input order and reductions happen sequentially
//! over that ordered collection, so thread scheduling never changes a bit.

/// Execution policy for a data-parallel loop. `Auto` uses rayon when the
/// `parallel` feature is enabled, `Sequential` forces the fallback path
/// (used by the benchmark suite to compare both).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParMode {
    #[default]
    Auto,
    Sequential,
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<U, F>(mode: ParMode, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode {
        ParMode::Sequential => (0..n).map(f).collect(),
        ParMode::Auto => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Maps `f` over a slice, preserving input order in the output.
pub fn map_slice<'a, T, U, F>(mode: ParMode, items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> U + Sync + Send,
{
    match mode {
        ParMode::Sequential => items.iter().map(f).collect(),
        ParMode::Auto => {
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
    }
}
