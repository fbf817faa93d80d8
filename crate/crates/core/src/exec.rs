//! Order-invariant data-parallel maps.
//!
//! Every parallel code path in this crate routes through
//! [`map_indexed`], which writes results by input index and therefore
//! produces bit-identical output whether it runs on one thread or
//! many. With the `parallel` feature disabled (or a single-thread
//! rayon pool installed) it degrades to a plain sequential map.

/// Map `f` over `items`, preserving order.
///
/// With the `parallel` feature and a multi-threaded rayon pool this
/// fans out across threads; results are always collected by index, so
/// the output is independent of scheduling.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if rayon::current_num_threads() > 1 {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Map `f` over `items`, preserving order (sequential build).
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Always-sequential variant, kept as the benchmark baseline.
pub fn map_indexed_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
