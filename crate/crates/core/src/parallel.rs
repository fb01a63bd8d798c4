//! Data-parallel mapping with a sequential fallback.
//!
//! All heavy loops in this crate are independent work items reduced in a
//! fixed order, so the parallel and sequential paths produce bit-identical
//! results. Without the `parallel` feature rayon is not compiled at all and
//! [`Parallelism::Rayon`] degrades to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for embarrassingly parallel work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Plain single-threaded iteration.
    Sequential,
    /// Rayon work stealing when the `parallel` feature is on.
    #[default]
    Rayon,
}

/// Map `f` over `items`, preserving input order in the output.
pub fn map_collect<T, U, F>(par: Parallelism, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match par {
        Parallelism::Sequential => items.iter().map(f).collect(),
        Parallelism::Rayon => {
            #[cfg(feature = "parallel")]
            {
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().map(f).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_strategies_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_collect(Parallelism::Sequential, &items, |&x| x * x);
        let par = map_collect(Parallelism::Rayon, &items, |&x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[3], 9);
    }
}
