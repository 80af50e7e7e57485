//! Execution-mode switch for the per-file corpus stages.
//!
//! With the default `parallel` feature the map fans out over rayon;
//! without it the same call compiles to a plain sequential loop. Either
//! way output order follows input order, so artifacts are byte-identical
//! across modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Use the current rayon pool (the global one unless the caller
    /// installed a scoped pool). Falls back to sequential when the
    /// `parallel` feature is disabled.
    Parallel,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
pub fn map_vec<T, U, F>(mode: Parallelism, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    match mode {
        Parallelism::Sequential => items.into_iter().map(f).collect(),
        Parallelism::Parallel => items.into_par_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_vec<T, U, F>(_mode: Parallelism, items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_both_modes() {
        let input: Vec<u32> = (0..512).collect();
        let seq = map_vec(Parallelism::Sequential, input.clone(), |x| x * 2);
        let par = map_vec(Parallelism::Parallel, input, |x| x * 2);
        assert_eq!(seq, par);
        assert_eq!(seq[511], 1022);
    }
}
