//! Execution mode for batch operations.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] runs on rayon;
//! without it every mode runs sequentially. Results are identical either way:
//! parallel paths only ever use order-preserving maps and associative,
//! commutative reductions over integer counts.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map with at most `width` items in flight. Used for
    /// calls that block on I/O.
    pub fn map_bounded<T, R, F>(self, items: &[T], width: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && width > 1 && items.len() > 1 {
            use rayon::prelude::*;
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(width).build() {
                return pool.install(|| items.par_iter().map(f).collect());
            }
        }
        let _ = width;
        items.iter().map(f).collect()
    }

    /// Mutating pass over a slice with at most `width` items in flight.
    pub fn for_each_bounded<T, F>(self, items: &mut [T], width: usize, f: F)
    where
        T: Send,
        F: Fn(&mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && width > 1 && items.len() > 1 {
            use rayon::prelude::*;
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(width).build() {
                pool.install(|| items.par_iter_mut().for_each(f));
                return;
            }
        }
        let _ = width;
        items.iter_mut().for_each(f);
    }

    /// Fold each item into an accumulator and merge the partial results.
    /// `merge` must be associative and commutative.
    pub fn fold<T, A, I, F, M>(self, items: &[T], init: I, fold: F, merge: M) -> A
    where
        T: Sync,
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, &T) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().fold(&init, &fold).reduce(&init, &merge);
        }
        let _ = &merge;
        items.iter().fold(init(), fold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..10_000).collect();
        for mode in [Exec::Sequential, Exec::Parallel] {
            let sq = mode.map(&xs, |x| x * x);
            assert_eq!(sq[9_999], 9_999 * 9_999);
            let total = mode.fold(&xs, || 0u64, |a, x| a + x, |a, b| a + b);
            assert_eq!(total, 9_999 * 10_000 / 2);
            let b = mode.map_bounded(&xs[..50], 4, |x| x + 1);
            assert_eq!(b, (1..=50).collect::<Vec<_>>());
            let mut ys = xs[..20].to_vec();
            mode.for_each_bounded(&mut ys, 3, |y| *y *= 2);
            assert_eq!(ys[19], 38);
        }
    }
}
