//! Execution policy for the data-parallel loops (per-pixel rendering,
//! per-feature tracking, sweep points).
//!
//! Every helper returns results in index order, so output is identical for
//! both policies and for any rayon thread count.

/// How an indexed batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Spread items over the rayon pool. Without the `parallel` feature this
    /// behaves exactly like [`Execution::Sequential`].
    #[default]
    Parallel,
    /// Plain iteration on the calling thread.
    Sequential,
}

impl Execution {
    /// True when work will actually be distributed over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `0..n`, collecting results in index order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fills `out` in chunks of `chunk` elements; `f` receives the chunk index
    /// and the mutable chunk. Used for row-wise image work.
    pub fn for_each_chunk<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        assert!(chunk > 0, "chunk size must be positive");
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        let a = Execution::Parallel.map_indexed(1000, f);
        let b = Execution::Sequential.map_indexed(1000, f);
        assert_eq!(a, b);

        let mut x = vec![0usize; 97];
        let mut y = vec![0usize; 97];
        Execution::Parallel.for_each_chunk(&mut x, 10, |r, c| {
            c.iter_mut().enumerate().for_each(|(j, v)| *v = r * 10 + j)
        });
        Execution::Sequential.for_each_chunk(&mut y, 10, |r, c| {
            c.iter_mut().enumerate().for_each(|(j, v)| *v = r * 10 + j)
        });
        assert_eq!(x, y);
        assert_eq!(x[96], 96);
    }
}
