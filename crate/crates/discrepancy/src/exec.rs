//! Execution helpers: data-parallel maps and reductions with a sequential
//! fallback when the `parallel` feature is disabled.
//!
//! Every helper here is order-preserving: results are identical, bit for bit,
//! for any worker count, because reductions always combine chunk results in
//! index order over a fixed chunk grid.

/// Chunk size for deterministic fold trees. Fixed so the reduction shape
/// depends only on the input length, never on the scheduler.
pub(crate) const CHUNK: usize = 1024;

#[cfg(feature = "parallel")]
pub use with_pool::*;

#[cfg(feature = "parallel")]
mod with_pool {
    use super::CHUNK;
    use rayon::prelude::*;

    /// Runs `f` inside a dedicated pool with `threads` workers.
    /// `threads == 0` means "use the global pool".
    pub fn install<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
        if threads == 0 {
            f()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool")
                .install(f)
        }
    }

    /// Order-preserving parallel map.
    pub fn map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
        items.par_iter().map(f).collect()
    }

    /// Order-preserving map over indices `0..n`.
    pub fn map_idx<U: Send>(n: usize, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
        (0..n).into_par_iter().map(f).collect()
    }

    /// Deterministic f64 sum: sequential within fixed chunks, chunk results
    /// summed in index order.
    pub fn sum_by<T: Sync>(items: &[T], f: impl Fn(&T) -> f64 + Sync) -> f64 {
        if items.len() <= CHUNK {
            return items.iter().map(&f).sum();
        }
        let partials: Vec<f64> = items
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(&f).sum::<f64>())
            .collect();
        partials.iter().sum()
    }

    /// Runs two closures in parallel.
    pub fn join<A: Send, B: Send>(
        a: impl FnOnce() -> A + Send,
        b: impl FnOnce() -> B + Send,
    ) -> (A, B) {
        rayon::join(a, b)
    }

    /// Deterministic argmin over `0..n` of `f`, ties broken toward the
    /// smallest index. `f` must be pure.
    pub fn argmin_by_key<K: PartialOrd + Send>(n: usize, f: impl Fn(usize) -> K + Sync) -> usize {
        if n <= CHUNK {
            return seq_argmin(0, n, &f);
        }
        let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
        let winners: Vec<usize> = starts
            .par_iter()
            .map(|&s| seq_argmin(s, (s + CHUNK).min(n), &f))
            .collect();
        seq_pick(&winners, &f)
    }

    fn seq_argmin<K: PartialOrd>(lo: usize, hi: usize, f: &impl Fn(usize) -> K) -> usize {
        let mut best = lo;
        let mut best_key = f(lo);
        for i in lo + 1..hi {
            let k = f(i);
            if k < best_key {
                best = i;
                best_key = k;
            }
        }
        best
    }

    fn seq_pick<K: PartialOrd>(cands: &[usize], f: &impl Fn(usize) -> K) -> usize {
        let mut best = cands[0];
        let mut best_key = f(best);
        for &i in &cands[1..] {
            let k = f(i);
            if k < best_key {
                best = i;
                best_key = k;
            }
        }
        best
    }
}

#[cfg(not(feature = "parallel"))]
pub use sequential::*;

#[cfg(not(feature = "parallel"))]
mod sequential {
    use super::CHUNK;

    pub fn install<R>(_threads: usize, f: impl FnOnce() -> R) -> R {
        f()
    }

    pub fn map<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
        items.iter().map(f).collect()
    }

    pub fn map_idx<U>(n: usize, f: impl Fn(usize) -> U) -> Vec<U> {
        (0..n).map(f).collect()
    }

    pub fn sum_by<T>(items: &[T], f: impl Fn(&T) -> f64) -> f64 {
        if items.len() <= CHUNK {
            return items.iter().map(&f).sum();
        }
        let partials: Vec<f64> = items.chunks(CHUNK).map(|c| c.iter().map(&f).sum()).collect();
        partials.iter().sum()
    }

    pub fn join<A, B>(a: impl FnOnce() -> A, b: impl FnOnce() -> B) -> (A, B) {
        (a(), b())
    }

    pub fn argmin_by_key<K: PartialOrd>(n: usize, f: impl Fn(usize) -> K) -> usize {
        let mut best = 0;
        let mut best_key = f(0);
        for i in 1..n {
            let k = f(i);
            if k < best_key {
                best = i;
                best_key = k;
            }
        }
        best
    }
}

/// Number of workers the parallel backend would use (1 without the feature).
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
