//! Deterministic data-parallel helpers.
//!
//! Work is split into fixed-size chunks whose boundaries depend only on the
//! problem size, never on the number of worker threads. Every chunk owns an
//! independent ChaCha stream selected by its index, and per-chunk partial
//! results are merged with a fixed pairwise tree. Together this makes every
//! Monte Carlo estimate a pure function of `(seed, n, chunk size)`.
//!
//! With the `parallel` feature (default) chunks are processed by rayon;
//! without it the same chunks run sequentially in index order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of Monte Carlo samples (or paths) handled by one RNG stream.
pub const CHUNK: usize = 512;

/// RNG for chunk `index` of the stream family identified by `seed`.
pub fn chunk_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Number of chunks needed to cover `n` items.
pub fn n_chunks(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

/// Evaluates `f` for every chunk index and returns the results in index order.
pub fn map_chunks<T, F>(n_chunks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_chunks).map(f).collect()
    }
}

/// Maps `f` over `0..n` and returns results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_chunks(n, f)
}

/// Runs `f(chunk_index, chunk)` over consecutive chunks of `data` holding
/// `CHUNK * stride` elements each (the last chunk may be shorter).
pub fn for_each_chunk_mut<F>(data: &mut [f64], stride: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let len = (CHUNK * stride).max(1);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(len).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(len).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Allocates `n` rows of `width` values and fills row `i` with `f(i, row)`.
pub fn fill_rows<F>(n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut out = vec![0.0; n * width];
    if width == 0 {
        return out;
    }
    for_each_chunk_mut(&mut out, width, |c, chunk| {
        for (i, row) in chunk.chunks_mut(width).enumerate() {
            f(c * CHUNK + i, row);
        }
    });
    out
}

/// Reduces `items` with `merge` along a balanced binary tree whose shape
/// depends only on `items.len()`.
pub fn pairwise_reduce<T, F>(mut items: Vec<T>, merge: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Pairwise sum of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Running mean / second central moment, mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        let w = other.count as f64 / n as f64;
        Moments {
            count: n,
            mean: self.mean + d * w,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * w,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}
