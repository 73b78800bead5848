//! Execution modes for the data-parallel kernels.
//!
//! Every helper takes a [`Mode`]. With the `parallel` feature, [`Mode::Parallel`] dispatches to
//! rayon; otherwise only [`Mode::Sequential`] exists. Floating-point reductions split the index
//! range into fixed chunks of [`CHUNK`] and add the chunk partials in order, so the result does not
//! depend on the mode or on the number of threads.

/// Chunk length for deterministic reductions.
pub const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Mode {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Mode::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Mode::Sequential
        }
    }
}

impl Mode {
    pub fn all() -> Vec<Mode> {
        #[cfg(feature = "parallel")]
        {
            vec![Mode::Sequential, Mode::Parallel]
        }
        #[cfg(not(feature = "parallel"))]
        {
            vec![Mode::Sequential]
        }
    }
}

/// Caps the global rayon pool. Only the first call has an effect.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// `(0..n).map(f).collect()`.
pub fn map_range<T, F>(mode: Mode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        Mode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

/// `out[i] = f(i)` for every index.
pub fn fill<T, F>(mode: Mode, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        Mode::Sequential => out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i)),
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i))
        }
    }
}

/// Sum of `f(i)` over `0..n` with a mode-independent rounding order.
pub fn sum_range<F>(mode: Mode, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    };
    map_range(mode, chunks, partial).into_iter().sum()
}

/// Dot product with the same rounding order as [`sum_range`].
pub fn dot(mode: Mode, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_range(mode, a.len(), |i| a[i] * b[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chunked_sum_is_exact_on_integers() {
        for mode in Mode::all() {
            assert_eq!(sum_range(mode, 10_001, |i| i as f64), 50_005_000.0);
            assert_eq!(sum_range(mode, 0, |_| 1.0), 0.0);
        }
    }

    proptest! {
        #[test]
        fn modes_agree_bitwise(v in prop::collection::vec(-1e3f64..1e3, 0..20_000)) {
            let w: Vec<f64> = v.iter().map(|x| x.sin()).collect();
            let sums: Vec<u64> = Mode::all().into_iter().map(|m| dot(m, &v, &w).to_bits()).collect();
            prop_assert!(sums.windows(2).all(|p| p[0] == p[1]));
            let maps: Vec<Vec<f64>> = Mode::all().into_iter().map(|m| map_range(m, v.len(), |i| v[i] * 2.0)).collect();
            prop_assert!(maps.windows(2).all(|p| p[0] == p[1]));
            for m in Mode::all() {
                let mut out = vec![0.0; v.len()];
                fill(m, &mut out, |i| v[i] + 1.0);
                prop_assert_eq!(&out, &maps[0].iter().map(|x| x / 2.0 + 1.0).collect::<Vec<_>>());
            }
        }
    }
}
