//! Data-parallel helpers.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it
//! they run on the calling thread. [`with_sequential`] forces the sequential
//! path at runtime so one binary can compare both. Results are always
//! returned in index order, so reductions done by the caller are
//! deterministic regardless of the execution mode.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` with every helper in this module forced onto the sequential path.
pub fn with_sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// True when the next helper call will fan out over the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Number of worker threads the parallel path would use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            return rayon::current_num_threads();
        }
    }
    1
}

/// Run `f` inside a dedicated pool of `n` workers. Without the `parallel`
/// feature this just calls `f`.
pub fn with_threads<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> crate::Result<R> {
    if n == 0 {
        return Err(crate::Error::InvalidInput("thread count must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    Ok(f())
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// `xs.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<A, T, F>(xs: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return xs.par_iter().map(f).collect();
        }
    }
    xs.iter().map(f).collect()
}

/// Fill `out[i] = f(i)` for every index, possibly in parallel.
pub fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
            return;
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

/// Apply `f(row_index, row)` to consecutive chunks of length `width`.
pub fn for_each_row<T, F>(data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(width > 0);
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            data.par_chunks_mut(width).enumerate().for_each(|(i, r)| f(i, r));
            return;
        }
    }
    for (i, r) in data.chunks_mut(width).enumerate() {
        f(i, r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_override_is_scoped() {
        let outer = is_parallel();
        with_sequential(|| assert!(!is_parallel()));
        assert_eq!(is_parallel(), outer);
    }

    #[test]
    fn helpers_agree_across_modes() {
        let f = |i: usize| (i as f64).sqrt();
        let a = map_range(1000, f);
        let b = with_sequential(|| map_range(1000, f));
        assert_eq!(a, b);
        let mut rows = vec![0usize; 12];
        for_each_row(&mut rows, 4, |r, row| row.iter_mut().for_each(|v| *v = r));
        assert_eq!(rows, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn dedicated_pool_runs_and_rejects_zero() {
        let v = with_threads(2, || map_range(10, |i| i * i)).unwrap();
        assert_eq!(v[9], 81);
        if cfg!(feature = "parallel") {
            assert_eq!(with_threads(2, threads).unwrap(), 2);
        }
        assert!(with_threads(0, || ()).is_err());
    }
}
