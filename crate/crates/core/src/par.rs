//! Parallel/sequential dispatch.
//!
//! With the default `parallel` feature the helpers fan work out over rayon;
//! without it they run plain sequential loops. Callers must pass pure
//! per-index closures so results are identical in both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Caps worker parallelism for the whole process. Call once, before any
/// parallel work; later calls fail once the pool exists. Without the
/// `parallel` feature this is a no-op.
pub fn configure_threads(n: usize) -> crate::error::Result<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| crate::error::Error::InvalidParameter(e.to_string()))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}

/// Maps `0..n` through `f`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Splits `0..n` into chunks, maps each chunk to a partial value, and folds the
/// partials in chunk order. The fold order is fixed, so the combined value does
/// not depend on thread scheduling.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    assert!(chunk > 0);
    let ranges: Vec<_> = (0..n.div_ceil(chunk))
        .map(|c| (c * chunk)..((c + 1) * chunk).min(n))
        .collect();
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let v = map_indexed(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn map_chunks_covers_all_and_keeps_order() {
        let parts = map_chunks(10, 3, |r| r.collect::<Vec<_>>());
        let flat: Vec<_> = parts.into_iter().flatten().collect();
        assert_eq!(flat, (0..10).collect::<Vec<_>>());
    }
}
