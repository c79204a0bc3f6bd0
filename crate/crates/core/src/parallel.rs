//! Worker-count setting and a column-split matrix product.

use nalgebra::DMatrix;
use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(0);

/// Sets the number of worker threads; `0` means one per available core.
pub fn set_threads(n: usize) {
    THREADS.store(n, Ordering::Relaxed);
}

pub fn threads() -> usize {
    match THREADS.load(Ordering::Relaxed) {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
}

/// `a * b`, splitting the columns of `b` across worker threads. The result
/// does not depend on the thread count.
pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = b.ncols();
    let workers = threads().min(cols.div_ceil(64)).max(1);
    if workers == 1 {
        return a * b;
    }
    let chunk = cols.div_ceil(workers);
    let mut out = DMatrix::zeros(a.nrows(), cols);
    let parts: Vec<(usize, DMatrix<f64>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let start = w * chunk;
                let len = chunk.min(cols.saturating_sub(start));
                s.spawn(move || (start, a * b.columns(start, len)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for (start, part) in parts {
        out.columns_mut(start, part.ncols()).copy_from(&part);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_product_matches_serial() {
        let a = DMatrix::from_fn(7, 5, |i, j| (i * 3 + j) as f64 * 0.1);
        let b = DMatrix::from_fn(5, 300, |i, j| ((i + 2 * j) % 11) as f64 - 4.0);
        set_threads(3);
        let p = matmul(&a, &b);
        set_threads(0);
        assert_eq!(p, &a * &b);
    }
}
