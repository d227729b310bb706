//! Data-parallel helper for per-cell loops.
//!
//! Output slices are split into disjoint chunks and filled on scoped
//! threads; no reductions cross a chunk boundary, so results are
//! bit-identical for any thread count. `PMED_THREADS` caps the width.

use std::sync::OnceLock;

static WIDTH: OnceLock<usize> = OnceLock::new();

/// Data-parallel width: min(available cores, PMED_THREADS), at least 1.
pub fn thread_width() -> usize {
    *WIDTH.get_or_init(|| {
        let avail = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        match std::env::var("PMED_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
        {
            Some(cap) if cap >= 1 => avail.min(cap),
            _ => avail,
        }
    })
}

/// Fill `out[i] = f(i)` using up to `width` threads.
pub fn fill_indexed<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    let n = out.len();
    let width = width.max(1).min(n.max(1));
    if width == 1 || n < 4096 {
        for (i, v) in out.iter_mut().enumerate() {
            *v = f(i);
        }
        return;
    }
    let chunk = n.div_ceil(width);
    std::thread::scope(|scope| {
        for (c, part) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let base = c * chunk;
                for (i, v) in part.iter_mut().enumerate() {
                    *v = f(base + i);
                }
            });
        }
    });
}
