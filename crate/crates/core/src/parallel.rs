//! Ordered worker pool sized by `AFNN_THREADS`.

use std::num::NonZeroUsize;

pub const THREADS_ENV: &str = "AFNN_THREADS";

/// Worker count from `AFNN_THREADS`, defaulting to 1 when unset or invalid.
pub fn threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<NonZeroUsize>().ok())
        .map_or(1, NonZeroUsize::get)
}

/// Maps `f` over `items` on up to `threads` scoped workers, each taking a
/// contiguous slice. Results come back in input order, so any reduction
/// over them is independent of the thread count.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
