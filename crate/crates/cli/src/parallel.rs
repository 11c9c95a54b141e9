//! Static block scheduling over scoped threads.

use std::thread;

/// Applies `f` to every item with `workers` threads. Worker `w` takes the
/// `w`-th contiguous block of indices; results come back in input order, so
/// the output does not depend on the worker count.
pub fn block_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let n = items.len();
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = n.div_ceil(workers);
    let f = &f;
    thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(b, block)| {
                scope.spawn(move || {
                    block
                        .iter()
                        .enumerate()
                        .map(|(j, t)| f(b * chunk + j, t))
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
