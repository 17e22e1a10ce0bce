//! Bounded worker-pool map that preserves input order.

use std::collections::VecDeque;
use std::sync::Mutex;

/// Applies `f` to every item using at most `limit` worker threads and
/// returns results in input order, regardless of completion order.
pub fn bounded_map<T, R, F>(items: Vec<T>, limit: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    let workers = limit.clamp(1, n);
    if workers == 1 {
        return items.into_iter().map(f).collect();
    }

    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(items.into_iter().enumerate().collect());
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue poisoned").pop_front();
                let Some((index, item)) = next else { break };
                let result = f(item);
                slots.lock().expect("slots poisoned")[index] = Some(result);
            });
        }
    });

    slots
        .into_inner()
        .expect("slots poisoned")
        .into_iter()
        .map(|slot| slot.expect("worker left a hole"))
        .collect()
}
