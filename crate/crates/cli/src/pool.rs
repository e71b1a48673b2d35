//! Minimal bounded worker pool for per-sample batch work. Items are
//! claimed by index, so results come back in input order regardless of
//! which worker finished first.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every index was claimed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_input_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = map_ordered(&items, 8, |n| n * 2);
        assert_eq!(out, (0..100).map(|n| n * 2).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_worker_counts() {
        let items = vec![1, 2, 3];
        assert_eq!(map_ordered(&items, 0, |n| n + 1), vec![2, 3, 4]);
        assert_eq!(map_ordered(&items, 64, |n| n + 1), vec![2, 3, 4]);
        let empty: Vec<i32> = Vec::new();
        assert!(map_ordered(&empty, 4, |n| *n).is_empty());
    }

    #[test]
    fn every_item_processed_exactly_once() {
        use std::sync::atomic::AtomicUsize;
        let calls = AtomicUsize::new(0);
        let items: Vec<usize> = (0..500).collect();
        let out = map_ordered(&items, 16, |n| {
            calls.fetch_add(1, Ordering::Relaxed);
            *n
        });
        assert_eq!(calls.load(Ordering::Relaxed), 500);
        assert_eq!(out, items);
    }
}
