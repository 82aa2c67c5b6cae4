//! Bounded worker pool for batch steps that call remote backends.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

/// Run `work` over `items` on at most `width` threads. Results are handed to
/// `sink` on the calling thread as they complete (not in input order).
pub fn for_each_bounded<T, R, F, S>(items: &[T], width: usize, work: F, mut sink: S)
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
    S: FnMut(usize, R),
{
    let width = width.clamp(1, items.len().max(1));
    if width == 1 {
        for (i, item) in items.iter().enumerate() {
            sink(i, work(i, item));
        }
        return;
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    thread::scope(|scope| {
        for _ in 0..width {
            let tx = tx.clone();
            let next = &next;
            let work = &work;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                if tx.send((i, work(i, &items[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            sink(i, r);
        }
    });
}

/// Like [`for_each_bounded`] but collects results in input order.
pub fn map_bounded<T, R, F>(items: &[T], width: usize, work: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    for_each_bounded(items, width, work, |i, r| slots[i] = Some(r));
    slots
        .into_iter()
        .map(|r| r.expect("every item produces a result"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_for_any_width() {
        let items: Vec<u64> = (0..97).collect();
        for width in [0, 1, 3, 8, 200] {
            let out = map_bounded(&items, width, |i, x| (i as u64) * 10 + x);
            assert_eq!(out, items.iter().map(|x| x * 11).collect::<Vec<_>>());
        }
    }

    #[test]
    fn empty_input_is_fine() {
        let out: Vec<u8> = map_bounded(&[] as &[u8], 4, |_, x| *x);
        assert!(out.is_empty());
    }
}
