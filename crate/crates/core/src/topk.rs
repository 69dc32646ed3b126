use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// `f32` with a total order, for heap keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Score(pub f32);

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Keeps the `k` greatest items seen so far.
pub(crate) struct TopK<T: Ord> {
    k: usize,
    heap: BinaryHeap<Reverse<T>>,
}

impl<T: Ord> TopK<T> {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
        }
    }

    pub(crate) fn push(&mut self, item: T) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(Reverse(item));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if item > *worst {
                self.heap.pop();
                self.heap.push(Reverse(item));
            }
        }
    }

    /// Best first.
    pub(crate) fn into_sorted_vec(self) -> Vec<T> {
        // ascending order of Reverse<T> is descending order of T
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| r.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_largest() {
        let mut t = TopK::new(3);
        for v in [5, 1, 9, 3, 7, 2] {
            t.push(v);
        }
        assert_eq!(t.into_sorted_vec(), vec![9, 7, 5]);
    }

    #[test]
    fn score_orders_with_reverse_id_tiebreak() {
        let mut t = TopK::new(2);
        t.push((Score(1.0), Reverse(3u64)));
        t.push((Score(1.0), Reverse(1u64)));
        t.push((Score(1.0), Reverse(2u64)));
        let ids: Vec<u64> = t
            .into_sorted_vec()
            .into_iter()
            .map(|(_, Reverse(d))| d)
            .collect();
        assert_eq!(ids, vec![1, 2]);
    }
}
