//! Bounded top-K selection with a total order.
//!
//! Entries are ordered by score descending, ties broken by ascending position,
//! so selection is deterministic and independent of how the scan is chunked.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// One scored sequence position. Positions are 1-based throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPosition {
    pub position: u32,
    pub score: f64,
}

impl ScoredPosition {
    /// Total "better-than" order: higher score first, then lower position.
    pub fn better_than(&self, other: &Self) -> bool {
        match self.score.total_cmp(&other.score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.position < other.position,
        }
    }
}

// Wrapper whose Ord puts the WORST entry at the top of a BinaryHeap (max-heap),
// so the heap root is the eviction candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Worst(ScoredPosition);

impl Eq for Worst {}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        // self > other  <=>  self is worse than other.
        if self.0.better_than(&other.0) {
            Ordering::Less
        } else if other.0.better_than(&self.0) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    }
}

/// Keeps the K best `ScoredPosition`s seen so far.
#[derive(Debug)]
pub struct TopKCollector {
    k: usize,
    heap: BinaryHeap<Worst>,
}

impl TopKCollector {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub fn push(&mut self, entry: ScoredPosition) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(Worst(entry));
        } else if entry.better_than(&self.heap.peek().expect("non-empty").0) {
            self.heap.pop();
            self.heap.push(Worst(entry));
        }
    }

    /// Merges another collector's survivors into this one.
    pub fn merge(&mut self, other: TopKCollector) {
        for w in other.heap {
            self.push(w.0);
        }
    }

    /// Finishes the selection: entries sorted best-first.
    pub fn into_sorted(self) -> Vec<ScoredPosition> {
        let mut v: Vec<ScoredPosition> = self.heap.into_iter().map(|w| w.0).collect();
        v.sort_by(|a, b| {
            if a.better_than(b) {
                Ordering::Less
            } else if b.better_than(a) {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        });
        v
    }
}

/// Full-sort top-K used by tests and small candidate sets.
pub fn sort_topk(mut entries: Vec<ScoredPosition>, k: usize) -> Vec<ScoredPosition> {
    entries.sort_by(|a, b| {
        if a.better_than(b) {
            Ordering::Less
        } else if b.better_than(a) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    });
    entries.truncate(k);
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn collect_topk(entries: &[ScoredPosition], k: usize) -> Vec<ScoredPosition> {
        let mut c = TopKCollector::new(k);
        for &e in entries {
            c.push(e);
        }
        c.into_sorted()
    }

    #[test]
    fn ties_break_by_ascending_position() {
        let entries = vec![
            ScoredPosition { position: 9, score: 1.0 },
            ScoredPosition { position: 2, score: 1.0 },
            ScoredPosition { position: 5, score: 1.0 },
            ScoredPosition { position: 1, score: 0.5 },
        ];
        let top = collect_topk(&entries, 2);
        assert_eq!(top[0].position, 2);
        assert_eq!(top[1].position, 5);
    }

    #[test]
    fn merge_is_equivalent_to_single_pass() {
        let entries: Vec<_> = (1..=50u32)
            .map(|p| ScoredPosition {
                position: p,
                score: ((p * 7919) % 13) as f64,
            })
            .collect();
        let whole = collect_topk(&entries, 10);
        let mut left = TopKCollector::new(10);
        let mut right = TopKCollector::new(10);
        for &e in &entries[..23] {
            left.push(e);
        }
        for &e in &entries[23..] {
            right.push(e);
        }
        left.merge(right);
        assert_eq!(left.into_sorted(), whole);
    }

    proptest! {
        // Heap selection agrees with a naive sort, including injected ties.
        #[test]
        fn matches_naive_sort(scores in proptest::collection::vec(0u8..8, 1..120), k in 1usize..40) {
            let entries: Vec<_> = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| ScoredPosition { position: i as u32 + 1, score: s as f64 })
                .collect();
            let selected = collect_topk(&entries, k);
            let sorted = sort_topk(entries, k);
            prop_assert_eq!(selected, sorted);
        }

        // The ordering is total: equal scores always order by position.
        #[test]
        fn ordering_is_total_with_ties(positions in proptest::collection::vec(1u32..1000, 2..50)) {
            let entries: Vec<_> = positions
                .iter()
                .map(|&p| ScoredPosition { position: p, score: 1.25 })
                .collect();
            let sorted = sort_topk(entries, positions.len());
            for pair in sorted.windows(2) {
                prop_assert!(pair[0].position <= pair[1].position);
            }
        }
    }
}
