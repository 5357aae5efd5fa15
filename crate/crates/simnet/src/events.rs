//! Deterministic event queue ordered by `(time, kind rank, sequence)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

struct Entry<E> {
    time: u64,
    rank: u8,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<E> Eq for Entry<E> {}

impl<E> Entry<E> {
    fn key(&self) -> (u64, u8, u64) {
        (self.time, self.rank, self.seq)
    }
}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed: BinaryHeap is a max-heap and we want the earliest first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    next_seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }
}

impl<E> EventQueue<E> {
    /// Schedules with the next sequence number.
    pub fn push(&mut self, time: u64, rank: u8, event: E) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.push_with_seq(time, rank, seq, event);
    }

    /// Schedules with a caller-chosen tiebreak.
    pub fn push_with_seq(&mut self, time: u64, rank: u8, seq: u64, event: E) {
        self.heap.push(Entry { time, rank, seq, event });
    }

    /// Pops the earliest event if it is due at or before `now`.
    pub fn pop_due(&mut self, now: u64) -> Option<E> {
        if self.heap.peek().is_some_and(|e| e.time <= now) {
            self.heap.pop().map(|e| e.event)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
