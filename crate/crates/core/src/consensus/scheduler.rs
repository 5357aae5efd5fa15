//! Reputation-proportional batch scheduler.
//!
//! Each institution queues the transactions it received. A batch walks the
//! institutions in descending reputation order, taking up to `quota` slots
//! from each per pass, where the quota is the institution's share of ten
//! slots by reputation among the institutions with pending work. Passes
//! repeat until the batch cap is reached or every queue is empty. In the
//! first pass an institution never takes slots the institutions after it
//! need for their first transaction. Whenever the cap covers the number of
//! queues every one of them is served, so a low-reputation institution
//! cannot be starved by a member that only wants to serve its own
//! transactions.

use std::collections::{BTreeMap, VecDeque};

use crate::MinerId;

/// `max(1, ⌊10·R / ΣR⌋)`, where `ΣR` sums over institutions with pending
/// transactions. A zero total gives everyone a quota of 1.
pub fn quota(reputation: f64, total: f64) -> usize {
    if total.is_nan() || total <= 0.0 {
        return 1;
    }
    // The epsilon keeps values like 0.7 * 10 = 6.999... on the right side.
    let q = (10.0 * reputation.max(0.0) / total + 1e-9).floor() as usize;
    q.max(1)
}

#[derive(Clone, Debug)]
pub struct Scheduler<T> {
    queues: BTreeMap<MinerId, VecDeque<T>>,
    batch_cap: usize,
}

impl<T> Scheduler<T> {
    pub fn new(batch_cap: usize) -> Self {
        Self {
            queues: BTreeMap::new(),
            batch_cap,
        }
    }

    pub fn batch_cap(&self) -> usize {
        self.batch_cap
    }

    pub fn push(&mut self, institution: MinerId, item: T) {
        self.queues.entry(institution).or_default().push_back(item);
    }

    pub fn pending(&self, institution: MinerId) -> usize {
        self.queues.get(&institution).map_or(0, VecDeque::len)
    }

    pub fn total_pending(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    /// Drains one batch. Institutions missing from `reputations` count as 0.
    pub fn schedule_batch(&mut self, reputations: &BTreeMap<MinerId, f64>) -> Vec<(MinerId, T)> {
        let mut order: Vec<(MinerId, f64)> = self
            .queues
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(id, _)| (*id, reputations.get(id).copied().unwrap_or(0.0)))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: f64 = order.iter().map(|(_, r)| r.max(0.0)).sum();

        let mut batch = Vec::with_capacity(self.batch_cap.min(self.total_pending()));
        let mut first_pass = true;
        while batch.len() < self.batch_cap {
            let before = batch.len();
            for (pos, &(id, r)) in order.iter().enumerate() {
                let room = self.batch_cap - batch.len();
                if room == 0 {
                    break;
                }
                // The first pass holds back one slot for every queue still
                // waiting its turn.
                let later = if first_pass { order.len() - pos - 1 } else { 0 };
                let allowance = room.saturating_sub(later).max(1);
                let q = self.queues.get_mut(&id).expect("listed queue");
                for item in q.drain(..quota(r, total).min(allowance).min(q.len())) {
                    batch.push((id, item));
                }
            }
            first_pass = false;
            if batch.len() == before {
                break;
            }
        }
        batch
    }
}
