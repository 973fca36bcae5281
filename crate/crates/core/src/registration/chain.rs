use std::collections::VecDeque;

use super::Homography;

/// Transforms `h_t^{t-k}` from each of the last `capacity` frames into the
/// current frame, re-based on every push.
#[derive(Clone, Debug)]
pub struct TransformChain {
    capacity: usize,
    // entries[k - 1] = h_t^{t-k}
    entries: VecDeque<Homography>,
}

impl TransformChain {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Advances the chain with `h_{t+1}^t`. Stored lags shift by one.
    pub fn push(&mut self, h_new: Homography) {
        for e in self.entries.iter_mut() {
            *e = h_new.compose(e);
        }
        self.entries.push_front(h_new);
        self.entries.truncate(self.capacity);
    }

    /// `h_t^{t-lag}` for `lag >= 1`.
    pub fn get(&self, lag: usize) -> Option<&Homography> {
        lag.checked_sub(1).and_then(|i| self.entries.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Homography> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
