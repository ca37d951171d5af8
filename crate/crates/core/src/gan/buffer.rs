use rand::seq::index;
use rand::Rng;

use super::GanError;
use crate::nn::Tensor;

/// Bounded store of previously refined images.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryBuffer<T = Tensor> {
    capacity: usize,
    items: Vec<T>,
}

impl<T: Clone> HistoryBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }
}

/// Adds a refined batch to the buffer.
///
/// Below capacity the batch is appended (and truncated at capacity). A full
/// buffer instead has `b/2` uniformly chosen slots overwritten by `b/2`
/// uniformly chosen batch images.
pub fn buffer_update<T: Clone, R: Rng + ?Sized>(
    buffer: &mut HistoryBuffer<T>,
    batch: &[T],
    rng: &mut R,
) -> Result<(), GanError> {
    if batch.len() % 2 != 0 {
        return Err(GanError::OddBatch(batch.len()));
    }
    if !buffer.is_full() {
        let room = buffer.capacity - buffer.items.len();
        buffer.items.extend(batch.iter().take(room).cloned());
        return Ok(());
    }
    let half = (batch.len() / 2).min(buffer.capacity);
    let slots = index::sample(rng, buffer.capacity, half);
    let picks = index::sample(rng, batch.len(), half);
    for (slot, pick) in slots.iter().zip(picks.iter()) {
        buffer.items[slot] = batch[pick].clone();
    }
    Ok(())
}

/// Builds the fake half of a discriminator step: `b/2` buffer images drawn
/// without replacement followed by `b/2` images from `fresh`.
///
/// A buffer holding fewer than `b/2` images is sampled with replacement.
pub fn disc_batch<T: Clone, R: Rng + ?Sized>(
    buffer: &HistoryBuffer<T>,
    fresh: &[T],
    b: usize,
    rng: &mut R,
) -> Result<Vec<T>, GanError> {
    if b % 2 != 0 {
        return Err(GanError::OddBatch(b));
    }
    if buffer.is_empty() {
        return Err(GanError::EmptyBuffer);
    }
    let half = b / 2;
    if fresh.len() < half {
        return Err(GanError::FreshTooSmall {
            needed: half,
            found: fresh.len(),
        });
    }
    let mut out = Vec::with_capacity(b);
    if buffer.len() >= half {
        out.extend(index::sample(rng, buffer.len(), half).iter().map(|i| buffer.items[i].clone()));
    } else {
        log::warn!(
            "history buffer holds {} images, fewer than {half}; sampling with replacement",
            buffer.len()
        );
        for _ in 0..half {
            out.push(buffer.items[rng.gen_range(0..buffer.len())].clone());
        }
    }
    out.extend(index::sample(rng, fresh.len(), half).iter().map(|i| fresh[i].clone()));
    Ok(out)
}
