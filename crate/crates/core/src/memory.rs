//! Score memory: a FIFO of the last `τ` batches concatenated into the loss.
//!
//! Stored scores are raw and detached. The margin shift is applied by the loss
//! over the whole concatenation, and the score gradient is masked so that only
//! the current batch receives updates.

use std::collections::VecDeque;

use crate::error::{check_len, Error, Result};

/// Bounded FIFO holding at most `capacity` past batches, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Fifo<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> Fifo<T> {
    pub fn new(capacity: usize) -> Self {
        Fifo {
            capacity,
            items: VecDeque::with_capacity(capacity + 1),
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

    /// Inserts `item` as the newest entry, evicting the oldest beyond capacity.
    pub fn push(&mut self, item: T) {
        self.items.push_front(item);
        self.items.truncate(self.capacity);
    }

    /// Newest to oldest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// A batch concatenated with the stored memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Extended {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// `true` exactly on current-batch positions, which come first.
    pub current_mask: Vec<bool>,
}

impl Extended {
    /// Builds `[current ∥ stored...]` with the matching mask.
    pub fn concat<'a>(
        scores: &[f64],
        labels: &[bool],
        stored: impl IntoIterator<Item = (&'a [f64], &'a [bool])>,
    ) -> Result<Self> {
        check_len(scores.len(), labels.len())?;
        let mut out = Extended {
            scores: scores.to_vec(),
            labels: labels.to_vec(),
            current_mask: vec![true; scores.len()],
        };
        for (s, l) in stored {
            check_len(s.len(), l.len())?;
            out.scores.extend_from_slice(s);
            out.labels.extend_from_slice(l);
            out.current_mask.extend(std::iter::repeat_n(false, s.len()));
        }
        Ok(out)
    }
}

/// Memory of past batches' raw scores and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBuffer {
    batches: Fifo<(Vec<f64>, Vec<bool>)>,
}

impl MemoryBuffer {
    /// A buffer remembering the last `capacity_batches` batches (`τ`).
    pub fn new(capacity_batches: usize) -> Self {
        MemoryBuffer {
            batches: Fifo::new(capacity_batches),
        }
    }

    pub fn capacity_batches(&self) -> usize {
        self.batches.capacity()
    }

    pub fn stored_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn stored_len(&self) -> usize {
        self.batches.iter().map(|(s, _)| s.len()).sum()
    }

    /// Concatenates the current batch with the stored batches, oldest last.
    /// Does not store the batch; see [`MemoryBuffer::commit`].
    pub fn extend(&self, batch_scores: &[f64], batch_labels: &[bool]) -> Result<Extended> {
        if batch_scores.is_empty() {
            return Err(Error::InvalidInput("batch is empty".into()));
        }
        Extended::concat(
            batch_scores,
            batch_labels,
            self.batches
                .iter()
                .map(|(s, l)| (s.as_slice(), l.as_slice())),
        )
    }

    /// Stores a copy of the raw batch, evicting the oldest beyond capacity.
    pub fn commit(&mut self, batch_scores: &[f64], batch_labels: &[bool]) -> Result<()> {
        check_len(batch_scores.len(), batch_labels.len())?;
        if self.batches.capacity() > 0 {
            self.batches
                .push((batch_scores.to_vec(), batch_labels.to_vec()));
        }
        Ok(())
    }

    /// Stored batches, newest first.
    pub fn batches(&self) -> impl Iterator<Item = (&[f64], &[bool])> {
        self.batches
            .iter()
            .map(|(s, l)| (s.as_slice(), l.as_slice()))
    }
}

/// Gradient restricted to the current batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedGradient {
    /// Full-length gradient with memory positions zeroed.
    pub masked: Vec<f64>,
    /// Current-batch entries in batch order.
    pub current: Vec<f64>,
}

/// Zeroes gradient entries outside the current batch.
pub fn mask_gradient(grad: &[f64], current_mask: &[bool]) -> Result<MaskedGradient> {
    check_len(current_mask.len(), grad.len())?;
    let masked: Vec<f64> = grad
        .iter()
        .zip(current_mask)
        .map(|(&g, &m)| if m { g } else { 0.0 })
        .collect();
    let current = grad
        .iter()
        .zip(current_mask)
        .filter(|(_, &m)| m)
        .map(|(&g, _)| g)
        .collect();
    Ok(MaskedGradient { masked, current })
}
