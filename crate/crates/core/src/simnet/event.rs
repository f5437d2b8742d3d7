//! Discrete-event queue for the simulator.
//!
//! Events pop in timestamp order; ties break by insertion order, so a run is
//! a pure function of its inputs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::ParameterVector;
use crate::protocol::{ClientId, Message};

/// Everything that can happen at a point in virtual time.
#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    /// A client's message reaches the server (`transfer_time` already spent).
    ClientToServer { from: ClientId, message: Message, transfer_time: f64 },
    /// A server message reaches a client.
    ServerToClient { to: ClientId, message: Message },
    /// A client's local training run finishes, with its results.
    TrainingComplete {
        client: ClientId,
        round: u32,
        params: ParameterVector,
        local_acc: f64,
        training_time: f64,
    },
    /// The round deadline the server armed fires.
    Deadline { round: u32 },
    /// The post-round dispatch finished; the server opens the next round.
    OpenRound,
}

struct Entry {
    at: f64,
    seq: u64,
    event: SimEvent,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap and we want the earliest
        // timestamp (then the earliest insertion) first. Timestamps are
        // checked finite on push, so partial_cmp cannot fail.
        other
            .at
            .partial_cmp(&self.at)
            .expect("finite timestamps")
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Min-queue of simulation events with stable FIFO tie-breaking.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, at: f64, event: SimEvent) -> Result<()> {
        if !at.is_finite() || at < 0.0 {
            return Err(Error::validation(format!(
                "event timestamps must be finite and nonnegative, got {at}"
            )));
        }
        self.heap.push(Entry { at, seq: self.next_seq, event });
        self.next_seq += 1;
        Ok(())
    }

    pub fn pop(&mut self) -> Option<(f64, SimEvent)> {
        self.heap.pop().map(|e| (e.at, e.event))
    }

    /// Timestamp of the next event without removing it.
    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.at)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
