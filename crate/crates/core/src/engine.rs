//! Deterministic discrete-event core: a monotone queue dispatching in
//! (time, sequence) order.
//!
//! Ties at equal times break by scheduling order, which makes every run
//! with the same inputs replay the same event trace.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::SimError;
use crate::time::SimTime;

/// Handle returned by [`EventQueue::schedule`]; permits cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// A scheduled event carrying an arbitrary payload.
#[derive(Debug)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct HeapEntry<P> {
    time: SimTime,
    seq: u64,
    payload: P,
}

impl<P> PartialEq for HeapEntry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl<P> Eq for HeapEntry<P> {}

impl<P> Ord for HeapEntry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want earliest (time, seq).
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl<P> PartialOrd for HeapEntry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Totals reported by a drained run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub events_dispatched: u64,
    pub final_clock: SimTime,
}

/// Monotone event queue with a simulation clock.
pub struct EventQueue<P> {
    clock: SimTime,
    heap: BinaryHeap<HeapEntry<P>>,
    next_seq: u64,
    cancelled: HashSet<u64>,
    dispatched: u64,
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            clock: SimTime::ZERO,
            heap: BinaryHeap::new(),
            next_seq: 0,
            cancelled: HashSet::new(),
            dispatched: 0,
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    /// Enqueue an event at `time`. Scheduling into the past is a fatal
    /// configuration error.
    pub fn schedule(&mut self, time: SimTime, payload: P) -> Result<EventHandle, SimError> {
        if time < self.clock {
            return Err(SimError::SchedulePast {
                event: time,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry { time, seq, payload });
        Ok(EventHandle(seq))
    }

    /// Cancel a scheduled event. Cancelling an already-dispatched or
    /// unknown handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pop the next live event with time <= `t_end`, advancing the clock
    /// to its timestamp. Returns None once the queue holds nothing at or
    /// before `t_end`.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<P>> {
        loop {
            let entry = self.heap.peek()?;
            if entry.time > t_end {
                return None;
            }
            let entry = self.heap.pop().expect("peeked entry vanished");
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            debug_assert!(entry.time >= self.clock, "dispatch would rewind clock");
            self.clock = entry.time;
            self.dispatched += 1;
            return Some(Event {
                time: entry.time,
                seq: entry.seq,
                payload: entry.payload,
            });
        }
    }

    /// Advance the clock to `t_end` after all events there have been
    /// drained, and report totals.
    pub fn finish_at(&mut self, t_end: SimTime) -> RunSummary {
        debug_assert!(t_end >= self.clock);
        self.clock = t_end;
        RunSummary {
            events_dispatched: self.dispatched,
            final_clock: self.clock,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.heap.len() <= self.cancelled.len()
    }
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}
