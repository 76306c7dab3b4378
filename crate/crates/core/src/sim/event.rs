//! Deterministic event queue: events fire in (time, sequence) order, with
//! the sequence counter giving stable FIFO behavior among equal timestamps.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::SimError;
use crate::sim::radio::Message;
use crate::topology::NodeId;

/// Timer payloads delivered back to the owning protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimerKind {
    /// Resolve a pending cell election (bootstrap or rotation).
    ElectionDecide { cell: u32 },
    /// Resolve a pending master election among live heads.
    MasterElectionDecide,
    /// A follower waited 3x latency without an ack for its report.
    AckTimeout { node: NodeId, attempt: u8 },
    /// A leader or head waited for its upstream record forward to be acked.
    ForwardTimeout { node: NodeId, attempt: u8 },
    /// Leader closes its data-collection window and aggregates.
    AggregateDeadline { cell: u32 },
    /// Head merges the cell records it has received this round.
    HeadMergeDeadline { head: NodeId },
    /// Master relays merged records toward the base station.
    MasterRelayDeadline { master: NodeId },
    /// Communicator forwards adopted refugee records to its own head.
    CommunicatorFlush { node: NodeId },
    /// Orphaned cluster designates a communicator from the responses heard.
    NoticeDeadline { cluster: u32 },
    /// A baseline cluster head closes its TDMA collection window.
    ChCollectDeadline { ch: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    RoundBoundary { round: u32 },
    MessageArrival { to: NodeId, msg: Message },
    Timer(TimerKind),
    NodeFailure { node: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub fire_time_ms: u64,
    pub sequence: u64,
    pub kind: EventKind,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey(u64, u64);

#[derive(Debug)]
struct QueueSlot {
    key: Reverse<QueueKey>,
    event: Event,
}

impl PartialEq for QueueSlot {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for QueueSlot {}
impl PartialOrd for QueueSlot {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueSlot {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Min-heap of pending events keyed by (fire_time, sequence).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<QueueSlot>,
    next_sequence: u64,
    now_ms: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueues `kind` to fire at `fire_time_ms`. Scheduling in the past is a
    /// contract violation.
    pub fn schedule(&mut self, fire_time_ms: u64, kind: EventKind) -> Result<(), SimError> {
        if fire_time_ms < self.now_ms {
            return Err(SimError::ScheduleInPast {
                requested: fire_time_ms,
                now: self.now_ms,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(QueueSlot {
            key: Reverse(QueueKey(fire_time_ms, sequence)),
            event: Event {
                fire_time_ms,
                sequence,
                kind,
            },
        });
        Ok(())
    }

    /// Pops the next event and advances the clock to its fire time.
    pub fn pop(&mut self) -> Option<Event> {
        let slot = self.heap.pop()?;
        self.now_ms = slot.event.fire_time_ms;
        Some(slot.event)
    }

    /// Pops the next event only if it fires strictly before `limit_ms`.
    pub fn pop_before(&mut self, limit_ms: u64) -> Option<Event> {
        match self.heap.peek() {
            Some(slot) if slot.event.fire_time_ms < limit_ms => self.pop(),
            _ => None,
        }
    }

    /// Moves the clock forward without firing anything.
    pub fn advance_to(&mut self, t_ms: u64) {
        debug_assert!(t_ms >= self.now_ms);
        self.now_ms = t_ms;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn boundary(round: u32) -> EventKind {
        EventKind::RoundBoundary { round }
    }

    #[test]
    fn fires_in_time_order_with_fifo_tiebreak() {
        let mut q = EventQueue::new();
        q.schedule(5, boundary(0)).unwrap(); // A
        q.schedule(5, boundary(1)).unwrap(); // B
        q.schedule(3, boundary(2)).unwrap();
        let order: Vec<u32> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::RoundBoundary { round } => round,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![2, 0, 1]);
    }

    #[test]
    fn scheduling_at_now_fires_before_later_events() {
        let mut q = EventQueue::new();
        q.schedule(10, boundary(1)).unwrap();
        q.pop(); // clock now at 10
        q.schedule(20, boundary(2)).unwrap();
        q.schedule(10, boundary(3)).unwrap();
        assert!(matches!(
            q.pop().unwrap().kind,
            EventKind::RoundBoundary { round: 3 }
        ));
    }

    #[test]
    fn rejects_scheduling_in_the_past() {
        let mut q = EventQueue::new();
        q.schedule(10, boundary(0)).unwrap();
        q.pop();
        assert!(q.schedule(9, boundary(1)).is_err());
    }

    #[test]
    fn thousand_random_events_dequeue_in_sorted_order() {
        let mut rng = crate::sim::rng::RngStream::new(5, "test-order").rng();
        let mut q = EventQueue::new();
        let mut expected: Vec<(u64, u64)> = Vec::new();
        for i in 0..1000u64 {
            let t: u64 = rng.gen_range(0..500);
            q.schedule(t, boundary(i as u32)).unwrap();
            expected.push((t, i));
        }
        expected.sort();
        let got: Vec<(u64, u64)> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.fire_time_ms, e.sequence))
            .collect();
        assert_eq!(got, expected);
    }
}
