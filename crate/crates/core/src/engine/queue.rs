use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::phy_mac::VehicleId;

/// Scheduled happenings. Declaration order is the tie-break rank at equal
/// times: frames end before new ones start, so a channel that frees up at
/// `t` is seen idle by an access attempt at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    TxEnd { frame: usize },
    TxStart { generation: u64 },
    BeaconDue { generation: u64 },
    CbrTick,
    MetricTick,
}

impl EventKind {
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::TxEnd { .. } => 0,
            EventKind::TxStart { .. } => 1,
            EventKind::BeaconDue { .. } => 2,
            EventKind::CbrTick => 3,
            EventKind::MetricTick => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time_s: f64,
    pub kind: EventKind,
    /// Owning vehicle; global events use 0.
    pub vehicle: VehicleId,
    seq: u64,
}

impl Event {
    fn key(&self) -> (f64, u8, VehicleId, u64) {
        (self.time_s, self.kind.rank(), self.vehicle, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    }
}

/// Min-queue on `(time, rank, vehicle, insertion order)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<Event>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time_s: f64, vehicle: VehicleId, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(std::cmp::Reverse(Event { time_s, kind, vehicle, seq }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|r| r.0)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|r| r.0.time_s)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_rank_then_vehicle() {
        let mut q = EventQueue::default();
        q.push(1.0, 5, EventKind::CbrTick);
        q.push(1.0, 2, EventKind::TxStart { generation: 0 });
        q.push(1.0, 1, EventKind::TxStart { generation: 0 });
        q.push(1.0, 9, EventKind::TxEnd { frame: 0 });
        q.push(0.5, 9, EventKind::MetricTick);
        let order: Vec<(f64, u8, u32)> =
            std::iter::from_fn(|| q.pop()).map(|e| (e.time_s, e.kind.rank(), e.vehicle)).collect();
        assert_eq!(order, vec![(0.5, 4, 9), (1.0, 0, 9), (1.0, 1, 1), (1.0, 1, 2), (1.0, 3, 5)]);
    }

    #[test]
    fn equal_keys_pop_in_insertion_order() {
        let mut q = EventQueue::default();
        q.push(2.0, 1, EventKind::BeaconDue { generation: 7 });
        q.push(2.0, 1, EventKind::BeaconDue { generation: 8 });
        assert_eq!(q.pop().unwrap().kind, EventKind::BeaconDue { generation: 7 });
        assert_eq!(q.pop().unwrap().kind, EventKind::BeaconDue { generation: 8 });
        assert!(q.is_empty());
    }
}
