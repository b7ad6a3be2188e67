//! Virtual clock and ordered event delivery.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent<P> {
    pub fire_time: SimTime,
    /// Tie-break assigned at schedule time; never reused.
    pub seq: u64,
    pub payload: P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot schedule at t={fire_time}, clock is already at t={now}")]
pub struct SchedulingInPast {
    pub now: SimTime,
    pub fire_time: SimTime,
}

struct Entry<P>(SimEvent<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl<P> Entry<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_time, self.0.seq)
    }
}

/// Single-threaded event queue totally ordered by `(fire_time, seq)`.
pub struct EventQueue<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Entry<P>>>,
    pending: HashSet<u64>,
    processed: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            now: 0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Events still waiting to fire (cancelled ones excluded).
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Total events delivered over the queue's lifetime.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn schedule(
        &mut self,
        fire_time: SimTime,
        payload: P,
    ) -> Result<EventHandle, SchedulingInPast> {
        if fire_time < self.now {
            return Err(SchedulingInPast {
                now: self.now,
                fire_time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert(seq);
        self.heap.push(Reverse(Entry(SimEvent {
            fire_time,
            seq,
            payload,
        })));
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` seconds from now. Saturates at the end of time.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> EventHandle {
        self.schedule(self.now.saturating_add(delay), payload)
            .expect("a non-negative delay is never in the past")
    }

    /// Returns true if the event was still pending; a cancelled event never fires.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    fn pop_due(&mut self, end_time: SimTime) -> Option<SimEvent<P>> {
        loop {
            let due = matches!(self.heap.peek(), Some(Reverse(e)) if e.0.fire_time <= end_time);
            if !due {
                return None;
            }
            let Reverse(Entry(event)) = self.heap.pop()?;
            if self.pending.remove(&event.seq) {
                self.now = event.fire_time;
                self.processed += 1;
                return Some(event);
            }
        }
    }

    /// Delivers every event with `fire_time <= end_time` in order, then
    /// advances the clock to `end_time`. The handler may schedule more events.
    pub fn run_until<F>(&mut self, end_time: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, SimEvent<P>),
    {
        let mut count = 0;
        while let Some(event) = self.pop_due(end_time) {
            handler(self, event);
            count += 1;
        }
        self.now = self.now.max(end_time);
        count
    }

    /// Delivers events until the queue is empty. The clock stays at the last event.
    pub fn run_to_completion<F>(&mut self, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, SimEvent<P>),
    {
        let mut count = 0;
        while let Some(event) = self.pop_due(SimTime::MAX) {
            handler(self, event);
            count += 1;
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(q: &mut EventQueue<&'static str>, end: SimTime) -> Vec<&'static str> {
        let mut seen = Vec::new();
        q.run_until(end, |_, ev| seen.push(ev.payload));
        seen
    }

    #[test]
    fn earlier_time_first() {
        let mut q = EventQueue::new();
        q.run_until(10, |_, _| {});
        q.schedule(11, "later").unwrap();
        q.schedule(10, "now").unwrap();
        assert_eq!(drain(&mut q, 20), vec!["now", "later"]);
    }

    #[test]
    fn ties_break_by_schedule_order() {
        let mut q = EventQueue::new();
        q.schedule(5, "a").unwrap();
        q.schedule(5, "b").unwrap();
        q.schedule(5, "c").unwrap();
        assert_eq!(drain(&mut q, 5), vec!["a", "b", "c"]);
    }

    #[test]
    fn past_scheduling_is_refused() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until(10, |_, _| {});
        assert_eq!(
            q.schedule(5, ()),
            Err(SchedulingInPast {
                now: 10,
                fire_time: 5
            })
        );
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert_eq!(q.run_until(100, |_, _| {}), 0);
        assert_eq!(q.now(), 100);
    }

    #[test]
    fn stops_at_end_time() {
        let mut q = EventQueue::new();
        for t in 1..=3 {
            q.schedule(t, t).unwrap();
        }
        assert_eq!(q.run_until(2, |_, _| {}), 2);
        assert_eq!(q.now(), 2);
        assert_eq!(q.pending(), 1);
    }

    #[test]
    fn cascading_schedule() {
        let mut q = EventQueue::new();
        q.schedule(1, 1u64).unwrap();
        let mut trace = Vec::new();
        let n = q.run_until(5, |q, ev| {
            trace.push((ev.fire_time, ev.payload));
            if ev.payload == 1 {
                q.schedule(2, 2).unwrap();
            }
        });
        assert_eq!(n, 2);
        assert_eq!(trace, vec![(1, 1), (2, 2)]);
        assert_eq!(q.now(), 5);
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut q = EventQueue::new();
        let countdown = q.schedule(180, "countdown").unwrap();
        q.schedule(60, "hangup").unwrap();
        let mut seen = Vec::new();
        q.run_until(1000, |q, ev| {
            if ev.payload == "hangup" {
                assert!(q.cancel(countdown));
            }
            seen.push(ev.payload);
        });
        assert_eq!(seen, vec!["hangup"]);
        assert!(!q.cancel(countdown));
    }

    #[test]
    fn run_to_completion_drains() {
        let mut q = EventQueue::new();
        q.schedule(1_000_000, ()).unwrap();
        assert_eq!(q.run_to_completion(|_, _| {}), 1);
        assert_eq!(q.now(), 1_000_000);
        assert_eq!(q.processed(), 1);
    }
}
