//! A small deterministic discrete-event kernel.
//!
//! Events carry a destination and an opaque payload and are delivered in
//! `(fire_at, seq)` order, where `seq` is a per-kernel counter assigned at
//! scheduling time. A single [`Handler`] receives every event and dispatches
//! on the destination; it may schedule further events through the
//! [`Scheduler`] it is handed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && value >= 0.0).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn after(self, delay: f64) -> Option<Self> {
        Self::new(self.0 + delay).filter(|_| delay >= 0.0)
    }
}

impl PartialEq for SimTime {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-hop message latency and per-member matching cost, in abstract units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    pub hop_latency: f64,
    pub match_cost: f64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self { hop_latency: 1.0, match_cost: 0.01 }
    }
}

impl LatencyConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        for (name, v) in [("hop_latency", self.hop_latency), ("match_cost", self.match_cost)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(KernelError::InvalidLatency(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("cannot schedule at {at} before current time {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("invalid time value {0}")]
    InvalidTime(f64),
    #[error("invalid latency config: {0}")]
    InvalidLatency(String),
}

/// Payloads name their kind for traces.
pub trait EventKind {
    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<D, P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub dst: D,
    pub payload: P,
}

struct Pending<D, P>(SimEvent<D, P>);

impl<D, P> PartialEq for Pending<D, P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<D, P> Eq for Pending<D, P> {}

impl<D, P> PartialOrd for Pending<D, P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<D, P> Ord for Pending<D, P> {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

pub struct Scheduler<D, P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Pending<D, P>>,
}

impl<D, P> Scheduler<D, P> {
    fn new() -> Self {
        Self { now: SimTime::ZERO, next_seq: 0, queue: BinaryHeap::new() }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events scheduled so far.
    pub fn scheduled(&self) -> u64 {
        self.next_seq
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, dst: D, payload: P) -> Result<u64, KernelError> {
        if fire_at < self.now {
            return Err(KernelError::SchedulingInPast { at: fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Pending(SimEvent { fire_at, seq, dst, payload }));
        Ok(seq)
    }

    pub fn schedule_after(&mut self, delay: f64, dst: D, payload: P) -> Result<u64, KernelError> {
        let at = self.now.after(delay).ok_or(KernelError::InvalidTime(delay))?;
        self.schedule(at, dst, payload)
    }
}

pub trait Handler<D, P> {
    fn handle(&mut self, event: SimEvent<D, P>, sched: &mut Scheduler<D, P>);
}

impl<D, P, F> Handler<D, P> for F
where
    F: FnMut(SimEvent<D, P>, &mut Scheduler<D, P>),
{
    fn handle(&mut self, event: SimEvent<D, P>, sched: &mut Scheduler<D, P>) {
        self(event, sched)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry<D> {
    pub time: SimTime,
    pub dst: D,
    pub kind: &'static str,
}

impl<D: fmt::Display> fmt::Display for TraceEntry<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} dst={} kind={}", self.time, self.dst, self.kind)
    }
}

pub struct Kernel<D, P> {
    sched: Scheduler<D, P>,
    processed: u64,
    trace: Option<Vec<TraceEntry<D>>>,
}

impl<D: Clone, P: EventKind> Kernel<D, P> {
    pub fn new() -> Self {
        Self { sched: Scheduler::new(), processed: 0, trace: None }
    }

    pub fn with_trace() -> Self {
        Self { trace: Some(Vec::new()), ..Self::new() }
    }

    pub fn now(&self) -> SimTime {
        self.sched.now
    }

    pub fn schedule(&mut self, fire_at: SimTime, dst: D, payload: P) -> Result<u64, KernelError> {
        self.sched.schedule(fire_at, dst, payload)
    }

    pub fn scheduled(&self) -> u64 {
        self.sched.scheduled()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn trace(&self) -> Option<&[TraceEntry<D>]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry<D>> {
        self.trace.take().unwrap_or_default()
    }

    /// Deliver events until the queue is empty. Returns the fire time of the
    /// last event delivered, or zero if there was none.
    pub fn run_until_idle<H: Handler<D, P>>(&mut self, handler: &mut H) -> SimTime {
        let mut last = SimTime::ZERO;
        while let Some(Pending(event)) = self.sched.queue.pop() {
            debug_assert!(event.fire_at >= self.sched.now);
            self.sched.now = event.fire_at;
            last = event.fire_at;
            self.processed += 1;
            if let Some(trace) = &mut self.trace {
                trace.push(TraceEntry { time: event.fire_at, dst: event.dst.clone(), kind: event.payload.kind() });
            }
            handler.handle(event, &mut self.sched);
        }
        last
    }
}

impl<D: Clone, P: EventKind> Default for Kernel<D, P> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    enum Ping {
        Hop(u32),
        Note,
    }

    impl EventKind for Ping {
        fn kind(&self) -> &'static str {
            match self {
                Ping::Hop(_) => "hop",
                Ping::Note => "note",
            }
        }
    }

    fn t(v: f64) -> SimTime {
        SimTime::new(v).unwrap()
    }

    #[test]
    fn empty_queue_returns_zero() {
        let mut k: Kernel<u32, Ping> = Kernel::new();
        assert_eq!(k.run_until_idle(&mut |_: SimEvent<u32, Ping>, _: &mut Scheduler<u32, Ping>| {}), SimTime::ZERO);
    }

    #[test]
    fn chained_hops_add_latency() {
        let latency = 2.5;
        let mut k: Kernel<u32, Ping> = Kernel::new();
        k.schedule(t(latency), 0, Ping::Hop(1)).unwrap();
        let mut handler = |ev: SimEvent<u32, Ping>, s: &mut Scheduler<u32, Ping>| {
            if let Ping::Hop(n) = ev.payload {
                if n < 3 {
                    s.schedule_after(latency, ev.dst + 1, Ping::Hop(n + 1)).unwrap();
                }
            }
        };
        assert_eq!(k.run_until_idle(&mut handler), t(3.0 * latency));
        assert_eq!(k.processed(), 3);
        assert_eq!(k.scheduled(), 3);
    }

    #[test]
    fn equal_times_deliver_in_schedule_order() {
        let mut k: Kernel<u32, Ping> = Kernel::new();
        for dst in [5, 3, 9] {
            k.schedule(t(1.0), dst, Ping::Note).unwrap();
        }
        k.schedule(t(0.0), 7, Ping::Note).unwrap();
        let mut order = Vec::new();
        k.run_until_idle(&mut |ev: SimEvent<u32, Ping>, _: &mut Scheduler<u32, Ping>| order.push(ev.dst));
        assert_eq!(order, vec![7, 5, 3, 9]);
    }

    #[test]
    fn scheduling_in_the_past_fails() {
        let mut k: Kernel<u32, Ping> = Kernel::new();
        k.schedule(t(4.0), 0, Ping::Note).unwrap();
        let mut seen = None;
        k.run_until_idle(&mut |ev: SimEvent<u32, Ping>, s: &mut Scheduler<u32, Ping>| {
            if ev.dst == 0 {
                seen = Some(s.schedule(t(1.0), 1, Ping::Note));
                // Same time as now is allowed.
                s.schedule(s.now(), 2, Ping::Note).unwrap();
            }
        });
        assert_eq!(k.processed(), 2);
        assert!(matches!(seen, Some(Err(KernelError::SchedulingInPast { .. }))));
        assert!(k.schedule(t(3.0), 0, Ping::Note).is_err());
        assert!(SimTime::new(-1.0).is_none());
    }

    #[test]
    fn traces_are_reproducible_and_monotone() {
        let run = || {
            let mut k: Kernel<u32, Ping> = Kernel::with_trace();
            for i in 0..5 {
                k.schedule(t(f64::from(i % 3)), i, Ping::Hop(0)).unwrap();
            }
            k.run_until_idle(&mut |ev: SimEvent<u32, Ping>, s: &mut Scheduler<u32, Ping>| {
                if let Ping::Hop(n) = ev.payload {
                    if n < 2 {
                        s.schedule_after(0.5, ev.dst, Ping::Hop(n + 1)).unwrap();
                        s.schedule_after(0.0, ev.dst, Ping::Note).unwrap();
                    }
                }
            });
            assert_eq!(k.processed(), k.scheduled());
            k.take_trace()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
        assert_eq!(a[0].to_string(), "t=0 dst=0 kind=hop");
    }

    #[test]
    fn latency_validation() {
        assert!(LatencyConfig::default().validate().is_ok());
        assert!(LatencyConfig { hop_latency: -1.0, match_cost: 0.0 }.validate().is_err());
        assert!(LatencyConfig { hop_latency: 1.0, match_cost: f64::NAN }.validate().is_err());
    }
}
