//! Destination-keyed event aggregation.
//!
//! A small pool of buckets is shared by up to 2^16 destinations. A map table
//! binds each active destination to a bucket and a free list holds the
//! unbound ones, the same way a rename stage binds architectural registers to
//! physical ones. A bucket is flushed when its most urgent deadline has
//! passed, when it is full, when it is evicted to make room for a new
//! destination, or on request.
//!
//! Each bucket has two counters. `fill` counts events accepted since the last
//! flush, `drain` counts events of the flushed half that are still being
//! shifted out. A flush swaps them, so new events keep arriving while the old
//! half drains.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::event_model::{
    deadline_exceeded, deadline_order, timestamp_of_clock, NetworkAddress, RoutedEvent, Timestamp, WireEvent,
};
use crate::packetizer::MAX_EVENTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregationConfig {
    /// Number of physical buckets.
    pub buckets: usize,
    /// Events per bucket before a full-flush.
    pub capacity: usize,
    /// Events shifted out of a draining bucket per tick.
    pub drain_rate: usize,
    /// Deadline checks look this many cycles ahead of the clock.
    pub deadline_lead: u64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self { buckets: 8, capacity: MAX_EVENTS, drain_rate: 4, deadline_lead: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregationError {
    #[error("bucket pool must hold at least one bucket")]
    NoBuckets,
    #[error("bucket capacity {0} outside 1..={MAX_EVENTS}")]
    Capacity(usize),
    #[error("drain rate must be positive")]
    DrainRate,
    #[error("no filling bucket is eligible for arbitration")]
    NoEligibleBucket,
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<(), AggregationError> {
        if self.buckets == 0 {
            return Err(AggregationError::NoBuckets);
        }
        if self.capacity == 0 || self.capacity > MAX_EVENTS {
            return Err(AggregationError::Capacity(self.capacity));
        }
        if self.drain_rate == 0 {
            return Err(AggregationError::DrainRate);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketState {
    Idle,
    Filling,
    Draining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlushTrigger {
    DeadlineExceeded,
    BucketFull,
    Evicted,
    External,
}

impl FlushTrigger {
    pub const ALL: [FlushTrigger; 4] =
        [FlushTrigger::DeadlineExceeded, FlushTrigger::BucketFull, FlushTrigger::Evicted, FlushTrigger::External];

    pub fn name(self) -> &'static str {
        match self {
            FlushTrigger::DeadlineExceeded => "deadline_exceeded",
            FlushTrigger::BucketFull => "bucket_full",
            FlushTrigger::Evicted => "evicted",
            FlushTrigger::External => "external",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FlushTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Contents of one flush, ready for packetization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlushRecord {
    pub dest: NetworkAddress,
    pub events: Vec<WireEvent>,
    pub trigger: FlushTrigger,
    pub flush_cycle: u64,
}

#[derive(Debug, Clone)]
pub struct Bucket {
    dest: Option<NetworkAddress>,
    capacity: usize,
    // drain half first, fill half after it
    slots: VecDeque<WireEvent>,
    fill_counter: usize,
    drain_counter: usize,
    most_urgent: Option<Timestamp>,
}

impl Bucket {
    fn new(capacity: usize) -> Self {
        Self {
            dest: None,
            capacity,
            slots: VecDeque::with_capacity(capacity),
            fill_counter: 0,
            drain_counter: 0,
            most_urgent: None,
        }
    }

    pub fn dest(&self) -> Option<NetworkAddress> {
        self.dest
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fill_counter(&self) -> usize {
        self.fill_counter
    }

    pub fn drain_counter(&self) -> usize {
        self.drain_counter
    }

    /// Most urgent deadline among events not yet flushed.
    pub fn most_urgent(&self) -> Option<Timestamp> {
        self.most_urgent
    }

    pub fn state(&self) -> BucketState {
        if self.drain_counter > 0 {
            BucketState::Draining
        } else if self.fill_counter > 0 {
            BucketState::Filling
        } else {
            BucketState::Idle
        }
    }

    /// Events not yet part of any flush, oldest first.
    pub fn pending(&self) -> impl Iterator<Item = &WireEvent> {
        self.slots.iter().skip(self.drain_counter)
    }

    pub fn buffered(&self) -> usize {
        self.fill_counter + self.drain_counter
    }

    fn push(&mut self, ev: WireEvent) {
        debug_assert!(self.buffered() < self.capacity);
        self.slots.push_back(ev);
        self.fill_counter += 1;
        self.most_urgent = Some(match self.most_urgent {
            Some(cur) if deadline_order(cur, ev.timestamp).is_le() => cur,
            _ => ev.timestamp,
        });
    }

    /// Swaps the counters. The returned events form the flush; `None` if the
    /// bucket is already draining or has nothing to flush.
    fn initiate_flush(&mut self) -> Option<Vec<WireEvent>> {
        if self.drain_counter > 0 || self.fill_counter == 0 {
            return None;
        }
        let events: Vec<WireEvent> = self.slots.iter().copied().collect();
        self.drain_counter = self.fill_counter;
        self.fill_counter = 0;
        self.most_urgent = None;
        Some(events)
    }

    fn advance_drain(&mut self, rate: usize) {
        let n = rate.min(self.drain_counter);
        self.slots.drain(..n);
        self.drain_counter -= n;
    }

    fn complete_drain(&mut self) {
        let n = self.drain_counter;
        self.advance_drain(n);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregationStats {
    pub events_submitted: u64,
    pub flushes: [u64; 4],
    /// `occupancy[n]` counts flushes carrying `n` events.
    pub occupancy: Vec<u64>,
    /// Drains cut short because an event arrived at a bucket with no room left.
    pub forced_drains: u64,
    pub peak_buffered: usize,
}

impl AggregationStats {
    pub fn flushes_by(&self, trigger: FlushTrigger) -> u64 {
        self.flushes[trigger.index()]
    }

    pub fn total_flushes(&self) -> u64 {
        self.flushes.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct BucketManager {
    config: AggregationConfig,
    buckets: Vec<Bucket>,
    map_table: HashMap<NetworkAddress, usize>,
    free_list: VecDeque<usize>,
    stats: AggregationStats,
}

impl BucketManager {
    pub fn new(config: AggregationConfig) -> Result<Self, AggregationError> {
        config.validate()?;
        Ok(Self {
            buckets: (0..config.buckets).map(|_| Bucket::new(config.capacity)).collect(),
            map_table: HashMap::with_capacity(config.buckets),
            free_list: (0..config.buckets).collect(),
            stats: AggregationStats { occupancy: vec![0; config.capacity + 1], ..Default::default() },
            config,
        })
    }

    pub fn config(&self) -> &AggregationConfig {
        &self.config
    }

    pub fn stats(&self) -> &AggregationStats {
        &self.stats
    }

    pub fn bucket(&self, index: usize) -> &Bucket {
        &self.buckets[index]
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn bucket_for(&self, dest: NetworkAddress) -> Option<usize> {
        self.map_table.get(&dest).copied()
    }

    /// Map table entries sorted by destination.
    pub fn map_table(&self) -> Vec<(NetworkAddress, usize)> {
        let mut v: Vec<_> = self.map_table.iter().map(|(d, i)| (*d, *i)).collect();
        v.sort_unstable();
        v
    }

    pub fn free_list(&self) -> impl Iterator<Item = usize> + '_ {
        self.free_list.iter().copied()
    }

    pub fn buffered_events(&self) -> usize {
        self.buckets.iter().map(Bucket::buffered).sum()
    }

    /// Events accepted but not yet part of a flush.
    pub fn pending_events(&self) -> usize {
        self.buckets.iter().map(|b| b.fill_counter).sum()
    }

    /// Adds an event to the bucket for its destination, claiming or evicting a
    /// bucket when the destination is new.
    pub fn submit(&mut self, ev: RoutedEvent, now: u64) -> Vec<FlushRecord> {
        self.stats.events_submitted += 1;
        let mut out = Vec::new();
        let index = match self.map_table.get(&ev.dest) {
            Some(&i) => {
                let b = &mut self.buckets[i];
                if b.buffered() == b.capacity {
                    b.complete_drain();
                    self.stats.forced_drains += 1;
                }
                i
            }
            None => {
                let i = match self.free_list.pop_front() {
                    Some(i) => i,
                    None => self.evict(now, &mut out),
                };
                self.buckets[i].dest = Some(ev.dest);
                self.map_table.insert(ev.dest, i);
                i
            }
        };
        self.buckets[index].push(ev.into());
        if self.buckets[index].fill_counter == self.config.capacity {
            self.flush(index, FlushTrigger::BucketFull, now, &mut out);
        }
        self.stats.peak_buffered = self.stats.peak_buffered.max(self.buffered_events());
        out
    }

    /// One clock cycle: advance drains, release emptied buckets, then flush
    /// every filling bucket whose most urgent deadline has passed.
    pub fn tick(&mut self, now: u64) -> Vec<FlushRecord> {
        let rate = self.config.drain_rate;
        for i in 0..self.buckets.len() {
            let b = &mut self.buckets[i];
            if b.drain_counter > 0 {
                b.advance_drain(rate);
                if b.drain_counter == 0 && b.fill_counter == 0 {
                    self.release(i);
                }
            }
        }
        let probe = timestamp_of_clock(now + self.config.deadline_lead);
        let mut out = Vec::new();
        for i in 0..self.buckets.len() {
            let b = &self.buckets[i];
            if b.state() == BucketState::Filling && b.most_urgent.is_some_and(|mu| deadline_exceeded(mu, probe)) {
                self.flush(i, FlushTrigger::DeadlineExceeded, now, &mut out);
            }
        }
        out
    }

    /// Flushes the bucket bound to `dest` if it is filling.
    pub fn external_flush(&mut self, dest: NetworkAddress, now: u64) -> Option<FlushRecord> {
        let i = *self.map_table.get(&dest)?;
        if self.buckets[i].state() != BucketState::Filling {
            return None;
        }
        let mut out = Vec::with_capacity(1);
        self.flush(i, FlushTrigger::External, now, &mut out);
        out.pop()
    }

    /// External flush of every filling bucket, in bucket order.
    pub fn flush_all(&mut self, now: u64) -> Vec<FlushRecord> {
        let dests: Vec<NetworkAddress> =
            self.buckets.iter().filter(|b| b.state() == BucketState::Filling).filter_map(|b| b.dest).collect();
        dests.into_iter().filter_map(|d| self.external_flush(d, now)).collect()
    }

    /// The filling bucket with the most urgent deadline; ties go to the lower
    /// index. Implemented as a pairwise comparator tree.
    pub fn arbiter_select(&self) -> Result<usize, AggregationError> {
        let mut round: Vec<Option<(usize, Timestamp)>> = self
            .buckets
            .iter()
            .enumerate()
            .map(|(i, b)| match (b.state(), b.most_urgent) {
                (BucketState::Filling, Some(mu)) => Some((i, mu)),
                _ => None,
            })
            .collect();
        while round.len() > 1 {
            round = round
                .chunks(2)
                .map(|pair| match pair {
                    [Some(a), Some(b)] => Some(if deadline_order(b.1, a.1).is_lt() { *b } else { *a }),
                    [a, b] => a.or(*b),
                    [a] => *a,
                    _ => unreachable!(),
                })
                .collect();
        }
        round.first().copied().flatten().map(|(i, _)| i).ok_or(AggregationError::NoEligibleBucket)
    }

    /// Frees a bucket for a new destination. Prefers the arbiter's choice; if
    /// every bucket is draining, the one closest to done is cut short.
    fn evict(&mut self, now: u64, out: &mut Vec<FlushRecord>) -> usize {
        let victim = match self.arbiter_select() {
            Ok(i) => i,
            Err(_) => {
                let (i, _) = self
                    .buckets
                    .iter()
                    .enumerate()
                    .min_by_key(|(i, b)| (b.drain_counter, *i))
                    .expect("pool is never empty");
                self.buckets[i].complete_drain();
                self.stats.forced_drains += 1;
                i
            }
        };
        self.flush(victim, FlushTrigger::Evicted, now, out);
        // evicted contents leave at once; the simulator charges the port time
        self.buckets[victim].complete_drain();
        let old = self.buckets[victim].dest.take().expect("evicted bucket is mapped");
        self.map_table.remove(&old);
        victim
    }

    fn flush(&mut self, index: usize, trigger: FlushTrigger, now: u64, out: &mut Vec<FlushRecord>) {
        let b = &mut self.buckets[index];
        let Some(dest) = b.dest else { return };
        if let Some(events) = b.initiate_flush() {
            self.stats.flushes[trigger.index()] += 1;
            self.stats.occupancy[events.len()] += 1;
            out.push(FlushRecord { dest, events, trigger, flush_cycle: now });
        }
    }

    fn release(&mut self, index: usize) {
        if let Some(dest) = self.buckets[index].dest.take() {
            self.map_table.remove(&dest);
            self.free_list.push_back(index);
        }
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let b_count = self.buckets.len();
        if self.map_table.len() + self.free_list.len() != b_count {
            return Err(format!(
                "map table ({}) and free list ({}) do not partition {} buckets",
                self.map_table.len(),
                self.free_list.len(),
                b_count
            ));
        }
        let mut seen = vec![false; b_count];
        for (&dest, &i) in &self.map_table {
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("bucket {i} mapped twice"));
            }
            if self.buckets[i].dest != Some(dest) {
                return Err(format!("bucket {i} does not hold its mapped destination {dest}"));
            }
        }
        for &i in &self.free_list {
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("bucket {i} both free and mapped"));
            }
            if self.buckets[i].dest.is_some() || self.buckets[i].buffered() != 0 {
                return Err(format!("free bucket {i} is not empty"));
            }
        }
        for (i, b) in self.buckets.iter().enumerate() {
            if b.buffered() > b.capacity {
                return Err(format!("bucket {i} over capacity: {} + {}", b.fill_counter, b.drain_counter));
            }
            if b.slots.len() != b.buffered() {
                return Err(format!("bucket {i} slot count {} != counters {}", b.slots.len(), b.buffered()));
            }
            if b.state() == BucketState::Idle && b.dest.is_some() {
                return Err(format!("bucket {i} is idle but still mapped"));
            }
            let expect =
                b.pending().map(|e| e.timestamp).reduce(|a, c| if deadline_order(c, a).is_lt() { c } else { a });
            if expect != b.most_urgent {
                return Err(format!("bucket {i} most_urgent {:?} != {:?}", b.most_urgent, expect));
            }
        }
        Ok(())
    }
}
