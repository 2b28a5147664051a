//! Linear-scan bucket manager used as an oracle, plus random traces.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use spikenet::aggregation::{AggregationConfig, BucketManager, FlushRecord, FlushTrigger};
use spikenet::event_model::{Guid, NetworkAddress, RoutedEvent, Timestamp, WireEvent};

const MODULUS: i64 = 1 << 15;

/// `now` strictly after `deadline`, less than half a period ahead.
fn past(deadline: Timestamp, now: Timestamp) -> bool {
    let d = (now.get() as i64 - deadline.get() as i64).rem_euclid(MODULUS);
    d > 0 && d < MODULUS / 2
}

fn earlier(a: Timestamp, b: Timestamp) -> bool {
    a != b && past(a, b)
}

#[derive(Debug, Clone, Default)]
struct RefBucket {
    dest: Option<NetworkAddress>,
    draining: usize,
    pending: Vec<WireEvent>,
}

impl RefBucket {
    fn most_urgent(&self) -> Option<Timestamp> {
        self.pending.iter().map(|e| e.timestamp).reduce(|acc, t| if earlier(t, acc) { t } else { acc })
    }
}

pub struct RefManager {
    cfg: AggregationConfig,
    buckets: Vec<RefBucket>,
    // (release sequence, bucket index)
    free: Vec<(u64, usize)>,
    seq: u64,
    pub forced_drains: u64,
}

impl RefManager {
    pub fn new(cfg: AggregationConfig) -> Self {
        Self {
            cfg,
            buckets: vec![RefBucket::default(); cfg.buckets],
            free: (0..cfg.buckets).map(|i| (i as u64, i)).collect(),
            seq: cfg.buckets as u64,
            forced_drains: 0,
        }
    }

    fn find(&self, dest: NetworkAddress) -> Option<usize> {
        (0..self.buckets.len()).find(|&i| self.buckets[i].dest == Some(dest))
    }

    fn filling(&self, i: usize) -> bool {
        self.buckets[i].draining == 0 && !self.buckets[i].pending.is_empty()
    }

    fn arbiter(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..self.buckets.len() {
            if !self.filling(i) {
                continue;
            }
            best = match best {
                Some(b) if !earlier(self.buckets[i].most_urgent().unwrap(), self.buckets[b].most_urgent().unwrap()) => {
                    Some(b)
                }
                _ => Some(i),
            };
        }
        best
    }

    fn flush(&mut self, i: usize, trigger: FlushTrigger, now: u64, out: &mut Vec<FlushRecord>) {
        if !self.filling(i) {
            return;
        }
        let b = &mut self.buckets[i];
        let events = std::mem::take(&mut b.pending);
        b.draining = events.len();
        out.push(FlushRecord { dest: b.dest.unwrap(), events, trigger, flush_cycle: now });
    }

    pub fn submit(&mut self, ev: RoutedEvent, now: u64) -> Vec<FlushRecord> {
        let mut out = Vec::new();
        let i = match self.find(ev.dest) {
            Some(i) => {
                let b = &mut self.buckets[i];
                if b.draining + b.pending.len() == self.cfg.capacity {
                    b.draining = 0;
                    self.forced_drains += 1;
                }
                i
            }
            None => {
                let i = if self.free.is_empty() {
                    let victim = match self.arbiter() {
                        Some(v) => v,
                        None => {
                            let v = (0..self.buckets.len()).min_by_key(|&j| (self.buckets[j].draining, j)).unwrap();
                            self.buckets[v].draining = 0;
                            self.forced_drains += 1;
                            v
                        }
                    };
                    self.flush(victim, FlushTrigger::Evicted, now, &mut out);
                    self.buckets[victim].draining = 0;
                    self.buckets[victim].dest = None;
                    victim
                } else {
                    let k = (0..self.free.len()).min_by_key(|&k| self.free[k].0).unwrap();
                    self.free.remove(k).1
                };
                self.buckets[i].dest = Some(ev.dest);
                i
            }
        };
        self.buckets[i].pending.push(WireEvent::from(ev));
        if self.buckets[i].pending.len() == self.cfg.capacity {
            self.flush(i, FlushTrigger::BucketFull, now, &mut out);
        }
        out
    }

    pub fn tick(&mut self, now: u64) -> Vec<FlushRecord> {
        for i in 0..self.buckets.len() {
            let b = &mut self.buckets[i];
            if b.draining > 0 {
                b.draining = b.draining.saturating_sub(self.cfg.drain_rate);
                if b.draining == 0 && b.pending.is_empty() {
                    b.dest = None;
                    self.free.push((self.seq, i));
                    self.seq += 1;
                }
            }
        }
        let probe = Timestamp::truncate(now + self.cfg.deadline_lead);
        let mut out = Vec::new();
        for i in 0..self.buckets.len() {
            if self.filling(i) && past(self.buckets[i].most_urgent().unwrap(), probe) {
                self.flush(i, FlushTrigger::DeadlineExceeded, now, &mut out);
            }
        }
        out
    }

    pub fn external_flush(&mut self, dest: NetworkAddress, now: u64) -> Option<FlushRecord> {
        let i = self.find(dest)?;
        let mut out = Vec::new();
        self.flush(i, FlushTrigger::External, now, &mut out);
        out.pop()
    }

    pub fn flush_all(&mut self, now: u64) -> Vec<FlushRecord> {
        let mut out = Vec::new();
        for i in 0..self.buckets.len() {
            self.flush(i, FlushTrigger::External, now, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Tick,
    Submit(RoutedEvent),
    External(NetworkAddress),
    FlushAll,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub config: AggregationConfig,
    /// (cycle, operation), cycles non-decreasing, one `Tick` per cycle.
    pub ops: Vec<(u64, Op)>,
}

/// Random trace: up to `max_events` events over up to 16 destinations, the
/// clock starting next to a timestamp wrap and deadlines from slightly past
/// to a few thousand cycles ahead.
pub fn random_trace(seed: u64, buckets: usize, max_events: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity = if rng.gen_bool(0.2) { 124 } else { rng.gen_range(1..=12) };
    let config = AggregationConfig {
        buckets,
        capacity,
        drain_rate: rng.gen_range(1..=8),
        deadline_lead: if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..=20) },
    };
    let dest_count = rng.gen_range(1..=16);
    let dests: Vec<NetworkAddress> = (0..dest_count).map(|_| NetworkAddress(rng.gen())).collect();
    let events = rng.gen_range(1..=max_events);
    let max_ahead: u64 = rng.gen_range(1..=4000);
    let burst = rng.gen_range(1..=4);
    let mut now: u64 = rng.gen_range(1..4) * (1 << 15) - rng.gen_range(0..2000) + 500;
    let mut ops = Vec::new();
    let mut emitted = 0;
    while emitted < events {
        ops.push((now, Op::Tick));
        for _ in 0..rng.gen_range(0..=burst) {
            if emitted == events {
                break;
            }
            let deadline = now + rng.gen_range(0..=max_ahead + 50) - 50;
            ops.push((
                now,
                Op::Submit(RoutedEvent {
                    dest: dests[rng.gen_range(0..dests.len())],
                    guid: Guid::truncate(emitted as u64),
                    timestamp: Timestamp::truncate(deadline),
                }),
            ));
            emitted += 1;
        }
        if rng.gen_bool(0.02) {
            ops.push((now, Op::External(dests[rng.gen_range(0..dests.len())])));
        }
        if rng.gen_bool(0.005) {
            ops.push((now, Op::FlushAll));
        }
        now += 1;
    }
    // let everything go out
    for _ in 0..(max_ahead + 300) {
        ops.push((now, Op::Tick));
        now += 1;
    }
    Trace { config, ops }
}

pub type FlushLog = Vec<(usize, FlushRecord)>;

pub fn replay_reference(trace: &Trace) -> FlushLog {
    let mut m = RefManager::new(trace.config);
    let mut log = Vec::new();
    for (k, (now, op)) in trace.ops.iter().enumerate() {
        let recs = match op {
            Op::Tick => m.tick(*now),
            Op::Submit(ev) => m.submit(*ev, *now),
            Op::External(d) => m.external_flush(*d, *now).into_iter().collect(),
            Op::FlushAll => m.flush_all(*now),
        };
        log.extend(recs.into_iter().map(|r| (k, r)));
    }
    log
}

/// Replays on the real manager, checking its invariants after every step.
pub fn replay_manager(trace: &Trace) -> Result<(FlushLog, BucketManager), String> {
    let mut m = BucketManager::new(trace.config).map_err(|e| e.to_string())?;
    let mut log = Vec::new();
    for (k, (now, op)) in trace.ops.iter().enumerate() {
        let recs = match op {
            Op::Tick => m.tick(*now),
            Op::Submit(ev) => m.submit(*ev, *now),
            Op::External(d) => m.external_flush(*d, *now).into_iter().collect(),
            Op::FlushAll => m.flush_all(*now),
        };
        m.check_invariants().map_err(|e| format!("step {k}: {e}"))?;
        log.extend(recs.into_iter().map(|r| (k, r)));
    }
    Ok((log, m))
}

/// Checks that every event leaves no later than the first tick at which its
/// deadline is exceeded. An event whose bucket is still draining at that tick
/// may wait for the drain, `ceil(drain / drain_rate)` ticks.
pub fn check_liveness(trace: &Trace) -> Result<(), String> {
    struct Pending {
        dest: NetworkAddress,
        deadline: Timestamp,
        due_by: Option<u64>,
    }
    let cfg = trace.config;
    let mut m = BucketManager::new(cfg).map_err(|e| e.to_string())?;
    let mut pending: std::collections::BTreeMap<u32, Pending> = Default::default();
    let settle = |recs: Vec<FlushRecord>, pending: &mut std::collections::BTreeMap<u32, Pending>| {
        for r in recs {
            for e in r.events {
                pending.remove(&e.guid.get());
            }
        }
    };
    for (now, op) in &trace.ops {
        match op {
            Op::Tick => {
                let recs = m.tick(*now);
                settle(recs, &mut pending);
                let probe = Timestamp::truncate(now + cfg.deadline_lead);
                for (guid, p) in pending.iter_mut() {
                    if p.due_by.is_none() && past(p.deadline, probe) {
                        let bucket = m.bucket(m.bucket_for(p.dest).ok_or("pending event without a bucket")?);
                        let drain = bucket.drain_counter();
                        if drain == 0 {
                            return Err(format!("event {guid} still pending at tick {now}, past its deadline"));
                        }
                        p.due_by = Some(now + drain.div_ceil(cfg.drain_rate) as u64);
                    }
                    if let Some(due) = p.due_by {
                        if *now > due {
                            return Err(format!("event {guid} overdue: due by {due}, still pending at {now}"));
                        }
                    }
                }
            }
            Op::Submit(ev) => {
                pending.insert(ev.guid.get(), Pending { dest: ev.dest, deadline: ev.timestamp, due_by: None });
                let recs = m.submit(*ev, *now);
                settle(recs, &mut pending);
            }
            Op::External(d) => {
                let recs = m.external_flush(*d, *now).into_iter().collect();
                settle(recs, &mut pending);
            }
            Op::FlushAll => {
                let recs = m.flush_all(*now);
                settle(recs, &mut pending);
            }
        }
    }
    if let Some((guid, _)) = pending.iter().next() {
        return Err(format!("event {guid} never flushed"));
    }
    Ok(())
}
