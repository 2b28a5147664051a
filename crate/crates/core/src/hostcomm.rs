//! FPGA to host ring-buffer channel with notification-based credits.
//!
//! The producer (FPGA) owns a write pointer and a space register. It writes
//! into the host ring without asking first, as long as `space` covers the
//! write, and tells the consumer how much it wrote through a
//! [`NotificationKind::DataWritten`] notification. The consumer (host) sees
//! data once the notification arrives and returns credit with
//! [`NotificationKind::DataConsumed`]. Both directions have a fixed latency.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotificationKind {
    DataWritten,
    DataConsumed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Notification {
    pub kind: NotificationKind,
    pub amount: usize,
    pub issue_cycle: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HostCommError {
    #[error("ring size {0} is not a nonzero power of two")]
    BadSize(usize),
    #[error("payload of {len} bytes exceeds the {size}-byte ring")]
    PayloadTooLarge { len: usize, size: usize },
    #[error("credit of {amount} bytes exceeds the {available} bytes consumed but not credited")]
    OverCredit { amount: usize, available: usize },
    #[error("notification batch must be at least 1")]
    BadBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Accepted,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingConfig {
    /// Ring size in bytes, a power of two.
    pub size: usize,
    pub notification_latency: u64,
    /// Puts coalesced into one `DataWritten` notification.
    pub notification_batch: usize,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self { size: 4096, notification_latency: 50, notification_batch: 1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RingStats {
    pub bytes_written: u64,
    pub bytes_delivered: u64,
    pub puts: u64,
    pub stalls: u64,
    /// Highest number of bytes written but not yet credited back.
    pub occupancy_high_water: usize,
}

#[derive(Debug, Clone)]
pub struct RingChannel {
    buf: Vec<u8>,
    config: RingConfig,
    write_ptr: usize,
    read_ptr: usize,
    space: usize,
    // producer -> consumer
    to_consumer: VecDeque<Notification>,
    // consumer -> producer
    to_producer: VecDeque<Notification>,
    unnotified_bytes: usize,
    unnotified_puts: usize,
    // consumer-side view
    visible: usize,
    delivered_uncredited: usize,
    stats: RingStats,
}

impl RingChannel {
    pub fn new(config: RingConfig) -> Result<Self, HostCommError> {
        if !config.size.is_power_of_two() {
            return Err(HostCommError::BadSize(config.size));
        }
        if config.notification_batch == 0 {
            return Err(HostCommError::BadBatch);
        }
        Ok(Self {
            buf: vec![0; config.size],
            write_ptr: 0,
            read_ptr: 0,
            space: config.size,
            to_consumer: VecDeque::new(),
            to_producer: VecDeque::new(),
            unnotified_bytes: 0,
            unnotified_puts: 0,
            visible: 0,
            delivered_uncredited: 0,
            stats: RingStats::default(),
            config,
        })
    }

    pub fn size(&self) -> usize {
        self.config.size
    }

    pub fn write_ptr(&self) -> usize {
        self.write_ptr
    }

    pub fn read_ptr(&self) -> usize {
        self.read_ptr
    }

    /// Free bytes as seen by the producer.
    pub fn space(&self) -> usize {
        self.space
    }

    pub fn stats(&self) -> &RingStats {
        &self.stats
    }

    /// Credits issued by the consumer that the producer has not seen yet.
    pub fn credit_in_flight(&self) -> usize {
        self.to_producer.iter().map(|n| n.amount).sum()
    }

    /// Bytes written that the consumer has not credited yet.
    pub fn uncredited(&self) -> usize {
        self.config.size - self.space - self.credit_in_flight()
    }

    /// Bytes delivered to the consumer and not credited.
    pub fn delivered_uncredited(&self) -> usize {
        self.delivered_uncredited
    }

    fn sync_producer(&mut self, now: u64) {
        let latency = self.config.notification_latency;
        while let Some(n) = self.to_producer.front() {
            if n.issue_cycle + latency > now {
                break;
            }
            self.space += n.amount;
            self.to_producer.pop_front();
        }
        debug_assert!(self.space <= self.config.size);
    }

    fn sync_consumer(&mut self, now: u64) {
        let latency = self.config.notification_latency;
        while let Some(n) = self.to_consumer.front() {
            if n.issue_cycle + latency > now {
                break;
            }
            self.visible += n.amount;
            self.to_consumer.pop_front();
        }
    }

    /// Writes `payload` into the ring if the producer holds enough credit.
    /// A stalled put has no side effects besides the stall counter.
    pub fn producer_put(&mut self, payload: &[u8], now: u64) -> Result<PutOutcome, HostCommError> {
        let size = self.config.size;
        if payload.len() > size {
            return Err(HostCommError::PayloadTooLarge { len: payload.len(), size });
        }
        self.sync_producer(now);
        if payload.is_empty() {
            return Ok(PutOutcome::Accepted);
        }
        if self.space < payload.len() {
            self.stats.stalls += 1;
            return Ok(PutOutcome::Stalled);
        }
        let first = payload.len().min(size - self.write_ptr);
        self.buf[self.write_ptr..self.write_ptr + first].copy_from_slice(&payload[..first]);
        self.buf[..payload.len() - first].copy_from_slice(&payload[first..]);
        self.write_ptr = (self.write_ptr + payload.len()) & (size - 1);
        self.space -= payload.len();
        self.stats.bytes_written += payload.len() as u64;
        self.stats.puts += 1;
        self.unnotified_bytes += payload.len();
        self.unnotified_puts += 1;
        if self.unnotified_puts >= self.config.notification_batch {
            self.flush_notifications(now);
        }
        self.stats.occupancy_high_water = self.stats.occupancy_high_water.max(self.uncredited());
        Ok(PutOutcome::Accepted)
    }

    /// Issues a `DataWritten` notification for any writes still held back by
    /// batching.
    pub fn flush_notifications(&mut self, now: u64) {
        if self.unnotified_bytes > 0 {
            self.to_consumer.push_back(Notification {
                kind: NotificationKind::DataWritten,
                amount: self.unnotified_bytes,
                issue_cycle: now,
            });
            self.unnotified_bytes = 0;
            self.unnotified_puts = 0;
        }
    }

    /// Returns every byte announced to the consumer by `now`, in write order.
    pub fn consumer_poll(&mut self, now: u64) -> Vec<u8> {
        self.consumer_poll_max(now, usize::MAX)
    }

    /// Like [`consumer_poll`](Self::consumer_poll) but reads at most `limit` bytes.
    pub fn consumer_poll_max(&mut self, now: u64, limit: usize) -> Vec<u8> {
        self.sync_consumer(now);
        let n = self.visible.min(limit);
        let size = self.config.size;
        let first = n.min(size - self.read_ptr);
        let mut out = Vec::with_capacity(n);
        out.extend_from_slice(&self.buf[self.read_ptr..self.read_ptr + first]);
        out.extend_from_slice(&self.buf[..n - first]);
        self.read_ptr = (self.read_ptr + n) & (size - 1);
        self.visible -= n;
        self.delivered_uncredited += n;
        self.stats.bytes_delivered += n as u64;
        out
    }

    /// Returns `amount` bytes of credit to the producer.
    pub fn consumer_credit(&mut self, amount: usize, now: u64) -> Result<(), HostCommError> {
        if amount > self.delivered_uncredited {
            return Err(HostCommError::OverCredit { amount, available: self.delivered_uncredited });
        }
        if amount == 0 {
            return Ok(());
        }
        self.delivered_uncredited -= amount;
        self.to_producer.push_back(Notification { kind: NotificationKind::DataConsumed, amount, issue_cycle: now });
        Ok(())
    }

    /// Applies every notification due by `now` on both sides.
    pub fn advance(&mut self, now: u64) {
        self.sync_producer(now);
        self.sync_consumer(now);
    }

    /// Notifications still travelling, producer-bound then consumer-bound.
    pub fn in_flight(&self) -> impl Iterator<Item = &Notification> {
        self.to_producer.iter().chain(self.to_consumer.iter())
    }
}

/// Host to FPGA direction: data is consumed on arrival, limited only by a
/// byte rate.
#[derive(Debug, Clone)]
pub struct HostToFpgaSink {
    bytes_per_cycle: u64,
    budget: u64,
    last_cycle: Option<u64>,
    consumed: u64,
    rejected: u64,
}

impl HostToFpgaSink {
    pub fn new(bytes_per_cycle: u64) -> Self {
        Self { bytes_per_cycle, budget: 0, last_cycle: None, consumed: 0, rejected: 0 }
    }

    /// Accepts `len` bytes if the rate budget allows it. Unused budget carries
    /// over for at most one cycle.
    pub fn offer(&mut self, len: usize, now: u64) -> bool {
        let elapsed = match self.last_cycle {
            Some(last) => now.saturating_sub(last),
            None => 1,
        };
        self.last_cycle = Some(now);
        let cap = self.bytes_per_cycle.saturating_mul(2);
        self.budget = (self.budget + elapsed.saturating_mul(self.bytes_per_cycle)).min(cap);
        if (len as u64) <= self.budget {
            self.budget -= len as u64;
            self.consumed += len as u64;
            true
        } else {
            self.rejected += 1;
            false
        }
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }
}
