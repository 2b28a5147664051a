//! Randomized producer/consumer schedules against a shadow byte stream.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use spikenet::hostcomm::{PutOutcome, RingChannel, RingConfig};

pub struct ScheduleReport {
    pub bytes: usize,
    pub stalls: u64,
}

fn credit_balance(ring: &RingChannel, written: usize, credited: usize) -> Result<(), String> {
    let uncredited = written - credited;
    if ring.space() + ring.credit_in_flight() + uncredited != ring.size() {
        return Err(format!(
            "credit conservation broken: space {} + in flight {} + uncredited {uncredited} != {}",
            ring.space(),
            ring.credit_in_flight(),
            ring.size()
        ));
    }
    Ok(())
}

/// Runs one random schedule. The consumer must see exactly the bytes the
/// producer wrote, in order, and the producer must end with full credit.
pub fn run_schedule(seed: u64) -> Result<ScheduleReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = RingConfig {
        size: 1 << rng.gen_range(3..=9),
        notification_latency: rng.gen_range(0..=12),
        notification_batch: rng.gen_range(1..=4),
    };
    let mut ring = RingChannel::new(config).map_err(|e| e.to_string())?;
    let puts = rng.gen_range(1..=32);
    let mut shadow: Vec<u8> = Vec::new();
    let mut received: Vec<u8> = Vec::new();
    let mut next_byte: u8 = 0;
    let mut staged: Option<Vec<u8>> = None;
    let mut done = 0;
    let mut now = 0u64;
    let mut idle = 0;
    let mut credited = 0usize;
    loop {
        if staged.is_none() && done < puts {
            let len = rng.gen_range(1..=config.size);
            staged = Some(
                (0..len)
                    .map(|_| {
                        next_byte = next_byte.wrapping_add(1);
                        next_byte
                    })
                    .collect(),
            );
        }
        if let Some(p) = &staged {
            if rng.gen_bool(0.7) {
                match ring.producer_put(p, now).map_err(|e| e.to_string())? {
                    PutOutcome::Accepted => {
                        shadow.extend_from_slice(p);
                        staged = None;
                        done += 1;
                    }
                    PutOutcome::Stalled => {}
                }
            }
        }
        if rng.gen_bool(0.1) || done == puts {
            ring.flush_notifications(now);
        }
        if rng.gen_bool(0.6) {
            let limit = rng.gen_range(1..=config.size);
            let got = ring.consumer_poll_max(now, limit);
            let at = received.len();
            if at + got.len() > shadow.len() || got[..] != shadow[at..at + got.len()] {
                return Err(format!("consumer stream diverged after {at} bytes"));
            }
            received.extend(got);
        }
        let owed = ring.delivered_uncredited();
        if owed > 0 && rng.gen_bool(0.5) {
            let amount = rng.gen_range(1..=owed);
            ring.consumer_credit(amount, now).map_err(|e| e.to_string())?;
            credited += amount;
        }
        if ring.consumer_credit(ring.delivered_uncredited() + 1, now).is_ok() {
            return Err("over-credit accepted".into());
        }
        ring.advance(now);
        credit_balance(&ring, shadow.len(), credited)?;
        let settled = done == puts && ring.in_flight().next().is_none() && ring.delivered_uncredited() == 0;
        if settled && received.len() == shadow.len() {
            break;
        }
        now += 1;
        idle += 1;
        if idle > 100_000 {
            return Err("schedule did not settle".into());
        }
    }
    if ring.space() != ring.size() {
        return Err(format!("final space {} != size {}", ring.space(), ring.size()));
    }
    Ok(ScheduleReport { bytes: shadow.len(), stalls: ring.stats().stalls })
}
