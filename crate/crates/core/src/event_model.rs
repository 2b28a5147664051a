//! Spike events, identifiers and wrap-around deadline arithmetic.
//!
//! Deadlines are 15-bit timestamps in system-time units. The simulator keeps
//! an unbounded cycle counter and projects it into the timestamp domain with
//! [`timestamp_of_clock`]. Comparisons between timestamps use serial-number
//! arithmetic over a half window of 2^14 units.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

/// Width of a source neuron pulse address.
pub const PULSE_ADDRESS_BITS: u32 = 12;
/// Width of a deadline timestamp.
pub const TIMESTAMP_BITS: u32 = 15;
/// Width of a global event identifier.
pub const GUID_BITS: u32 = 17;
/// Number of HICANN links attached to one FPGA.
pub const HICANN_LINKS: u8 = 8;
/// Default FPGA clock frequency in Hz.
pub const DEFAULT_CLOCK_HZ: f64 = 210e6;

/// A value did not fit its field width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{field} value {value:#x} does not fit in {bits} bits")]
pub struct RangeError {
    pub field: &'static str,
    pub value: u64,
    pub bits: u32,
}

macro_rules! bounded_newtype {
    ($(#[$meta:meta])* $name:ident, $repr:ty, $bits:expr, $field:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name($repr);

        impl $name {
            pub const BITS: u32 = $bits;
            pub const MAX: $repr = ((1u64 << $bits) - 1) as $repr;

            pub fn new(value: $repr) -> Result<Self, RangeError> {
                if (value as u64) >> $bits != 0 {
                    Err(RangeError { field: $field, value: value as u64, bits: $bits })
                } else {
                    Ok(Self(value))
                }
            }

            /// Keeps only the low bits of `value`.
            pub const fn truncate(value: u64) -> Self {
                Self((value & ((1u64 << $bits) - 1)) as $repr)
            }

            pub const fn get(self) -> $repr {
                self.0
            }
        }

        impl TryFrom<u64> for $name {
            type Error = RangeError;

            fn try_from(value: u64) -> Result<Self, RangeError> {
                if value >> $bits != 0 {
                    Err(RangeError { field: $field, value, bits: $bits })
                } else {
                    Ok(Self(value as $repr))
                }
            }
        }
    };
}

bounded_newtype!(
    /// 12-bit source neuron pulse address.
    PulseAddress, u16, PULSE_ADDRESS_BITS, "pulse address"
);
bounded_newtype!(
    /// 15-bit arrival deadline in system-time units.
    Timestamp, u16, TIMESTAMP_BITS, "timestamp"
);
bounded_newtype!(
    /// 17-bit global identifier carried with every event on the network.
    Guid, u32, GUID_BITS, "guid"
);
bounded_newtype!(
    /// Index of a HICANN link on an FPGA (0..8).
    HicannLink, u8, 3, "hicann link"
);

/// 16-bit network destination address. Every `u16` is valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NetworkAddress(pub u16);

impl NetworkAddress {
    pub const fn get(self) -> u16 {
        self.0
    }
}

impl fmt::Display for NetworkAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.0)
    }
}

impl fmt::Display for Guid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#07x}", self.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An event as produced by a HICANN chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpikeEvent {
    pub pulse_address: PulseAddress,
    pub timestamp: Timestamp,
}

/// An event after source-side lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoutedEvent {
    pub dest: NetworkAddress,
    pub guid: Guid,
    pub timestamp: Timestamp,
}

/// The 32-bit on-wire form of an event: timestamp in bits [31:17], GUID in
/// bits [16:0].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WireEvent {
    pub guid: Guid,
    pub timestamp: Timestamp,
}

impl WireEvent {
    pub const fn to_word(self) -> u32 {
        ((self.timestamp.get() as u32) << GUID_BITS) | self.guid.get()
    }

    pub const fn from_word(word: u32) -> Self {
        Self { guid: Guid::truncate(word as u64), timestamp: Timestamp::truncate((word >> GUID_BITS) as u64) }
    }
}

impl From<RoutedEvent> for WireEvent {
    fn from(ev: RoutedEvent) -> Self {
        Self { guid: ev.guid, timestamp: ev.timestamp }
    }
}

/// Simulator clock in FPGA cycles. One system-time unit is one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemClock {
    now: u64,
    frequency_hz: f64,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { now: 0, frequency_hz: DEFAULT_CLOCK_HZ }
    }
}

impl SystemClock {
    pub fn new(frequency_hz: f64) -> Self {
        Self { now: 0, frequency_hz }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn timestamp(&self) -> Timestamp {
        timestamp_of_clock(self.now)
    }

    pub fn advance(&mut self, cycles: u64) {
        self.now += cycles;
    }

    /// Moves the clock to `cycle`. Panics if that would run time backwards.
    pub fn set(&mut self, cycle: u64) {
        assert!(cycle >= self.now, "clock moved backwards: {} -> {}", self.now, cycle);
        self.now = cycle;
    }
}

/// Serial-number arithmetic over a `bits`-wide cyclic counter.
///
/// Only the 15-bit instance is used by the protocol; other widths exist so the
/// comparison can be checked exhaustively on small moduli.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SerialSpace {
    bits: u32,
}

impl SerialSpace {
    pub const TIMESTAMP: SerialSpace = SerialSpace { bits: TIMESTAMP_BITS };

    pub const fn new(bits: u32) -> Self {
        assert!(bits >= 2 && bits <= 32);
        Self { bits }
    }

    pub const fn modulus(self) -> u64 {
        1 << self.bits
    }

    pub const fn half(self) -> u64 {
        1 << (self.bits - 1)
    }

    /// Forward distance from `from` to `to`.
    pub const fn distance(self, from: u64, to: u64) -> u64 {
        to.wrapping_sub(from) & (self.modulus() - 1)
    }

    /// True when `now` lies strictly after `deadline` within the half window.
    pub const fn exceeded(self, deadline: u64, now: u64) -> bool {
        let d = self.distance(deadline, now);
        d >= 1 && d < self.half()
    }

    pub fn order(self, a: u64, b: u64) -> Ordering {
        if a == b {
            Ordering::Equal
        } else if self.exceeded(a, b) {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

/// Projects the unbounded cycle counter into the 15-bit timestamp domain.
pub const fn timestamp_of_clock(now: u64) -> Timestamp {
    Timestamp::truncate(now)
}

/// Whether `now` is past `deadline` under wrap-around comparison.
pub const fn deadline_exceeded(deadline: Timestamp, now: Timestamp) -> bool {
    SerialSpace::TIMESTAMP.exceeded(deadline.get() as u64, now.get() as u64)
}

/// Urgency order: `Less` means `a` is due before `b`.
pub fn deadline_order(a: Timestamp, b: Timestamp) -> Ordering {
    SerialSpace::TIMESTAMP.order(a.get() as u64, b.get() as u64)
}

/// Lifts a timestamp back onto the cycle counter, choosing the cycle closest
/// to `reference` (within half a period, ties resolved into the future).
pub fn absolute_deadline(ts: Timestamp, reference: u64) -> u64 {
    let space = SerialSpace::TIMESTAMP;
    let ahead = space.distance(reference, ts.get() as u64);
    if ahead < space.half() {
        reference + ahead
    } else {
        reference.saturating_sub(space.modulus() - ahead)
    }
}
