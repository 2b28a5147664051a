//! Source-side and destination-side lookup tables.
//!
//! The source table maps `(hicann link, pulse address)` to a network
//! destination and GUID. The destination table maps a GUID to an 8-bit
//! multicast mask over the local HICANN links. Tables are immutable once
//! loaded; misses are counted by a [`MissCounter`] owned by the caller.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::event_model::{Guid, HicannLink, NetworkAddress, PulseAddress, RangeError, RoutedEvent, SpikeEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceKey {
    pub hicann_link: HicannLink,
    pub pulse_address: PulseAddress,
}

impl SourceKey {
    pub fn new(link: u8, pulse_address: u16) -> Result<Self, RangeError> {
        Ok(Self { hicann_link: HicannLink::new(link)?, pulse_address: PulseAddress::new(pulse_address)? })
    }
}

impl fmt::Display for SourceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "link {} pulse {:#05x}", self.hicann_link.get(), self.pulse_address.get())
    }
}

/// Nonzero 8-bit mask; bit `i` selects HICANN link `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MulticastMask(u8);

impl MulticastMask {
    pub fn new(bits: u8) -> Option<Self> {
        (bits != 0).then_some(Self(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn fan_out(self) -> u32 {
        self.0.count_ones()
    }

    /// Links selected by the mask, lowest first.
    pub fn links(self) -> impl Iterator<Item = HicannLink> {
        (0..8u8).filter(move |i| self.0 & (1 << i) != 0).map(|i| HicannLink::truncate(i as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceEntry {
    pub dest: NetworkAddress,
    pub guid: Guid,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceRoutingTable {
    entries: BTreeMap<SourceKey, SourceEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DestRoutingTable {
    entries: BTreeMap<Guid, MulticastMask>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate source key ({key})")]
    DuplicateSource { line: usize, key: SourceKey },
    #[error("line {line}: duplicate guid {guid}")]
    DuplicateGuid { line: usize, guid: Guid },
    #[error("line {line}: multicast mask for guid {guid} is zero")]
    ZeroMask { line: usize, guid: Guid },
}

impl SourceRoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry; returns `false` and leaves the table untouched if the
    /// key is already present.
    pub fn insert(&mut self, key: SourceKey, dest: NetworkAddress, guid: Guid) -> bool {
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, SourceEntry { dest, guid });
        true
    }

    pub fn get(&self, key: &SourceKey) -> Option<SourceEntry> {
        self.entries.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SourceKey, &SourceEntry)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &SourceKey> {
        self.entries.keys()
    }
}

impl DestRoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, guid: Guid, mask: MulticastMask) -> bool {
        if self.entries.contains_key(&guid) {
            return false;
        }
        self.entries.insert(guid, mask);
        true
    }

    pub fn get(&self, guid: Guid) -> Option<MulticastMask> {
        self.entries.get(&guid).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Guid, &MulticastMask)> {
        self.entries.iter()
    }
}

/// Miss count plus the set of keys that have missed at least once.
#[derive(Debug, Clone)]
pub struct MissCounter<K> {
    count: u64,
    seen: BTreeSet<K>,
}

impl<K> Default for MissCounter<K> {
    fn default() -> Self {
        Self { count: 0, seen: BTreeSet::new() }
    }
}

impl<K: Ord + Copy + fmt::Display> MissCounter<K> {
    fn record(&mut self, key: K, what: &str) {
        self.count += 1;
        if self.seen.insert(key) {
            log::warn!("{what} lookup miss for {key}");
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Distinct keys that missed, in key order.
    pub fn distinct(&self) -> impl Iterator<Item = &K> {
        self.seen.iter()
    }
}

/// Looks up the network destination and GUID for a HICANN event.
///
/// `key.pulse_address` must equal `event.pulse_address`.
pub fn route_source(
    table: &SourceRoutingTable,
    key: SourceKey,
    event: SpikeEvent,
    misses: &mut MissCounter<SourceKey>,
) -> Option<RoutedEvent> {
    debug_assert_eq!(key.pulse_address, event.pulse_address);
    match table.get(&key) {
        Some(entry) => Some(RoutedEvent { dest: entry.dest, guid: entry.guid, timestamp: event.timestamp }),
        None => {
            misses.record(key, "source");
            None
        }
    }
}

/// Looks up the multicast mask for a received GUID.
pub fn route_dest(table: &DestRoutingTable, guid: Guid, misses: &mut MissCounter<Guid>) -> Option<MulticastMask> {
    match table.get(guid) {
        Some(mask) => Some(mask),
        None => {
            misses.record(guid, "destination");
            None
        }
    }
}

fn parse_hex(tok: &str, line: usize, what: &str) -> Result<u64, TableError> {
    let digits = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")).unwrap_or(tok);
    u64::from_str_radix(digits, 16).map_err(|_| TableError::Parse { line, msg: format!("invalid hex {what} `{tok}`") })
}

fn parse_mask(tok: &str, line: usize) -> Result<u8, TableError> {
    let digits = tok.strip_prefix("0b").or_else(|| tok.strip_prefix("0B")).unwrap_or(tok);
    if digits.is_empty() || digits.len() > 8 {
        return Err(TableError::Parse { line, msg: format!("mask `{tok}` must be 1 to 8 binary digits") });
    }
    u8::from_str_radix(digits, 2).map_err(|_| TableError::Parse { line, msg: format!("invalid binary mask `{tok}`") })
}

fn ranged<T: TryFrom<u64, Error = RangeError>>(value: u64, line: usize) -> Result<T, TableError> {
    T::try_from(value).map_err(|e| TableError::Parse { line, msg: e.to_string() })
}

/// Parses a table file.
///
/// ```text
/// # comment
/// src <hicann_link:0-7> <pulse_address:hex> <dest:hex> <guid:hex>
/// dst <guid:hex> <mask:binary>
/// ```
pub fn load_tables(text: &str) -> Result<(SourceRoutingTable, DestRoutingTable), TableError> {
    let mut src = SourceRoutingTable::new();
    let mut dst = DestRoutingTable::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "src" => {
                if toks.len() != 5 {
                    return Err(TableError::Parse {
                        line,
                        msg: format!("`src` expects 4 fields, got {}", toks.len() - 1),
                    });
                }
                let link: u64 = toks[1]
                    .parse()
                    .map_err(|_| TableError::Parse { line, msg: format!("invalid hicann link `{}`", toks[1]) })?;
                let key = SourceKey {
                    hicann_link: ranged(link, line)?,
                    pulse_address: ranged(parse_hex(toks[2], line, "pulse address")?, line)?,
                };
                let dest = parse_hex(toks[3], line, "destination")?;
                let dest = u16::try_from(dest).map(NetworkAddress).map_err(|_| TableError::Parse {
                    line,
                    msg: format!("destination {dest:#x} does not fit in 16 bits"),
                })?;
                let guid: Guid = ranged(parse_hex(toks[4], line, "guid")?, line)?;
                if !src.insert(key, dest, guid) {
                    return Err(TableError::DuplicateSource { line, key });
                }
            }
            "dst" => {
                if toks.len() != 3 {
                    return Err(TableError::Parse {
                        line,
                        msg: format!("`dst` expects 2 fields, got {}", toks.len() - 1),
                    });
                }
                let guid: Guid = ranged(parse_hex(toks[1], line, "guid")?, line)?;
                let mask = MulticastMask::new(parse_mask(toks[2], line)?).ok_or(TableError::ZeroMask { line, guid })?;
                if !dst.insert(guid, mask) {
                    return Err(TableError::DuplicateGuid { line, guid });
                }
            }
            other => {
                return Err(TableError::Parse { line, msg: format!("unknown record type `{other}`") });
            }
        }
    }
    Ok((src, dst))
}

/// Canonical serialization: all `src` lines sorted by key, then all `dst`
/// lines sorted by GUID.
pub fn save_tables(src: &SourceRoutingTable, dst: &DestRoutingTable) -> String {
    let mut out = String::new();
    for (key, entry) in src.iter() {
        let _ = writeln!(
            out,
            "src {} {:03x} {:04x} {:05x}",
            key.hicann_link.get(),
            key.pulse_address.get(),
            entry.dest.get(),
            entry.guid.get()
        );
    }
    for (guid, mask) in dst.iter() {
        let _ = writeln!(out, "dst {:05x} {:08b}", guid.get(), mask.bits());
    }
    out
}

/// A source entry whose GUID has no matching destination entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DanglingRoute {
    pub key: SourceKey,
    pub dest: NetworkAddress,
    pub guid: Guid,
}

impl fmt::Display for DanglingRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> dest {} guid {}: no destination entry", self.key, self.dest, self.guid)
    }
}

/// Checks every source entry against the destination table of the node it
/// targets. `dest_table` returns `None` for unknown destinations, which are
/// reported as dangling as well.
pub fn check_consistency<'a>(
    src: &SourceRoutingTable,
    dest_table: impl Fn(NetworkAddress) -> Option<&'a DestRoutingTable>,
) -> Vec<DanglingRoute> {
    src.iter()
        .filter(|(_, e)| dest_table(e.dest).and_then(|t| t.get(e.guid)).is_none())
        .map(|(k, e)| DanglingRoute { key: *k, dest: e.dest, guid: e.guid })
        .collect()
}
