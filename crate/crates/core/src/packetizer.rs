//! Bit-exact spike packet codec.
//!
//! A packet is a sequence of 128-bit network words. The first word is the
//! header:
//!
//! | bytes  | field                                  |
//! |--------|----------------------------------------|
//! | 0..2   | destination address, little endian    |
//! | 2..4   | source address, little endian         |
//! | 4      | event count (bits 6:0), bit 7 zero    |
//! | 5      | message type (bits 3:0), bits 7:4 zero|
//! | 6..16  | reserved, zero                         |
//!
//! Payload words follow, four 32-bit little-endian event slots each, earliest
//! event in the lowest slot. Unused slots of the last word are zero.

use thiserror::Error;

use crate::event_model::{NetworkAddress, WireEvent};

pub const WORD_BYTES: usize = 16;
pub const EVENT_BYTES: usize = 4;
pub const EVENTS_PER_WORD: usize = WORD_BYTES / EVENT_BYTES;
pub const MAX_PAYLOAD_BYTES: usize = 496;
pub const MAX_EVENTS: usize = MAX_PAYLOAD_BYTES / EVENT_BYTES;
pub const MSG_TYPE_SPIKES: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("packet carries no events")]
    EmptyPayload,
    #[error("{0} events exceed the {MAX_EVENTS}-event payload limit")]
    Overflow(usize),
    /// `expected` is zero when the length is not a positive multiple of a word.
    #[error("bad packet length {len} bytes (expected {expected})")]
    BadLength { len: usize, expected: usize },
    #[error("unsupported message type {0}")]
    BadType(u8),
    #[error("event count {0} outside 1..={MAX_EVENTS}")]
    BadCount(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketHeader {
    pub dest: NetworkAddress,
    pub source: NetworkAddress,
    pub event_count: u8,
    pub msg_type: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub header: PacketHeader,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn new(dest: NetworkAddress, source: NetworkAddress, events: &[WireEvent]) -> Result<Self, CodecError> {
        check_count(events.len())?;
        let words = payload_words(events.len());
        let mut payload = vec![0u8; words * WORD_BYTES];
        for (slot, ev) in payload.chunks_exact_mut(EVENT_BYTES).zip(events) {
            slot.copy_from_slice(&ev.to_word().to_le_bytes());
        }
        let header = PacketHeader { dest, source, event_count: events.len() as u8, msg_type: MSG_TYPE_SPIKES };
        Ok(Self { header, payload })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(WORD_BYTES + self.payload.len());
        out.extend_from_slice(&self.header.dest.get().to_le_bytes());
        out.extend_from_slice(&self.header.source.get().to_le_bytes());
        out.push(self.header.event_count & 0x7f);
        out.push(self.header.msg_type & 0x0f);
        out.resize(WORD_BYTES, 0);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn events(&self) -> Vec<WireEvent> {
        self.payload
            .chunks_exact(EVENT_BYTES)
            .take(self.header.event_count as usize)
            .map(|s| WireEvent::from_word(u32::from_le_bytes([s[0], s[1], s[2], s[3]])))
            .collect()
    }

    /// Network words including the header.
    pub fn words(&self) -> usize {
        1 + self.payload.len() / WORD_BYTES
    }
}

fn check_count(n: usize) -> Result<(), CodecError> {
    match n {
        0 => Err(CodecError::EmptyPayload),
        n if n > MAX_EVENTS => Err(CodecError::Overflow(n)),
        _ => Ok(()),
    }
}

fn payload_words(n: usize) -> usize {
    n.div_ceil(EVENTS_PER_WORD)
}

/// Encodes a packet for `events`, header word first.
pub fn encode_packet(
    dest: NetworkAddress,
    source: NetworkAddress,
    events: &[WireEvent],
) -> Result<Vec<u8>, CodecError> {
    Packet::new(dest, source, events).map(|p| p.to_bytes())
}

/// Parses the header word and the `event_count` events that follow it.
pub fn decode_packet(bytes: &[u8]) -> Result<(PacketHeader, Vec<WireEvent>), CodecError> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(WORD_BYTES) {
        return Err(CodecError::BadLength { len: bytes.len(), expected: 0 });
    }
    let msg_type = bytes[5];
    if msg_type != MSG_TYPE_SPIKES {
        return Err(CodecError::BadType(msg_type));
    }
    let count = bytes[4];
    if count == 0 || count as usize > MAX_EVENTS {
        return Err(CodecError::BadCount(count));
    }
    let expected = encoded_len(count as usize);
    if bytes.len() != expected {
        return Err(CodecError::BadLength { len: bytes.len(), expected });
    }
    let header = PacketHeader {
        dest: NetworkAddress(u16::from_le_bytes([bytes[0], bytes[1]])),
        source: NetworkAddress(u16::from_le_bytes([bytes[2], bytes[3]])),
        event_count: count,
        msg_type,
    };
    let packet = Packet { header, payload: bytes[WORD_BYTES..].to_vec() };
    let events = packet.events();
    Ok((header, events))
}

/// Total encoded size in bytes for `n` events.
pub fn encoded_len(n: usize) -> usize {
    WORD_BYTES * (1 + payload_words(n))
}

/// Cycles to shift a message of `event_count` events out at one word per
/// cycle: one header word plus the payload words.
pub fn message_cycles(event_count: usize) -> Result<u32, CodecError> {
    check_count(event_count)?;
    Ok(1 + payload_words(event_count) as u32)
}
