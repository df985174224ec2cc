//! DNS message model and wire codec.
//!
//! Names are emitted uncompressed and decoded with compression support. Label bytes
//! are carried verbatim in both directions so 0x20 case patterns survive a round trip.

mod codec;
mod message;
mod name;

pub use codec::{decode_message, decode_message_with, encode_message, DecodeOptions};
pub use message::{
    DnsHeader, DnsMessage, QueryKey, Question, RData, Rcode, Record, RecordType, CLASS_IN,
};
pub use name::{DnsName, NameKey, MAX_LABEL_LEN, MAX_NAME_LEN};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("name is {0} bytes on the wire, limit is 255")]
    NameTooLong(usize),
    #[error("label of {0} bytes exceeds 63")]
    LabelTooLong(usize),
    #[error("empty label inside a name")]
    EmptyLabel,
    #[error("too many records in one section")]
    TooManyRecords,
    #[error("packet truncated")]
    TruncatedPacket,
    #[error("compression pointer loop")]
    PointerLoop,
    #[error("section counts do not match the message body")]
    CountMismatch,
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(usize),
    #[error("rdata length {len} invalid for record type {rtype}")]
    BadRdata { rtype: u16, len: usize },
}
