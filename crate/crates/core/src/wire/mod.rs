//! Byte-level pub/sub protocol: subjects, frames, MQTT topic mapping and the
//! JSON sample payload.
//!
//! Grammar (every line ends in `\r\n`):
//!
//! ```text
//! PUB <subject> <len>\r\n<len bytes>\r\n
//! SUB <subject> <sid>\r\n
//! UNSUB <sid>\r\n
//! MSG <subject> <sid> <len>\r\n<len bytes>\r\n
//! PING\r\n  PONG\r\n  +OK\r\n  -ERR <text>\r\n
//! ```

mod frame;
mod mqtt;
mod payload;
mod subject;

use thiserror::Error;

pub use frame::{
    encode_frame, encode_into, encode_msg, parse_frame, Decoded, Frame, FrameReader,
    DEFAULT_MAX_PAYLOAD, MAX_CONTROL_LINE,
};
pub use mqtt::{mqtt_topic_to_subject, subject_to_mqtt_topic};
pub use payload::SamplePayload;
pub use subject::{subject_matches, Subject};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("payload of {len} bytes exceeds maximum {max}")]
    PayloadTooLarge { len: u64, max: usize },
    #[error("invalid subject '{0}'")]
    InvalidSubject(String),
    #[error("wildcards not allowed in '{0}'")]
    WildcardNotAllowed(String),
    #[error("invalid MQTT topic {0}")]
    InvalidTopic(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("non-finite sample value")]
    NonFiniteValue,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
