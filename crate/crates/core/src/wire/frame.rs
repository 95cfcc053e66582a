use std::io::{self, Read};

use super::{Subject, WireError};

pub const DEFAULT_MAX_PAYLOAD: usize = 1024 * 1024;

/// Longest accepted control line (everything before the first `\r\n`).
pub const MAX_CONTROL_LINE: usize = 4096;

const CRLF: &[u8] = b"\r\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Pub { subject: Subject, payload: Vec<u8> },
    Sub { subject: Subject, sid: u64 },
    Unsub { sid: u64 },
    Msg { subject: Subject, sid: u64, payload: Vec<u8> },
    Ping,
    Pong,
    Ok,
    Err { message: String },
}

impl Frame {
    pub fn verb(&self) -> &'static str {
        match self {
            Frame::Pub { .. } => "PUB",
            Frame::Sub { .. } => "SUB",
            Frame::Unsub { .. } => "UNSUB",
            Frame::Msg { .. } => "MSG",
            Frame::Ping => "PING",
            Frame::Pong => "PONG",
            Frame::Ok => "+OK",
            Frame::Err { .. } => "-ERR",
        }
    }

    pub fn err(message: impl Into<String>) -> Frame {
        Frame::Err { message: message.into() }
    }
}

/// Outcome of trying to decode one frame from the front of a buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Frame(Frame, usize),
    NeedMore,
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(frame, &mut out);
    out
}

pub fn encode_into(frame: &Frame, out: &mut Vec<u8>) {
    match frame {
        Frame::Pub { subject, payload } => {
            out.extend_from_slice(format!("PUB {} {}\r\n", subject, payload.len()).as_bytes());
            out.extend_from_slice(payload);
            out.extend_from_slice(CRLF);
        }
        Frame::Sub { subject, sid } => {
            out.extend_from_slice(format!("SUB {subject} {sid}\r\n").as_bytes());
        }
        Frame::Unsub { sid } => out.extend_from_slice(format!("UNSUB {sid}\r\n").as_bytes()),
        Frame::Msg { subject, sid, payload } => encode_msg(subject, *sid, payload, out),
        Frame::Ping => out.extend_from_slice(b"PING\r\n"),
        Frame::Pong => out.extend_from_slice(b"PONG\r\n"),
        Frame::Ok => out.extend_from_slice(b"+OK\r\n"),
        Frame::Err { message } => {
            out.extend_from_slice(b"-ERR ");
            out.extend_from_slice(message.as_bytes());
            out.extend_from_slice(CRLF);
        }
    }
}

/// Writes a MSG frame without building an owned [`Frame`] first.
pub fn encode_msg(subject: &Subject, sid: u64, payload: &[u8], out: &mut Vec<u8>) {
    out.extend_from_slice(format!("MSG {} {} {}\r\n", subject, sid, payload.len()).as_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(CRLF);
}

fn malformed(msg: impl Into<String>) -> WireError {
    WireError::MalformedFrame(msg.into())
}

fn parse_uint(field: &str, what: &str) -> Result<u64, WireError> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(format!("bad {what} '{field}'")));
    }
    field
        .parse::<u64>()
        .map_err(|_| malformed(format!("bad {what} '{field}'")))
}

fn find_crlf(buf: &[u8]) -> Option<usize> {
    buf.windows(2).position(|w| w == CRLF)
}

/// Decodes the first frame in `buf`.
///
/// Returns [`Decoded::NeedMore`] when the buffer holds only a prefix of a frame.
pub fn parse_frame(buf: &[u8], max_payload: usize) -> Result<Decoded, WireError> {
    let Some(line_end) = find_crlf(buf) else {
        if buf.len() > MAX_CONTROL_LINE {
            return Err(malformed("control line too long"));
        }
        return Ok(Decoded::NeedMore);
    };
    if line_end > MAX_CONTROL_LINE {
        return Err(malformed("control line too long"));
    }
    let line = std::str::from_utf8(&buf[..line_end])
        .map_err(|_| malformed("control line is not UTF-8"))?;
    let header_len = line_end + 2;

    if let Some(message) = line.strip_prefix("-ERR ") {
        let frame = Frame::Err { message: message.to_string() };
        return Ok(Decoded::Frame(frame, header_len));
    }

    let fields: Vec<&str> = line.split(' ').collect();
    let simple = |frame: Frame| -> Result<Decoded, WireError> {
        if fields.len() != 1 {
            return Err(malformed(format!("{} takes no arguments", fields[0])));
        }
        Ok(Decoded::Frame(frame, header_len))
    };

    match fields[0] {
        "PING" => simple(Frame::Ping),
        "PONG" => simple(Frame::Pong),
        "+OK" => simple(Frame::Ok),
        "SUB" => {
            if fields.len() != 3 {
                return Err(malformed("SUB expects <subject> <sid>"));
            }
            let subject = Subject::pattern(fields[1]).map_err(|e| malformed(e.to_string()))?;
            let sid = parse_uint(fields[2], "sid")?;
            Ok(Decoded::Frame(Frame::Sub { subject, sid }, header_len))
        }
        "UNSUB" => {
            if fields.len() != 2 {
                return Err(malformed("UNSUB expects <sid>"));
            }
            let sid = parse_uint(fields[1], "sid")?;
            Ok(Decoded::Frame(Frame::Unsub { sid }, header_len))
        }
        "PUB" | "MSG" => {
            let is_pub = fields[0] == "PUB";
            let expected = if is_pub { 3 } else { 4 };
            if fields.len() != expected {
                return Err(malformed(format!("{} has wrong arity", fields[0])));
            }
            let subject = Subject::concrete(fields[1]).map_err(|e| malformed(e.to_string()))?;
            let sid = if is_pub { 0 } else { parse_uint(fields[2], "sid")? };
            let len = parse_uint(fields[expected - 1], "length")?;
            if len > max_payload as u64 {
                return Err(WireError::PayloadTooLarge { len, max: max_payload });
            }
            let len = len as usize;
            let total = header_len + len + 2;
            if buf.len() < total {
                return Ok(Decoded::NeedMore);
            }
            if &buf[header_len + len..total] != CRLF {
                return Err(malformed("payload length does not match terminator"));
            }
            let payload = buf[header_len..header_len + len].to_vec();
            let frame = if is_pub {
                Frame::Pub { subject, payload }
            } else {
                Frame::Msg { subject, sid, payload }
            };
            Ok(Decoded::Frame(frame, total))
        }
        other => Err(malformed(format!("unknown verb '{other}'"))),
    }
}

/// Buffered frame decoder over any byte source.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
    start: usize,
    max_payload: usize,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R, max_payload: usize) -> Self {
        FrameReader { inner, buf: Vec::with_capacity(8192), start: 0, max_payload }
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }

    /// Reads the next frame. `Ok(None)` means a clean end of stream at a frame boundary.
    pub fn read_frame(&mut self) -> Result<Option<Frame>, WireError> {
        loop {
            match parse_frame(&self.buf[self.start..], self.max_payload)? {
                Decoded::Frame(frame, used) => {
                    self.start += used;
                    if self.start == self.buf.len() {
                        self.buf.clear();
                        self.start = 0;
                    }
                    return Ok(Some(frame));
                }
                Decoded::NeedMore => {
                    if self.start > 0 {
                        self.buf.drain(..self.start);
                        self.start = 0;
                    }
                    let mut chunk = [0u8; 8192];
                    let n = match self.inner.read(&mut chunk) {
                        Ok(n) => n,
                        Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                        Err(e) => return Err(WireError::Io(e)),
                    };
                    if n == 0 {
                        if self.buf.is_empty() {
                            return Ok(None);
                        }
                        return Err(WireError::Io(io::Error::new(
                            io::ErrorKind::UnexpectedEof,
                            "stream ended inside a frame",
                        )));
                    }
                    self.buf.extend_from_slice(&chunk[..n]);
                }
            }
        }
    }
}
