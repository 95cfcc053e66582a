use std::io::{self, BufWriter, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam::channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::Mutex;

use super::BrokerError;
use crate::wire::{encode_into, Frame, FrameReader, Subject, DEFAULT_MAX_PAYLOAD};

/// A message delivered to one of this client's subscriptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub subject: Subject,
    pub sid: u64,
    pub payload: Vec<u8>,
}

/// Blocking broker client. A background thread reads frames, answers PINGs
/// and queues MSG frames for [`Client::next_message`].
pub struct Client {
    stream: TcpStream,
    writer: Arc<Mutex<BufWriter<TcpStream>>>,
    messages: Receiver<Message>,
    pongs: Receiver<()>,
    next_sid: AtomicU64,
    connected: Arc<AtomicBool>,
    server_error: Arc<Mutex<Option<String>>>,
    reader: Option<JoinHandle<()>>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Client> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let writer = Arc::new(Mutex::new(BufWriter::new(stream.try_clone()?)));
        let (msg_tx, messages) = unbounded();
        let (pong_tx, pongs) = unbounded();
        let connected = Arc::new(AtomicBool::new(true));
        let server_error = Arc::new(Mutex::new(None));
        let reader = {
            let stream = stream.try_clone()?;
            let writer = Arc::clone(&writer);
            let connected = Arc::clone(&connected);
            let server_error = Arc::clone(&server_error);
            thread::Builder::new().name("broker-client".into()).spawn(move || {
                read_loop(stream, writer, msg_tx, pong_tx, &server_error);
                connected.store(false, Ordering::SeqCst);
            })?
        };
        Ok(Client {
            stream,
            writer,
            messages,
            pongs,
            next_sid: AtomicU64::new(1),
            connected,
            server_error,
            reader: Some(reader),
        })
    }

    pub fn is_connected(&self) -> bool {
        self.connected.load(Ordering::SeqCst)
    }

    /// The text of the last `-ERR` the server sent, if any.
    pub fn server_error(&self) -> Option<String> {
        self.server_error.lock().clone()
    }

    fn send(&self, frames: &[Frame]) -> Result<(), BrokerError> {
        if !self.is_connected() {
            return Err(BrokerError::Disconnected);
        }
        let mut bytes = Vec::new();
        for f in frames {
            encode_into(f, &mut bytes);
        }
        let mut w = self.writer.lock();
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn publish(&self, subject: &Subject, payload: &[u8]) -> Result<(), BrokerError> {
        if subject.is_pattern() {
            return Err(BrokerError::Wire(crate::wire::WireError::WildcardNotAllowed(
                subject.to_string(),
            )));
        }
        self.send(&[Frame::Pub { subject: subject.clone(), payload: payload.to_vec() }])
    }

    /// Publishes several messages with a single socket write.
    pub fn publish_many<'a, I>(&self, items: I) -> Result<(), BrokerError>
    where
        I: IntoIterator<Item = (&'a Subject, &'a [u8])>,
    {
        let frames: Vec<Frame> = items
            .into_iter()
            .map(|(subject, payload)| Frame::Pub { subject: subject.clone(), payload: payload.to_vec() })
            .collect();
        self.send(&frames)
    }

    pub fn subscribe(&self, pattern: &Subject) -> Result<u64, BrokerError> {
        let sid = self.next_sid.fetch_add(1, Ordering::SeqCst);
        self.send(&[Frame::Sub { subject: pattern.clone(), sid }])?;
        Ok(sid)
    }

    pub fn unsubscribe(&self, sid: u64) -> Result<(), BrokerError> {
        self.send(&[Frame::Unsub { sid }])
    }

    /// Round trip PING/PONG. Everything sent before it has been processed by
    /// the broker once this returns.
    pub fn flush(&self, timeout: Duration) -> Result<(), BrokerError> {
        while self.pongs.try_recv().is_ok() {}
        self.send(&[Frame::Ping])?;
        match self.pongs.recv_timeout(timeout) {
            Ok(()) => Ok(()),
            Err(RecvTimeoutError::Timeout) => Err(BrokerError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(BrokerError::Disconnected),
        }
    }

    pub fn next_message(&self, timeout: Duration) -> Option<Message> {
        self.messages.recv_timeout(timeout).ok()
    }

    pub fn messages(&self) -> &Receiver<Message> {
        &self.messages
    }

    pub fn close(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        let _ = self.writer.lock().flush();
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(t) = self.reader.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn read_loop(
    stream: TcpStream,
    writer: Arc<Mutex<BufWriter<TcpStream>>>,
    messages: Sender<Message>,
    pongs: Sender<()>,
    server_error: &Mutex<Option<String>>,
) {
    let mut reader = FrameReader::new(stream, DEFAULT_MAX_PAYLOAD);
    while let Ok(Some(frame)) = reader.read_frame() {
        match frame {
            Frame::Msg { subject, sid, payload } => {
                // the receiver may be gone when the client is being dropped
                let _ = messages.send(Message { subject, sid, payload });
            }
            Frame::Ping => {
                let mut bytes = Vec::new();
                encode_into(&Frame::Pong, &mut bytes);
                let mut w = writer.lock();
                if w.write_all(&bytes).and_then(|_| w.flush()).is_err() {
                    break;
                }
            }
            Frame::Pong => {
                let _ = pongs.send(());
            }
            Frame::Err { message } => {
                *server_error.lock() = Some(message);
            }
            _ => {}
        }
    }
}
