use std::collections::HashMap;
use std::io::{self, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::{bounded, Receiver, RecvTimeoutError, Sender, TrySendError};
use log::{debug, info, warn};
use parking_lot::{Mutex, RwLock};

use super::router::{Delivery, Router, SessionId};
use crate::wire::{encode_frame, encode_msg, Frame, FrameReader, WireError, DEFAULT_MAX_PAYLOAD};

const WRITER_POLL: Duration = Duration::from_millis(20);
const ACCEPT_POLL: Duration = Duration::from_millis(5);
const WRITE_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct BrokerLimits {
    pub max_payload: usize,
    /// Outbound frames buffered per session.
    pub queue_frames: usize,
    /// How long a publish waits on a full outbound queue before the
    /// receiving session is dropped as a slow consumer.
    pub slow_consumer_grace: Duration,
    pub keepalive: Duration,
}

impl Default for BrokerLimits {
    fn default() -> Self {
        BrokerLimits {
            max_payload: DEFAULT_MAX_PAYLOAD,
            queue_frames: 8192,
            slow_consumer_grace: Duration::from_secs(2),
            keepalive: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BrokerStats {
    pub sessions: usize,
    pub subscriptions: usize,
    pub frames_in: u64,
    pub published: u64,
    pub delivered: u64,
    pub evicted: u64,
}

struct Session {
    id: SessionId,
    outbound: Sender<Vec<u8>>,
    closed: AtomicBool,
    close_reason: Mutex<Option<String>>,
    frames_in: AtomicU64,
    frames_out: AtomicU64,
    /// Keepalive PINGs sent since the peer last sent anything.
    unanswered_pings: AtomicU32,
}

impl Session {
    fn close(&self, reason: Option<String>) {
        if !self.closed.swap(true, Ordering::SeqCst) {
            *self.close_reason.lock() = reason;
        }
    }

    fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }
}

struct Shared {
    limits: BrokerLimits,
    router: RwLock<Router>,
    sessions: RwLock<HashMap<SessionId, Arc<Session>>>,
    next_session: AtomicU64,
    shutdown: AtomicBool,
    frames_in: AtomicU64,
    published: AtomicU64,
    delivered: AtomicU64,
    evicted: AtomicU64,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

/// A running broker. Dropping the handle shuts the broker down.
pub struct BrokerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
    keepalive: Option<JoinHandle<()>>,
}

/// Binds `addr` and starts accepting sessions on background threads.
pub fn serve(addr: impl ToSocketAddrs, limits: BrokerLimits) -> io::Result<BrokerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let shared = Arc::new(Shared {
        limits,
        router: RwLock::new(Router::new()),
        sessions: RwLock::new(HashMap::new()),
        next_session: AtomicU64::new(1),
        shutdown: AtomicBool::new(false),
        frames_in: AtomicU64::new(0),
        published: AtomicU64::new(0),
        delivered: AtomicU64::new(0),
        evicted: AtomicU64::new(0),
        threads: Mutex::new(Vec::new()),
    });
    info!("broker listening on {local}");

    let acceptor = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("broker-accept".into())
            .spawn(move || accept_loop(listener, shared))?
    };
    let keepalive = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("broker-keepalive".into())
            .spawn(move || keepalive_loop(shared))?
    };
    Ok(BrokerHandle { addr: local, shared, acceptor: Some(acceptor), keepalive: Some(keepalive) })
}

impl BrokerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> BrokerStats {
        let s = &self.shared;
        BrokerStats {
            sessions: s.sessions.read().len(),
            subscriptions: s.router.read().len(),
            frames_in: s.frames_in.load(Ordering::Relaxed),
            published: s.published.load(Ordering::Relaxed),
            delivered: s.delivered.load(Ordering::Relaxed),
            evicted: s.evicted.load(Ordering::Relaxed),
        }
    }

    /// Stops accepting, closes every session and joins all broker threads.
    /// In-flight messages are discarded.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.shared.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        if let Some(t) = self.acceptor.take() {
            let _ = t.join();
        }
        if let Some(t) = self.keepalive.take() {
            let _ = t.join();
        }
        for session in self.shared.sessions.read().values() {
            session.close(None);
        }
        let threads: Vec<_> = self.shared.threads.lock().drain(..).collect();
        for t in threads {
            let _ = t.join();
        }
        info!("broker on {} stopped", self.addr);
    }
}

impl Drop for BrokerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if let Err(e) = start_session(stream, &shared) {
                    warn!("failed to start session for {peer}: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(ACCEPT_POLL);
            }
        }
    }
}

fn start_session(stream: TcpStream, shared: &Arc<Shared>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_write_timeout(Some(WRITE_TIMEOUT))?;
    let id = shared.next_session.fetch_add(1, Ordering::SeqCst);
    let (tx, rx) = bounded(shared.limits.queue_frames.max(1));
    let session = Arc::new(Session {
        id,
        outbound: tx,
        closed: AtomicBool::new(false),
        close_reason: Mutex::new(None),
        frames_in: AtomicU64::new(0),
        frames_out: AtomicU64::new(0),
        unanswered_pings: AtomicU32::new(0),
    });
    shared.sessions.write().insert(id, Arc::clone(&session));
    debug!("session {id} opened");

    let writer_stream = stream.try_clone()?;
    let writer = {
        let session = Arc::clone(&session);
        thread::Builder::new()
            .name(format!("broker-w{id}"))
            .spawn(move || write_loop(writer_stream, rx, session))?
    };
    let reader = {
        let shared = Arc::clone(shared);
        thread::Builder::new()
            .name(format!("broker-r{id}"))
            .spawn(move || read_loop(stream, session, shared))?
    };
    let mut threads = shared.threads.lock();
    threads.retain(|t| !t.is_finished());
    threads.push(writer);
    threads.push(reader);
    Ok(())
}

fn write_loop(stream: TcpStream, rx: Receiver<Vec<u8>>, session: Arc<Session>) {
    let mut out = BufWriter::with_capacity(64 * 1024, &stream);
    let result: io::Result<()> = (|| loop {
        if session.is_closed() {
            return Ok(());
        }
        match rx.recv_timeout(WRITER_POLL) {
            Ok(bytes) => {
                out.write_all(&bytes)?;
                let mut written = 1;
                while let Ok(more) = rx.try_recv() {
                    out.write_all(&more)?;
                    written += 1;
                    if written >= 256 {
                        break;
                    }
                }
                out.flush()?;
                session.frames_out.fetch_add(written, Ordering::Relaxed);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => return Ok(()),
        }
    })();
    if let Err(e) = result {
        debug!("session {} write failed: {e}", session.id);
        session.close(None);
    }
    if let Some(reason) = session.close_reason.lock().take() {
        let _ = out.write_all(&encode_frame(&Frame::err(reason)));
        let _ = out.flush();
    }
    drop(out);
    let _ = stream.shutdown(Shutdown::Both);
}

fn read_loop(stream: TcpStream, session: Arc<Session>, shared: Arc<Shared>) {
    let mut reader = FrameReader::new(&stream, shared.limits.max_payload);
    let mut scratch = Vec::new();
    loop {
        if session.is_closed() {
            break;
        }
        match reader.read_frame() {
            Ok(Some(frame)) => {
                session.frames_in.fetch_add(1, Ordering::Relaxed);
                session.unanswered_pings.store(0, Ordering::Relaxed);
                shared.frames_in.fetch_add(1, Ordering::Relaxed);
                if let Err(reason) = handle_frame(frame, &session, &shared, &mut scratch) {
                    session.close(Some(reason));
                    break;
                }
            }
            Ok(None) | Err(WireError::Io(_)) => break,
            Err(e) => {
                session.close(Some(e.to_string()));
                break;
            }
        }
    }
    shared.router.write().remove_session(session.id);
    shared.sessions.write().remove(&session.id);
    session.close(None);
    debug!(
        "session {} closed after {} frames in, {} out",
        session.id,
        session.frames_in.load(Ordering::Relaxed),
        session.frames_out.load(Ordering::Relaxed)
    );
}

fn handle_frame(
    frame: Frame,
    session: &Session,
    shared: &Shared,
    scratch: &mut Vec<Delivery>,
) -> Result<(), String> {
    match frame {
        Frame::Pub { subject, payload } => {
            shared.published.fetch_add(1, Ordering::Relaxed);
            scratch.clear();
            shared.router.read().route_into(&subject, scratch);
            if scratch.is_empty() {
                return Ok(());
            }
            let targets: Vec<(Arc<Session>, u64)> = {
                let sessions = shared.sessions.read();
                scratch.iter().filter_map(|d| sessions.get(&d.session).map(|s| (Arc::clone(s), d.sid))).collect()
            };
            for (target, sid) in targets {
                if target.is_closed() {
                    continue;
                }
                let mut bytes = Vec::with_capacity(payload.len() + 64);
                encode_msg(&subject, sid, &payload, &mut bytes);
                // a full queue stalls this publisher for up to the grace period
                let sent = match target.outbound.try_send(bytes) {
                    Err(TrySendError::Full(bytes)) => {
                        target.outbound.send_timeout(bytes, shared.limits.slow_consumer_grace).map_err(|e| e.is_timeout())
                    }
                    other => other.map_err(|e| e.is_full()),
                };
                match sent {
                    Ok(()) => {
                        shared.delivered.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(true) => {
                        warn!("session {} dropped: slow consumer", target.id);
                        shared.evicted.fetch_add(1, Ordering::Relaxed);
                        target.close(Some("slow consumer".into()));
                    }
                    Err(false) => {}
                }
            }
            Ok(())
        }
        Frame::Sub { subject, sid } => shared
            .router
            .write()
            .subscribe(session.id, sid, subject)
            .map_err(|e| e.to_string()),
        Frame::Unsub { sid } => {
            shared.router.write().unsubscribe(session.id, sid);
            Ok(())
        }
        Frame::Ping => {
            // a full queue means the keepalive ping is moot; the session is busy
            let _ = session.outbound.try_send(encode_frame(&Frame::Pong));
            Ok(())
        }
        Frame::Pong | Frame::Ok => Ok(()),
        Frame::Err { message } => {
            debug!("session {} reported error: {message}", session.id);
            Ok(())
        }
        Frame::Msg { .. } => Err("MSG is server-to-client only".into()),
    }
}

fn keepalive_loop(shared: Arc<Shared>) {
    let interval = shared.limits.keepalive.max(Duration::from_millis(10));
    let step = interval.min(Duration::from_millis(50));
    let mut next = Instant::now() + interval;
    while !shared.shutdown.load(Ordering::SeqCst) {
        thread::sleep(step);
        if Instant::now() < next {
            continue;
        }
        next += interval;
        for session in shared.sessions.read().values() {
            if session.unanswered_pings.fetch_add(1, Ordering::Relaxed) >= 2 {
                debug!("session {} missed two keepalives", session.id);
                session.close(Some("stale connection".into()));
            } else {
                let _ = session.outbound.try_send(encode_frame(&Frame::Ping));
            }
        }
    }
}
