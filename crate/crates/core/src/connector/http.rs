use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::IngestMetrics;

pub type MetricsSource = Arc<dyn Fn() -> IngestMetrics + Send + Sync>;

/// Minimal HTTP/1.0 endpoint answering `GET /metrics` with `name value` lines.
pub struct MetricsServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

pub fn serve_metrics(addr: impl ToSocketAddrs, source: MetricsSource) -> io::Result<MetricsServer> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let thread = {
        let stop = Arc::clone(&stop);
        thread::Builder::new().name("metrics-http".into()).spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((s, _)) => {
                        if let Err(e) = answer(s, &source) {
                            log::debug!("metrics request failed: {e}");
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                    Err(e) => log::warn!("metrics accept failed: {e}"),
                }
            }
        })?
    };
    Ok(MetricsServer { addr: local, stop, thread: Some(thread) })
}

fn answer(stream: TcpStream, source: &MetricsSource) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(2)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request = String::new();
    reader.read_line(&mut request)?;
    // drain headers
    let mut line = String::new();
    while reader.read_line(&mut line)? > 2 {
        line.clear();
    }
    let mut parts = request.split_whitespace();
    let (status, body) = match (parts.next(), parts.next()) {
        (Some("GET"), Some("/metrics")) => ("200 OK", source().to_text()),
        _ => ("404 Not Found", "not found\n".to_string()),
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.0 {status}\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    out.flush()
}

impl MetricsServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MetricsServer {
    fn drop(&mut self) {
        self.halt();
    }
}

/// Fetches `GET /metrics` and returns `(name, value)` pairs with the
/// `paveflow_ingest_` prefix removed.
pub fn fetch_metrics(addr: impl ToSocketAddrs) -> io::Result<Vec<(String, String)>> {
    let mut s = TcpStream::connect(addr)?;
    s.set_read_timeout(Some(Duration::from_secs(5)))?;
    s.write_all(b"GET /metrics HTTP/1.0\r\n\r\n")?;
    let mut text = String::new();
    s.read_to_string(&mut text)?;
    let (head, body) = text
        .split_once("\r\n\r\n")
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "truncated HTTP response"))?;
    if !head.starts_with("HTTP/1.0 200") {
        return Err(io::Error::other(head.lines().next().unwrap_or("").to_string()));
    }
    Ok(body
        .lines()
        .filter_map(|l| l.split_once(' '))
        .map(|(k, v)| (k.trim_start_matches("paveflow_ingest_").to_string(), v.to_string()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serves_metrics() {
        let src: MetricsSource = Arc::new(|| IngestMetrics { received: 3, accepted: 3, ..Default::default() });
        let server = serve_metrics("127.0.0.1:0", src).unwrap();
        let pairs = fetch_metrics(server.local_addr()).unwrap();
        assert!(pairs.contains(&("received".into(), "3".into())));
        assert!(pairs.contains(&("rejected_overflow".into(), "0".into())));
        server.shutdown();
    }
}
