//! Oracles and fixture generators shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

/// Least-squares smoother that fits a fresh polynomial to every full window
/// via Householder QR on a scaled monomial basis. Returns `None` for points
/// whose window would run past either end.
pub struct LsqOracle {
    window: usize,
    q_t: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LsqOracle {
    pub fn new(window: usize, order: usize) -> Self {
        let h = (window / 2) as f64;
        let a = DMatrix::from_fn(window, order + 1, |i, k| ((i as f64 - h) / h.max(1.0)).powi(k as i32));
        let qr = a.qr();
        LsqOracle { window, q_t: qr.q().transpose(), r: qr.r() }
    }

    fn coefficients(&self, y: &[f64]) -> DVector<f64> {
        assert_eq!(y.len(), self.window);
        let rhs = &self.q_t * DVector::from_column_slice(y);
        self.r.solve_upper_triangular(&rhs).expect("full rank design")
    }

    /// Value at the window center of the fitted polynomial.
    pub fn fit_center(&self, y: &[f64]) -> f64 {
        self.coefficients(y)[0]
    }

    /// Value of the fitted polynomial at sample `pos` of the window.
    pub fn fit_at(&self, y: &[f64], pos: usize) -> f64 {
        let h = (self.window / 2) as f64;
        let x = (pos as f64 - h) / h.max(1.0);
        self.coefficients(y).iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Every point: centered fits inside, one-sided fits over the first and
    /// last full window at the edges.
    pub fn smooth_all(&self, y: &[f64]) -> Vec<f64> {
        let (w, n, h) = (self.window, y.len(), self.window / 2);
        (0..n)
            .map(|i| {
                if i < h {
                    self.fit_at(&y[..w], i)
                } else if i + h >= n {
                    self.fit_at(&y[n - w..], i + w - n)
                } else {
                    self.fit_center(&y[i - h..=i + h])
                }
            })
            .collect()
    }

    pub fn smooth_interior(&self, y: &[f64]) -> Vec<Option<f64>> {
        let h = self.window / 2;
        (0..y.len())
            .map(|i| (i >= h && i + h < y.len()).then(|| self.fit_center(&y[i - h..=i + h])))
            .collect()
    }
}

/// Token-by-token matcher used as the reference for routing.
pub fn reference_match(pattern: &[String], subject: &[String]) -> bool {
    let mut i = 0;
    for (k, p) in pattern.iter().enumerate() {
        if p == ">" {
            return k == pattern.len() - 1 && subject.len() > k;
        }
        match subject.get(i) {
            Some(s) if p == "*" || p == s => i += 1,
            _ => return false,
        }
    }
    i == subject.len()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Noiseless APT strain log: one Gaussian pulse per `period_s`, centered
/// mid-period, `passes` periods plus one trailing quiet period.
pub fn asg_fixture(passes: usize, period_s: f64, fs: f64, amplitude: f64) -> String {
    let mut text = String::with_capacity(passes * (period_s * fs) as usize * 24);
    text.push_str("# kind: ASG\n# gage: 104\n# placement: 0.5\n# cal_coeff: 1\n# rated_output: 5890\nseconds,ch104\n");
    let n = ((passes as f64 + 1.0) * period_s * fs).round() as usize;
    let sigma = period_s / 10.0;
    for i in 0..n {
        let t = i as f64 / fs;
        let k = (t / period_s).floor();
        let phase = t - (k * period_s + period_s / 2.0);
        let y = if (k as usize) < passes { amplitude * (-phase * phase / (2.0 * sigma * sigma)).exp() } else { 0.0 };
        let _ = writeln!(text, "{t:.6},{y:.9}");
    }
    text
}

/// Laser profile with `n` samples at 1 kHz.
pub fn laser_fixture(n: usize) -> String {
    let mut text = String::from("# kind: LASER\n# start_time: 09:30:00\nseconds,laser_reading_mm,beam_location_mm\n");
    for i in 0..n {
        let t = i as f64 / 1000.0;
        let _ = writeln!(text, "{t:.3},{:.6},{:.3}", 12.0 + 0.002 * i as f64, 250.0);
    }
    text
}

pub mod broker {
    use std::collections::HashMap;
    use std::net::SocketAddr;
    use std::thread;
    use std::time::{Duration, Instant};

    use paveflow::broker::Client;
    use paveflow::wire::Subject;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tokens(rng: &mut ChaCha8Rng, alphabet: &[&str], max_len: usize) -> Vec<String> {
        let n = rng.random_range(1..=max_len);
        (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string()).collect()
    }

    /// Subscribes `patterns` random patterns spread over `sessions` clients,
    /// publishes `publishes` random subjects and compares every delivery
    /// with the quadratic reference. Returns the number of deliveries.
    pub fn routing_oracle(addr: SocketAddr, seed: u64, patterns: usize, publishes: usize, sessions: usize) -> Result<usize, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subscribers: Vec<Client> =
            (0..sessions).map(|_| Client::connect(addr).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
        // (session index, sid) -> pattern tokens
        let mut table: HashMap<(usize, u64), Vec<String>> = HashMap::new();
        for i in 0..patterns {
            let mut toks = random_tokens(&mut rng, &["a", "b", "c", "*"], 4);
            if rng.random_bool(0.3) {
                toks.push(">".into());
            }
            let pat = Subject::from_tokens(toks.clone()).map_err(|e| e.to_string())?;
            let who = i % sessions;
            let sid = subscribers[who].subscribe(&pat).map_err(|e| e.to_string())?;
            table.insert((who, sid), toks);
        }
        for c in &subscribers {
            c.flush(Duration::from_secs(5)).map_err(|e| e.to_string())?;
        }
        let subjects: Vec<Vec<String>> = (0..publishes).map(|_| random_tokens(&mut rng, &["a", "b", "c"], 5)).collect();
        let mut expected: Vec<(usize, u64, usize)> = Vec::new();
        for (k, s) in subjects.iter().enumerate() {
            for ((who, sid), p) in &table {
                if super::reference_match(p, s) {
                    expected.push((*who, *sid, k));
                }
            }
        }
        let publisher = Client::connect(addr).map_err(|e| e.to_string())?;
        for (k, s) in subjects.iter().enumerate() {
            let subj = Subject::from_tokens(s.clone()).map_err(|e| e.to_string())?;
            publisher.publish(&subj, k.to_string().as_bytes()).map_err(|e| e.to_string())?;
        }
        publisher.flush(Duration::from_secs(5)).map_err(|e| e.to_string())?;
        let mut got: Vec<(usize, u64, usize)> = Vec::new();
        let deadline = Instant::now() + Duration::from_secs(10);
        while got.len() < expected.len() && Instant::now() < deadline {
            for (who, c) in subscribers.iter().enumerate() {
                while let Ok(m) = c.messages().try_recv() {
                    let k: usize = std::str::from_utf8(&m.payload).unwrap().parse().unwrap();
                    if m.subject.tokens() != subjects[k].as_slice() {
                        return Err(format!("message {k} arrived with subject {}", m.subject));
                    }
                    got.push((who, m.sid, k));
                }
            }
            thread::sleep(Duration::from_millis(2));
        }
        // anything extra would be in flight by now
        thread::sleep(Duration::from_millis(100));
        for (who, c) in subscribers.iter().enumerate() {
            while let Ok(m) = c.messages().try_recv() {
                got.push((who, m.sid, std::str::from_utf8(&m.payload).unwrap().parse().unwrap()));
            }
        }
        expected.sort_unstable();
        got.sort_unstable();
        if got != expected {
            return Err(format!("delivered {} messages, reference expects {}", got.len(), expected.len()));
        }
        Ok(got.len())
    }

    /// `publishers` sessions each send `per` sequence-stamped messages at
    /// once; a single `>` subscriber must see every message exactly once and
    /// each publisher's messages in order.
    pub fn per_publisher_order(addr: SocketAddr, publishers: usize, per: usize) -> Result<(), String> {
        let sub = Client::connect(addr).map_err(|e| e.to_string())?;
        sub.subscribe(&Subject::pattern("load.>").unwrap()).map_err(|e| e.to_string())?;
        sub.flush(Duration::from_secs(5)).map_err(|e| e.to_string())?;
        let workers: Vec<_> = (0..publishers)
            .map(|p| {
                thread::spawn(move || -> Result<(), String> {
                    let c = Client::connect(addr).map_err(|e| e.to_string())?;
                    let subj = Subject::concrete(&format!("load.p{p}")).unwrap();
                    for chunk in (0..per).collect::<Vec<_>>().chunks(100) {
                        let payloads: Vec<Vec<u8>> = chunk.iter().map(|i| format!("{p}:{i}").into_bytes()).collect();
                        c.publish_many(payloads.iter().map(|b| (&subj, b.as_slice()))).map_err(|e| e.to_string())?;
                    }
                    c.flush(Duration::from_secs(30)).map_err(|e| e.to_string())?;
                    c.close();
                    Ok(())
                })
            })
            .collect();
        for w in workers {
            w.join().map_err(|_| "publisher panicked".to_string())??;
        }
        let total = publishers * per;
        let mut next = vec![0usize; publishers];
        let mut seen = 0;
        let deadline = Instant::now() + Duration::from_secs(30);
        while seen < total {
            let left = deadline.saturating_duration_since(Instant::now());
            let Some(m) = sub.next_message(left) else {
                return Err(format!("only {seen} of {total} messages arrived"));
            };
            let text = String::from_utf8(m.payload).unwrap();
            let (p, i) = text.split_once(':').unwrap();
            let (p, i): (usize, usize) = (p.parse().unwrap(), i.parse().unwrap());
            if i != next[p] {
                return Err(format!("publisher {p}: expected #{} next, got #{i}", next[p]));
            }
            next[p] += 1;
            seen += 1;
        }
        if let Some(extra) = sub.next_message(Duration::from_millis(100)) {
            return Err(format!("unexpected extra message {:?}", String::from_utf8_lossy(&extra.payload)));
        }
        Ok(())
    }
}
