use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use super::RejectReason;

/// Upper bucket bounds in microseconds; one overflow bucket follows.
pub const LATENCY_BOUNDS_US: [i64; 15] = [
    1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000, 2_000_000, 5_000_000,
    10_000_000, 30_000_000, 60_000_000,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyHistogram {
    /// `counts[i]` holds latencies `<= LATENCY_BOUNDS_US[i]` (and above the
    /// previous bound); the last slot is the overflow bucket.
    pub counts: Vec<u64>,
    pub total: u64,
    pub sum_us: i64,
    pub max_us: i64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        LatencyHistogram { counts: vec![0; LATENCY_BOUNDS_US.len() + 1], total: 0, sum_us: 0, max_us: 0 }
    }
}

impl LatencyHistogram {
    pub fn record(&mut self, latency_us: i64) {
        let i = LATENCY_BOUNDS_US.partition_point(|&b| b < latency_us);
        self.counts[i] += 1;
        self.total += 1;
        self.sum_us = self.sum_us.saturating_add(latency_us);
        self.max_us = self.max_us.max(latency_us);
    }

    /// Upper bound of the bucket holding the `q`-quantile; the exact maximum
    /// for the overflow bucket. Zero when empty.
    pub fn quantile_us(&self, q: f64) -> i64 {
        if self.total == 0 {
            return 0;
        }
        let rank = ((q.clamp(0.0, 1.0) * self.total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (i, c) in self.counts.iter().enumerate() {
            seen += c;
            if seen >= rank {
                return LATENCY_BOUNDS_US.get(i).map_or(self.max_us, |&b| b.min(self.max_us));
            }
        }
        self.max_us
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestMetrics {
    pub received: u64,
    pub accepted: u64,
    pub rejected: HashMap<RejectReason, u64>,
    pub duplicate_seq: u64,
    pub seq_gaps: u64,
    pub clock_skew: u64,
    pub latency: LatencyHistogram,
    /// Accepted records per second over the trailing rate window.
    pub rate_per_s: f64,
}

impl IngestMetrics {
    pub fn rejected(&self, reason: RejectReason) -> u64 {
        self.rejected.get(&reason).copied().unwrap_or(0)
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    /// `received == accepted + rejected`.
    pub fn conserved(&self) -> bool {
        self.received == self.accepted + self.rejected_total()
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("received".to_string(), self.received.to_string()),
            ("accepted".to_string(), self.accepted.to_string()),
        ];
        for r in RejectReason::ALL {
            out.push((format!("rejected_{r}"), self.rejected(r).to_string()));
        }
        out.extend([
            ("duplicate_seq".to_string(), self.duplicate_seq.to_string()),
            ("seq_gaps".to_string(), self.seq_gaps.to_string()),
            ("clock_skew".to_string(), self.clock_skew.to_string()),
            ("latency_count".to_string(), self.latency.total.to_string()),
            ("latency_sum_us".to_string(), self.latency.sum_us.to_string()),
            ("latency_max_us".to_string(), self.latency.max_us.to_string()),
            ("latency_p50_us".to_string(), self.latency.quantile_us(0.50).to_string()),
            ("latency_p99_us".to_string(), self.latency.quantile_us(0.99).to_string()),
        ]);
        for (i, c) in self.latency.counts.iter().enumerate() {
            let le = LATENCY_BOUNDS_US.get(i).map_or("inf".to_string(), |b| b.to_string());
            out.push((format!("latency_bucket_le_{le}"), c.to_string()));
        }
        out.push(("rate_per_s".to_string(), format!("{:.3}", self.rate_per_s)));
        out
    }

    /// `name value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "paveflow_ingest_{k} {v}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value\n");
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}

const RATE_WINDOW_S: i64 = 10;

/// Mutable accounting behind [`IngestMetrics`].
#[derive(Debug, Default)]
pub(crate) struct MetricsState {
    pub snapshot: IngestMetrics,
    last_seq: HashMap<String, u64>,
    per_second: VecDeque<(i64, u64)>,
}

impl MetricsState {
    pub fn reject(&mut self, reason: RejectReason) {
        self.snapshot.received += 1;
        *self.snapshot.rejected.entry(reason).or_insert(0) += 1;
    }

    pub fn accept(&mut self, sensor: &str, seq: u64, ts: i64, insert_us: i64) {
        let m = &mut self.snapshot;
        m.received += 1;
        m.accepted += 1;
        let mut latency = insert_us - ts;
        if latency < 0 {
            m.clock_skew += 1;
            latency = 0;
        }
        m.latency.record(latency);
        match self.last_seq.get_mut(sensor) {
            Some(last) if seq == *last + 1 => *last = seq,
            Some(last) if seq > *last + 1 => {
                m.seq_gaps += 1;
                *last = seq;
            }
            Some(_) => m.duplicate_seq += 1,
            None => {
                self.last_seq.insert(sensor.to_string(), seq);
            }
        }
        let second = insert_us.div_euclid(1_000_000);
        match self.per_second.back_mut() {
            Some((s, n)) if *s == second => *n += 1,
            _ => self.per_second.push_back((second, 1)),
        }
    }

    pub fn snapshot(&self, now_us: i64) -> IngestMetrics {
        let now_s = now_us.div_euclid(1_000_000);
        let recent: u64 = self
            .per_second
            .iter()
            .filter(|(s, _)| now_s - s < RATE_WINDOW_S)
            .map(|(_, n)| n)
            .sum();
        let mut m = self.snapshot.clone();
        m.rate_per_s = recent as f64 / RATE_WINDOW_S as f64;
        m
    }

    pub fn prune(&mut self, now_us: i64) {
        let now_s = now_us.div_euclid(1_000_000);
        while self.per_second.front().is_some_and(|(s, _)| now_s - s >= RATE_WINDOW_S) {
            self.per_second.pop_front();
        }
    }
}
