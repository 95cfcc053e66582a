use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Ingestor;
use crate::wire::{SamplePayload, Subject};

/// Time-compressed synthetic traffic fed straight into an [`Ingestor`].
#[derive(Debug, Clone)]
pub struct ReplayConfig {
    /// Aggregate message rate, samples per simulated second.
    pub rate_per_s: f64,
    pub duration_s: u64,
    /// Traffic is spread round-robin over this many sensors.
    pub sensors: usize,
    pub site: String,
    pub daq: String,
    pub start_us: i64,
    pub seed: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            rate_per_s: 23.15,
            duration_s: 86_400,
            sensors: 24,
            site: "65".into(),
            daq: "1".into(),
            start_us: 1_717_200_000_000_000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub generated: u64,
}

/// Emits `floor(rate * (s + 1)) - floor(rate * s)` messages in simulated
/// second `s`, computed on milli-hertz integers so the day total is exact.
/// Each sensor publishes at most once per second, stamped at the end of the
/// second, so no two messages collide in the store. Blocks on a full queue.
pub fn replay(ingestor: &Ingestor, cfg: &ReplayConfig) -> ReplayReport {
    let n = cfg.sensors.max(1);
    let subjects: Vec<Subject> = (0..n)
        .map(|i| {
            Subject::concrete(&format!("site.{}.daq.{}.sensor.s{i}", cfg.site, cfg.daq)).expect("replay subject")
        })
        .collect();
    let milli_hz = (cfg.rate_per_s * 1000.0).round() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut seq = vec![0u64; n];
    let mut next = 0usize;
    let mut generated = 0;
    for s in 0..cfg.duration_s {
        let count = (milli_hz * (s + 1)) / 1000 - (milli_hz * s) / 1000;
        let ts = cfg.start_us + (s as i64 + 1) * 1_000_000;
        for _ in 0..count.min(n as u64) {
            let i = next;
            next = (next + 1) % n;
            seq[i] += 1;
            let v = 50.0 + 10.0 * noise.sample(&mut rng);
            let payload = SamplePayload { ts, v, seq: seq[i], unit: "kPa".into() };
            ingestor.offer_blocking(subjects[i].clone(), payload.to_json());
            generated += 1;
        }
    }
    ReplayReport { generated }
}
