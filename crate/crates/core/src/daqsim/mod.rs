//! Roadside DAQ simulator.
//!
//! Each sensor is sampled internally at `rate_hz`; once per simulated second
//! the arithmetic mean of that second's samples, `[s, s+1)`, is published to
//! `site/<site>/daq/<daq>/sensor/<id>` (mapped to a broker subject). The
//! payload timestamp is the end of the averaging second.
//!
//! A sensor's `seq` advances only when a publish succeeds, so a failed
//! publish leaves its sequence number for the next tick and the lost second
//! shows up downstream as a timestamp gap.

mod scenario;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::broker::Client;
use crate::wire::{mqtt_topic_to_subject, SamplePayload, Subject, WireError};

pub use scenario::{Scenario, SensorKind, SensorSpec, SignalParams};

#[derive(Debug, Error)]
pub enum DaqError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Something that can carry a payload to a subject.
pub trait Publisher {
    fn publish(&mut self, subject: &Subject, payload: &[u8]) -> Result<(), String>;
}

impl Publisher for Client {
    fn publish(&mut self, subject: &Subject, payload: &[u8]) -> Result<(), String> {
        Client::publish(self, subject, payload).map_err(|e| e.to_string())
    }
}

impl<F> Publisher for F
where
    F: FnMut(&Subject, &[u8]) -> Result<(), String>,
{
    fn publish(&mut self, subject: &Subject, payload: &[u8]) -> Result<(), String> {
        self(subject, payload)
    }
}

/// Deterministic value source for one sensor.
pub struct SensorSynth {
    spec: SensorSpec,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl SensorSynth {
    pub fn new(spec: SensorSpec, seed: u64) -> Self {
        let noise = (spec.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated as finite and positive"));
        SensorSynth { spec, rng: ChaCha8Rng::seed_from_u64(seed), noise }
    }

    pub fn spec(&self) -> &SensorSpec {
        &self.spec
    }

    /// Signal at `t` simulated seconds plus one draw of Gaussian noise.
    pub fn synth_value(&mut self, t: f64) -> f64 {
        let clean = self.spec.signal_at(t);
        match &self.noise {
            Some(n) => clean + n.sample(&mut self.rng),
            None => clean,
        }
    }

    /// Mean of the internal samples at `second + i / rate` for `i in 0..rate`.
    pub fn second_average(&mut self, second: u64) -> f64 {
        let rate = u64::from(self.spec.rate_hz);
        let sum: f64 = (0..rate)
            .map(|i| self.synth_value((second * rate + i) as f64 / rate as f64))
            .sum();
        sum / rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Published {
    pub topic: String,
    pub subject: Subject,
    pub payload: SamplePayload,
}

pub struct DaqSimulator {
    scenario: Scenario,
    sensors: Vec<SensorSynth>,
    topics: Vec<(String, Subject)>,
    next_seq: Vec<u64>,
    second: u64,
}

impl DaqSimulator {
    pub fn new(scenario: Scenario) -> Result<Self, DaqError> {
        scenario.validate()?;
        let mut sensors = Vec::with_capacity(scenario.sensors.len());
        let mut topics = Vec::with_capacity(scenario.sensors.len());
        for (i, spec) in scenario.sensors.iter().enumerate() {
            let topic = scenario.topic_for(&spec.id);
            let subject = mqtt_topic_to_subject(&topic)?;
            topics.push((topic, subject));
            let seed = scenario.seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            sensors.push(SensorSynth::new(spec.clone(), seed));
        }
        let n = sensors.len();
        Ok(DaqSimulator { scenario, sensors, topics, next_seq: vec![1; n], second: 0 })
    }

    pub fn from_file(path: &Path) -> Result<Self, DaqError> {
        Self::new(Scenario::load(path)?)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Simulated seconds already ticked.
    pub fn elapsed(&self) -> u64 {
        self.second
    }

    pub fn finished(&self) -> bool {
        self.second >= self.scenario.duration_s
    }

    /// Averages for the next simulated second, one per sensor, without
    /// publishing them. Advances the clock.
    pub fn next_second(&mut self) -> Vec<Published> {
        let second = self.second;
        self.second += 1;
        let ts = self.scenario.start_us() + (second as i64 + 1) * 1_000_000;
        self.sensors
            .iter_mut()
            .enumerate()
            .map(|(i, synth)| {
                let v = synth.second_average(second);
                Published {
                    topic: self.topics[i].0.clone(),
                    subject: self.topics[i].1.clone(),
                    payload: SamplePayload { ts, v, seq: self.next_seq[i], unit: synth.spec.unit.clone() },
                }
            })
            .collect()
    }

    /// One simulated second: averages every sensor and publishes. Returns the
    /// payloads that were accepted by the publisher.
    pub fn tick<P: Publisher + ?Sized>(&mut self, publisher: &mut P) -> Vec<Published> {
        let mut sent = Vec::with_capacity(self.sensors.len());
        for (i, p) in self.next_second().into_iter().enumerate() {
            match publisher.publish(&p.subject, &p.payload.to_json()) {
                Ok(()) => {
                    self.next_seq[i] += 1;
                    sent.push(p);
                }
                Err(e) => log::warn!("publish to {} failed: {e}; seq {} kept for next tick", p.topic, p.payload.seq),
            }
        }
        sent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: SensorKind) -> SensorSpec {
        SensorSpec::new("s1", kind)
    }

    #[test]
    fn degenerate_temperature_is_constant() {
        let mut s = spec(SensorKind::Temperature);
        s.signal.mean = 70.0;
        s.signal.diurnal_amplitude = 0.0;
        s.noise_sigma = 0.0;
        let mut synth = SensorSynth::new(s, 1);
        for t in [0.0, 1.5, 3600.0, 50_000.0] {
            assert_eq!(synth.synth_value(t), 70.0);
        }
        assert_eq!(synth.second_average(12), 70.0);
    }

    #[test]
    fn averaging_a_known_ramp() {
        // internal values 1..=100 within one second average to 50.5
        let mut s = spec(SensorKind::Moisture);
        s.signal.baseline = 1.0;
        s.signal.drift_per_s = 100.0;
        s.noise_sigma = 0.0;
        let mut synth = SensorSynth::new(s, 0);
        assert!((synth.second_average(0) - 50.5).abs() < 1e-12);
    }

    #[test]
    fn failed_publish_keeps_seq() {
        let mut scenario = Scenario::example();
        scenario.sensors.truncate(1);
        let mut sim = DaqSimulator::new(scenario).unwrap();
        let mut fail_next = true;
        let mut flaky = |_: &Subject, _: &[u8]| -> Result<(), String> {
            if std::mem::replace(&mut fail_next, false) {
                Err("link down".into())
            } else {
                Ok(())
            }
        };
        assert!(sim.tick(&mut flaky).is_empty());
        let sent = sim.tick(&mut flaky);
        assert_eq!(sent.len(), 1);
        assert_eq!(sent[0].payload.seq, 1);
        assert_eq!(sent[0].payload.ts, sim.scenario().start_us() + 2_000_000);
    }
}
