use std::collections::HashMap;

use paveflow::daqsim::{DaqSimulator, Scenario, SensorKind, SensorSpec};
use paveflow::wire::{SamplePayload, Subject};

fn collect(sim: &mut DaqSimulator) -> Vec<(String, SamplePayload)> {
    let mut out = Vec::new();
    let mut sink = |s: &Subject, p: &[u8]| {
        out.push((s.to_string(), SamplePayload::from_json(p).map_err(|e| e.to_string())?));
        Ok(())
    };
    while !sim.finished() {
        sim.tick(&mut sink);
    }
    out
}

fn quiet(id: &str, kind: SensorKind) -> SensorSpec {
    SensorSpec { noise_sigma: 0.0, ..SensorSpec::new(id, kind) }
}

#[test]
fn three_sensors_for_a_minute() {
    let sc = Scenario::example();
    let start = sc.start_us();
    let out = collect(&mut DaqSimulator::new(sc).unwrap());
    assert_eq!(out.len(), 180);
    let mut by_subject: HashMap<String, Vec<SamplePayload>> = HashMap::new();
    for (s, p) in out {
        by_subject.entry(s).or_default().push(p);
    }
    let mut subjects: Vec<&String> = by_subject.keys().collect();
    subjects.sort();
    assert_eq!(subjects, ["site.65.daq.1.sensor.epc3", "site.65.daq.1.sensor.scg1", "site.65.daq.1.sensor.tc1"]);
    for ps in by_subject.values() {
        assert_eq!(ps.iter().map(|p| p.seq).collect::<Vec<_>>(), (1..=60).collect::<Vec<u64>>());
        for (k, p) in ps.iter().enumerate() {
            assert_eq!(p.ts, start + (k as i64 + 1) * 1_000_000);
            assert!(p.v.is_finite());
        }
    }
}

#[test]
fn same_seed_same_stream() {
    let run = |seed| {
        let mut sc = Scenario::example();
        sc.seed = seed;
        collect(&mut DaqSimulator::new(sc).unwrap())
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

#[test]
fn ramp_second_is_the_arithmetic_mean() {
    let mut m = quiet("m1", SensorKind::Moisture);
    m.signal.baseline = 1.0;
    m.signal.drift_per_s = 100.0;
    let sc = Scenario { duration_s: 3, sensors: vec![m], ..Scenario::example() };
    let out = collect(&mut DaqSimulator::new(sc).unwrap());
    // internal samples 1..=100 in the first second, 101..=200 in the next
    let v: Vec<f64> = out.iter().map(|(_, p)| p.v).collect();
    assert_eq!(v, [50.5, 150.5, 250.5]);
}

#[test]
fn averages_scale_with_amplitude() {
    let pulse = |id: &str, amp: f64| {
        let mut s = quiet(id, SensorKind::Epc);
        s.signal.amplitude = amp;
        s.signal.baseline = 0.0;
        s
    };
    let sc = Scenario { duration_s: 30, sensors: vec![pulse("a", 1.0), pulse("b", 7.0)], ..Scenario::example() };
    let out = collect(&mut DaqSimulator::new(sc).unwrap());
    for pair in out.chunks(2) {
        let (a, b) = (pair[0].1.v, pair[1].1.v);
        assert!((b - 7.0 * a).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
    }
}

#[test]
fn failed_publish_keeps_the_sequence_number() {
    let sc = Scenario { duration_s: 5, sensors: vec![quiet("x", SensorKind::Temperature)], ..Scenario::example() };
    let start = sc.start_us();
    let mut sim = DaqSimulator::new(sc).unwrap();
    let mut delivered = Vec::new();
    let mut call = 0;
    let mut flaky = |_: &Subject, p: &[u8]| {
        call += 1;
        if call == 3 {
            return Err("link down".to_string());
        }
        delivered.push(SamplePayload::from_json(p).unwrap());
        Ok(())
    };
    while !sim.finished() {
        sim.tick(&mut flaky);
    }
    let seqs: Vec<u64> = delivered.iter().map(|p| p.seq).collect();
    let secs: Vec<i64> = delivered.iter().map(|p| (p.ts - start) / 1_000_000).collect();
    assert_eq!(seqs, [1, 2, 3, 4]);
    assert_eq!(secs, [1, 2, 4, 5]);
}

#[test]
fn scenario_files_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(
        &good,
        r#"{"site":"65","daq":"1","seed":1,"start":"2024-06-01T00:00:00Z","duration_s":2,
            "sensors":[{"id":"epc3","kind":"EPC"}]}"#,
    )
    .unwrap();
    let sc = Scenario::load(&good).unwrap();
    assert_eq!(sc.sensors[0].rate_hz, 100);
    assert_eq!(sc.sensors[0].unit, "kPa");

    for (name, body) in [
        ("dotted.json", r#"{"site":"6.5","daq":"1","start":"2024-06-01T00:00:00Z","duration_s":2}"#),
        ("extra.json", r#"{"site":"65","daq":"1","start":"2024-06-01T00:00:00Z","duration_s":2,"speed":3}"#),
        (
            "rate.json",
            r#"{"site":"65","daq":"1","start":"2024-06-01T00:00:00Z","duration_s":2,
                "sensors":[{"id":"a","kind":"EPC","rate_hz":0}]}"#,
        ),
    ] {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        assert!(Scenario::load(&p).is_err(), "{name}");
    }
}
