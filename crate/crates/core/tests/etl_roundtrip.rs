mod common;

use std::collections::HashMap;

use chrono::NaiveDate;
use paveflow::etl::{
    build_file_info, denormalize, emit_laser, emit_normalized, join_by_filename_id, laser_horizontal, parse_filename,
    parse_raw_str, process_dir, process_file, DataRow, EtlError, FileMeta, SensorKind, DATA_HEADER, FILE_INFO_HEADER,
    LASER_HEADER,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn meta(name: &str, project: &str) -> FileMeta {
    FileMeta { filename: name.into(), project_name: Some(project.into()), ..Default::default() }
}

fn row(file: &str, t: f64, v: f64) -> DataRow {
    DataRow {
        filename: file.into(),
        captured_instance: "first20".into(),
        gage_id: "104".into(),
        placement: "0.5".into(),
        cal_coeff: 1.0,
        rated_output: 5890.0,
        extrema: "maxima".into(),
        seconds_elapsed: t,
        processed_datapoint: v,
        unit: "microstrain".into(),
    }
}

#[test]
fn file_info_ids_follow_first_occurrence() {
    let names: Vec<String> = (0..25).map(|i| format!("f{i}.txt")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut metas: Vec<FileMeta> = names.iter().flat_map(|n| (0..3).map(move |k| meta(n, &format!("p{k}")))).collect();
    metas.shuffle(&mut rng);

    let mut first: Vec<&FileMeta> = Vec::new();
    for m in &metas {
        if !first.iter().any(|f| f.filename == m.filename) {
            first.push(m);
        }
    }
    let info = build_file_info(&metas);
    assert_eq!(info.len(), 25);
    for (i, (got, want)) in info.iter().zip(&first).enumerate() {
        assert_eq!(got.id, i as u64 + 1);
        assert_eq!(got.filename, want.filename);
        assert_eq!(Some(&got.project_name), want.project_name.as_ref());
    }
}

#[test]
fn headers_are_fixed() {
    assert_eq!(DATA_HEADER.split(',').count(), 10);
    assert_eq!(FILE_INFO_HEADER.split(',').next(), Some("id"));
    assert_eq!(LASER_HEADER.split(',').nth(2), Some("horiz_mm"));
    let info = build_file_info(&[meta("a.txt", "x")]);
    let (data, fi) = emit_normalized(&[row("a.txt", 1.0, 2.0)], &info).unwrap();
    assert!(data.starts_with(DATA_HEADER));
    assert!(fi.starts_with(FILE_INFO_HEADER));
}

#[test]
fn dangling_reference_is_an_integrity_error() {
    let info = build_file_info(&[meta("a.txt", "x")]);
    let err = emit_normalized(&[row("b.txt", 1.0, 2.0)], &info).unwrap_err();
    assert!(err.is_integrity(), "{err}");
    let (data, _) = emit_normalized(&[row("a.txt", 1.0, 2.0)], &info).unwrap();
    let empty_info = format!("{FILE_INFO_HEADER}\n");
    assert!(join_by_filename_id(&data, &empty_info).unwrap_err().is_integrity());
}

#[test]
fn archive_and_traffic_filenames() {
    let m = parse_filename("12 NCAT_S7_ASG_G3_05-Jun-2019.txt");
    assert_eq!(m.project_name.as_deref(), Some("NCAT"));
    assert_eq!(m.test_section.as_deref(), Some("S7"));
    assert_eq!(m.sensor_type.as_deref(), Some("ASG"));
    assert_eq!(m.gage_id.as_deref(), Some("G3"));
    assert_eq!(m.survey_date, NaiveDate::from_ymd_opt(2019, 6, 5));

    let t = parse_filename("data/Traffic D1 F20 07-07-22.txt");
    assert_eq!(t.filename, "Traffic D1 F20 07-07-22.txt");
    assert_eq!(t.test_section.as_deref(), Some("D1"));
    assert_eq!(t.instance.as_deref(), Some("F20"));
    assert_eq!(t.survey_date, NaiveDate::from_ymd_opt(2022, 7, 7));

    for bad in ["notes.txt", "12 A_B_C_D_31-Feb-2019.txt", "Traffic D1 F20 13-40-22.txt"] {
        assert!(parse_filename(bad).unparsed, "{bad}");
    }
}

#[test]
fn raw_format_errors_carry_line_numbers() {
    let header = "# kind: ASG\n# gage: 1\n# placement: 0\n# cal_coeff: 1\n# rated_output: 10\nseconds,ch1\n";
    let cases = [
        (format!("{header}0,1\n1,2\n1,3\n"), 9),
        (format!("{header}0,1\nx,2\n"), 8),
        (format!("{header}0,1,2\n"), 7),
        ("# kind: ASG\n0,1\n".to_string(), 2),
        (header.to_string(), 7),
    ];
    for (text, line) in cases {
        match parse_raw_str("f.txt", &text, None) {
            Err(EtlError::Format { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    // missing calibration on a strain log
    assert!(parse_raw_str("f.txt", "# kind: ASG\nseconds,ch1\n0,1\n", None).is_err());
    // an interrupted final row is dropped with a warning
    let log = parse_raw_str("f.txt", &format!("{header}0,1\n1,2\n2,"), None).unwrap();
    assert_eq!(log.channels[0].series.len(), 2);
    assert_eq!(log.warnings.len(), 1);
}

#[test]
fn kind_override_must_agree_with_header() {
    let text = "# kind: TC\n# gage: 1\n# placement: 0\n# cal_coeff: 1\n# rated_output: 10\nseconds,ch1\n0,1\n";
    assert!(parse_raw_str("f.txt", text, Some(SensorKind::Tc)).is_ok());
    assert!(parse_raw_str("f.txt", text, Some(SensorKind::Pc)).is_err());
}

#[test]
fn laser_rows_number_and_position_every_sample() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::write(dir.path(), "scan.txt", &common::laser_fixture(1500));
    let out = process_file(&p, None).unwrap();
    assert_eq!(out.kind, SensorKind::Laser);
    assert_eq!(out.laser.len(), 1500);
    for (i, r) in out.laser.iter().enumerate() {
        assert_eq!(r.sample_number, i as u64 + 1);
        assert_eq!(r.horiz_mm, laser_horizontal(r.sample_number));
        assert_eq!(r.beam_location_mm, 250.0);
    }
    assert_eq!(out.laser[0].sampled_time, "09:30:00.000000");
    assert_eq!(out.laser[1499].sampled_time, "09:30:01.499000");
    let csv = emit_laser(&out.laser, &build_file_info(&[out.meta.clone()])).unwrap();
    assert_eq!(csv.lines().count(), 1501);
    assert!(csv.lines().nth(1).unwrap().starts_with("1,1,0.171117705,"));
}

#[test]
fn thirty_pass_log_labels_twenty_plus_ten() {
    let dir = tempfile::tempdir().unwrap();
    let text = common::asg_fixture(30, 10.0, 20.0, 80.0).replacen("# kind: ASG\n", "# kind: ASG\n# window: 51\n", 1);
    let p = common::write(dir.path(), "thirty.txt", &text);
    let out = process_file(&p, None).unwrap();
    let count = |inst: &str, ext: &str| out.rows.iter().filter(|r| r.captured_instance == inst && r.extrema == ext).count();
    assert_eq!(count("first20", "maxima"), 20);
    assert_eq!(count("last20", "maxima"), 10);
    assert_eq!(count("first20", "envelope") + count("last20", "envelope"), 150);
    assert!(out.rows.windows(2).all(|w| w[0].seconds_elapsed <= w[1].seconds_elapsed));
}

#[test]
fn processing_a_directory_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    common::write(dir.path(), "Traffic D1 F20 07-07-22.txt", &common::asg_fixture(45, 10.0, 100.0, 50.0));
    common::write(dir.path(), "19-06-18 H L1.txt", &common::laser_fixture(1200));
    common::write(dir.path(), "ignored.json", "{}");
    let run = || {
        let files = process_dir(dir.path(), None).unwrap();
        let metas: Vec<FileMeta> = files.iter().map(|f| f.meta.clone()).collect();
        let info = build_file_info(&metas);
        let rows: Vec<DataRow> = files.iter().flat_map(|f| f.rows.clone()).collect();
        let laser: Vec<_> = files.iter().flat_map(|f| f.laser.clone()).collect();
        let (data, fi) = emit_normalized(&rows, &info).unwrap();
        (data, fi, emit_laser(&laser, &info).unwrap())
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.1.lines().count(), 3);
    assert!(a.1.contains("instance F20"));
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9 ]{0,12}",
        "[,\"\\n]{1,4}",
        Just("µε 05-Jun-2019".to_string()),
        Just("\"quoted, with comma\"".to_string()),
    ]
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1e-3f64..1e-3, Just(0.0), Just(-0.0), Just(f64::NAN)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn join_inverts_normalization(
        files in prop::collection::vec((text(), text(), prop::option::of(0u32..3000)), 1..6),
        rows in prop::collection::vec((any::<prop::sample::Index>(), text(), value(), value()), 0..30),
    ) {
        let metas: Vec<FileMeta> = files
            .iter()
            .enumerate()
            .map(|(i, (name, desc, day))| FileMeta {
                filename: format!("{name}#{i}"),
                description: Some(desc.clone()),
                survey_date: day.and_then(|d| NaiveDate::from_num_days_from_ce_opt(730_000 + d as i32)),
                ..Default::default()
            })
            .collect();
        let rows: Vec<DataRow> = rows
            .iter()
            .map(|(ix, gage, t, v)| DataRow { gage_id: gage.clone(), ..row(&metas[ix.index(metas.len())].filename, *t, *v) })
            .collect();
        let info = build_file_info(&metas);
        let (data, fi) = emit_normalized(&rows, &info).unwrap();
        let joined: Vec<Vec<String>> = join_by_filename_id(&data, &fi).unwrap().iter().map(|r| r.canonical()).collect();
        let want: Vec<Vec<String>> = denormalize(&rows, &info).unwrap().iter().map(|r| r.canonical()).collect();
        prop_assert_eq!(joined, want);
        let ids: HashMap<&str, u64> = info.iter().map(|f| (f.filename.as_str(), f.id)).collect();
        prop_assert_eq!(ids.len(), metas.len());
    }
}
