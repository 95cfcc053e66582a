use std::collections::HashMap;

use chrono::NaiveDate;

use super::{DataRow, EtlError, FileMeta, LaserRow};

pub const DATA_HEADER: &str = "filename_id,captured_instance,gage_id,placement,cal_coeff,rated_output,extrema,\
seconds_elapsed,processed_datapoint,unit";
pub const FILE_INFO_HEADER: &str =
    "id,filename,project_name,test_section,sensor_type,location,gage_id,survey_date,description";
pub const LASER_HEADER: &str = "filename_id,sample_number,horiz_mm,laser_reading_mm,beam_location_mm,sampled_time";

/// One FILE_INFO row; missing metadata is an empty string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileInfoRow {
    pub id: u64,
    pub filename: String,
    pub project_name: String,
    pub test_section: String,
    pub sensor_type: String,
    pub location: String,
    pub gage_id: String,
    pub survey_date: Option<NaiveDate>,
    pub description: String,
}

impl FileInfoRow {
    pub fn from_meta(id: u64, m: &FileMeta) -> Self {
        let s = |o: &Option<String>| o.clone().unwrap_or_default();
        FileInfoRow {
            id,
            filename: m.filename.clone(),
            project_name: s(&m.project_name),
            test_section: s(&m.test_section),
            sensor_type: s(&m.sensor_type),
            location: s(&m.location),
            gage_id: s(&m.gage_id),
            survey_date: m.survey_date,
            // the traffic instance has no column of its own
            description: m.description.clone().or(m.instance.as_ref().map(|i| format!("instance {i}"))).unwrap_or_default(),
        }
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.id.to_string(),
            self.filename.clone(),
            self.project_name.clone(),
            self.test_section.clone(),
            self.sensor_type.clone(),
            self.location.clone(),
            self.gage_id.clone(),
            self.survey_date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default(),
            self.description.clone(),
        ]
    }
}

/// A data row joined back to its file.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRow {
    pub file: FileInfoRow,
    pub data: DataRow,
}

impl JoinedRow {
    /// Every field in output formatting, for exact comparison.
    pub fn canonical(&self) -> Vec<String> {
        let mut v = self.file.record();
        v.extend(data_record(self.file.id, &self.data));
        v
    }
}

/// Unique filenames in first-seen order with ids dense from 1. Metadata of a
/// repeated filename comes from its first occurrence.
pub fn build_file_info(metas: &[FileMeta]) -> Vec<FileInfoRow> {
    let mut seen: HashMap<&str, ()> = HashMap::new();
    let mut out = Vec::new();
    for m in metas {
        if seen.insert(&m.filename, ()).is_none() {
            out.push(FileInfoRow::from_meta(out.len() as u64 + 1, m));
        }
    }
    out
}

/// Decimal with at most 9 fractional digits, trailing zeros trimmed.
pub fn format_number(x: f64) -> String {
    let s = format!("{x:.9}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn data_record(id: u64, r: &DataRow) -> Vec<String> {
    vec![
        id.to_string(),
        r.captured_instance.clone(),
        r.gage_id.clone(),
        r.placement.clone(),
        format_number(r.cal_coeff),
        format_number(r.rated_output),
        r.extrema.clone(),
        format_number(r.seconds_elapsed),
        format_number(r.processed_datapoint),
        r.unit.clone(),
    ]
}

fn id_index(files: &[FileInfoRow]) -> Result<HashMap<&str, u64>, EtlError> {
    let mut ids = HashMap::new();
    let mut by_id = HashMap::new();
    for f in files {
        if ids.insert(f.filename.as_str(), f.id).is_some() {
            return Err(EtlError::Integrity(format!("filename '{}' listed twice", f.filename)));
        }
        if by_id.insert(f.id, ()).is_some() {
            return Err(EtlError::Integrity(format!("id {} listed twice", f.id)));
        }
    }
    Ok(ids)
}

fn write_csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, EtlError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header.split(','))?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| EtlError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// `(data CSV, file-info CSV)`; data rows carry `filename_id` only.
pub fn emit_normalized(rows: &[DataRow], files: &[FileInfoRow]) -> Result<(String, String), EtlError> {
    let ids = id_index(files)?;
    let mut data = Vec::with_capacity(rows.len());
    for r in rows {
        let id = *ids.get(r.filename.as_str()).ok_or_else(|| EtlError::DanglingReference(r.filename.clone()))?;
        data.push(data_record(id, r));
    }
    Ok((write_csv(DATA_HEADER, data)?, write_csv(FILE_INFO_HEADER, files.iter().map(FileInfoRow::record))?))
}

pub fn emit_laser(rows: &[LaserRow], files: &[FileInfoRow]) -> Result<String, EtlError> {
    let ids = id_index(files)?;
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let id = *ids.get(r.filename.as_str()).ok_or_else(|| EtlError::DanglingReference(r.filename.clone()))?;
        out.push(vec![
            id.to_string(),
            r.sample_number.to_string(),
            format_number(r.horiz_mm),
            format_number(r.laser_reading_mm),
            format_number(r.beam_location_mm),
            r.sampled_time.clone(),
        ]);
    }
    write_csv(LASER_HEADER, out)
}

/// Pairs each row with its file, as the join would.
pub fn denormalize(rows: &[DataRow], files: &[FileInfoRow]) -> Result<Vec<JoinedRow>, EtlError> {
    id_index(files)?;
    let by_name: HashMap<&str, &FileInfoRow> = files.iter().map(|f| (f.filename.as_str(), f)).collect();
    rows.iter()
        .map(|r| {
            let f = by_name.get(r.filename.as_str()).ok_or_else(|| EtlError::DanglingReference(r.filename.clone()))?;
            Ok(JoinedRow { file: (*f).clone(), data: r.clone() })
        })
        .collect()
}

fn read_table(text: &str, header: &str) -> Result<Vec<csv::StringRecord>, EtlError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got.join(",") != header {
        return Err(EtlError::Integrity(format!("unexpected header '{}'", got.join(","))));
    }
    r.records().map(|rec| rec.map_err(EtlError::from)).collect()
}

fn number(field: &str, what: &str) -> Result<f64, EtlError> {
    field.parse().map_err(|_| EtlError::Integrity(format!("{what} '{field}' is not a number")))
}

/// Inner join of a data table with FILE_INFO on `filename_id`.
pub fn join_by_filename_id(data_csv: &str, file_info_csv: &str) -> Result<Vec<JoinedRow>, EtlError> {
    let mut files: HashMap<u64, FileInfoRow> = HashMap::new();
    for rec in read_table(file_info_csv, FILE_INFO_HEADER)? {
        let id: u64 = rec[0].parse().map_err(|_| EtlError::Integrity(format!("bad id '{}'", &rec[0])))?;
        let survey_date = match &rec[7] {
            "" => None,
            d => Some(
                NaiveDate::parse_from_str(d, "%Y-%m-%d")
                    .map_err(|_| EtlError::Integrity(format!("bad survey_date '{d}'")))?,
            ),
        };
        let row = FileInfoRow {
            id,
            filename: rec[1].to_string(),
            project_name: rec[2].to_string(),
            test_section: rec[3].to_string(),
            sensor_type: rec[4].to_string(),
            location: rec[5].to_string(),
            gage_id: rec[6].to_string(),
            survey_date,
            description: rec[8].to_string(),
        };
        if files.insert(id, row).is_some() {
            return Err(EtlError::Integrity(format!("id {id} appears twice in FILE_INFO")));
        }
    }
    let mut out = Vec::new();
    for rec in read_table(data_csv, DATA_HEADER)? {
        let file = files.get(&rec[0].parse::<u64>().unwrap_or(0)).ok_or_else(|| EtlError::DanglingReference(format!("filename_id {}", &rec[0])))?;
        out.push(JoinedRow {
            file: file.clone(),
            data: DataRow {
                filename: file.filename.clone(),
                captured_instance: rec[1].to_string(),
                gage_id: rec[2].to_string(),
                placement: rec[3].to_string(),
                cal_coeff: number(&rec[4], "cal_coeff")?,
                rated_output: number(&rec[5], "rated_output")?,
                extrema: rec[6].to_string(),
                seconds_elapsed: number(&rec[7], "seconds_elapsed")?,
                processed_datapoint: number(&rec[8], "processed_datapoint")?,
                unit: rec[9].to_string(),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(name: &str) -> FileMeta {
        FileMeta { filename: name.into(), ..Default::default() }
    }

    fn row(file: &str, v: f64) -> DataRow {
        DataRow {
            filename: file.into(),
            captured_instance: "first20".into(),
            gage_id: "104".into(),
            placement: "0.5".into(),
            cal_coeff: 1.0,
            rated_output: 5890.0,
            extrema: "maxima".into(),
            seconds_elapsed: 9.7004,
            processed_datapoint: v,
            unit: "microstrain".into(),
        }
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(-0.185732682), "-0.185732682");
        assert_eq!(format_number(5890.0), "5890");
        assert_eq!(format_number(0.1711177052), "0.171117705");
        assert_eq!(format_number(-1e-12), "0");
    }

    #[test]
    fn file_info_dedup() {
        let files = build_file_info(&[meta("a"), meta("b"), meta("a")]);
        assert_eq!(files.iter().map(|f| (f.id, f.filename.as_str())).collect::<Vec<_>>(), [(1, "a"), (2, "b")]);
        assert!(build_file_info(&[]).is_empty());
    }

    #[test]
    fn emit_and_join() {
        let files = build_file_info(&[meta("f, \"quoted\".txt")]);
        let rows = [row("f, \"quoted\".txt", 1.5), row("f, \"quoted\".txt", -2.0)];
        let (data, info) = emit_normalized(&rows, &files).unwrap();
        assert!(data.starts_with(&format!("{DATA_HEADER}\r\n1,first20,")));
        assert_eq!(data.lines().count(), 3);
        assert!(info.contains("\"f, \"\"quoted\"\".txt\""));
        let joined = join_by_filename_id(&data, &info).unwrap();
        assert_eq!(joined, denormalize(&rows, &files).unwrap());
    }

    #[test]
    fn integrity_errors() {
        let files = build_file_info(&[meta("a")]);
        assert!(matches!(emit_normalized(&[row("zzz", 1.0)], &files), Err(EtlError::DanglingReference(_))));
        let (data, info) = emit_normalized(&[row("a", 1.0)], &files).unwrap();
        let doubled = format!("{info}1,b,,,,,,,\r\n");
        assert!(matches!(join_by_filename_id(&data, &doubled), Err(EtlError::Integrity(_))));
        let (empty, _) = emit_normalized(&[], &files).unwrap();
        assert!(join_by_filename_id(&empty, &info).unwrap().is_empty());
        let orphan = data.replace("\r\n1,", "\r\n7,");
        assert!(matches!(join_by_filename_id(&orphan, &info), Err(EtlError::DanglingReference(_))));
    }
}
