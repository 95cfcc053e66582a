use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;

/// File-level metadata. Fields the filename does not carry stay `None` and
/// may be filled from the raw file's header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileMeta {
    pub filename: String,
    pub project_name: Option<String>,
    pub test_section: Option<String>,
    pub sensor_type: Option<String>,
    /// Carried verbatim; units and datum are not defined upstream.
    pub location: Option<String>,
    pub gage_id: Option<String>,
    pub survey_date: Option<NaiveDate>,
    pub description: Option<String>,
    /// Traffic grammar only, e.g. `F20`.
    pub instance: Option<String>,
    /// Neither grammar matched.
    pub unparsed: bool,
}

// <id> <project>_<section>_<sensor type>_<gage>_<dd-Mon-yyyy>.<ext>
static ARCHIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d+) ([^_]+)_([^_]+)_([^_]+)_([^_]+)_(\d{1,2}-[A-Za-z]{3}-\d{4})\.([A-Za-z0-9]+)$").unwrap()
});

// Traffic <section> <instance> <mm-dd-yy>.txt
static TRAFFIC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^traffic (\S+) (\S+) (\d{2})-(\d{2})-(\d{2})\.txt$").unwrap());

/// Two-digit years 00-68 are 20xx, the rest 19xx.
fn expand_year(yy: i32) -> i32 {
    if yy <= 68 {
        2000 + yy
    } else {
        1900 + yy
    }
}

pub fn parse_filename(name: &str) -> FileMeta {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    let mut meta = FileMeta { filename: base.to_string(), ..Default::default() };
    if let Some(c) = ARCHIVE.captures(base) {
        if let Ok(date) = NaiveDate::parse_from_str(&c[6], "%d-%b-%Y") {
            meta.project_name = Some(c[2].to_string());
            meta.test_section = Some(c[3].to_string());
            meta.sensor_type = Some(c[4].to_string());
            meta.gage_id = Some(c[5].to_string());
            meta.survey_date = Some(date);
            return meta;
        }
    }
    if let Some(c) = TRAFFIC.captures(base) {
        let num = |i: usize| c[i].parse::<u32>().unwrap_or(0);
        if let Some(date) = NaiveDate::from_ymd_opt(expand_year(num(5) as i32), num(3), num(4)) {
            meta.test_section = Some(c[1].to_string());
            meta.instance = Some(c[2].to_string());
            meta.survey_date = Some(date);
            return meta;
        }
    }
    meta.unparsed = true;
    meta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> Option<NaiveDate> {
        NaiveDate::from_ymd_opt(y, m, d)
    }

    #[test]
    fn archive_grammar() {
        let m = parse_filename("229 I-69_TSI_STRAIN GAGE_104_23-Nov-2020.mat");
        assert_eq!(m.project_name.as_deref(), Some("I-69"));
        assert_eq!(m.test_section.as_deref(), Some("TSI"));
        assert_eq!(m.sensor_type.as_deref(), Some("STRAIN GAGE"));
        assert_eq!(m.gage_id.as_deref(), Some("104"));
        assert_eq!(m.survey_date, date(2020, 11, 23));
        assert!(!m.unparsed);
    }

    #[test]
    fn traffic_grammar() {
        let m = parse_filename("data/Traffic D1 F20 07-07-22.txt");
        assert_eq!(m.filename, "Traffic D1 F20 07-07-22.txt");
        assert_eq!(m.test_section.as_deref(), Some("D1"));
        assert_eq!(m.instance.as_deref(), Some("F20"));
        assert_eq!(m.survey_date, date(2022, 7, 7));
        assert_eq!(parse_filename("Traffic D1 L20 12-31-69.txt").survey_date, date(1969, 12, 31));
        assert_eq!(parse_filename("Traffic D1 L20 01-01-68.txt").survey_date, date(2068, 1, 1));
    }

    #[test]
    fn fallback() {
        let m = parse_filename("notes.docx");
        assert!(m.unparsed);
        assert_eq!(m, FileMeta { filename: "notes.docx".into(), unparsed: true, ..Default::default() });
        // impossible dates do not parse
        assert!(parse_filename("Traffic D1 F20 13-40-22.txt").unparsed);
    }
}
