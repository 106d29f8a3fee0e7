use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Visit months of the default follow-up grid.
pub const VISITS: [u32; 7] = [0, 12, 24, 36, 48, 72, 96];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::L => "L",
            Side::R => "R",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::F => "F",
            Sex::M => "M",
        })
    }
}

/// One knee with its subject metadata and KL-grade history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KneeRecord {
    pub subject_id: String,
    pub side: Side,
    pub institution_id: String,
    pub age: f64,
    pub sex: Sex,
    pub bmi: Option<f64>,
    pub tka_baseline: bool,
    /// Observed KL grade by visit month; month 0 is the baseline.
    pub klg: BTreeMap<u32, u8>,
}

impl KneeRecord {
    pub fn knee_id(&self) -> String {
        format!("{}_{}", self.subject_id, self.side)
    }

    pub fn baseline_klg(&self) -> Option<u8> {
        self.klg.get(&0).copied()
    }
}

const FIXED_COLUMNS: [&str; 7] = ["subject_id", "side", "institution_id", "age", "sex", "bmi", "tka_baseline"];

fn row_err(path: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Row {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Parses a cohort CSV. Empty cells are missing values; any malformed
/// value fails the whole parse with its line number.
pub fn parse_cohort(text: &str, origin: &str) -> Result<Vec<KneeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| row_err(origin, 1, format!("unreadable header: {e}")))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < FIXED_COLUMNS.len() || cols[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(row_err(origin, 1, format!("header must start with {}", FIXED_COLUMNS.join(","))));
    }
    let mut months = Vec::new();
    for c in &cols[FIXED_COLUMNS.len()..] {
        let m = c
            .strip_prefix("klg_m")
            .and_then(|m| m.parse::<u32>().ok())
            .ok_or_else(|| row_err(origin, 1, format!("unexpected column '{c}'")))?;
        months.push(m);
    }
    if !months.contains(&0) {
        return Err(row_err(origin, 1, "missing baseline column klg_m0"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| row_err(origin, line, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let subject_id = field(0).to_string();
        if subject_id.is_empty() {
            return Err(row_err(origin, line, "empty subject_id"));
        }
        let side = match field(1) {
            "L" => Side::L,
            "R" => Side::R,
            s => return Err(row_err(origin, line, format!("side must be L or R, got '{s}'"))),
        };
        let institution_id = field(2).to_string();
        if institution_id.is_empty() {
            return Err(row_err(origin, line, "empty institution_id"));
        }
        let age: f64 = field(3)
            .parse()
            .map_err(|_| row_err(origin, line, format!("bad age '{}'", field(3))))?;
        let sex = match field(4) {
            "F" => Sex::F,
            "M" => Sex::M,
            s => return Err(row_err(origin, line, format!("sex must be F or M, got '{s}'"))),
        };
        let bmi = match field(5) {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|b| *b > 0.0)
                    .ok_or_else(|| row_err(origin, line, format!("bad bmi '{s}'")))?,
            ),
        };
        let tka_baseline = match field(6) {
            "0" => false,
            "1" => true,
            s => return Err(row_err(origin, line, format!("tka_baseline must be 0 or 1, got '{s}'"))),
        };
        let mut klg = BTreeMap::new();
        for (j, &m) in months.iter().enumerate() {
            match field(FIXED_COLUMNS.len() + j) {
                "" => {}
                s => {
                    let g = s
                        .parse::<u8>()
                        .ok()
                        .filter(|g| *g <= 4)
                        .ok_or_else(|| row_err(origin, line, format!("klg_m{m} must be 0..4, got '{s}'")))?;
                    klg.insert(m, g);
                }
            }
        }
        out.push(KneeRecord {
            subject_id,
            side,
            institution_id,
            age,
            sex,
            bmi,
            tka_baseline,
            klg,
        });
    }
    Ok(out)
}

pub fn load_cohort(path: &Path) -> Result<Vec<KneeRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cohort(&text, &path.display().to_string())
}

/// Writes the default visit grid plus any extra months present.
pub fn write_cohort(records: &[KneeRecord]) -> String {
    let months: BTreeSet<u32> = VISITS
        .iter()
        .copied()
        .chain(records.iter().flat_map(|r| r.klg.keys().copied()))
        .collect();
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(months.iter().map(|m| format!("klg_m{m}")));
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let mut row = vec![
            r.subject_id.clone(),
            r.side.to_string(),
            r.institution_id.clone(),
            format!("{}", r.age),
            r.sex.to_string(),
            r.bmi.map(|b| format!("{b}")).unwrap_or_default(),
            (r.tka_baseline as u8).to_string(),
        ];
        row.extend(months.iter().map(|m| r.klg.get(m).map(|g| g.to_string()).unwrap_or_default()));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "subject_id,side,institution_id,age,sex,bmi,tka_baseline,klg_m0,klg_m12,klg_m24,klg_m36,klg_m48,klg_m72,klg_m96";

    #[test]
    fn round_trip() {
        let text = format!("{HEADER}\nS1,L,A,61.5,F,27.1,0,1,1,,2,2,2,3\nS1,R,A,61.5,F,,1,0,,,,,,\n");
        let recs = parse_cohort(&text, "c.csv").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].klg.len(), 6);
        assert_eq!(recs[1].bmi, None);
        assert!(recs[1].tka_baseline);
        assert_eq!(parse_cohort(&write_cohort(&recs), "again").unwrap(), recs);
    }

    #[test]
    fn bad_enum_names_the_line() {
        let text = format!("{HEADER}\nS1,L,A,61,F,27,0,1,,,,,,\nS2,X,A,61,F,27,0,1,,,,,,\n");
        match parse_cohort(&text, "c.csv").unwrap_err() {
            Error::Row { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("side"));
            }
            e => panic!("{e}"),
        }
        let text = format!("{HEADER}\nS1,L,A,61,F,27,0,5,,,,,,\n");
        assert!(matches!(parse_cohort(&text, "c.csv"), Err(Error::Row { line: 2, .. })));
    }
}
