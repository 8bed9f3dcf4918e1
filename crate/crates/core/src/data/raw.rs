use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::{Error, Result};

pub const REQUIRED_COLUMNS: [&str; 8] = [
    "garage_id",
    "my_mpg_1",
    "epa_mpg_1",
    "my_mpg_2",
    "epa_mpg_2",
    "model_year_1",
    "model_year_2",
    "us_division",
];

/// Which EPA rating the gap ratio is taken against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EpaRating {
    /// `epa_mpg_v`, the test-cycle rating.
    #[default]
    TestCycle,
    /// `epa_label_mpg_v`, the window-sticker rating (optional columns).
    Label,
}

impl EpaRating {
    pub fn column(self, vehicle: usize) -> String {
        match self {
            EpaRating::TestCycle => format!("epa_mpg_{vehicle}"),
            EpaRating::Label => format!("epa_label_mpg_{vehicle}"),
        }
    }
}

/// One garage row. `values` keeps every column verbatim in header order so the
/// row can be written back unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGarageRecord {
    /// 1-based data row in the source file.
    pub row: usize,
    pub garage_id: String,
    pub my_mpg: [f64; 2],
    pub epa_mpg: [f64; 2],
    pub model_year: [i32; 2],
    pub us_division: String,
    pub values: Vec<String>,
    /// The vehicles were relabelled so that vehicle 1 is the older one.
    pub relabelled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub records: Vec<RawGarageRecord>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Every column of a record keyed by header name.
    pub fn fields(&self, record: &RawGarageRecord) -> BTreeMap<String, String> {
        self.headers
            .iter()
            .cloned()
            .zip(record.values.iter().cloned())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, records: &[&RawGarageRecord]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for r in records {
            w.write_record(&r.values)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_positive(row: usize, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        row,
        field: field.to_string(),
        reason: if raw.trim().is_empty() {
            "missing value".to_string()
        } else {
            format!("not a number: `{raw}`")
        },
    })?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Parse {
            row,
            field: field.to_string(),
            reason: "nonpositive mpg".to_string(),
        });
    }
    Ok(v)
}

fn parse_year(row: usize, field: &str, raw: &str) -> Result<i32> {
    raw.trim().parse().map_err(|_| Error::Parse {
        row,
        field: field.to_string(),
        reason: format!("not an integer year: `{raw}`"),
    })
}

/// Pairs of header positions `(name_1, name_2)` for every `_1`/`_2` column.
fn vehicle_pairs(headers: &[String]) -> Vec<(usize, usize)> {
    headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let stem = h.strip_suffix("_1")?;
            let j = headers.iter().position(|o| *o == format!("{stem}_2"))?;
            Some((i, j))
        })
        .collect()
}

/// Parse a header-bearing CSV of garage records.
///
/// Fails fast: the first malformed row aborts the parse with its row number.
/// When `model_year_1 > model_year_2` every `_1`/`_2` column pair is swapped so
/// that vehicle 1 is always the older vehicle.
pub fn parse_raw<R: Read>(source: R) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut idx = BTreeMap::new();
    for col in REQUIRED_COLUMNS {
        let i = headers.iter().position(|h| h == col).ok_or(Error::Parse {
            row: 0,
            field: col.to_string(),
            reason: "missing required column in header".to_string(),
        })?;
        idx.insert(col, i);
    }
    let pairs = vehicle_pairs(&headers);

    let mut records = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        if rec.len() != headers.len() {
            let missing = headers.get(rec.len()).cloned().unwrap_or_default();
            return Err(Error::Parse {
                row,
                field: missing,
                reason: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let mut values: Vec<String> = rec.iter().map(str::to_string).collect();
        let get = |c: &str| values[idx[c]].as_str();
        let mut my_mpg = [
            parse_positive(row, "my_mpg_1", get("my_mpg_1"))?,
            parse_positive(row, "my_mpg_2", get("my_mpg_2"))?,
        ];
        let mut epa_mpg = [
            parse_positive(row, "epa_mpg_1", get("epa_mpg_1"))?,
            parse_positive(row, "epa_mpg_2", get("epa_mpg_2"))?,
        ];
        let mut model_year = [
            parse_year(row, "model_year_1", get("model_year_1"))?,
            parse_year(row, "model_year_2", get("model_year_2"))?,
        ];
        let garage_id = get("garage_id").to_string();
        let us_division = get("us_division").to_string();
        let relabelled = model_year[0] > model_year[1];
        if relabelled {
            for &(a, b) in &pairs {
                values.swap(a, b);
            }
            my_mpg.swap(0, 1);
            epa_mpg.swap(0, 1);
            model_year.swap(0, 1);
        }
        records.push(RawGarageRecord {
            row,
            garage_id,
            my_mpg,
            epa_mpg,
            model_year,
            us_division,
            values,
            relabelled,
        });
    }
    Ok(RawTable { headers, records })
}
