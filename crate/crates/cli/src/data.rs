//! Dataset files and the mixed-frequency tensor builder.
//!
//! A dataset CSV has an optional `y` column followed by `x_1, ..., x_Q`, the
//! covariate tensor in canonical order (first mode fastest).

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use ctrp_core::DenseTensor;

use crate::error::{CliError, CliResult};

/// Daily regressors in the order they occupy the second mode.
pub const REGRESSORS: [&str; 7] = ["GV", "BV", "ER", "IR", "VI", "TB", "BD"];
pub const LAGS: usize = 4;
pub const DAYS_PER_MONTH: usize = 22;
pub const MIXED_SHAPE: [usize; 3] = [LAGS, REGRESSORS.len(), DAYS_PER_MONTH];

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub xs: Vec<DenseTensor>,
    pub y: Option<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn responses(&self) -> CliResult<&[f64]> {
        self.y
            .as_deref()
            .ok_or_else(|| CliError::ingestion("the dataset has no y column"))
    }
}

fn parse_value(field: &str, row: usize, column: &str) -> CliResult<f64> {
    let f = field.trim();
    if f.is_empty() {
        return Err(CliError::ingestion(format!(
            "missing value in row {row}, column {column}"
        )));
    }
    match f.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::ingestion(format!(
            "row {row}, column {column}: {f:?} is not a finite number"
        ))),
    }
}

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        CliError::io(path, e)
    } else {
        CliError::ingestion(format!("{}: {e}", path.display()))
    }
}

pub fn read_dataset(path: &Path, shape: &[usize]) -> CliResult<Dataset> {
    let q: usize = shape.iter().product();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let has_y = headers.get(0).map(str::trim) == Some("y");
    let offset = has_y as usize;
    if headers.len() != q + offset {
        return Err(CliError::new(
            crate::error::Category::Shape,
            format!(
                "{}: {} covariate columns for shape {shape:?}, expected {q}",
                path.display(),
                headers.len() - offset
            ),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = i + 1;
        let mut vals = Vec::with_capacity(q);
        for (k, field) in rec.iter().enumerate() {
            let v = parse_value(field, row, &headers[k])?;
            if has_y && k == 0 {
                ys.push(v);
            } else {
                vals.push(v);
            }
        }
        xs.push(DenseTensor::new(shape.to_vec(), vals)?);
    }
    if xs.is_empty() {
        return Err(CliError::ingestion(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(Dataset {
        xs,
        y: has_y.then_some(ys),
    })
}

/// Dataset CSV body for `xs` and optional responses.
pub fn dataset_csv(xs: &[DenseTensor], y: Option<&[f64]>) -> Vec<u8> {
    let q = xs.first().map_or(0, DenseTensor::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = Vec::with_capacity(q + 1);
    if y.is_some() {
        header.push("y".into());
    }
    header.extend((1..=q).map(|k| format!("x_{k}")));
    w.write_record(&header).expect("in-memory write");
    for (t, x) in xs.iter().enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(q + 1);
        if let Some(y) = y {
            row.push(y[t].to_string());
        }
        row.extend(x.data().iter().map(f64::to_string));
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub fn write_dataset(path: &Path, xs: &[DenseTensor], y: Option<&[f64]>) -> CliResult<()> {
    std::fs::write(path, dataset_csv(xs, y)).map_err(|e| CliError::io(path, e))
}

/// `(year, month)` of a date.
pub type Month = (i32, u32);

fn month_of(d: NaiveDate) -> Month {
    (d.year(), d.month())
}

/// `m` shifted back by `k` calendar months.
fn months_before((y, m): Month, k: u32) -> Month {
    let idx = y as i64 * 12 + (m as i64 - 1) - k as i64;
    (idx.div_euclid(12) as i32, (idx.rem_euclid(12) + 1) as u32)
}

fn parse_date(field: &str, row: usize, path: &Path) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d").map_err(|e| {
        CliError::ingestion(format!(
            "{}: row {row}: {field:?} is not an ISO date: {e}",
            path.display()
        ))
    })
}

/// Monthly responses with daily covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedFrequencyFrame {
    /// `(date, value)` in increasing month order, one row per month.
    pub monthly: Vec<(NaiveDate, f64)>,
    /// Daily rows of every month, sorted by date, values in [`REGRESSORS`] order.
    days: BTreeMap<Month, Vec<(NaiveDate, [f64; 7])>>,
}

impl MixedFrequencyFrame {
    pub fn new(
        monthly: Vec<(NaiveDate, f64)>,
        daily: Vec<(NaiveDate, [f64; 7])>,
    ) -> CliResult<Self> {
        for pair in monthly.windows(2) {
            if month_of(pair[1].0) <= month_of(pair[0].0) {
                return Err(CliError::ingestion(format!(
                    "monthly rows must be in increasing month order: {} follows {}",
                    pair[1].0, pair[0].0
                )));
            }
        }
        let mut days: BTreeMap<Month, Vec<(NaiveDate, [f64; 7])>> = BTreeMap::new();
        for (date, vals) in daily {
            days.entry(month_of(date)).or_default().push((date, vals));
        }
        for rows in days.values_mut() {
            rows.sort_by_key(|r| r.0);
            if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(CliError::ingestion(format!(
                    "duplicate daily row for {}",
                    w[0].0
                )));
            }
        }
        Ok(Self { monthly, days })
    }

    /// Reads `date,value` monthly rows and `date,GV,BV,ER,IR,VI,TB,BD` daily
    /// rows. The daily columns may come in any order.
    pub fn read(monthly: &Path, daily: &Path) -> CliResult<Self> {
        let mut rdr = reader(monthly)?;
        let headers = rdr.headers().map_err(|e| csv_error(monthly, e))?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["date", "value"] {
            return Err(CliError::ingestion(format!(
                "{}: expected columns date,value, found {:?}",
                monthly.display(),
                headers
            )));
        }
        let mut m = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(monthly, e))?;
            m.push((
                parse_date(&rec[0], i + 1, monthly)?,
                parse_value(&rec[1], i + 1, "value")?,
            ));
        }

        let mut rdr = reader(daily)?;
        let headers = rdr.headers().map_err(|e| csv_error(daily, e))?.clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        let mut sorted_names = names.get(1..).unwrap_or(&[]).to_vec();
        sorted_names.sort_unstable();
        let mut expected = REGRESSORS.to_vec();
        expected.sort_unstable();
        if names.first() != Some(&"date") || sorted_names != expected {
            return Err(CliError::ingestion(format!(
                "{}: expected columns date and exactly {}, found {:?}",
                daily.display(),
                REGRESSORS.join(","),
                names
            )));
        }
        let column: Vec<usize> = REGRESSORS
            .iter()
            .map(|r| names.iter().position(|n| n == r).unwrap_or(0))
            .collect();
        let mut d = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(daily, e))?;
            let date = parse_date(&rec[0], i + 1, daily)?;
            let mut vals = [0.0; 7];
            for (k, &c) in column.iter().enumerate() {
                vals[k] = parse_value(&rec[c], i + 1, REGRESSORS[k])?;
            }
            d.push((date, vals));
        }
        Self::new(m, d)
    }

    pub fn len(&self) -> usize {
        self.monthly.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monthly.is_empty()
    }

    /// The 7×22 block of month `m`: the last 22 trading days, or all of them
    /// preceded by copies of the first day when there are fewer.
    fn month_block(&self, m: Month) -> Option<Vec<[f64; 7]>> {
        let rows = self.days.get(&m)?;
        let first = rows.first()?.1;
        let kept = &rows[rows.len().saturating_sub(DAYS_PER_MONTH)..];
        let pad = DAYS_PER_MONTH - kept.len();
        Some(
            std::iter::repeat_n(first, pad)
                .chain(kept.iter().map(|r| r.1))
                .collect(),
        )
    }

    /// Covariate tensor of month index `t`: entry `(l, k, d)` is regressor `k`
    /// on day `d` (oldest first) of the month `l + 1` months before `t`.
    pub fn tensor(&self, t: usize) -> CliResult<DenseTensor> {
        let (date, _) = *self.monthly.get(t).ok_or_else(|| {
            CliError::ingestion(format!(
                "month index {t} is out of range (0..{})",
                self.len()
            ))
        })?;
        let target = month_of(date);
        let mut blocks = Vec::with_capacity(LAGS);
        let mut missing = Vec::new();
        for l in 0..LAGS {
            let m = months_before(target, l as u32 + 1);
            match self.month_block(m) {
                Some(b) => blocks.push(b),
                None => missing.push(format!("{}-{:02}", m.0, m.1)),
            }
        }
        if !missing.is_empty() {
            return Err(CliError::ingestion(format!(
                "month {}-{:02} (index {t}) lacks daily data for {}",
                target.0,
                target.1,
                missing.join(", ")
            )));
        }
        Ok(DenseTensor::from_fn(&MIXED_SHAPE, |idx| {
            blocks[idx[0]][idx[2]][idx[1]]
        })?)
    }

    /// Tensors and responses for month indices `start..end`.
    pub fn dataset(&self, start: usize, end: usize) -> CliResult<Dataset> {
        if start >= end || end > self.len() {
            return Err(CliError::config(format!(
                "month range {start}..{end} is empty or exceeds the {} monthly rows",
                self.len()
            )));
        }
        let xs = (start..end)
            .map(|t| self.tensor(t))
            .collect::<CliResult<Vec<_>>>()?;
        let y = self.monthly[start..end].iter().map(|r| r.1).collect();
        Ok(Dataset { xs, y: Some(y) })
    }
}
