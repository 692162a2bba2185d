//! Daily-maximum records: parsing, slicing into annual curves and gap
//! imputation.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slots per annual curve; day-of-year in a leap year.
pub const DAYS_PER_CURVE: usize = 366;
/// 1-based slot of February 29.
const FEB29_SLOT: usize = 60;

/// `T` curves observed on a common grid of `J` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub years: Vec<i32>,
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub imputed_mask: Vec<Vec<bool>>,
}

impl FunctionalSeries {
    /// Series without imputed cells. Checks shapes and finiteness.
    pub fn new(years: Vec<i32>, grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let mask = values.iter().map(|r| vec![false; r.len()]).collect();
        Self::with_mask(years, grid, values, mask)
    }

    pub fn with_mask(
        years: Vec<i32>,
        grid: Vec<f64>,
        values: Vec<Vec<f64>>,
        imputed_mask: Vec<Vec<bool>>,
    ) -> Result<Self> {
        if years.len() != values.len() || years.len() != imputed_mask.len() {
            return Err(Error::arg(format!(
                "{} year labels for {} curves and {} mask rows",
                years.len(),
                values.len(),
                imputed_mask.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::arg("curve grid must be strictly increasing"));
        }
        for (t, (row, mask)) in values.iter().zip(&imputed_mask).enumerate() {
            if row.len() != grid.len() || mask.len() != grid.len() {
                return Err(Error::arg(format!(
                    "curve {t} has {} values for a grid of {} points",
                    row.len(),
                    grid.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::arg(format!("curve {t} has a non-finite value at {j}")));
            }
        }
        Ok(Self {
            years,
            grid,
            values,
            imputed_mask,
        })
    }

    /// Number of curves `T`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Points per curve `J`.
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn curve(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    /// The first `n` curves.
    pub fn head(&self, n: usize) -> FunctionalSeries {
        let n = n.min(self.len());
        FunctionalSeries {
            years: self.years[..n].to_vec(),
            grid: self.grid.clone(),
            values: self.values[..n].to_vec(),
            imputed_mask: self.imputed_mask[..n].to_vec(),
        }
    }
}

/// One dated daily maximum, in degrees Celsius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub date: NaiveDate,
    pub tmax: f64,
}

pub fn parse_csv(path: impl AsRef<Path>) -> Result<Vec<Observation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_reader(std::io::BufReader::new(file), path)
}

/// Parse `date,tmax` records. `origin` only labels error messages.
pub fn parse_reader<R: Read>(reader: R, origin: &Path) -> Result<Vec<Observation>> {
    let perr = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "tmax" {
        return Err(perr(
            1,
            format!("expected header `date,tmax`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut by_date = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(perr(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| perr(line, format!("bad date `{}`: {e}", &rec[0])))?;
        let tmax: f64 = rec[1]
            .parse()
            .map_err(|e| perr(line, format!("bad temperature `{}`: {e}", &rec[1])))?;
        if !tmax.is_finite() {
            return Err(perr(line, format!("non-finite temperature `{}`", &rec[1])));
        }
        if by_date.insert(date, tmax).is_some() {
            return Err(Error::DuplicateDate(date));
        }
    }
    Ok(by_date
        .into_iter()
        .map(|(date, tmax)| Observation { date, tmax })
        .collect())
}

pub fn write_observations_csv(path: impl AsRef<Path>, obs: &[Observation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "tmax"])?;
    for o in obs {
        w.write_record([o.date.format("%Y-%m-%d").to_string(), format!("{:.1}", o.tmax)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceOptions {
    /// Longest run of missing days that is interpolated.
    pub max_gap: usize,
    /// Minimum fraction of calendar days observed for a year to be kept.
    pub min_coverage: f64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self {
            max_gap: 7,
            min_coverage: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedYear {
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sliced {
    pub series: FunctionalSeries,
    pub dropped: Vec<DroppedYear>,
}

fn is_leap(year: i32) -> bool {
    NaiveDate::from_ymd_opt(year, 2, 29).is_some()
}

/// 0-based curve slot of a date on the 366-point grid.
fn slot_of(date: NaiveDate) -> usize {
    let doy = date.ordinal() as usize; // 1-based
    if !is_leap(date.year()) && doy >= FEB29_SLOT {
        doy // shift past the empty Feb 29 slot
    } else {
        doy - 1
    }
}

/// Slice calendar-year records onto the 366-day grid with the default gap
/// policy.
pub fn slice_annual(obs: &[Observation]) -> Result<Sliced> {
    slice_annual_with(obs, &SliceOptions::default())
}

pub fn slice_annual_with(obs: &[Observation], opts: &SliceOptions) -> Result<Sliced> {
    let mut by_year: BTreeMap<i32, Vec<Option<f64>>> = BTreeMap::new();
    for o in obs {
        let row = by_year
            .entry(o.date.year())
            .or_insert_with(|| vec![None; DAYS_PER_CURVE]);
        row[slot_of(o.date)] = Some(o.tmax);
    }

    let mut years = Vec::new();
    let mut values = Vec::new();
    let mut masks = Vec::new();
    let mut dropped = Vec::new();
    for (year, row) in by_year {
        let leap = is_leap(year);
        let days = if leap { 366 } else { 365 };
        let present = row.iter().filter(|v| v.is_some()).count();
        let coverage = present as f64 / days as f64;
        if coverage < opts.min_coverage {
            log::warn!("dropping {year}: only {present} of {days} days observed");
            dropped.push(DroppedYear {
                year,
                reason: format!("coverage {coverage:.3} below {}", opts.min_coverage),
            });
            continue;
        }
        match fill_year(&row, leap, opts.max_gap) {
            Ok((v, m)) => {
                years.push(year);
                values.push(v);
                masks.push(m);
            }
            Err(reason) => {
                log::warn!("dropping {year}: {reason}");
                dropped.push(DroppedYear { year, reason });
            }
        }
    }
    if years.is_empty() {
        return Err(Error::arg("no usable years in the record"));
    }
    let grid = (1..=DAYS_PER_CURVE).map(|d| d as f64).collect();
    let series = FunctionalSeries::with_mask(years, grid, values, masks)?;
    Ok(Sliced { series, dropped })
}

/// Impute one year's missing slots. Returns values and imputed flags, or a
/// reason for rejecting the year.
fn fill_year(
    row: &[Option<f64>],
    leap: bool,
    max_gap: usize,
) -> std::result::Result<(Vec<f64>, Vec<bool>), String> {
    let n = row.len();
    let feb29 = FEB29_SLOT - 1;
    let mut values = vec![0.0; n];
    let mut mask = vec![false; n];
    let mut j = 0;
    while j < n {
        if let Some(v) = row[j] {
            values[j] = v;
            j += 1;
            continue;
        }
        let start = j;
        while j < n && row[j].is_none() {
            j += 1;
        }
        let end = j; // exclusive
        // the empty Feb 29 slot of a common year is not a missing day
        let missing_days = (start..end).filter(|&s| leap || s != feb29).count();
        if missing_days > max_gap {
            return Err(format!(
                "gap of {missing_days} consecutive days starting at slot {}",
                start + 1
            ));
        }
        let before = start.checked_sub(1).and_then(|s| row[s]);
        let after = row.get(end).copied().flatten();
        for s in start..end {
            mask[s] = true;
            values[s] = match (before, after) {
                (Some(a), Some(b)) if end - start == 1 => (a + b) / 2.0,
                (Some(a), Some(b)) => {
                    let w = (s + 1 - start) as f64 / (end - start + 1) as f64;
                    a + (b - a) * w
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => return Err("no observations".to_string()),
            };
        }
    }
    Ok((values, mask))
}
