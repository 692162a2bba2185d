//! Versioned file formats.
//!
//! Curves and bands are long-format CSV whose first line is a
//! `# schema=<tag>` comment; models and reports are JSON objects of the form
//! `{"schema": <tag>, "data": ...}`. Loading checks the tag.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{BandKind, IntervalBand};
use crate::error::{Error, Result};
use crate::forecast::{ForecastDensity, VarModel};
use crate::gaev::GaevDims;
use crate::ingest::FunctionalSeries;
use crate::metrics::DivergenceReport;

pub const SERIES_SCHEMA: &str = "extremecast.functional_series/v1";
pub const BAND_SCHEMA: &str = "extremecast.interval_band/v1";
pub const CURVE_SCHEMA: &str = "extremecast.curve/v1";

/// Types stored as tagged JSON.
pub trait JsonSchema: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
}

impl JsonSchema for ForecastDensity {
    const SCHEMA: &'static str = "extremecast.forecast_density/v1";
}

impl JsonSchema for DivergenceReport {
    const SCHEMA: &'static str = "extremecast.divergence_report/v1";
}

impl JsonSchema for VarModel {
    const SCHEMA: &'static str = "extremecast.var_model/v1";
}

impl JsonSchema for GaevDims {
    const SCHEMA: &'static str = "extremecast.gaev_dims/v1";
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema: &'a str,
    data: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    schema: String,
    data: serde_json::Value,
}

pub fn to_json_string<T: JsonSchema>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&EnvelopeOut {
        schema: T::SCHEMA,
        data: value,
    })?)
}

pub fn from_json_str<T: JsonSchema>(text: &str) -> Result<T> {
    let env: EnvelopeIn = serde_json::from_str(text)?;
    if env.schema != T::SCHEMA {
        return Err(Error::Schema {
            expected: T::SCHEMA.into(),
            found: env.schema,
        });
    }
    Ok(serde_json::from_value(env.data)?)
}

pub fn save_json<T: JsonSchema>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: JsonSchema>(path: impl AsRef<Path>) -> Result<T> {
    from_json_str(&std::fs::read_to_string(path)?)
}

fn schema_line(tag: &str, extra: &[(&str, String)]) -> String {
    let mut line = format!("# schema={tag}");
    for (k, v) in extra {
        line.push_str(&format!(" {k}={v}"));
    }
    line
}

/// Read the `# schema=...` line and return its `key=value` pairs.
fn read_schema_line<R: BufRead>(reader: &mut R, expected: &str) -> Result<Vec<(String, String)>> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let body = first
        .trim_end()
        .strip_prefix('#')
        .map(str::trim)
        .unwrap_or_default();
    let pairs: Vec<(String, String)> = body
        .split_whitespace()
        .filter_map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let found = pairs
        .iter()
        .find(|(k, _)| k == "schema")
        .map(|(_, v)| v.clone())
        .unwrap_or_else(|| first.trim_end().to_string());
    if found != expected {
        return Err(Error::Schema {
            expected: expected.into(),
            found,
        });
    }
    Ok(pairs)
}

fn meta<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Schema {
            expected: format!("`{key}` in the schema line"),
            found: "nothing".into(),
        })
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::arg(format!("cannot parse {what} from `{s}`")))
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    series: i32,
    tau_index: usize,
    tau: f64,
    value: f64,
    imputed: u8,
}

pub fn write_series<W: Write>(out: W, s: &FunctionalSeries) -> Result<()> {
    let mut out = out;
    writeln!(out, "{}", schema_line(SERIES_SCHEMA, &[]))?;
    let mut w = csv::Writer::from_writer(out);
    for (t, year) in s.years.iter().enumerate() {
        for (j, tau) in s.grid.iter().enumerate() {
            w.serialize(SeriesRow {
                series: *year,
                tau_index: j,
                tau: *tau,
                value: s.values[t][j],
                imputed: u8::from(s.imputed_mask[t][j]),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_series<R: BufRead>(mut input: R) -> Result<FunctionalSeries> {
    read_schema_line(&mut input, SERIES_SCHEMA)?;
    let mut rdr = csv::Reader::from_reader(input);
    let mut years: Vec<i32> = Vec::new();
    let mut grid: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut mask: Vec<Vec<bool>> = Vec::new();
    for row in rdr.deserialize() {
        let row: SeriesRow = row?;
        if years.last() != Some(&row.series) {
            years.push(row.series);
            values.push(Vec::new());
            mask.push(Vec::new());
        }
        let t = years.len() - 1;
        if row.tau_index != values[t].len() {
            return Err(Error::arg(format!(
                "series {} jumps to tau index {}",
                row.series, row.tau_index
            )));
        }
        if t == 0 {
            grid.push(row.tau);
        } else if grid.get(row.tau_index) != Some(&row.tau) {
            return Err(Error::arg(format!(
                "series {} has a grid different from the first series",
                row.series
            )));
        }
        values[t].push(row.value);
        mask[t].push(row.imputed != 0);
    }
    FunctionalSeries::with_mask(years, grid, values, mask)
}

pub fn save_series(path: impl AsRef<Path>, s: &FunctionalSeries) -> Result<()> {
    write_series(BufWriter::new(File::create(path)?), s)
}

pub fn load_series(path: impl AsRef<Path>) -> Result<FunctionalSeries> {
    read_series(BufReader::new(File::open(path)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    series: String,
    tau_index: usize,
    tau: f64,
    value: f64,
}

pub fn write_band<W: Write>(out: W, band: &IntervalBand) -> Result<()> {
    let mut out = out;
    let extra = [
        ("kind", band.kind.as_str().to_string()),
        ("level", band.level.to_string()),
        ("replicates", band.replicates.to_string()),
    ];
    writeln!(out, "{}", schema_line(BAND_SCHEMA, &extra))?;
    let mut w = csv::Writer::from_writer(out);
    for (name, vals) in [("lower", &band.lower), ("upper", &band.upper)] {
        for (j, (tau, v)) in band.grid.iter().zip(vals.iter()).enumerate() {
            w.serialize(CurveRow {
                series: name.into(),
                tau_index: j,
                tau: *tau,
                value: *v,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_band<R: BufRead>(mut input: R) -> Result<IntervalBand> {
    let pairs = read_schema_line(&mut input, BAND_SCHEMA)?;
    let kind = match meta(&pairs, "kind")? {
        "pointwise" => BandKind::Pointwise,
        "simultaneous" => BandKind::Simultaneous,
        other => return Err(Error::arg(format!("unknown band kind `{other}`"))),
    };
    let level: f64 = parse_num(meta(&pairs, "level")?, "level")?;
    let replicates: usize = parse_num(meta(&pairs, "replicates")?, "replicates")?;
    let mut rdr = csv::Reader::from_reader(input);
    let (mut grid, mut lower, mut upper) = (Vec::new(), Vec::new(), Vec::new());
    for row in rdr.deserialize() {
        let row: CurveRow = row?;
        match row.series.as_str() {
            "lower" => {
                grid.push(row.tau);
                lower.push(row.value);
            }
            "upper" => upper.push(row.value),
            other => return Err(Error::arg(format!("unexpected band series `{other}`"))),
        }
    }
    if lower.len() != upper.len() {
        return Err(Error::arg("band has unequal lower and upper lengths"));
    }
    Ok(IntervalBand {
        grid,
        lower,
        upper,
        level,
        kind,
        replicates,
    })
}

pub fn save_band(path: impl AsRef<Path>, band: &IntervalBand) -> Result<()> {
    write_band(BufWriter::new(File::create(path)?), band)
}

pub fn load_band(path: impl AsRef<Path>) -> Result<IntervalBand> {
    read_band(BufReader::new(File::open(path)?))
}

/// Named curves on a shared grid, long format.
pub fn write_curves<W: Write>(out: W, grid: &[f64], curves: &[(&str, &[f64])]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{}", schema_line(CURVE_SCHEMA, &[]))?;
    let mut w = csv::Writer::from_writer(out);
    for (name, vals) in curves {
        if vals.len() != grid.len() {
            return Err(Error::arg(format!("curve `{name}` does not match the grid")));
        }
        for (j, (tau, v)) in grid.iter().zip(vals.iter()).enumerate() {
            w.serialize(CurveRow {
                series: (*name).to_string(),
                tau_index: j,
                tau: *tau,
                value: *v,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A grid and labelled curves on it.
pub type NamedCurves = (Vec<f64>, Vec<(String, Vec<f64>)>);

/// Curves in file order with their grid.
pub fn read_curves<R: BufRead>(mut input: R) -> Result<NamedCurves> {
    read_schema_line(&mut input, CURVE_SCHEMA)?;
    let mut rdr = csv::Reader::from_reader(input);
    let mut grid = Vec::new();
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    for row in rdr.deserialize() {
        let row: CurveRow = row?;
        if curves.last().map(|c| &c.0) != Some(&row.series) {
            curves.push((row.series.clone(), Vec::new()));
        }
        if curves.len() == 1 {
            grid.push(row.tau);
        }
        curves.last_mut().expect("pushed above").1.push(row.value);
    }
    Ok((grid, curves))
}

pub fn save_curves(path: impl AsRef<Path>, grid: &[f64], curves: &[(&str, &[f64])]) -> Result<()> {
    write_curves(BufWriter::new(File::create(path)?), grid, curves)
}

pub fn load_curves(path: impl AsRef<Path>) -> Result<NamedCurves> {
    read_curves(BufReader::new(File::open(path)?))
}
