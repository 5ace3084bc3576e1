use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeDelta, Utc};

use super::{Catalog, Event, Region};
use crate::error::{EtasError, Result};

pub const CATALOG_SCHEMA: &str = "etas-catalog v1";

const NANOS_PER_DAY: f64 = 86_400e9;

/// Column names for the required fields. Matching is case-insensitive.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub time: String,
    pub latitude: String,
    pub longitude: String,
    pub depth: String,
    pub mag: String,
}

impl Default for ColumnMap {
    /// ComCat / ANSS CSV names.
    fn default() -> Self {
        ColumnMap {
            time: "time".into(),
            latitude: "latitude".into(),
            longitude: "longitude".into(),
            depth: "depth".into(),
            mag: "mag".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub catalog: Catalog,
    /// Rows dropped because a required field was empty.
    pub dropped_missing: usize,
    /// Rows dropped as exact duplicates of an earlier row.
    pub duplicates: usize,
}

#[derive(Default)]
struct Metadata {
    origin: Option<Option<DateTime<Utc>>>,
    lon_min: Option<f64>,
    lon_max: Option<f64>,
    lat_min: Option<f64>,
    lat_max: Option<f64>,
    t_start: Option<f64>,
    duration: Option<f64>,
    m0: Option<f64>,
}

impl Metadata {
    fn parse(text: &str) -> Result<Option<Metadata>> {
        let Some(line) = text.lines().take_while(|l| l.starts_with('#')).find(|l| l.contains(CATALOG_SCHEMA)) else {
            return Ok(None);
        };
        let mut md = Metadata::default();
        for token in line.split_whitespace() {
            let Some((key, value)) = token.split_once('=') else {
                continue;
            };
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|e| EtasError::Format(format!("metadata {key}={value}: {e}")))
            };
            match key {
                "origin" if value == "none" => md.origin = Some(None),
                "origin" => md.origin = Some(Some(parse_time(value).ok_or_else(|| {
                    EtasError::Format(format!("metadata origin '{value}' is not a timestamp"))
                })?)),
                "lon_min" => md.lon_min = Some(num()?),
                "lon_max" => md.lon_max = Some(num()?),
                "lat_min" => md.lat_min = Some(num()?),
                "lat_max" => md.lat_max = Some(num()?),
                "t_start" => md.t_start = Some(num()?),
                "duration" => md.duration = Some(num()?),
                "m0" => md.m0 = Some(num()?),
                _ => {}
            }
        }
        Ok(Some(md))
    }
}

/// Parses an ISO-8601 UTC timestamp, with or without zone suffix.
pub(crate) fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.fZ"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(n.and_utc());
        }
    }
    None
}

fn days_between(origin: DateTime<Utc>, t: DateTime<Utc>) -> f64 {
    let delta = t - origin;
    match delta.num_nanoseconds() {
        Some(ns) => ns as f64 / NANOS_PER_DAY,
        None => delta.num_milliseconds() as f64 / 86_400e3,
    }
}

struct Row {
    line: u64,
    time: Option<DateTime<Utc>>,
    t_days: Option<f64>,
    lat: f64,
    lon: f64,
    depth: f64,
    mag: f64,
    is_target: Option<bool>,
}

/// Reads a delimited catalog with a header row.
///
/// Times become fractional days since the earliest retained event unless the
/// input already carries a `t_days` column (the canonical format written by
/// [`write_catalog`]), in which case those values and the window stored in the
/// schema comment are restored exactly.
pub fn parse_catalog<R: Read>(mut source: R, columns: &ColumnMap) -> Result<ParseOutcome> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let metadata = Metadata::parse(&text)?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| EtasError::Format(format!("unreadable header: {e}")))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let require = |name: &str| find(name).ok_or_else(|| EtasError::Format(format!("missing column '{name}'")));
    let i_time = require(&columns.time)?;
    let i_lat = require(&columns.latitude)?;
    let i_lon = require(&columns.longitude)?;
    let i_depth = require(&columns.depth)?;
    let i_mag = require(&columns.mag)?;
    let i_tdays = find("t_days");
    let i_target = find("is_target");

    let mut rows = Vec::new();
    let mut dropped_missing = 0;
    let mut duplicates = 0;
    let mut seen = HashSet::new();

    for record in reader.records() {
        let record = record.map_err(|e| EtasError::Format(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let required = [i_time, i_lat, i_lon, i_depth, i_mag];
        if required.iter().any(|&i| field(i).is_empty()) {
            dropped_missing += 1;
            continue;
        }
        let number = |i: usize, what: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| EtasError::Row {
                line,
                message: format!("unparseable {what} '{}'", field(i)),
            })
        };
        let t_days = match i_tdays.map(field) {
            Some(s) if !s.is_empty() => Some(number(i_tdays.unwrap(), "t_days")?),
            _ => None,
        };
        let time = match parse_time(field(i_time)) {
            Some(t) => Some(t),
            None if t_days.is_some() => None,
            None => {
                return Err(EtasError::Row {
                    line,
                    message: format!("unparseable timestamp '{}'", field(i_time)),
                })
            }
        };
        let row = Row {
            line,
            time,
            t_days,
            lat: number(i_lat, "latitude")?,
            lon: number(i_lon, "longitude")?,
            depth: number(i_depth, "depth")?,
            mag: number(i_mag, "magnitude")?,
            is_target: i_target.map(|i| matches!(field(i), "1" | "true" | "True")),
        };
        let key = (
            row.time.and_then(|t| t.timestamp_nanos_opt()),
            row.t_days.map(f64::to_bits),
            row.lat.to_bits(),
            row.lon.to_bits(),
            row.depth.to_bits(),
            row.mag.to_bits(),
        );
        if !seen.insert(key) {
            duplicates += 1;
            continue;
        }
        rows.push(row);
    }

    let origin = match &metadata {
        Some(Metadata { origin: Some(o), .. }) => *o,
        _ => rows.iter().filter_map(|r| r.time).min(),
    };
    let mut events = Vec::with_capacity(rows.len());
    for r in &rows {
        let t = match (r.t_days, r.time, origin) {
            (Some(t), _, _) => t,
            (None, Some(time), Some(o)) => days_between(o, time),
            _ => {
                return Err(EtasError::Row {
                    line: r.line,
                    message: "no usable time".into(),
                })
            }
        };
        events.push(Event {
            t,
            lon: r.lon,
            lat: r.lat,
            depth: r.depth,
            mag: r.mag,
            is_target: r.is_target.unwrap_or(true),
        });
    }

    let catalog = match metadata {
        Some(md) if md.duration.is_some() => {
            let region = Region {
                lon_min: md.lon_min.unwrap_or(Region::WORLD.lon_min),
                lon_max: md.lon_max.unwrap_or(Region::WORLD.lon_max),
                lat_min: md.lat_min.unwrap_or(Region::WORLD.lat_min),
                lat_max: md.lat_max.unwrap_or(Region::WORLD.lat_max),
            };
            Catalog::from_parts(
                events,
                region,
                md.t_start.unwrap_or(0.0),
                md.duration.unwrap_or(0.0),
                md.m0.unwrap_or(0.0),
                origin,
            )
        }
        _ => Catalog::raw(events, origin)?,
    };
    if dropped_missing > 0 {
        log::info!("dropped {dropped_missing} rows with missing fields");
    }
    Ok(ParseOutcome {
        catalog,
        dropped_missing,
        duplicates,
    })
}

/// Writes the canonical catalog CSV: a schema comment with the window, then
/// `time,latitude,longitude,depth,mag,t_days,is_target`.
pub fn write_catalog<W: Write>(cat: &Catalog, mut out: W) -> Result<()> {
    let r = cat.region();
    let origin = match cat.origin() {
        Some(o) => o.to_rfc3339_opts(SecondsFormat::Nanos, true),
        None => "none".to_string(),
    };
    writeln!(
        out,
        "# {CATALOG_SCHEMA} origin={origin} lon_min={} lon_max={} lat_min={} lat_max={} t_start={} duration={} m0={}",
        r.lon_min,
        r.lon_max,
        r.lat_min,
        r.lat_max,
        cat.t_start(),
        cat.duration(),
        cat.m0()
    )?;
    writeln!(out, "time,latitude,longitude,depth,mag,t_days,is_target")?;
    let base = cat.origin().unwrap_or(DateTime::UNIX_EPOCH);
    for e in cat.events() {
        let ns = (e.t * NANOS_PER_DAY).round();
        let stamp = if ns.abs() < 9.0e18 {
            (base + TimeDelta::nanoseconds(ns as i64)).to_rfc3339_opts(SecondsFormat::Millis, true)
        } else {
            String::new()
        };
        writeln!(
            out,
            "{stamp},{},{},{},{},{},{}",
            e.lat,
            e.lon,
            e.depth,
            e.mag,
            e.t,
            if e.is_target { 1 } else { 0 }
        )?;
    }
    Ok(())
}
