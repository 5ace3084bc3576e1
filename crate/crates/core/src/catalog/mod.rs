//! Earthquake catalogs: events, study regions and windowing.
//!
//! Event times are fractional days measured from the catalog origin (the
//! earliest event at ingestion time). A windowed catalog carries the target
//! window `[t_start, t_start + duration)`; events before `t_start` are burn-in
//! history that triggers but is not itself scored.

mod fetch;
mod io;

pub use fetch::{fetch_comcat, ComcatQuery, FetchOptions, FetchSource, Fetched, HttpTransport, UreqTransport};
pub use io::{parse_catalog, write_catalog, ColumnMap, ParseOutcome};

use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{EtasError, Result};

/// One earthquake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Days since the catalog origin.
    pub t: f64,
    /// Degrees east.
    pub lon: f64,
    /// Degrees north.
    pub lat: f64,
    /// Kilometres.
    pub depth: f64,
    pub mag: f64,
    /// Whether the event lies in the target window.
    pub is_target: bool,
}

impl Event {
    pub fn new(t: f64, lon: f64, lat: f64, depth: f64, mag: f64) -> Self {
        Event {
            t,
            lon,
            lat,
            depth,
            mag,
            is_target: true,
        }
    }
}

/// Rectangular lon/lat study region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl Region {
    pub const WORLD: Region = Region {
        lon_min: -180.0,
        lon_max: 180.0,
        lat_min: -90.0,
        lat_max: 90.0,
    };

    /// Nepal and surroundings, 27-30 N and 79-88 E.
    pub const NEPAL: Region = Region {
        lon_min: 79.0,
        lon_max: 88.0,
        lat_min: 27.0,
        lat_max: 30.0,
    };

    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64) -> Result<Self> {
        let r = Region {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lon_min, self.lon_max, self.lat_min, self.lat_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.lon_min >= self.lon_max || self.lat_min >= self.lat_max {
            return Err(EtasError::Param(format!("invalid region {self:?}")));
        }
        Ok(())
    }

    /// Closed-rectangle membership.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon <= self.lon_max && lat >= self.lat_min && lat <= self.lat_max
    }

    pub fn width(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    pub fn height(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    /// Area in squared degrees.
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

impl std::str::FromStr for Region {
    type Err = EtasError;

    /// Parses `lon_min,lon_max,lat_min,lat_max`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| EtasError::Param(format!("region '{s}': {e}")))?;
        if parts.len() != 4 {
            return Err(EtasError::Param(format!(
                "region '{s}' needs lon_min,lon_max,lat_min,lat_max"
            )));
        }
        Region::new(parts[0], parts[1], parts[2], parts[3])
    }
}

/// Ordered event sequence with its observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    events: Vec<Event>,
    region: Region,
    t_start: f64,
    duration: f64,
    m0: f64,
    origin: Option<DateTime<Utc>>,
}

/// Stable order by time, larger magnitude first on ties, then input order.
pub(crate) fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .unwrap_or(Ordering::Equal)
            .then(b.mag.partial_cmp(&a.mag).unwrap_or(Ordering::Equal))
    });
}

impl Catalog {
    /// Builds a windowed catalog, checking every invariant.
    ///
    /// Events are sorted and `is_target` is recomputed from `t_start`.
    pub fn new(mut events: Vec<Event>, region: Region, t_start: f64, duration: f64, m0: f64) -> Result<Self> {
        region.validate()?;
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(EtasError::Param(format!("duration must be positive, got {duration}")));
        }
        if !(t_start >= 0.0 && t_start.is_finite()) {
            return Err(EtasError::Param(format!("t_start must be non-negative, got {t_start}")));
        }
        if !m0.is_finite() {
            return Err(EtasError::Param("m0 must be finite".into()));
        }
        let t_end = t_start + duration;
        for (i, e) in events.iter_mut().enumerate() {
            check_event(i, e)?;
            if e.mag < m0 {
                return Err(EtasError::Param(format!("event {i}: magnitude {} below m0 = {m0}", e.mag)));
            }
            if !region.contains(e.lon, e.lat) {
                return Err(EtasError::Param(format!("event {i}: ({}, {}) outside region", e.lon, e.lat)));
            }
            if e.t >= t_end {
                return Err(EtasError::Param(format!("event {i}: t = {} at or after window end {t_end}", e.t)));
            }
            e.is_target = e.t >= t_start;
        }
        sort_events(&mut events);
        Ok(Catalog {
            events,
            region,
            t_start,
            duration,
            m0,
            origin: None,
        })
    }

    /// Unwindowed catalog as produced by ingestion: world region, no burn-in,
    /// every event a target, `m0` set to the smallest magnitude.
    pub(crate) fn raw(mut events: Vec<Event>, origin: Option<DateTime<Utc>>) -> Result<Self> {
        for (i, e) in events.iter_mut().enumerate() {
            check_event(i, e)?;
            e.is_target = true;
        }
        sort_events(&mut events);
        let m0 = events.iter().map(|e| e.mag).fold(f64::INFINITY, f64::min);
        let duration = events.last().map(|e| e.t).unwrap_or(0.0);
        Ok(Catalog {
            events,
            region: Region::WORLD,
            t_start: 0.0,
            duration,
            m0: if m0.is_finite() { m0 } else { 0.0 },
            origin,
        })
    }

    /// Restores a catalog exactly as serialized; only ordering is enforced.
    pub(crate) fn from_parts(
        mut events: Vec<Event>,
        region: Region,
        t_start: f64,
        duration: f64,
        m0: f64,
        origin: Option<DateTime<Utc>>,
    ) -> Self {
        sort_events(&mut events);
        Catalog {
            events,
            region,
            t_start,
            duration,
            m0,
            origin,
        }
    }

    pub fn with_origin(mut self, origin: Option<DateTime<Utc>>) -> Self {
        self.origin = origin;
        self
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    /// Length of the target window.
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn origin(&self) -> Option<DateTime<Utc>> {
        self.origin
    }

    pub fn n_target(&self) -> usize {
        self.events.iter().filter(|e| e.is_target).count()
    }

    pub fn targets(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.is_target)
    }

    /// Replaces event times (same order) and the window, keeping everything else.
    pub(crate) fn retimed(&self, times: &[f64], t_start: f64, duration: f64) -> Catalog {
        let events = self
            .events
            .iter()
            .zip(times)
            .map(|(e, &t)| Event { t, ..*e })
            .collect();
        Catalog {
            events,
            region: self.region,
            t_start,
            duration,
            m0: self.m0,
            origin: self.origin,
        }
    }

    /// Keeps events with `mag >= m0` inside `region` and before
    /// `t_start + duration`; marks targets and re-sorts.
    ///
    /// An empty result is returned with a logged warning rather than an error.
    pub fn filter(&self, region: Region, m0: f64, t_start: f64, duration: f64) -> Result<Catalog> {
        let t_end = t_start + duration;
        let events: Vec<Event> = self
            .events
            .iter()
            .filter(|e| e.mag >= m0 && region.contains(e.lon, e.lat) && e.t >= 0.0 && e.t < t_end)
            .copied()
            .collect();
        if events.is_empty() {
            log::warn!("catalog filter retained no events");
        }
        Ok(Catalog::new(events, region, t_start, duration, m0)?.with_origin(self.origin))
    }
}

fn check_event(i: usize, e: &Event) -> Result<()> {
    if !(e.t.is_finite() && e.t >= 0.0) {
        return Err(EtasError::Param(format!("event {i}: time {} must be finite and non-negative", e.t)));
    }
    if !(e.depth >= 0.0) {
        return Err(EtasError::Param(format!("event {i}: depth {} must be non-negative", e.depth)));
    }
    if !(e.mag.is_finite() && e.lon.is_finite() && e.lat.is_finite()) {
        return Err(EtasError::Param(format!("event {i}: non-finite field")));
    }
    Ok(())
}

/// Free-function form of [`Catalog::filter`].
pub fn filter_catalog(cat: &Catalog, region: Region, m0: f64, t_start: f64, duration: f64) -> Result<Catalog> {
    cat.filter(region, m0, t_start, duration)
}
