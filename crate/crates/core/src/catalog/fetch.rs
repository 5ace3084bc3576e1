//! Client for the USGS earthquake catalog search service (ANSS ComCat).

use std::fs;
use std::path::PathBuf;
use std::time::{Duration, SystemTime};

use chrono::NaiveDate;

use super::Region;
use crate::error::{EtasError, Result};

pub const COMCAT_ENDPOINT: &str = "https://earthquake.usgs.gov/fdsnws/event/1/query";

#[derive(Debug, Clone, PartialEq)]
pub struct ComcatQuery {
    pub region: Region,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub min_mag: f64,
}

impl ComcatQuery {
    pub fn new(region: Region, start: NaiveDate, end: NaiveDate, min_mag: f64) -> Result<Self> {
        region.validate()?;
        if end < start {
            return Err(EtasError::Param(format!("end date {end} precedes start date {start}")));
        }
        if !min_mag.is_finite() {
            return Err(EtasError::Param("minimum magnitude must be finite".into()));
        }
        Ok(ComcatQuery {
            region,
            start,
            end,
            min_mag,
        })
    }

    pub fn url(&self) -> String {
        let r = &self.region;
        format!(
            "{COMCAT_ENDPOINT}?format=csv&starttime={}&endtime={}&minlatitude={}&maxlatitude={}&minlongitude={}&maxlongitude={}&minmagnitude={}&orderby=time-asc",
            self.start, self.end, r.lat_min, r.lat_max, r.lon_min, r.lon_max, self.min_mag
        )
    }

    /// File name derived from every query parameter.
    pub fn cache_key(&self) -> String {
        let r = &self.region;
        format!(
            "comcat_{}_{}_{}_{}_{}_{}_m{}.csv",
            self.start, self.end, r.lon_min, r.lon_max, r.lat_min, r.lat_max, self.min_mag
        )
        .replace('-', "m")
    }
}

/// Minimal blocking GET used by [`fetch_comcat`]; swapped out in tests.
pub trait HttpTransport {
    /// Returns the body of a 2xx response. Non-2xx statuses map to
    /// [`EtasError::Http`], connection problems to [`EtasError::Transport`].
    fn get(&self, url: &str) -> Result<String>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct UreqTransport;

impl HttpTransport for UreqTransport {
    fn get(&self, url: &str) -> Result<String> {
        match ureq::get(url).call() {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| EtasError::Transport(e.to_string())),
            Err(ureq::Error::StatusCode(status)) => Err(EtasError::Http { status }),
            Err(e) => Err(EtasError::Transport(e.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub cache_dir: PathBuf,
    /// Cached bodies older than this are refreshed; `None` never expires.
    pub max_age: Option<Duration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchSource {
    Network,
    Cache,
    /// Refresh failed and an expired cache entry was served instead.
    StaleCache,
}

#[derive(Debug, Clone)]
pub struct Fetched {
    pub body: String,
    pub source: FetchSource,
    pub cache_path: PathBuf,
    pub notice: Option<String>,
}

pub fn fetch_comcat(query: &ComcatQuery, opts: &FetchOptions, transport: &dyn HttpTransport) -> Result<Fetched> {
    let cache_path = opts.cache_dir.join(query.cache_key());
    let cached_age = fs::metadata(&cache_path)
        .and_then(|m| m.modified())
        .ok()
        .map(|mtime| SystemTime::now().duration_since(mtime).unwrap_or_default());

    if let Some(age) = cached_age {
        let fresh = opts.max_age.map_or(true, |max| age <= max);
        if fresh {
            return Ok(Fetched {
                body: fs::read_to_string(&cache_path)?,
                source: FetchSource::Cache,
                cache_path,
                notice: None,
            });
        }
    }

    match transport.get(&query.url()) {
        Ok(body) => {
            fs::create_dir_all(&opts.cache_dir)?;
            fs::write(&cache_path, &body)?;
            Ok(Fetched {
                body,
                source: FetchSource::Network,
                cache_path,
                notice: None,
            })
        }
        Err(err) => match cached_age {
            Some(age) => {
                let notice = format!(
                    "serving cached catalog {} ({} h old) after refresh failed: {err}",
                    cache_path.display(),
                    age.as_secs() / 3600
                );
                log::warn!("{notice}");
                Ok(Fetched {
                    body: fs::read_to_string(&cache_path)?,
                    source: FetchSource::StaleCache,
                    cache_path,
                    notice: Some(notice),
                })
            }
            None => Err(err),
        },
    }
}
