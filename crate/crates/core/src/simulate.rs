//! Synthetic ETAS catalogs with known genealogy.
//!
//! The default generator is the branching (cluster) construction: background
//! events are a Poisson process with intensity `mu * u(x, y)` on the region,
//! and every event spawns a Poisson number of children over the remaining
//! window. [`simulate_thinning`] draws the same process by Ogata thinning of
//! the ground intensity.
//!
//! Random numbers come from ChaCha8 seeded with `seed_from_u64(seed)`. Stream
//! 0 draws the background, and the cascade under the k-th background event
//! (in time order) uses stream `k + 1`, so clusters can be simulated in
//! parallel with a result that does not depend on scheduling.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Open01, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{sort_events, Catalog, Event, Region};
use crate::error::{EtasError, Result};
use crate::intensity::{BackgroundField, BackgroundShape};
use crate::model::{branching_ratio, EtasParams, MagnitudeModel};

/// Parent index of a background event.
pub const BACKGROUND: i64 = -1;
/// Parent index of an event whose parent fell outside the region.
pub const EXTERNAL_PARENT: i64 = -2;

#[derive(Debug, Clone, PartialEq)]
pub enum SimBackground {
    /// `u = 1/|S|` on the region.
    Uniform,
    Field(BackgroundField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: EtasParams,
    pub magnitude: MagnitudeModel,
    pub region: Region,
    /// Window length in days; events live in `[0, duration)`.
    pub duration: f64,
    /// Start of the target window; earlier events are burn-in history.
    pub t_start: f64,
    pub m0: f64,
    pub background: SimBackground,
    pub seed: u64,
    /// Cap on generated events, out-of-region ones included.
    pub max_events: usize,
    /// Depth assigned to every event, km.
    pub depth: f64,
}

impl SimConfig {
    /// Validated configuration with uniform background, no burn-in and a
    /// one-million event cap.
    pub fn new(params: EtasParams, magnitude: MagnitudeModel, region: Region, duration: f64, m0: f64, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            params,
            magnitude,
            region,
            duration,
            t_start: 0.0,
            m0,
            background: SimBackground::Uniform,
            seed,
            max_events: 1_000_000,
            depth: 10.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rejects invalid parameters and supercritical models.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.magnitude.validate()?;
        self.region.validate()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(EtasError::Param(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.t_start >= 0.0 && self.t_start < self.duration) {
            return Err(EtasError::Param(format!("t_start {} outside [0, {})", self.t_start, self.duration)));
        }
        if !self.m0.is_finite() || !self.depth.is_finite() {
            return Err(EtasError::Param("m0 and depth must be finite".into()));
        }
        let n = branching_ratio(&self.params, &self.magnitude)?;
        if n >= 1.0 {
            return Err(EtasError::Param(format!("branching ratio {n} is not below 1")));
        }
        if let SimBackground::Field(f) = &self.background {
            if f.region_integral() <= 0.0 {
                return Err(EtasError::Param("background field has no mass in the region".into()));
            }
        }
        Ok(())
    }

    /// Expected background count, `mu * T * int_S u`.
    pub fn background_mean(&self) -> f64 {
        self.params.mu * self.duration * self.background_integral()
    }

    fn background_integral(&self) -> f64 {
        match &self.background {
            SimBackground::Uniform => 1.0,
            SimBackground::Field(f) => f.region_integral(),
        }
    }
}

/// One generated event, inside the region or not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub event: Event,
    /// Index into [`SimCatalog::all`]; `None` for background events.
    pub parent: Option<usize>,
    pub generation: u32,
    pub in_region: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimCatalog {
    /// In-region events.
    pub catalog: Catalog,
    /// Per catalog event: parent's catalog index, [`BACKGROUND`] or
    /// [`EXTERNAL_PARENT`].
    pub parent: Vec<i64>,
    /// Every generated event in time order.
    pub all: Vec<SimEvent>,
    /// Position of each catalog event in `all`.
    pub all_index: Vec<usize>,
    /// Generation stopped at `max_events`.
    pub overflow: bool,
}

impl SimCatalog {
    pub fn is_background(&self, j: usize) -> bool {
        self.parent[j] == BACKGROUND
    }

    pub fn n_background(&self) -> usize {
        self.parent.iter().filter(|&&p| p == BACKGROUND).count()
    }

    /// `child_idx,parent_idx` over catalog indices.
    pub fn write_genealogy_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# etas-genealogy v1")?;
        writeln!(out, "child_idx,parent_idx")?;
        for (j, p) in self.parent.iter().enumerate() {
            writeln!(out, "{j},{p}")?;
        }
        Ok(())
    }
}

/// Lag with CDF `G(lag) / G(horizon)`: `c ((1 - v G(horizon))^(1/(1-p)) - 1)`.
pub fn inverse_temporal_cdf(params: &EtasParams, v: f64, horizon: f64) -> f64 {
    let gh = params.g_cdf(horizon);
    params.c * (((-v * gh).ln_1p()) / (1.0 - params.p)).exp_m1()
}

/// Radius with CDF equal to the spatial-kernel disk mass:
/// `sqrt(sigma(m) ((1 - v)^(1/(1-q)) - 1))`.
pub fn inverse_radial_cdf(params: &EtasParams, m: f64, m0: f64, v: f64) -> f64 {
    let sigma = params.sigma(m - m0);
    (sigma * ((-v).ln_1p() / (1.0 - params.q)).exp_m1()).sqrt()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

fn background_location<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> (f64, f64) {
    let r = cfg.region;
    let uniform = |rng: &mut R| (r.lon_min + rng.random::<f64>() * r.width(), r.lat_min + rng.random::<f64>() * r.height());
    let field = match &cfg.background {
        SimBackground::Uniform => return uniform(rng),
        SimBackground::Field(f) => f,
    };
    match field.shape() {
        BackgroundShape::Uniform { .. } => uniform(rng),
        BackgroundShape::Kernels { kernels, .. } => {
            // pick a kernel by its in-region mass, then a truncated Gaussian draw
            let masses: Vec<f64> = kernels.iter().map(|k| k.mass_in(&r)).collect();
            let total: f64 = masses.iter().sum();
            let mut target = rng.random::<f64>() * total;
            let mut pick = kernels.len() - 1;
            for (k, m) in masses.iter().enumerate() {
                if target < *m {
                    pick = k;
                    break;
                }
                target -= m;
            }
            let k = kernels[pick];
            let normal = rand_distr::Normal::new(0.0, k.h).expect("positive bandwidth");
            for _ in 0..10_000 {
                let (x, y) = (k.x + normal.sample(rng), k.y + normal.sample(rng));
                if r.contains(x, y) {
                    return (x, y);
                }
            }
            uniform(rng)
        }
    }
}

fn draw_magnitude<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> f64 {
    cfg.m0 + cfg.magnitude.sample_excess(rng)
}

fn displaced<R: Rng + ?Sized>(cfg: &SimConfig, parent: &Event, rng: &mut R) -> (f64, f64) {
    let r = inverse_radial_cdf(&cfg.params, parent.mag, cfg.m0, open01(rng));
    let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    (parent.lon + r * theta.cos(), parent.lat + r * theta.sin())
}

fn background_events(cfg: &SimConfig) -> Vec<Event> {
    let mut rng = rng_for(cfg.seed, 0);
    let mean = cfg.background_mean();
    let n = if mean > 0.0 {
        Poisson::new(mean).expect("finite mean").sample(&mut rng) as usize
    } else {
        0
    };
    let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * cfg.duration).collect();
    times.sort_by(f64::total_cmp);
    times
        .into_iter()
        .map(|t| {
            let (x, y) = background_location(cfg, &mut rng);
            let m = draw_magnitude(cfg, &mut rng);
            Event::new(t, x, y, cfg.depth, m)
        })
        .collect()
}

/// Cascade below one background event; parents precede their children.
fn cluster(cfg: &SimConfig, root: Event, stream: u64, cap: usize) -> (Vec<SimEvent>, bool) {
    let mut rng = rng_for(cfg.seed, stream);
    let p = &cfg.params;
    let mut out = vec![SimEvent {
        event: root,
        parent: None,
        generation: 0,
        in_region: true,
    }];
    let mut next = 0;
    while next < out.len() {
        let parent = out[next];
        let horizon = cfg.duration - parent.event.t;
        let mean = p.productivity(parent.event.mag - cfg.m0) * p.g_cdf(horizon);
        let n = if mean > 0.0 {
            Poisson::new(mean).expect("finite mean").sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..n {
            if out.len() >= cap {
                return (out, true);
            }
            let lag = inverse_temporal_cdf(p, open01(&mut rng), horizon);
            let t = parent.event.t + lag;
            let (x, y) = displaced(cfg, &parent.event, &mut rng);
            let m = draw_magnitude(cfg, &mut rng);
            if !(t < cfg.duration) || !(lag > 0.0) {
                // rounding at the window edge
                continue;
            }
            out.push(SimEvent {
                event: Event::new(t, x, y, cfg.depth, m),
                parent: Some(next),
                generation: parent.generation + 1,
                in_region: cfg.region.contains(x, y),
            });
        }
        next += 1;
    }
    (out, false)
}

/// Simulates a catalog by the branching construction.
pub fn simulate(cfg: &SimConfig) -> Result<SimCatalog> {
    cfg.validate()?;
    let roots = background_events(cfg);
    let cap = cfg.max_events;
    let clusters: Vec<(Vec<SimEvent>, bool)> = roots
        .par_iter()
        .enumerate()
        .map(|(k, root)| cluster(cfg, *root, k as u64 + 1, cap))
        .collect();

    let mut all = Vec::new();
    let mut overflow = false;
    for (events, full) in clusters {
        let offset = all.len();
        let room = cap - offset;
        overflow = full || events.len() > room;
        all.extend(events.into_iter().take(room).map(|mut e| {
            e.parent = e.parent.map(|p| p + offset);
            e
        }));
        if overflow {
            break;
        }
    }
    assemble(cfg, all, overflow)
}

/// Puts generated events in catalog order and maps the genealogy.
fn assemble(cfg: &SimConfig, mut all: Vec<SimEvent>, overflow: bool) -> Result<SimCatalog> {
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&all[a].event, &all[b].event);
        ea.t.total_cmp(&eb.t).then(eb.mag.total_cmp(&ea.mag)).then(a.cmp(&b))
    });
    let mut new_pos = vec![0usize; all.len()];
    for (pos, &old) in order.iter().enumerate() {
        new_pos[old] = pos;
    }
    let mut sorted: Vec<SimEvent> = order.iter().map(|&i| all[i]).collect();
    for e in &mut sorted {
        e.parent = e.parent.map(|p| new_pos[p]);
    }
    all = sorted;

    let mut events = Vec::new();
    let mut all_index = Vec::new();
    let mut cat_pos = vec![None; all.len()];
    for (i, e) in all.iter().enumerate() {
        if e.in_region {
            cat_pos[i] = Some(events.len());
            events.push(e.event);
            all_index.push(i);
        }
    }
    let parent = all_index
        .iter()
        .map(|&i| match all[i].parent {
            None => BACKGROUND,
            Some(p) => cat_pos[p].map_or(EXTERNAL_PARENT, |j| j as i64),
        })
        .collect();

    // already in catalog order; the stable sort inside `new` keeps it
    if cfg!(debug_assertions) {
        let mut check = events.clone();
        sort_events(&mut check);
        debug_assert_eq!(check, events);
    }
    let catalog = Catalog::new(events, cfg.region, cfg.t_start, cfg.duration, cfg.m0)?;
    Ok(SimCatalog {
        catalog,
        parent,
        all,
        all_index,
        overflow,
    })
}

/// Simulates by Ogata thinning of the ground intensity
/// `mu * int_S u + sum kappa g`, attributing each accepted event to a
/// background or parent component in proportion to its share of the
/// intensity. Locations follow the same rules as [`simulate`]. Uses stream 0
/// only.
pub fn simulate_thinning(cfg: &SimConfig) -> Result<SimCatalog> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, 0);
    let p = &cfg.params;
    let rate_bg = p.mu * cfg.background_integral();
    let mut all: Vec<SimEvent> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut t = 0.0;
    let mut overflow = false;
    let exc = |events: &[SimEvent], weights: &[f64], s: f64| -> f64 {
        events.iter().zip(weights).map(|(e, w)| w * p.g(s - e.event.t)).sum::<f64>()
    };
    loop {
        // the triggered part only decays between events, so the current
        // value bounds the intensity until the next event
        let bound = rate_bg + exc(&all, &weights, t);
        if bound <= 0.0 {
            break;
        }
        t += Exp::new(bound).expect("positive rate").sample(&mut rng);
        if t >= cfg.duration {
            break;
        }
        let parts: Vec<f64> = all.iter().zip(&weights).map(|(e, w)| w * p.g(t - e.event.t)).collect();
        let lambda = rate_bg + parts.iter().sum::<f64>();
        let v = rng.random::<f64>() * bound;
        if v >= lambda {
            continue;
        }
        if all.len() >= cfg.max_events {
            overflow = true;
            break;
        }
        // v is uniform on [0, lambda) given acceptance
        let mut rest = v - rate_bg;
        let parent = if rest < 0.0 {
            None
        } else {
            let mut pick = parts.len() - 1;
            for (i, w) in parts.iter().enumerate() {
                if rest < *w {
                    pick = i;
                    break;
                }
                rest -= w;
            }
            Some(pick)
        };
        let (x, y) = match parent {
            None => background_location(cfg, &mut rng),
            Some(i) => displaced(cfg, &all[i].event, &mut rng),
        };
        let m = draw_magnitude(cfg, &mut rng);
        let generation = parent.map_or(0, |i| all[i].generation + 1);
        all.push(SimEvent {
            event: Event::new(t, x, y, cfg.depth, m),
            parent,
            generation,
            in_region: cfg.region.contains(x, y),
        });
        weights.push(p.productivity(m - cfg.m0));
    }
    assemble(cfg, all, overflow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn theta() -> EtasParams {
        EtasParams {
            mu: 0.3,
            a: 0.15,
            alpha: 1.2,
            c: 0.01,
            p: 1.3,
            d: 0.005,
            gamma: 1.0,
            q: 1.8,
        }
    }

    fn config(seed: u64, duration: f64) -> SimConfig {
        let region = Region::new(0.0, 5.0, 0.0, 5.0).unwrap();
        SimConfig::new(theta(), MagnitudeModel::Exponential { beta: 2.3 }, region, duration, 4.0, seed).unwrap()
    }

    #[test]
    fn inverse_cdfs_at_zero_and_median() {
        let mut p = theta();
        assert_eq!(inverse_temporal_cdf(&p, 0.0, f64::INFINITY), 0.0);
        assert_eq!(inverse_radial_cdf(&p, 5.0, 4.0, 0.0), 0.0);
        p.p = 2.0;
        assert_relative_eq!(inverse_temporal_cdf(&p, 0.5, f64::INFINITY), p.c, max_relative = 1e-12);
    }

    #[test]
    fn inverse_cdfs_invert_the_kernel_cdfs() {
        let p = theta();
        for &v in &[0.01, 0.3, 0.77, 0.999] {
            let h = 50.0;
            let lag = inverse_temporal_cdf(&p, v, h);
            assert!(lag > 0.0 && lag < h);
            assert_relative_eq!(p.g_cdf(lag) / p.g_cdf(h), v, max_relative = 1e-10);
            let r = inverse_radial_cdf(&p, 5.5, 4.0, v);
            let mass = crate::model::spatial_kernel_disk_mass(&p, r, 5.5, 4.0).unwrap();
            assert_relative_eq!(mass, v, max_relative = 1e-10);
        }
    }

    #[test]
    fn same_seed_same_catalog() {
        let a = simulate(&config(7, 400.0)).unwrap();
        let b = simulate(&config(7, 400.0)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&config(8, 400.0)).unwrap();
        assert_ne!(a.catalog, c.catalog);
    }

    #[test]
    fn genealogy_points_backwards() {
        let s = simulate(&config(3, 1000.0)).unwrap();
        assert!(!s.catalog.is_empty());
        for (j, &p) in s.parent.iter().enumerate() {
            assert!(p < j as i64);
            if p >= 0 {
                assert!(s.catalog.events()[p as usize].t < s.catalog.events()[j].t);
            }
        }
        for (i, e) in s.all.iter().enumerate() {
            if let Some(p) = e.parent {
                assert!(p < i);
                assert_eq!(e.generation, s.all[p].generation + 1);
            }
        }
        assert_eq!(s.all_index.len(), s.catalog.len());
        assert!(s.all.iter().all(|e| e.event.t < 1000.0));
    }

    #[test]
    fn zero_productivity_is_poisson() {
        let mut counts = Vec::new();
        for seed in 0..200 {
            let mut cfg = config(seed, 100.0);
            cfg.params.a = 0.0;
            let s = simulate(&cfg).unwrap();
            assert_eq!(s.n_background(), s.catalog.len());
            counts.push(s.catalog.len() as f64);
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let expect = 0.3 * 100.0;
        let se = (expect / counts.len() as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn overflow_truncates_and_flags() {
        let mut cfg = config(1, 2000.0);
        cfg.max_events = 50;
        let s = simulate(&cfg).unwrap();
        assert!(s.overflow);
        assert_eq!(s.all.len(), 50);
        for (i, e) in s.all.iter().enumerate() {
            assert!(e.parent.map_or(true, |p| p < i));
        }
    }

    #[test]
    fn supercritical_rejected() {
        let mut cfg = config(1, 10.0);
        cfg.params.a = 0.9;
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn thinning_without_triggering_is_poisson() {
        let mut total = 0.0;
        let runs = 100;
        for seed in 0..runs {
            let mut cfg = config(seed, 200.0);
            cfg.params.a = 0.0;
            total += simulate_thinning(&cfg).unwrap().catalog.len() as f64;
        }
        let mean = total / runs as f64;
        let se = (60.0 / runs as f64).sqrt();
        assert!((mean - 60.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn thinning_and_branching_agree_on_mean_count() {
        // expected total over [0, T] with the cascade truncated at T
        let runs = 150;
        let (mut a, mut b) = (0.0, 0.0);
        for seed in 0..runs {
            let cfg = config(seed, 300.0);
            a += simulate(&cfg).unwrap().all.len() as f64;
            b += simulate_thinning(&cfg).unwrap().all.len() as f64;
        }
        let (a, b) = (a / runs as f64, b / runs as f64);
        assert!((a - b).abs() / a < 0.08, "branching {a} thinning {b}");
    }

    #[test]
    fn field_background_stays_in_region() {
        let region = Region::new(0.0, 2.0, 0.0, 2.0).unwrap();
        let shape = BackgroundShape::Kernels {
            duration: 1.0,
            kernels: vec![crate::intensity::Kernel { x: 0.2, y: 0.2, weight: 1.0, h: 0.3 }],
        };
        let field = BackgroundField::from_shape(region, 0.1, shape);
        let mut cfg = SimConfig::new(theta(), MagnitudeModel::Exponential { beta: 2.3 }, region, 200.0, 4.0, 5).unwrap();
        cfg.params.a = 0.0;
        cfg.background = SimBackground::Field(field);
        let s = simulate(&cfg).unwrap();
        assert!(s.catalog.len() > 10);
        let near = s.catalog.events().iter().filter(|e| e.lon < 1.0 && e.lat < 1.0).count();
        assert!(near as f64 > 0.8 * s.catalog.len() as f64);
    }

    #[test]
    fn genealogy_csv_lists_every_event() {
        let s = simulate(&config(2, 200.0)).unwrap();
        let mut buf = Vec::new();
        s.write_genealogy_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), s.catalog.len() + 2);
        assert!(text.lines().nth(1).unwrap() == "child_idx,parent_idx");
    }
}
