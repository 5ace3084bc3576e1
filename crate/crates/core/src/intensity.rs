//! Conditional intensity, the kernel-smoothed background and gridded
//! intensity surfaces.
//!
//! The background rate is `mu * u(x, y)`. After declustering, `u` is a
//! variable-bandwidth Gaussian mixture
//! `u(x, y) = (1/T) sum_j w_j N(x - x_j, y - y_j; h_j)` with `w_j` the
//! background probability of target event `j`, so `mu` acts as a relaxation
//! coefficient that converges near one.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::catalog::{Catalog, Region};
use crate::error::{EtasError, Result};
use crate::model::EtasParams;

/// Regular lon/lat lattice of cell centres tiling a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lon_min: f64,
    pub lat_min: f64,
    pub dlon: f64,
    pub dlat: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    /// Cells of roughly `cell` degrees, stretched so they tile `region` exactly.
    pub fn over(region: &Region, cell: f64) -> Grid {
        let nx = ((region.width() / cell).round() as usize).max(1);
        let ny = ((region.height() / cell).round() as usize).max(1);
        Grid {
            lon_min: region.lon_min,
            lat_min: region.lat_min,
            dlon: region.width() / nx as f64,
            dlat: region.height() / ny as f64,
            nx,
            ny,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.dlon * self.dlat
    }

    /// Centre of node `k`, row-major from the south-west corner.
    pub fn node(&self, k: usize) -> (f64, f64) {
        let (ix, iy) = (k % self.nx, k / self.nx);
        (
            self.lon_min + (ix as f64 + 0.5) * self.dlon,
            self.lat_min + (iy as f64 + 0.5) * self.dlat,
        )
    }

    fn eval<F: Fn(f64, f64) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = self.node(k);
                f(x, y)
            })
            .collect()
    }
}

/// Settings for the variable-bandwidth smoother.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthConfig {
    /// Bandwidth is the distance to the k-th nearest neighbour.
    pub k: usize,
    pub h_min: f64,
    pub h_max: f64,
    /// Output grid cell size in degrees.
    pub cell: f64,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        BandwidthConfig {
            k: 5,
            h_min: 0.05,
            h_max: 1.0,
            cell: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
    pub h: f64,
}

impl Kernel {
    #[inline]
    fn density(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.x, y - self.y);
        let h2 = self.h * self.h;
        self.weight / (2.0 * PI * h2) * (-(dx * dx + dy * dy) / (2.0 * h2)).exp()
    }

    /// Weighted mass inside a rectangle.
    pub(crate) fn mass_in(&self, r: &Region) -> f64 {
        let phi = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        let mx = phi((r.lon_max - self.x) / self.h) - phi((r.lon_min - self.x) / self.h);
        let my = phi((r.lat_max - self.y) / self.h) - phi((r.lat_min - self.y) / self.h);
        self.weight * mx * my
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundShape {
    /// Constant density over the region.
    Uniform { density: f64 },
    /// `(1/duration) * sum` of weighted isotropic Gaussians.
    Kernels { duration: f64, kernels: Vec<Kernel> },
}

/// Background density `u(x, y)` with its gridded values.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundField {
    region: Region,
    grid: Grid,
    shape: BackgroundShape,
    values: Vec<f64>,
}

impl BackgroundField {
    /// `u = 1/|S|` on the region.
    pub fn uniform(region: Region, cell: f64) -> Self {
        Self::from_shape(region, cell, BackgroundShape::Uniform { density: 1.0 / region.area() })
    }

    pub fn from_shape(region: Region, cell: f64, shape: BackgroundShape) -> Self {
        let grid = Grid::over(&region, cell);
        let mut field = BackgroundField {
            region,
            grid,
            shape,
            values: Vec::new(),
        };
        field.values = grid.eval(|x, y| field.value_at(x, y));
        field
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shape(&self) -> &BackgroundShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-kernel smoothing bandwidths (empty for a uniform field).
    pub fn bandwidths(&self) -> Vec<f64> {
        match &self.shape {
            BackgroundShape::Uniform { .. } => Vec::new(),
            BackgroundShape::Kernels { kernels, .. } => kernels.iter().map(|k| k.h).collect(),
        }
    }

    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        match &self.shape {
            BackgroundShape::Uniform { density } => {
                if self.region.contains(x, y) {
                    *density
                } else {
                    0.0
                }
            }
            BackgroundShape::Kernels { duration, kernels } => {
                kernels.iter().map(|k| k.density(x, y)).sum::<f64>() / duration
            }
        }
    }

    /// Exact `int_S u dx dy` over the study region.
    pub fn region_integral(&self) -> f64 {
        match &self.shape {
            BackgroundShape::Uniform { density } => density * self.region.area(),
            BackgroundShape::Kernels { duration, kernels } => {
                kernels.iter().map(|k| k.mass_in(&self.region)).sum::<f64>() / duration
            }
        }
    }

    /// `int u` over the whole plane.
    pub fn plane_integral(&self) -> f64 {
        match &self.shape {
            BackgroundShape::Uniform { .. } => self.region_integral(),
            BackgroundShape::Kernels { duration, kernels } => kernels.iter().map(|k| k.weight).sum::<f64>() / duration,
        }
    }

    pub fn to_grid(&self) -> IntensityGrid {
        IntensityGrid {
            grid: self.grid,
            values: self.values.clone(),
            quantity: GridQuantity::Background,
            clamped: 0,
        }
    }
}

/// Distance from each event to its `k`-th nearest other event, clipped to
/// `[h_min, h_max]`; `h_max` when fewer than `k` other events exist.
pub fn knn_bandwidths(cat: &Catalog, cfg: &BandwidthConfig) -> Vec<f64> {
    let ev = cat.events();
    (0..ev.len())
        .into_par_iter()
        .map(|i| {
            if cfg.k == 0 || ev.len() <= cfg.k {
                return cfg.h_max;
            }
            let mut d2: Vec<f64> = ev
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, e)| (e.lon - ev[i].lon).powi(2) + (e.lat - ev[i].lat).powi(2))
                .collect();
            let (_, kth, _) = d2.select_nth_unstable_by(cfg.k - 1, f64::total_cmp);
            kth.sqrt().clamp(cfg.h_min, cfg.h_max)
        })
        .collect()
}

/// Weighted variable-bandwidth smoothing of the target events.
///
/// `weights[j]` is event `j`'s background probability; only target events
/// contribute, each with mass `weights[j] / T`.
pub fn smooth_background(cat: &Catalog, weights: &[f64], cfg: &BandwidthConfig) -> Result<BackgroundField> {
    if weights.len() != cat.len() {
        return Err(EtasError::Param(format!(
            "{} weights for {} events",
            weights.len(),
            cat.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && **w <= 1.0)) {
        return Err(EtasError::Param(format!("weight {w} outside [0, 1]")));
    }
    if cat.is_empty() {
        return Err(EtasError::InsufficientData("cannot smooth an empty catalog".into()));
    }
    let h = knn_bandwidths(cat, cfg);
    let kernels: Vec<Kernel> = cat
        .events()
        .iter()
        .zip(weights)
        .zip(&h)
        .filter(|((e, w), _)| e.is_target && **w > 0.0)
        .map(|((e, w), h)| Kernel {
            x: e.lon,
            y: e.lat,
            weight: *w,
            h: *h,
        })
        .collect();
    if kernels.is_empty() {
        return Err(EtasError::NoBackgroundMass);
    }
    Ok(BackgroundField::from_shape(
        cat.region(),
        cfg.cell,
        BackgroundShape::Kernels {
            duration: cat.duration(),
            kernels,
        },
    ))
}

/// `mu u(x, y) + sum_{t_i < t} kappa(m_i) g(t - t_i) f(x - x_i, y - y_i; m_i)`.
pub fn conditional_intensity(cat: &Catalog, params: &EtasParams, bg: &BackgroundField, t: f64, x: f64, y: f64) -> f64 {
    let m0 = cat.m0();
    let triggered: f64 = cat
        .events()
        .iter()
        .take_while(|e| e.t < t)
        .map(|e| {
            let dm = e.mag - m0;
            let r2 = (x - e.lon).powi(2) + (y - e.lat).powi(2);
            params.productivity(dm) * params.g(t - e.t) * params.f(r2, params.sigma(dm))
        })
        .sum();
    params.mu * bg.value_at(x, y) + triggered
}

/// Space-integrated intensity `mu + sum_{t_i < t} kappa(m_i) g(t - t_i)`.
pub fn ground_intensity(cat: &Catalog, params: &EtasParams, t: f64) -> f64 {
    let m0 = cat.m0();
    params.mu
        + cat
            .events()
            .iter()
            .take_while(|e| e.t < t)
            .map(|e| params.productivity(e.mag - m0) * params.g(t - e.t))
            .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridQuantity {
    Background,
    TotalIntensity,
    Clustering,
    ConditionalIntensity,
    SpatialResidual,
}

/// Values on a [`Grid`], row-major from the south-west corner.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityGrid {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub quantity: GridQuantity,
    /// Nodes clamped into range (clustering coefficient only).
    pub clamped: usize,
}

impl IntensityGrid {
    pub fn argmax(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
    }

    /// Midpoint-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# etas-grid v1 quantity={}", quantity_name(self.quantity))?;
        writeln!(out, "lon,lat,value")?;
        for (k, v) in self.values.iter().enumerate() {
            let (x, y) = self.grid.node(k);
            writeln!(out, "{x},{y},{v}")?;
        }
        Ok(())
    }

    /// One JSON header line, then one text row per latitude from north to south.
    pub fn write_ascii_grid<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "schema": "etas-ascii-grid v1",
            "quantity": quantity_name(self.quantity),
            "ncols": self.grid.nx,
            "nrows": self.grid.ny,
            "lon_min": self.grid.lon_min,
            "lat_min": self.grid.lat_min,
            "dlon": self.grid.dlon,
            "dlat": self.grid.dlat,
            "order": "north_to_south",
        });
        writeln!(out, "{header}")?;
        for iy in (0..self.grid.ny).rev() {
            let row = &self.values[iy * self.grid.nx..(iy + 1) * self.grid.nx];
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

fn quantity_name(q: GridQuantity) -> &'static str {
    match q {
        GridQuantity::Background => "background",
        GridQuantity::TotalIntensity => "total_intensity",
        GridQuantity::Clustering => "clustering",
        GridQuantity::ConditionalIntensity => "conditional_intensity",
        GridQuantity::SpatialResidual => "spatial_residual",
    }
}

/// Long-run spatial intensity
/// `Lambda(x, y) = mu u(x, y) + (1/T) sum_i kappa(m_i) f(x - x_i, y - y_i; m_i)`
/// over target events.
pub fn total_spatial_intensity(cat: &Catalog, params: &EtasParams, bg: &BackgroundField) -> IntensityGrid {
    let m0 = cat.m0();
    let parents: Vec<(f64, f64, f64, f64)> = cat
        .targets()
        .map(|e| {
            let dm = e.mag - m0;
            (e.lon, e.lat, params.productivity(dm), params.sigma(dm))
        })
        .collect();
    let duration = cat.duration();
    let values = bg.grid().eval(|x, y| {
        let trig: f64 = parents
            .iter()
            .map(|&(px, py, k, s)| k * params.f((x - px).powi(2) + (y - py).powi(2), s))
            .sum();
        params.mu * bg.value_at(x, y) + trig / duration
    });
    IntensityGrid {
        grid: *bg.grid(),
        values,
        quantity: GridQuantity::TotalIntensity,
        clamped: 0,
    }
}

/// Conditional intensity surface at time `t`.
pub fn conditional_intensity_grid(cat: &Catalog, params: &EtasParams, bg: &BackgroundField, t: f64) -> IntensityGrid {
    let values = bg.grid().eval(|x, y| conditional_intensity(cat, params, bg, t, x, y));
    IntensityGrid {
        grid: *bg.grid(),
        values,
        quantity: GridQuantity::ConditionalIntensity,
        clamped: 0,
    }
}

/// `omega(x, y) = 1 - mu u(x, y) / Lambda(x, y)`, clamped into `[0, 1)`.
pub fn clustering_coefficient(bg: &BackgroundField, mu: f64, lambda: &IntensityGrid) -> Result<IntensityGrid> {
    let below_one = 1.0 - f64::EPSILON / 2.0;
    let mut clamped = 0;
    let mut values = Vec::with_capacity(lambda.values.len());
    for (k, (&lam, &u)) in lambda.values.iter().zip(bg.values()).enumerate() {
        if !(lam > 0.0) {
            let (x, y) = lambda.grid.node(k);
            return Err(EtasError::Domain(format!(
                "total intensity {lam} at grid node {k} ({x}, {y})"
            )));
        }
        let w = 1.0 - mu * u / lam;
        let c = w.clamp(0.0, below_one);
        if c != w {
            clamped += 1;
        }
        values.push(c);
    }
    Ok(IntensityGrid {
        grid: lambda.grid,
        values,
        quantity: GridQuantity::Clustering,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Event;
    use approx::assert_relative_eq;

    fn params() -> EtasParams {
        EtasParams {
            mu: 0.8,
            a: 0.3,
            alpha: 1.1,
            c: 0.02,
            p: 1.3,
            d: 0.01,
            gamma: 0.8,
            q: 1.7,
        }
    }

    fn region() -> Region {
        Region::new(0.0, 4.0, 0.0, 3.0).unwrap()
    }

    fn cat(events: Vec<Event>) -> Catalog {
        Catalog::new(events, region(), 0.0, 100.0, 4.0).unwrap()
    }

    #[test]
    fn empty_history_is_background() {
        let c = cat(vec![]);
        let bg = BackgroundField::uniform(region(), 0.5);
        let p = params();
        assert_relative_eq!(conditional_intensity(&c, &p, &bg, 5.0, 1.0, 1.0), p.mu / 12.0);
        assert_eq!(ground_intensity(&c, &p, 5.0), p.mu);
    }

    #[test]
    fn intensity_near_parent_approaches_kernel_peaks() {
        let p = params();
        let e = Event::new(1.0, 2.0, 1.5, 10.0, 5.0);
        let c = cat(vec![e]);
        let bg = BackgroundField::uniform(region(), 0.5);
        let got = conditional_intensity(&c, &p, &bg, 1.0 + 1e-12, 2.0, 1.5);
        let sigma = p.d * p.gamma.mul_add(1.0, 0.0).exp();
        let peak = p.mu / 12.0 + p.a * (p.alpha).exp() * (p.p - 1.0) / p.c * (p.q - 1.0) / (PI * sigma);
        assert_relative_eq!(got, peak, max_relative = 1e-8);
    }

    #[test]
    fn intensity_is_additive_over_history() {
        let p = params();
        let bg = BackgroundField::uniform(region(), 0.5);
        let e1 = Event::new(1.0, 1.0, 1.0, 10.0, 4.5);
        let e2 = Event::new(2.0, 3.0, 2.0, 10.0, 5.5);
        let both = conditional_intensity(&cat(vec![e1, e2]), &p, &bg, 3.0, 2.0, 1.5);
        let b = p.mu * bg.value_at(2.0, 1.5);
        let one = conditional_intensity(&cat(vec![e1]), &p, &bg, 3.0, 2.0, 1.5) - b;
        let two = conditional_intensity(&cat(vec![e2]), &p, &bg, 3.0, 2.0, 1.5) - b;
        assert_relative_eq!(both, b + one + two, max_relative = 1e-14);
    }

    #[test]
    fn ground_intensity_decreases_between_events() {
        let p = params();
        let c = cat(vec![Event::new(1.0, 1.0, 1.0, 10.0, 5.0), Event::new(10.0, 1.0, 1.0, 10.0, 5.0)]);
        let mut last = f64::INFINITY;
        for k in 1..90 {
            let v = ground_intensity(&c, &p, 1.0 + k as f64 * 0.1);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn single_kernel_integrates_to_inverse_duration() {
        let c = cat(vec![Event::new(1.0, 2.0, 1.5, 10.0, 5.0)]);
        let bg = smooth_background(&c, &[1.0], &BandwidthConfig::default()).unwrap();
        assert_relative_eq!(bg.plane_integral(), 1.0 / 100.0);
        assert_eq!(bg.bandwidths(), vec![1.0]);
    }

    #[test]
    fn smoothing_is_linear_in_weights() {
        let evs: Vec<Event> = (0..12)
            .map(|i| Event::new(i as f64, 0.3 * i as f64, 0.2 * i as f64 + 0.1, 5.0, 4.5))
            .collect();
        let c = cat(evs);
        let cfg = BandwidthConfig::default();
        let half = smooth_background(&c, &vec![0.5; 12], &cfg).unwrap();
        let full = smooth_background(&c, &vec![1.0; 12], &cfg).unwrap();
        for (h, f) in half.values().iter().zip(full.values()) {
            assert_relative_eq!(*h, 0.5 * f, max_relative = 1e-12);
        }
        assert!(matches!(smooth_background(&c, &vec![0.0; 12], &cfg), Err(EtasError::NoBackgroundMass)));
        assert!(smooth_background(&c, &vec![1.5; 12], &cfg).is_err());
    }

    #[test]
    fn grid_quadrature_matches_exact_region_mass() {
        let evs: Vec<Event> = (0..30)
            .map(|i| {
                let f = i as f64;
                Event::new(f, 0.5 + (f * 0.37) % 3.0, 0.5 + (f * 0.53) % 2.0, 5.0, 4.5)
            })
            .collect();
        let c = cat(evs);
        let w: Vec<f64> = (0..30).map(|i| 0.2 + 0.8 * ((i * 7) % 10) as f64 / 10.0).collect();
        let cfg = BandwidthConfig { cell: 0.01, ..Default::default() };
        let bg = smooth_background(&c, &w, &cfg).unwrap();
        let quad = bg.to_grid().integral();
        assert_relative_eq!(quad, bg.region_integral(), max_relative = 1e-3);
        // kernels near the centre lose little mass to the boundary
        assert!(bg.region_integral() <= w.iter().sum::<f64>() / 100.0);
    }

    #[test]
    fn total_intensity_and_clustering() {
        let p = params();
        let bg = BackgroundField::uniform(region(), 0.1);
        let empty = cat(vec![]);
        let lam0 = total_spatial_intensity(&empty, &p, &bg);
        for (l, u) in lam0.values.iter().zip(bg.values()) {
            assert_relative_eq!(*l, p.mu * u);
        }
        let omega0 = clustering_coefficient(&bg, p.mu, &lam0).unwrap();
        assert!(omega0.values.iter().all(|&w| w == 0.0));

        // epicentre sits on the node at (2.05, 1.45)
        let c = cat(vec![Event::new(1.0, 2.05, 1.45, 10.0, 5.0)]);
        let lam = total_spatial_intensity(&c, &p, &bg);
        let k = lam.argmax().unwrap();
        let (x, y) = lam.grid.node(k);
        assert_relative_eq!(x, 2.05, epsilon = 1e-12);
        assert_relative_eq!(y, 1.45, epsilon = 1e-12);
        for (l, u) in lam.values.iter().zip(bg.values()) {
            assert!(*l >= p.mu * u);
        }
        let omega = clustering_coefficient(&bg, p.mu, &lam).unwrap();
        assert!(omega.values.iter().all(|&w| (0.0..1.0).contains(&w)));
    }

    #[test]
    fn clustering_half_when_lambda_doubles_background() {
        let bg = BackgroundField::uniform(region(), 1.0);
        let lam = IntensityGrid {
            grid: *bg.grid(),
            values: bg.values().iter().map(|u| 2.0 * 0.7 * u).collect(),
            quantity: GridQuantity::TotalIntensity,
            clamped: 0,
        };
        let w = clustering_coefficient(&bg, 0.7, &lam).unwrap();
        assert!(w.values.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let zero = IntensityGrid {
            values: vec![0.0; lam.values.len()],
            ..lam
        };
        assert!(clustering_coefficient(&bg, 0.7, &zero).is_err());
    }
}
