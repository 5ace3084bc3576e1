//! Transforms of the time axis applied before fitting.
//!
//! | scale                | map                          |
//! |----------------------|------------------------------|
//! | ideal                | `t`                          |
//! | calibration          | `t / omega`                  |
//! | proportional hazards | `int_0^t ds / Z(s)`          |
//! | log-linear           | `ln(1 + t)`                  |
//! | power                | `t^omega`                    |
//!
//! The proportional-hazards scale divides time by a usage measure `Z(t)`. The
//! default is the cumulative form, which is strictly increasing for any
//! positive `Z`; the pointwise form `t / Z(t)` is available through
//! [`UsageMode::Pointwise`] and is rejected when it breaks event ordering.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{EtasError, Result};

/// Piecewise-constant usage measure. Segment `k` spans
/// `[breakpoints[k-1], breakpoints[k])` with open ends at both extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageSeries {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl UsageSeries {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(EtasError::Param(format!(
                "usage series needs {} values for {} breakpoints, got {}",
                breakpoints.len() + 1,
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(EtasError::Param("usage breakpoints must be finite and strictly ascending".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(EtasError::UsageUndefined(format!("non-positive usage value {v}")));
        }
        Ok(UsageSeries { breakpoints, values })
    }

    pub fn constant(value: f64) -> Result<Self> {
        UsageSeries::new(vec![], vec![value])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Moves every breakpoint by `offset` days, e.g. to align a usage series
    /// built from a catalog with a different origin.
    pub fn shifted(&self, offset: f64) -> UsageSeries {
        UsageSeries {
            breakpoints: self.breakpoints.iter().map(|b| b + offset).collect(),
            values: self.values.clone(),
        }
    }

    /// `Z(t)`; at a breakpoint the later segment applies.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        self.values[k]
    }

    /// `int_0^t ds / Z(s)` for `t >= 0`.
    pub fn cumulative_inverse(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut lo = 0.0;
        let mut k = self.breakpoints.partition_point(|&b| b <= 0.0);
        while k < self.breakpoints.len() && self.breakpoints[k] < t {
            acc += (self.breakpoints[k] - lo) / self.values[k];
            lo = self.breakpoints[k];
            k += 1;
        }
        acc + (t - lo) / self.values[k]
    }

    /// Inverse of [`cumulative_inverse`](Self::cumulative_inverse).
    pub fn cumulative_inverse_inv(&self, tau: f64) -> f64 {
        let mut acc = 0.0;
        let mut lo = 0.0;
        let mut k = self.breakpoints.partition_point(|&b| b <= 0.0);
        while k < self.breakpoints.len() {
            let next = acc + (self.breakpoints[k] - lo) / self.values[k];
            if next >= tau {
                break;
            }
            acc = next;
            lo = self.breakpoints[k];
            k += 1;
        }
        lo + (tau - acc) * self.values[k]
    }

    /// `breakpoint,value` rows; the first row's breakpoint is `-inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# etas-usage v1")?;
        writeln!(out, "breakpoint,value")?;
        writeln!(out, "-inf,{}", self.values[0])?;
        for (b, v) in self.breakpoints.iter().zip(&self.values[1..]) {
            writeln!(out, "{b},{v}")?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<UsageSeries> {
        let mut breakpoints = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.starts_with("breakpoint") || line.trim().is_empty() {
                continue;
            }
            let (b, v) = line.split_once(',').ok_or_else(|| EtasError::Row {
                line: i as u64 + 1,
                message: "expected breakpoint,value".into(),
            })?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| EtasError::Row {
                    line: i as u64 + 1,
                    message: e.to_string(),
                })
            };
            let b = parse(b)?;
            if b.is_finite() {
                breakpoints.push(b);
            }
            values.push(parse(v)?);
        }
        UsageSeries::new(breakpoints, values)
    }
}

/// Builds `Z(t)` as the mean depth of minor events between consecutive
/// major events (`mag > major_threshold`).
///
/// Segments without minor events inherit the previous segment's value; the
/// first segment falls back to the overall mean minor depth.
pub fn build_usage_series(full: &Catalog, major_threshold: f64) -> Result<UsageSeries> {
    let mut breakpoints: Vec<f64> = full
        .events()
        .iter()
        .filter(|e| e.mag > major_threshold)
        .map(|e| e.t)
        .collect();
    breakpoints.dedup();
    let minors: Vec<_> = full.events().iter().filter(|e| e.mag <= major_threshold).collect();
    if minors.is_empty() {
        return Err(EtasError::UsageUndefined("catalog has no minor events".into()));
    }
    let global = minors.iter().map(|e| e.depth).sum::<f64>() / minors.len() as f64;

    let mut sums = vec![0.0; breakpoints.len() + 1];
    let mut counts = vec![0usize; breakpoints.len() + 1];
    for e in &minors {
        let k = breakpoints.partition_point(|&b| b < e.t);
        // strictly inside: a minor event at a breakpoint belongs to no segment
        if k < breakpoints.len() && breakpoints[k] == e.t {
            continue;
        }
        sums[k] += e.depth;
        counts[k] += 1;
    }
    let mut values = Vec::with_capacity(sums.len());
    let mut prev = global;
    for (s, n) in sums.iter().zip(&counts) {
        let v = if *n > 0 { s / *n as f64 } else { prev };
        values.push(v);
        prev = v;
    }
    UsageSeries::new(breakpoints, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageMode {
    #[default]
    Cumulative,
    Pointwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeScale {
    Ideal,
    Calibration { omega: f64 },
    ProportionalHazards { usage: UsageSeries, mode: UsageMode },
    LogLinear,
    Power { omega: f64 },
}

impl TimeScale {
    pub fn validate(&self) -> Result<()> {
        match self {
            TimeScale::Calibration { omega } | TimeScale::Power { omega } if !(*omega > 0.0 && omega.is_finite()) => {
                Err(EtasError::Param(format!("omega must be positive, got {omega}")))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TimeScale::Ideal => "ideal".into(),
            TimeScale::Calibration { omega } => format!("calib:{omega}"),
            TimeScale::ProportionalHazards { mode, .. } => match mode {
                UsageMode::Cumulative => "ph".into(),
                UsageMode::Pointwise => "ph-pointwise".into(),
            },
            TimeScale::LogLinear => "log".into(),
            TimeScale::Power { omega } => format!("power:{omega}"),
        }
    }

    /// Evaluates the transform at `t >= 0`.
    pub fn scale_value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(EtasError::Domain(format!("time {t} outside the scale's domain")));
        }
        Ok(match self {
            TimeScale::Ideal => t,
            TimeScale::Calibration { omega } => t / omega,
            TimeScale::ProportionalHazards { usage, mode } => match mode {
                UsageMode::Cumulative => usage.cumulative_inverse(t),
                UsageMode::Pointwise => t / usage.value_at(t),
            },
            TimeScale::LogLinear => t.ln_1p(),
            TimeScale::Power { omega } => t.powf(*omega),
        })
    }

    /// Inverse transform where one exists in closed form.
    pub fn inverse(&self, s: f64) -> Option<f64> {
        match self {
            TimeScale::Ideal => Some(s),
            TimeScale::Calibration { omega } => Some(s * omega),
            TimeScale::ProportionalHazards {
                usage,
                mode: UsageMode::Cumulative,
            } => Some(usage.cumulative_inverse_inv(s)),
            TimeScale::ProportionalHazards { .. } => None,
            TimeScale::LogLinear => Some(s.exp_m1()),
            TimeScale::Power { omega } => Some(s.powf(1.0 / omega)),
        }
    }

    /// `ln(d phi / dt)` at `t`, the per-event Jacobian of the transform.
    /// `None` for the pointwise proportional-hazards form, which has no
    /// usable derivative at the usage jumps.
    pub fn ln_derivative(&self, t: f64) -> Option<f64> {
        match self {
            TimeScale::Ideal => Some(0.0),
            TimeScale::Calibration { omega } => Some(-omega.ln()),
            TimeScale::ProportionalHazards {
                usage,
                mode: UsageMode::Cumulative,
            } => Some(-usage.value_at(t).ln()),
            TimeScale::ProportionalHazards { .. } => None,
            TimeScale::LogLinear => Some(-t.ln_1p()),
            TimeScale::Power { omega } => Some(omega.ln() + (omega - 1.0) * t.ln()),
        }
    }
}

impl FromStr for TimeScale {
    type Err = EtasError;

    /// `ideal`, `calib:W`, `log`, `power:W`. The proportional-hazards scale
    /// needs a usage series and is built by the caller.
    fn from_str(s: &str) -> Result<Self> {
        let omega = |w: &str| {
            w.parse::<f64>()
                .map_err(|e| EtasError::Param(format!("scale '{s}': {e}")))
        };
        let scale = match s.split_once(':') {
            None if s == "ideal" => TimeScale::Ideal,
            None if s == "log" => TimeScale::LogLinear,
            Some(("calib", w)) => TimeScale::Calibration { omega: omega(w)? },
            Some(("power", w)) => TimeScale::Power { omega: omega(w)? },
            _ => return Err(EtasError::Param(format!("unknown time scale '{s}'"))),
        };
        scale.validate()?;
        Ok(scale)
    }
}

/// Transforms every event time together with the window.
///
/// The new window is `[phi(t_start), phi(t_start + T))`. Fails on the first
/// pair of events whose order the transform does not strictly preserve.
pub fn apply_scale(cat: &Catalog, scale: &TimeScale) -> Result<Catalog> {
    scale.validate()?;
    let events = cat.events();
    let mut times = Vec::with_capacity(events.len());
    for e in events {
        times.push(scale.scale_value(e.t)?);
    }
    for i in 1..events.len() {
        let (a, b) = (times[i - 1], times[i]);
        let bad = if events[i - 1].t < events[i].t { !(a < b) } else { a != b };
        if bad {
            return Err(EtasError::NonMonotone {
                first: i - 1,
                second: i,
                t_first: events[i - 1].t,
                t_second: events[i].t,
            });
        }
    }
    let start = scale.scale_value(cat.t_start())?;
    let end = scale.scale_value(cat.t_end())?;
    if !(end > start) {
        return Err(EtasError::NonMonotone {
            first: 0,
            second: 0,
            t_first: cat.t_start(),
            t_second: cat.t_end(),
        });
    }
    if let Some(last) = times.last() {
        if *last >= end {
            return Err(EtasError::NonMonotone {
                first: times.len() - 1,
                second: times.len() - 1,
                t_first: events[times.len() - 1].t,
                t_second: cat.t_end(),
            });
        }
    }
    Ok(cat.retimed(&times, start, end - start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Event, Region};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cat(times: &[f64]) -> Catalog {
        let evs = times.iter().map(|&t| Event::new(t, 80.0, 28.0, 10.0, 5.5)).collect();
        Catalog::new(evs, Region::NEPAL, 0.0, 10_000.0, 5.0).unwrap()
    }

    #[test]
    fn scale_value_examples() {
        assert_eq!(TimeScale::Ideal.scale_value(7.3).unwrap(), 7.3);
        assert_eq!(TimeScale::Calibration { omega: 1000.0 }.scale_value(1000.0).unwrap(), 1.0);
        assert_eq!(TimeScale::Calibration { omega: 5.0 }.scale_value(10.0).unwrap(), 2.0);
        assert_eq!(TimeScale::Power { omega: 0.5 }.scale_value(4.0).unwrap(), 2.0);
        let ph = TimeScale::ProportionalHazards {
            usage: UsageSeries::constant(2.0).unwrap(),
            mode: UsageMode::Cumulative,
        };
        assert_eq!(ph.scale_value(10.0).unwrap(), 5.0);
        assert_eq!(TimeScale::LogLinear.scale_value(0.0).unwrap(), 0.0);
        assert!(TimeScale::LogLinear.scale_value(-1.0).is_err());
    }

    #[test]
    fn ideal_scale_is_identity() {
        let c = cat(&[1.0, 2.5, 9.0]);
        assert_eq!(apply_scale(&c, &TimeScale::Ideal).unwrap(), c);
    }

    #[test]
    fn window_transforms_consistently() {
        let evs = vec![Event::new(10.0, 80.0, 28.0, 10.0, 5.5)];
        let c = Catalog::new(evs, Region::NEPAL, 5.0, 20.0, 5.0).unwrap();
        let s = apply_scale(&c, &TimeScale::Calibration { omega: 5.0 }).unwrap();
        assert_eq!(s.t_start(), 1.0);
        assert_eq!(s.duration(), 4.0);
        assert_eq!(s.events()[0].t, 2.0);
    }

    #[test]
    fn usage_segment_means_and_carry_forward() {
        let mk = |t: f64, depth: f64, mag: f64| Event::new(t, 80.0, 28.0, depth, mag);
        let full = Catalog::new(
            vec![
                mk(1.0, 10.0, 4.0),
                mk(2.0, 20.0, 4.0),
                mk(3.0, 0.0, 6.0),
                mk(4.0, 0.0, 6.0),
                mk(5.0, 30.0, 4.0),
            ],
            Region::NEPAL,
            0.0,
            10.0,
            3.0,
        )
        .unwrap();
        let u = build_usage_series(&full, 5.0).unwrap();
        assert_eq!(u.breakpoints(), &[3.0, 4.0]);
        // empty middle segment inherits 15
        assert_eq!(u.values(), &[15.0, 15.0, 30.0]);
    }

    #[test]
    fn usage_single_major_after_minors() {
        let mk = |t: f64, depth: f64, mag: f64| Event::new(t, 80.0, 28.0, depth, mag);
        let full = Catalog::new(
            vec![mk(10.0, 8.0, 4.0), mk(50.0, 16.0, 4.2), mk(100.0, 5.0, 6.0)],
            Region::NEPAL,
            0.0,
            200.0,
            3.0,
        )
        .unwrap();
        let u = build_usage_series(&full, 5.0).unwrap();
        assert_eq!(u.breakpoints(), &[100.0]);
        assert_eq!(u.values(), &[12.0, 12.0]);
    }

    #[test]
    fn usage_requires_minor_events() {
        let full = cat(&[1.0, 2.0]);
        assert!(matches!(build_usage_series(&full, 5.0), Err(EtasError::UsageUndefined(_))));
    }

    #[test]
    fn pointwise_usage_inversion_is_reported() {
        // Z jumps from 1 to 10 at t = 5: t/Z drops from ~5 to 0.6
        let usage = UsageSeries::new(vec![5.0], vec![1.0, 10.0]).unwrap();
        let c = cat(&[1.0, 4.0, 6.0]);
        let pointwise = TimeScale::ProportionalHazards {
            usage: usage.clone(),
            mode: UsageMode::Pointwise,
        };
        match apply_scale(&c, &pointwise) {
            Err(EtasError::NonMonotone { first, second, .. }) => assert_eq!((first, second), (1, 2)),
            other => panic!("expected inversion, got {other:?}"),
        }
        let cumulative = TimeScale::ProportionalHazards {
            usage,
            mode: UsageMode::Cumulative,
        };
        let s = apply_scale(&c, &cumulative).unwrap();
        assert_relative_eq!(s.events()[2].t, 5.0 + 0.1, epsilon = 1e-12);
    }

    #[test]
    fn usage_csv_round_trip() {
        let u = UsageSeries::new(vec![3.0, 7.5], vec![12.0, 8.25, 30.0]).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        assert_eq!(UsageSeries::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), u);
    }

    #[test]
    fn parse_scale_specs() {
        assert_eq!("ideal".parse::<TimeScale>().unwrap(), TimeScale::Ideal);
        assert_eq!("calib:1000".parse::<TimeScale>().unwrap(), TimeScale::Calibration { omega: 1000.0 });
        assert_eq!("power:0.5".parse::<TimeScale>().unwrap(), TimeScale::Power { omega: 0.5 });
        assert!("calib:-1".parse::<TimeScale>().is_err());
        assert!("bogus".parse::<TimeScale>().is_err());
    }

    fn arb_scale() -> impl Strategy<Value = TimeScale> {
        prop_oneof![
            Just(TimeScale::Ideal),
            (0.01..2000.0f64).prop_map(|omega| TimeScale::Calibration { omega }),
            Just(TimeScale::LogLinear),
            (0.2..3.0f64).prop_map(|omega| TimeScale::Power { omega }),
            (prop::collection::vec(1.0..50.0f64, 1..6), 1.0..1000.0f64).prop_map(|(vals, step)| {
                let bps = (1..vals.len()).map(|k| k as f64 * step).collect();
                TimeScale::ProportionalHazards {
                    usage: UsageSeries::new(bps, vals).unwrap(),
                    mode: UsageMode::Cumulative,
                }
            }),
        ]
    }

    proptest! {
        #[test]
        fn scales_are_monotone_and_invertible(scale in arb_scale(), mut ts in prop::collection::vec(0.0..5000.0f64, 2..30)) {
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            let c = cat(&ts);
            let s = apply_scale(&c, &scale).unwrap();
            for w in s.events().windows(2) {
                prop_assert!(w[0].t < w[1].t);
            }
            for (orig, new) in c.events().iter().zip(s.events()) {
                let back = scale.inverse(new.t).unwrap();
                prop_assert!((back - orig.t).abs() <= 1e-9 * orig.t.abs().max(1.0));
            }
        }
    }
}
