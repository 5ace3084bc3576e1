//! Reproducible JSON output: pretty-printed, every float written with 17
//! significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::catalog::{Catalog, Region};
use crate::decluster::{FitOptions, FitResult, OuterStep};
use crate::error::{EtasError, Result};
use crate::likelihood::{LogLik, Variant};
use crate::model::{EtasParams, MagnitudeModel, ParamName};

pub const FIT_SCHEMA: &str = "etas-fit v1";

pub struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Default for FixedDigits<'_> {
    fn default() -> Self {
        FixedDigits(PrettyFormatter::new())
    }
}

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Serializable summary of a fit, written as `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    /// Time scale the catalog was fitted on.
    pub scale: String,
    pub variant: Variant,
    pub converged: bool,
    pub iterations: usize,
    pub region: Region,
    pub t_start: f64,
    pub duration: f64,
    pub m0: f64,
    pub n_events: usize,
    pub n_target: usize,
    pub params: EtasParams,
    pub fixed: Vec<ParamName>,
    pub magnitude: MagnitudeModel,
    pub loglik: LogLik,
    pub aic: f64,
    pub n_params: usize,
    pub branching_ratio: Option<f64>,
    /// `mu * int_S u`, background events per unit time.
    pub background_rate: f64,
    /// Sum of background probabilities over target events.
    pub expected_background: f64,
    pub stderr: Option<BTreeMap<String, f64>>,
    pub stderr_note: Option<String>,
    pub warnings: Vec<String>,
    pub trace: Vec<OuterStep>,
    pub options: FitOptions,
}

impl FitReport {
    pub fn new(fit: &FitResult, cat: &Catalog, scale: &str) -> Self {
        let stderr = fit.stderr.as_ref().map(|se| {
            se.params
                .iter()
                .map(|(n, v)| (n.as_str().to_string(), *v))
                .chain(se.magnitude.iter().cloned())
                .collect()
        });
        let expected_background = cat
            .events()
            .iter()
            .zip(&fit.probs.bg)
            .filter(|(e, _)| e.is_target)
            .map(|(_, b)| b)
            .sum();
        FitReport {
            schema: FIT_SCHEMA.to_string(),
            scale: scale.to_string(),
            variant: fit.options.variant,
            converged: fit.converged,
            iterations: fit.iterations,
            region: cat.region(),
            t_start: cat.t_start(),
            duration: cat.duration(),
            m0: cat.m0(),
            n_events: cat.len(),
            n_target: cat.n_target(),
            params: fit.params,
            fixed: fit.fixed.clone(),
            magnitude: fit.magnitude,
            loglik: fit.loglik,
            aic: fit.aic,
            n_params: fit.n_params,
            branching_ratio: fit.branching_ratio,
            background_rate: fit.background_rate(),
            expected_background,
            stderr,
            stderr_note: fit.stderr_note.clone(),
            warnings: fit.warnings.clone(),
            trace: fit.trace.clone(),
            options: fit.options.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let report: FitReport = read_json(path)?;
        if report.schema != FIT_SCHEMA {
            return Err(EtasError::Format(format!("{}: schema '{}' is not '{FIT_SCHEMA}'", path.display(), report.schema)));
        }
        Ok(report)
    }
}

/// Outer-iteration trace as CSV.
pub fn write_outer_trace_csv<W: Write>(trace: &[OuterStep], mut out: W) -> Result<()> {
    writeln!(out, "# etas-trace v1")?;
    writeln!(out, "iteration,l2,max_bg_change,optimizer_iterations,optimizer_converged")?;
    for s in trace {
        let change = s.max_bg_change.map_or(String::new(), |c| c.to_string());
        writeln!(out, "{},{},{change},{},{}", s.iteration, s.l2, s.optimizer_iterations, s.optimizer_converged)?;
    }
    Ok(())
}
