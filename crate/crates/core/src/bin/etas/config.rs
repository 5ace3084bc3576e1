//! Run files and the on-disk background field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use etas_core::decluster::FitOptions;
use etas_core::error::{EtasError, Result};
use etas_core::intensity::{BackgroundField, BackgroundShape};
use etas_core::model::EtasParams;
use etas_core::output::read_json;
use etas_core::Region;

pub const RUN_SCHEMA: &str = "etas-run v1";

/// Declarative run file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub catalog: Option<PathBuf>,
    pub region: Option<Region>,
    pub m0: Option<f64>,
    pub t_start: Option<f64>,
    pub duration: Option<f64>,
    pub scale: String,
    pub omega_grid: Option<Vec<f64>>,
    pub minor_catalog: Option<PathBuf>,
    pub major_threshold: Option<f64>,
    pub initial: Option<EtasParams>,
    pub fit: FitOptions,
    pub threshold: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: RUN_SCHEMA.to_string(),
            catalog: None,
            region: None,
            m0: None,
            t_start: None,
            duration: None,
            scale: "ideal".to_string(),
            omega_grid: None,
            minor_catalog: None,
            major_threshold: None,
            initial: None,
            fit: FitOptions::default(),
            threshold: None,
            seed: None,
            out_dir: PathBuf::from("etas-run"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        if cfg.schema != RUN_SCHEMA {
            return Err(EtasError::Param(format!("{}: schema '{}' is not '{RUN_SCHEMA}'", path.display(), cfg.schema)));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.catalog.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.minor_catalog.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.out_dir);
        Ok(cfg)
    }

    /// Checks referenced files and option ranges.
    pub fn validate(&self) -> Result<()> {
        for p in self.catalog.iter().chain(&self.minor_catalog) {
            if !p.is_file() {
                return Err(EtasError::Param(format!("file not found: {}", p.display())));
            }
        }
        if let Some(r) = &self.region {
            r.validate()?;
        }
        if let Some(p) = &self.initial {
            p.validate()?;
        }
        if let Some(t) = self.threshold {
            if !(t > 0.5 && t <= 1.0) {
                return Err(EtasError::Param(format!("threshold {t} outside (0.5, 1]")));
            }
        }
        self.fit.optim.validate()?;
        Ok(())
    }
}

/// `background.json`: enough to rebuild the fitted field exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundFile {
    pub schema: String,
    pub region: Region,
    pub cell: f64,
    pub shape: BackgroundShape,
}

impl BackgroundFile {
    pub fn from_field(bg: &BackgroundField, cell: f64) -> Self {
        BackgroundFile {
            schema: "etas-background v1".to_string(),
            region: bg.region(),
            cell,
            shape: bg.shape().clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn into_field(self) -> BackgroundField {
        BackgroundField::from_shape(self.region, self.cell, self.shape)
    }
}
