//! `key = value` run settings shared by config files and command-line flags.
//!
//! Keys match the long flag names of the `run` command. Blank lines and
//! lines starting with `#` are ignored.

use std::path::{Path, PathBuf};

use crate::bound::RegularizationPolicy;
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec, ReferenceFamily, DEFAULT_RICIAN_ANGLE};
use crate::transforms::{parse_transform_spec, standard_transform_set};

use super::{ExperimentConfig, ThetaGrid, CUBIC_SETUPS};

pub const DEFAULT_SALEH_A: f64 = 2.1587;
pub const DEFAULT_SALEH_B: f64 = 1.1517;

/// Unresolved settings; `None` means "use the default".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub model: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub sigma2: Option<f64>,
    pub transforms: Option<String>,
    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
    pub theta_steps: Option<usize>,
    pub n_samples: Option<u64>,
    pub seed: Option<u64>,
    pub fd_step: Option<f64>,
    pub reg_mode: Option<String>,
    pub reg_tol: Option<f64>,
    pub threads: Option<usize>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("invalid value '{value}' for '{key}'")))
}

impl RunSettings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", i + 1)))?;
            s.set(key.trim(), value.trim())?;
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = Some(value.to_string()),
            "a" => self.a = Some(parse_value(key, value)?),
            "b" => self.b = Some(parse_value(key, value)?),
            "sigma2" => self.sigma2 = Some(parse_value(key, value)?),
            "transforms" => self.transforms = Some(value.to_string()),
            "theta-min" => self.theta_min = Some(parse_value(key, value)?),
            "theta-max" => self.theta_max = Some(parse_value(key, value)?),
            "theta-steps" => self.theta_steps = Some(parse_value(key, value)?),
            "n-samples" => self.n_samples = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "fd-step" => self.fd_step = Some(parse_value(key, value)?),
            "reg-mode" => self.reg_mode = Some(value.to_string()),
            "reg-tol" => self.reg_tol = Some(parse_value(key, value)?),
            "threads" => self.threads = Some(parse_value(key, value)?),
            "csv" => self.csv = Some(PathBuf::from(value)),
            "svg" => self.svg = Some(PathBuf::from(value)),
            _ => return Err(Error::Parse(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }

    /// Fields set in `other` take precedence.
    pub fn overlay(mut self, other: RunSettings) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            model,
            a,
            b,
            sigma2,
            transforms,
            theta_min,
            theta_max,
            theta_steps,
            n_samples,
            seed,
            fd_step,
            reg_mode,
            reg_tol,
            threads,
            csv,
            svg
        );
        self
    }

    /// The model setups selected by `model`, `a`, `b` and `sigma2`.
    pub fn models(&self) -> Result<Vec<ModelSpec>> {
        let name = self
            .model
            .as_deref()
            .ok_or_else(|| Error::Validation("no model given".into()))?;
        let model = match name {
            "saleh" => ModelSpec::saleh(self.a.unwrap_or(DEFAULT_SALEH_A), self.b.unwrap_or(DEFAULT_SALEH_B))?,
            "rician" => ModelSpec::rician(self.a.unwrap_or(DEFAULT_RICIAN_ANGLE))?,
            "cubic" => {
                if self.a.is_none() && self.b.is_none() {
                    return CUBIC_SETUPS.iter().map(|&(a, b)| ModelSpec::cubic(a, b)).collect();
                }
                ModelSpec::cubic(self.a.unwrap_or(0.0), self.b.unwrap_or(1.0))?
            }
            "ref:gauss-mean" => ModelSpec::reference(ReferenceFamily::GaussianMean {
                sigma2: self.sigma2.unwrap_or(1.0),
            })?,
            "ref:gauss-var" => ModelSpec::reference(ReferenceFamily::GaussianVariance)?,
            "ref:exp" => ModelSpec::reference(ReferenceFamily::ExponentialRate)?,
            "ref:poisson" => ModelSpec::reference(ReferenceFamily::Poisson)?,
            other => {
                return Err(Error::Validation(format!(
                    "unknown model '{other}' (expected saleh, rician, cubic, ref:gauss-mean, ref:gauss-var, \
                     ref:exp or ref:poisson)"
                )))
            }
        };
        Ok(vec![model])
    }

    fn regularization(&self) -> Result<RegularizationPolicy> {
        let policy = match self.reg_mode.as_deref().unwrap_or("truncated") {
            "truncated" => RegularizationPolicy::truncated(
                self.reg_tol
                    .unwrap_or(RegularizationPolicy::DEFAULT_RANK_TOL_REL),
            )?,
            "ridge" => RegularizationPolicy::ridge(
                self.reg_tol
                    .unwrap_or(RegularizationPolicy::DEFAULT_LAMBDA_REL),
            )?,
            other => {
                return Err(Error::Validation(format!(
                    "unknown reg-mode '{other}' (expected truncated or ridge)"
                )))
            }
        };
        Ok(policy)
    }

    /// Builds one configuration per model setup. A cubic run without `a`
    /// and `b` expands to the four standard setups, whose output paths get
    /// an `_a<A>_b<B>` suffix.
    pub fn resolve(&self) -> Result<Vec<ExperimentConfig>> {
        let models = self.models()?;
        let transforms = match &self.transforms {
            Some(text) => parse_transform_spec(text)?,
            None => standard_transform_set(),
        };
        let regularization = self.regularization()?;
        let multiple = models.len() > 1;
        let mut configs = Vec::with_capacity(models.len());
        for model in models {
            let default_grid = ThetaGrid::default_for(&model);
            let suffix = match model.kind() {
                ModelKind::Cubic { a, b } if multiple => Some(format!("_a{a}_b{b}")),
                _ => None,
            };
            let mut config = ExperimentConfig::new(model, transforms.clone());
            config.grid = ThetaGrid::new(
                self.theta_min.unwrap_or(default_grid.min),
                self.theta_max.unwrap_or(default_grid.max),
                self.theta_steps.unwrap_or(default_grid.steps),
            );
            if let Some(n) = self.n_samples {
                config.n_samples = n;
            }
            if let Some(seed) = self.seed {
                config.seed = seed;
            }
            config.fd_rel = self.fd_step;
            config.regularization = regularization;
            config.threads = self.threads;
            config.csv = self
                .csv
                .as_deref()
                .map(|p| with_suffix(p, suffix.as_deref()));
            config.svg = self
                .svg
                .as_deref()
                .map(|p| with_suffix(p, suffix.as_deref()));
            config.validate()?;
            configs.push(config);
        }
        Ok(configs)
    }
}

fn with_suffix(path: &Path, suffix: Option<&str>) -> PathBuf {
    let Some(suffix) = suffix else {
        return path.to_path_buf();
    };
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}
