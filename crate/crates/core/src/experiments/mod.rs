//! Grid sweeps of the matched bound and the derived loss / CRLB / NRMSE
//! columns.

pub mod output;
pub mod settings;
pub mod validate;

use std::path::PathBuf;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bound::{bound_point, BoundPoint, RegularizationPolicy};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec, ReferenceFamily, StochasticSystem};
use crate::moments::{estimate_triple_batched, InvalidSamplePolicy};
use crate::oracle::crlb;
use crate::transforms::TransformSet;

pub use output::{emit_csv, emit_svg, read_csv, Column, CSV_HEADER};

/// CSV marker for a zero bound, whose loss is minus infinity.
pub const LOSS_FLOOR_DB: f64 = -300.0;

/// Fraction of flagged grid points above which a run fails.
pub const MAX_FLAGGED_FRACTION: f64 = 0.2;

pub const DEFAULT_N_SAMPLES: u64 = 1_000_000;
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 200;

/// The four input setups `(a, b)` of the cubic regression study.
pub const CUBIC_SETUPS: [(f64, f64); 4] = [(0.0, 1.0), (1.0, 1.0), (0.0, 2.0), (2.0, 2.0)];

/// Evenly spaced parameter grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaGrid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl ThetaGrid {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        Self { min, max, steps }
    }

    pub fn single(theta: f64) -> Self {
        Self::new(theta, theta, 1)
    }

    /// Default grid for a model: Saleh (0.1..4, 40), Rician (0.05..2, 40),
    /// cubic (0.1..1, 19), reference families (0.5..2, 4).
    pub fn default_for(model: &ModelSpec) -> Self {
        match model.kind() {
            ModelKind::Saleh { .. } => Self::new(0.1, 4.0, 40),
            ModelKind::Rician { .. } => Self::new(0.05, 2.0, 40),
            ModelKind::Cubic { .. } => Self::new(0.1, 1.0, 19),
            ModelKind::Reference(_) => Self::new(0.5, 2.0, 4),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.min],
            n => {
                let step = (self.max - self.min) / (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        if i == n - 1 {
                            self.max
                        } else {
                            self.min + step * i as f64
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn validate<M: StochasticSystem + ?Sized>(&self, model: &M) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Validation(
                "theta grid needs at least one point".into(),
            ));
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::Validation("theta grid bounds must be finite".into()));
        }
        if self.steps > 1 && !(self.max > self.min) {
            return Err(Error::Validation(format!(
                "theta grid must be strictly increasing, got [{}, {}]",
                self.min, self.max
            )));
        }
        for theta in self.points() {
            model.check_theta(theta)?;
        }
        Ok(())
    }
}

/// Full description of one sweep.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub transforms: TransformSet,
    pub grid: ThetaGrid,
    pub n_samples: u64,
    /// Relative finite-difference step; `h = fd_rel * max(|theta|, 1)`.
    /// `None` uses the model's default.
    pub fd_rel: Option<f64>,
    pub seed: u64,
    pub regularization: RegularizationPolicy,
    pub bootstrap_replicates: usize,
    pub invalid_samples: InvalidSamplePolicy,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, transforms: TransformSet) -> Self {
        let grid = ThetaGrid::default_for(&model);
        Self {
            model,
            transforms,
            grid,
            n_samples: DEFAULT_N_SAMPLES,
            fd_rel: None,
            seed: 1,
            regularization: RegularizationPolicy::default(),
            bootstrap_replicates: DEFAULT_BOOTSTRAP_REPLICATES,
            invalid_samples: InvalidSamplePolicy::Abort,
            threads: None,
            csv: None,
            svg: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate(&self.model)?;
        self.regularization.validate()?;
        if self.n_samples < 2 {
            return Err(Error::Validation("n-samples must be at least 2".into()));
        }
        if let Some(fd) = self.fd_rel {
            if !(fd > 0.0 && fd.is_finite()) {
                return Err(Error::Validation(format!(
                    "fd-step must be positive, got {fd}"
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Validation("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; also a valid config file.
    pub fn echo(&self) -> String {
        let mut lines = vec![format!("model = {}", self.model.name())];
        match self.model.kind() {
            ModelKind::Saleh { a, b } | ModelKind::Cubic { a, b } => {
                lines.push(format!("a = {a}"));
                lines.push(format!("b = {b}"));
            }
            ModelKind::Rician { angle } => lines.push(format!("a = {angle}")),
            ModelKind::Reference(ReferenceFamily::GaussianMean { sigma2 }) => {
                lines.push(format!("sigma2 = {sigma2}"))
            }
            ModelKind::Reference(_) => {}
        }
        lines.push(format!("transforms = {}", self.transforms));
        lines.push(format!("theta-min = {}", self.grid.min));
        lines.push(format!("theta-max = {}", self.grid.max));
        lines.push(format!("theta-steps = {}", self.grid.steps));
        lines.push(format!("n-samples = {}", self.n_samples));
        lines.push(format!("seed = {}", self.seed));
        lines.push(format!(
            "fd-step = {}",
            self.fd_rel.unwrap_or(self.model.default_fd_rel())
        ));
        lines.push(format!("reg-mode = {}", self.regularization.mode_name()));
        lines.push(format!("reg-tol = {}", self.regularization.tolerance()));
        lines.join("\n") + "\n"
    }

    /// Short hex digest of [`echo`](Self::echo).
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// One row of a [`BoundCurve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub theta: f64,
    pub bound: Option<BoundPoint>,
    pub input_fisher: Option<f64>,
    pub loss_db: Option<f64>,
    pub crlb: Option<f64>,
    pub nrmse: Option<f64>,
    pub error: Option<String>,
}

impl CurvePoint {
    pub fn flagged(&self) -> bool {
        self.error.is_some()
    }

    pub fn value(&self) -> Option<f64> {
        self.bound.as_ref().map(|b| b.value)
    }

    pub fn rel_se(&self) -> Option<f64> {
        self.bound.as_ref().and_then(|b| b.rel_se)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub label: String,
    pub config_echo: String,
    pub fingerprint: String,
    pub points: Vec<CurvePoint>,
}

impl BoundCurve {
    pub fn flagged(&self) -> usize {
        self.points.iter().filter(|p| p.flagged()).count()
    }

    /// Fails when more than [`MAX_FLAGGED_FRACTION`] of the points are flagged.
    pub fn check(&self) -> Result<()> {
        let flagged = self.flagged();
        let total = self.points.len();
        if flagged as f64 > MAX_FLAGGED_FRACTION * total as f64 {
            Err(Error::RunFailed { flagged, total })
        } else {
            Ok(())
        }
    }

    pub fn point_at(&self, theta: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| (p.theta - theta).abs() < 1e-9)
    }
}

/// `10 log10(bound / input_fisher)`, with a zero bound mapped to
/// [`LOSS_FLOOR_DB`].
pub fn information_loss_db(bound_value: f64, input_fisher: f64) -> f64 {
    if !(bound_value > 0.0) {
        return LOSS_FLOOR_DB;
    }
    (10.0 * (bound_value / input_fisher).log10()).max(LOSS_FLOOR_DB)
}

/// `sqrt(crlb) / |theta|`.
pub fn nrmse(crlb_value: f64, theta: f64) -> Result<f64> {
    if theta == 0.0 || !theta.is_finite() {
        return Err(Error::Domain {
            model: "nrmse".into(),
            theta,
            domain: "theta != 0".into(),
        });
    }
    Ok(crlb_value.sqrt() / theta.abs())
}

/// Finite-difference step at `theta`, halved until the stencil fits the domain.
pub fn fd_step<M: StochasticSystem + ?Sized>(model: &M, theta: f64, fd_rel: Option<f64>) -> f64 {
    let mut h = fd_rel.unwrap_or(model.default_fd_rel()) * theta.abs().max(1.0);
    let domain = model.domain();
    for _ in 0..64 {
        if domain.contains(theta - h) && domain.contains(theta + h) {
            break;
        }
        h *= 0.5;
    }
    h
}

/// Sampling settings for a single bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSettings {
    pub n_samples: u64,
    pub seed: u64,
    pub fd_rel: Option<f64>,
    pub regularization: RegularizationPolicy,
    pub bootstrap_replicates: usize,
    pub invalid_samples: InvalidSamplePolicy,
}

impl Default for PointSettings {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_N_SAMPLES,
            seed: 1,
            fd_rel: None,
            regularization: RegularizationPolicy::default(),
            bootstrap_replicates: DEFAULT_BOOTSTRAP_REPLICATES,
            invalid_samples: InvalidSamplePolicy::Abort,
        }
    }
}

const BOOTSTRAP_SALT: u64 = 0x6A09_E667_F3BC_C908;

/// Estimates moments at `theta` and returns the matched bound with its
/// bootstrap relative standard error.
pub fn evaluate_point<M: StochasticSystem + ?Sized>(
    model: &M,
    set: &TransformSet,
    theta: f64,
    settings: &PointSettings,
) -> Result<BoundPoint> {
    model.check_theta(theta)?;
    let h = fd_step(model, theta, settings.fd_rel);
    let batched = estimate_triple_batched(
        model,
        set,
        theta,
        h,
        settings.n_samples,
        settings.seed,
        settings.invalid_samples,
    )?;
    let mut point = bound_point(&batched.triple, settings.regularization)?;
    if settings.bootstrap_replicates >= 2 && point.value > 0.0 {
        let policy = settings.regularization;
        point.rel_se = batched
            .bootstrap_sd(
                settings.bootstrap_replicates,
                settings.seed ^ BOOTSTRAP_SALT,
                |t| bound_point(t, policy).map(|b| b.value),
            )
            .map(|sd| sd / point.value);
    }
    Ok(point)
}

fn curve_point(config: &ExperimentConfig, theta: f64) -> CurvePoint {
    let settings = PointSettings {
        n_samples: config.n_samples,
        seed: config.seed,
        fd_rel: config.fd_rel,
        regularization: config.regularization,
        bootstrap_replicates: config.bootstrap_replicates,
        invalid_samples: config.invalid_samples,
    };
    let input_fisher = config.model.input_fisher(theta);
    match evaluate_point(&config.model, &config.transforms, theta, &settings) {
        Ok(bound) => {
            let loss_db = input_fisher.map(|f| information_loss_db(bound.value, f));
            let crlb = crlb(bound.value, 1).ok();
            let nrmse = crlb.and_then(|c| nrmse(c, theta).ok());
            let error = bound
                .clipped
                .then(|| "negative quadratic form clipped to zero".to_string());
            CurvePoint {
                theta,
                bound: Some(bound),
                input_fisher,
                loss_db,
                crlb,
                nrmse,
                error,
            }
        }
        Err(err) => CurvePoint {
            theta,
            bound: None,
            input_fisher,
            loss_db: None,
            crlb: None,
            nrmse: None,
            error: Some(err.to_string()),
        },
    }
}

/// Evaluates every grid point. Per-point failures are recorded in the
/// point's `error` field; only an invalid configuration fails the sweep.
pub fn sweep(config: &ExperimentConfig) -> Result<BoundCurve> {
    config.validate()?;
    let grid = config.grid.points();
    let compute = || {
        grid.par_iter()
            .map(|&theta| curve_point(config, theta))
            .collect::<Vec<_>>()
    };
    let points = match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Validation(format!("cannot build thread pool: {e}")))?
            .install(compute),
        None => compute(),
    };
    Ok(BoundCurve {
        label: curve_label(&config.model),
        config_echo: config.echo(),
        fingerprint: config.fingerprint(),
        points,
    })
}

/// Runs the sweep, writes the configured outputs and applies the
/// flagged-point limit.
pub fn run_experiment(config: &ExperimentConfig) -> Result<BoundCurve> {
    let curve = sweep(config)?;
    if let Some(path) = &config.csv {
        emit_csv(&curve, path)?;
    }
    if let Some(path) = &config.svg {
        emit_svg(&curve, path, Column::default_for(&curve))?;
    }
    curve.check()?;
    Ok(curve)
}

fn curve_label(model: &ModelSpec) -> String {
    match model.kind() {
        ModelKind::Saleh { a, b } => format!("saleh (a={a}, b={b})"),
        ModelKind::Rician { .. } => "rician".into(),
        ModelKind::Cubic { a, b } => format!("cubic (a={a}, b={b})"),
        ModelKind::Reference(_) => model.name().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{parse_transform_spec, standard_transform_set};

    #[test]
    fn loss_values() {
        assert_eq!(information_loss_db(0.5, 0.5), 0.0);
        assert!((information_loss_db(0.05, 0.5) + 10.0).abs() < 1e-12);
        assert_eq!(information_loss_db(0.0, 0.5), LOSS_FLOOR_DB);
        assert_eq!(information_loss_db(1e-40, 1.0), LOSS_FLOOR_DB);
    }

    #[test]
    fn nrmse_values() {
        assert!((nrmse(0.04, 0.4).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(nrmse(1.0, 1.0).unwrap(), 1.0);
        assert!((nrmse(0.09, -0.3).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(nrmse(1.0, 0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn grids() {
        let g = ThetaGrid::new(0.1, 4.0, 40).points();
        assert_eq!(g.len(), 40);
        assert_eq!(g[39], 4.0);
        assert!((g[1] - 0.2).abs() < 1e-12 && (g[9] - 1.0).abs() < 1e-12);
        assert_eq!(ThetaGrid::single(0.0).points(), vec![0.0]);
        let saleh = ModelSpec::saleh(2.1587, 1.1517).unwrap();
        assert!(ThetaGrid::new(0.0, 1.0, 5).validate(&saleh).is_err());
        assert!(ThetaGrid::new(1.0, 0.5, 5).validate(&saleh).is_err());
        assert!(ThetaGrid::new(0.1, 4.0, 0).validate(&saleh).is_err());
    }

    #[test]
    fn fd_step_halves_into_domain() {
        let rician = ModelSpec::rician(0.3).unwrap();
        assert_eq!(fd_step(&rician, 1.0, None), 0.01);
        assert_eq!(fd_step(&rician, 3.0, None), 0.03);
        assert_eq!(fd_step(&rician, 0.004, None), 0.0025);
        let saleh = ModelSpec::saleh(1.0, 1.0).unwrap();
        assert!(fd_step(&saleh, 0.01, None) < 0.01);
    }

    #[test]
    fn gaussian_mean_single_point() {
        let model = ModelSpec::reference(ReferenceFamily::GaussianMean { sigma2: 1.0 }).unwrap();
        let mut config = ExperimentConfig::new(model, parse_transform_spec("z").unwrap());
        config.grid = ThetaGrid::single(0.0);
        config.n_samples = 100_000;
        let curve = run_experiment(&config).unwrap();
        assert_eq!(curve.points.len(), 1);
        let p = &curve.points[0];
        assert!((p.value().unwrap() - 1.0).abs() < 0.02);
        assert_eq!(p.input_fisher, Some(1.0));
        assert!(p.rel_se().unwrap() > 0.0);
    }

    #[test]
    fn failing_points_are_flagged() {
        // ln(max(|z|, 1e300)) is constant, so the covariance vanishes.
        let model = ModelSpec::rician(0.0).unwrap();
        let set = TransformSet::with_log_guard(vec![crate::TransformKind::LogAbs], 1e300).unwrap();
        let mut config = ExperimentConfig::new(model, set);
        config.grid = ThetaGrid::new(0.5, 1.0, 3);
        config.n_samples = 1000;
        let curve = sweep(&config).unwrap();
        assert_eq!(curve.flagged(), 3);
        assert!(matches!(
            curve.check(),
            Err(Error::RunFailed {
                flagged: 3,
                total: 3
            })
        ));
        assert!(matches!(
            run_experiment(&config),
            Err(Error::RunFailed { .. })
        ));
    }

    #[test]
    fn echo_and_fingerprint_are_stable() {
        let config = ExperimentConfig::new(
            ModelSpec::saleh(2.1587, 1.1517).unwrap(),
            standard_transform_set(),
        );
        assert!(config
            .echo()
            .contains("transforms = z,z2,z3,z4,abs,logabs,logabs2\n"));
        assert!(config.echo().contains("fd-step = 0.01\n"));
        assert_eq!(config.fingerprint(), config.clone().fingerprint());
        assert_eq!(config.fingerprint().len(), 12);
        let mut other = config.clone();
        other.seed = 2;
        assert_ne!(config.fingerprint(), other.fingerprint());
    }
}
