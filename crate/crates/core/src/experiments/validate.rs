//! Self-checks of the bound machinery against closed forms and independent
//! linear algebra.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::bound::{
    generic_bound, matched_bound, optimal_alpha, optimal_weights_normalized, RegularizationPolicy,
};
use crate::error::{Error, Result};
use crate::models::draws::{DrawSource, DrawStream};
use crate::models::{ModelSpec, ReferenceFamily, StochasticSystem};
use crate::moments::{estimate_triple, MomentTriple};
use crate::oracle::{fim_closed_form, fim_quadrature, QuadratureSpec};
use crate::transforms::{parse_transform_spec, standard_transform_set};

use super::{evaluate_point, fd_step, PointSettings, DEFAULT_N_SAMPLES};

/// Outcome of one comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    /// Quantity compared against `limit`; the check passes when
    /// `measured <= limit`.
    pub measured: f64,
    pub limit: f64,
}

impl Check {
    pub fn new(label: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            label: label.into(),
            measured,
            limit,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.limit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }

    /// Largest `measured - limit` over all checks.
    pub fn worst_margin(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.measured - c.limit)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn merge(mut self, other: SuiteReport) -> Self {
        self.checks.extend(other.checks);
        self
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed = self.failures().count();
        writeln!(
            f,
            "{}: {} ({} checks, {} failed)",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checks.len(),
            failed
        )?;
        for c in self.failures() {
            writeln!(
                f,
                "  {}: measured {:.3e} > limit {:.3e}",
                c.label, c.measured, c.limit
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Tightness,
    Conservativeness,
    Matching,
    AppendixAlpha,
    Monotonicity,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Tightness,
        Suite::Conservativeness,
        Suite::Matching,
        Suite::AppendixAlpha,
        Suite::Monotonicity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tightness => "tightness",
            Suite::Conservativeness => "conservativeness",
            Suite::Matching => "matching",
            Suite::AppendixAlpha => "appendix_alpha",
            Suite::Monotonicity => "monotonicity",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite '{s}'")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Runs a suite with its standard sizes.
pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    Ok(match suite {
        Suite::Tightness => tightness(DEFAULT_N_SAMPLES, 1)?,
        Suite::Conservativeness => conservativeness(DEFAULT_N_SAMPLES, &[1, 2, 3, 4, 5])?,
        Suite::Matching => {
            eigen_identity(50, 11)?.merge(matching_dominance(DEFAULT_N_SAMPLES, 200, 12)?)
        }
        Suite::AppendixAlpha => alpha_optimality(20, 100, 13)?.merge(scale_invariance(20, 14)?),
        Suite::Monotonicity => transform_monotonicity(DEFAULT_N_SAMPLES, 15)?,
    })
}

pub const TIGHTNESS_TOL: f64 = 0.02;
pub const EIGEN_TOL: f64 = 1e-10;
pub const DOMINANCE_TOL: f64 = 1e-10;
pub const SCALE_TOL: f64 = 1e-12;
pub const MONOTONICITY_TOL: f64 = 1e-10;
pub const CONSERVATIVE_SIGMAS: f64 = 3.0;

/// Sufficient-statistic banks for the reference families reach the
/// closed-form information.
pub fn tightness(n_samples: u64, seed: u64) -> Result<SuiteReport> {
    let cases = [
        (ReferenceFamily::GaussianMean { sigma2: 1.0 }, "z"),
        (ReferenceFamily::GaussianVariance, "z2"),
        (ReferenceFamily::ExponentialRate, "z"),
        (ReferenceFamily::Poisson, "z"),
    ];
    let settings = PointSettings {
        n_samples,
        seed,
        bootstrap_replicates: 0,
        ..Default::default()
    };
    let mut report = SuiteReport::new("tightness");
    for (family, bank) in cases {
        let model = ModelSpec::reference(family)?;
        let set = parse_transform_spec(bank)?;
        for theta in [0.5, 1.0, 2.0] {
            let point = evaluate_point(&model, &set, theta, &settings)?;
            let ratio = point.value / fim_closed_form(&model, theta)?;
            report.checks.push(Check::new(
                format!("{} theta={theta} ratio={ratio:.5}", model.name()),
                (ratio - 1.0).abs(),
                TIGHTNESS_TOL,
            ));
        }
    }
    Ok(report)
}

/// The Rician seven-statistic bound stays below the quadrature Fisher
/// information, up to three bootstrap standard errors.
pub fn conservativeness(n_samples: u64, seeds: &[u64]) -> Result<SuiteReport> {
    let model = ModelSpec::rician(crate::models::DEFAULT_RICIAN_ANGLE)?;
    let set = standard_transform_set();
    let spec = QuadratureSpec::default();
    let mut report = SuiteReport::new("conservativeness");
    for theta in [0.25, 0.5, 1.0, 1.5, 2.0] {
        let fisher = fim_quadrature(&model, theta, &spec)?;
        for &seed in seeds {
            let settings = PointSettings {
                n_samples,
                seed,
                ..Default::default()
            };
            let point = evaluate_point(&model, &set, theta, &settings)?;
            let eps = point
                .rel_se
                .ok_or_else(|| Error::Validation(format!("no bootstrap error at theta={theta}")))?;
            // Passes when value / (F (1 + 3 eps)) <= 1.
            report.checks.push(Check::new(
                format!(
                    "rician theta={theta} seed={seed} bound={:.6} fisher={fisher:.6}",
                    point.value
                ),
                point.value / (fisher * (1.0 + CONSERVATIVE_SIGMAS * eps)),
                1.0,
            ));
        }
    }
    Ok(report)
}

/// Random symmetric positive definite matrix with moderate conditioning.
pub fn random_spd(draws: &mut DrawStream, dim: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| draws.next_normal());
    let mut r = &a * a.transpose() / dim as f64;
    for i in 0..dim {
        r[(i, i)] += 0.5;
    }
    r
}

pub fn random_vector(draws: &mut DrawStream, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| draws.next_normal())
}

/// The normalized optimal weights and the matched bound agree with the
/// dominant eigenpair of the explicitly formed `R^{-1/2} dmu dmu^T R^{-1/2}`.
pub fn eigen_identity(fixtures: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("eigen identity");
    let policy = RegularizationPolicy::default();
    for i in 0..fixtures {
        let mut draws = DrawSource::new(seed, i as u64).stream();
        let r = random_spd(&mut draws, 7);
        let dmu = random_vector(&mut draws, 7);

        let eig = nalgebra::SymmetricEigen::new(r.clone());
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let r_inv_half = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let v = &r_inv_half * &dmu;
        let d = &v * v.transpose();
        let d_eig = nalgebra::SymmetricEigen::new(d);
        let top = d_eig.eigenvalues.imax();
        let zeta = d_eig.eigenvalues[top];
        let d1 = d_eig.eigenvectors.column(top).into_owned();

        let matched = matched_bound(&dmu, &r, policy)?;
        let w = optimal_weights_normalized(&dmu, &r, policy)?;
        let diff = (&w - &d1).amax().min((&w + &d1).amax());
        report.checks.push(Check::new(
            format!("fixture {i} eigenvector"),
            diff,
            EIGEN_TOL,
        ));
        report.checks.push(Check::new(
            format!("fixture {i} eigenvalue"),
            (zeta - matched.value).abs() / matched.value,
            EIGEN_TOL,
        ));
    }
    Ok(report)
}

/// No weight vector beats the matched bound on Rician moments.
pub fn matching_dominance(n_samples: u64, trials: usize, seed: u64) -> Result<SuiteReport> {
    let model = ModelSpec::rician(crate::models::DEFAULT_RICIAN_ANGLE)?;
    let set = standard_transform_set();
    let theta = 1.0;
    let triple = estimate_triple(
        &model,
        &set,
        theta,
        fd_step(&model, theta, None),
        n_samples,
        seed,
    )?;
    let (mu, dmu, r) = moments_at_center(&triple);
    let matched = matched_bound(&dmu, &r, RegularizationPolicy::default())?.value;
    let mut report = SuiteReport::new("matching dominance");
    for i in 0..trials {
        let mut draws = DrawSource::new(seed ^ 0xA5A5, i as u64).stream();
        let beta = random_vector(&mut draws, set.len());
        let g = generic_bound(&beta, optimal_alpha(&beta, &mu), &mu, &dmu, &r)?;
        report.checks.push(Check::new(
            format!("beta {i}"),
            (g - matched) / matched,
            DOMINANCE_TOL,
        ));
    }
    Ok(report)
}

fn moments_at_center(triple: &MomentTriple) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
    (
        triple.at_center.mean.clone(),
        crate::bound::derivative_mu(triple),
        triple.at_center.cov.clone(),
    )
}

/// Moving the offset away from its optimum strictly lowers the bound.
pub fn alpha_optimality(fixtures: usize, offsets: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("alpha optimality");
    for i in 0..fixtures {
        let mut draws = DrawSource::new(seed, i as u64).stream();
        let r = random_spd(&mut draws, 7);
        let mu = random_vector(&mut draws, 7);
        let dmu = random_vector(&mut draws, 7);
        let beta = random_vector(&mut draws, 7);
        let alpha = optimal_alpha(&beta, &mu);
        let best = generic_bound(&beta, alpha, &mu, &dmu, &r)?;
        let mut worst_gap = f64::INFINITY;
        for _ in 0..offsets {
            let mut delta = 0.0;
            while delta == 0.0 {
                delta = 2.0 * draws.next_uniform() - 1.0;
            }
            let g = generic_bound(&beta, alpha + delta, &mu, &dmu, &r)?;
            worst_gap = worst_gap.min(best - g);
        }
        // Relative gap, negated: passes only when every shifted offset is
        // strictly worse.
        report.checks.push(Check::new(
            format!("fixture {i} min gap {worst_gap:.3e}"),
            -worst_gap / best,
            -f64::MIN_POSITIVE,
        ));
    }
    Ok(report)
}

/// Rescaling the weights leaves the bound unchanged.
pub fn scale_invariance(fixtures: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("scale invariance");
    for i in 0..fixtures {
        let mut draws = DrawSource::new(seed, i as u64).stream();
        let r = random_spd(&mut draws, 7);
        let mu = random_vector(&mut draws, 7);
        let dmu = random_vector(&mut draws, 7);
        let beta = random_vector(&mut draws, 7);
        let base = generic_bound(&beta, optimal_alpha(&beta, &mu), &mu, &dmu, &r)?;
        for c in [-3.0, 0.5, 10.0] {
            let scaled = &beta * c;
            let g = generic_bound(&scaled, optimal_alpha(&scaled, &mu), &mu, &dmu, &r)?;
            report.checks.push(Check::new(
                format!("fixture {i} c={c}"),
                (g - base).abs() / base.abs().max(f64::MIN_POSITIVE),
                SCALE_TOL,
            ));
        }
    }
    Ok(report)
}

/// Adding statistics never lowers the bound.
pub fn transform_monotonicity(n_samples: u64, seed: u64) -> Result<SuiteReport> {
    let model = ModelSpec::saleh(
        super::settings::DEFAULT_SALEH_A,
        super::settings::DEFAULT_SALEH_B,
    )?;
    let set = standard_transform_set();
    let theta = 1.0;
    let triple = estimate_triple(
        &model,
        &set,
        theta,
        fd_step(&model, theta, None),
        n_samples,
        seed,
    )?;
    let policy = RegularizationPolicy::default();
    let mut report = SuiteReport::new("transform monotonicity");
    let mut previous = 0.0;
    for len in 1..=set.len() {
        let sub = triple.prefix(len);
        let value = matched_bound(
            &crate::bound::derivative_mu(&sub),
            &sub.at_center.cov,
            policy,
        )?
        .value;
        report.checks.push(Check::new(
            format!("first {len} statistics: {value:.6}"),
            previous - value,
            MONOTONICITY_TOL,
        ));
        previous = value;
    }
    Ok(report)
}
