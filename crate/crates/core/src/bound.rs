//! Fisher information lower bounds from transformation moments.
//!
//! For any weights `beta` and offset `alpha`, Cauchy-Schwarz gives
//!
//! ```text
//! F(theta) >= (beta' dmu)^2 / (beta' R beta + (alpha - beta' mu)^2)
//! ```
//!
//! where `mu` and `R` are the mean and covariance of `phi(z)` and `dmu` is
//! the derivative of `mu` with respect to `theta`. The offset is optimal at
//! `alpha = beta' mu`; maximizing over `beta` gives the matched bound
//! `dmu' R^-1 dmu`, attained by `beta` proportional to `R^-1 dmu`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, SymmetricEigen};
use crate::moments::MomentTriple;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// How `R^-1` is realized when the covariance is ill-conditioned.
///
/// `lambda_max` is the largest eigenvalue of the unit-diagonal rescaling of
/// `R`; see [`solve_covariance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizationPolicy {
    /// Solve with `R + lambda_rel * lambda_max * I`.
    Ridge { lambda_rel: f64 },
    /// Pseudo-inverse on eigenvalues at least `rank_tol_rel * lambda_max`.
    TruncatedSpectrum { rank_tol_rel: f64 },
}

impl Default for RegularizationPolicy {
    fn default() -> Self {
        RegularizationPolicy::TruncatedSpectrum {
            rank_tol_rel: 1e-10,
        }
    }
}

impl RegularizationPolicy {
    pub const DEFAULT_LAMBDA_REL: f64 = 1e-10;
    pub const DEFAULT_RANK_TOL_REL: f64 = 1e-10;

    pub fn ridge(lambda_rel: f64) -> Result<Self> {
        let p = RegularizationPolicy::Ridge { lambda_rel };
        p.validate()?;
        Ok(p)
    }

    pub fn truncated(rank_tol_rel: f64) -> Result<Self> {
        let p = RegularizationPolicy::TruncatedSpectrum { rank_tol_rel };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (name, value) = match *self {
            RegularizationPolicy::Ridge { lambda_rel } => ("lambda_rel", lambda_rel),
            RegularizationPolicy::TruncatedSpectrum { rank_tol_rel } => {
                ("rank_tol_rel", rank_tol_rel)
            }
        };
        if value > 0.0 && value < 1.0 {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "{name} must lie in (0, 1), got {value}"
            )))
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            RegularizationPolicy::Ridge { .. } => "ridge",
            RegularizationPolicy::TruncatedSpectrum { .. } => "truncated",
        }
    }

    pub fn tolerance(&self) -> f64 {
        match *self {
            RegularizationPolicy::Ridge { lambda_rel } => lambda_rel,
            RegularizationPolicy::TruncatedSpectrum { rank_tol_rel } => rank_tol_rel,
        }
    }
}

/// Result of applying the regularized inverse covariance to a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSolve {
    pub x: DVector<f64>,
    /// Largest over smallest retained (or shifted) eigenvalue.
    pub cond: f64,
    pub effective_rank: usize,
}

/// The matched bound at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedBound {
    pub value: f64,
    /// `R^-1 dmu`, proportional to the optimal weights.
    pub weights: DVector<f64>,
    pub cond: f64,
    pub effective_rank: usize,
    /// Set when a tiny negative quadratic form was clipped to zero.
    pub clipped: bool,
}

/// Per-parameter summary of the matched bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundPoint {
    pub theta: f64,
    pub value: f64,
    pub weights: DVector<f64>,
    pub unit_weights: Option<DVector<f64>>,
    pub dmu: DVector<f64>,
    pub cond: f64,
    pub effective_rank: usize,
    pub clipped: bool,
    /// Bootstrap relative standard error of `value`, when estimated.
    pub rel_se: Option<f64>,
}

/// Spectral view of `R` under a policy: per-eigenvalue inverse factors.
struct Spectral {
    eigen: SymmetricEigen,
    inverse: Vec<f64>,
    cond: f64,
    rank: usize,
    shift: f64,
}

fn check_symmetric(r: &DMatrix<f64>) -> Result<()> {
    if r.nrows() != r.ncols() || r.nrows() == 0 {
        return Err(Error::Validation(format!(
            "covariance must be a non-empty square matrix, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(
            "covariance has non-finite entries".into(),
        ));
    }
    let scale = r.amax().max(f64::MIN_POSITIVE);
    let asym = (r - r.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::Validation(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

fn check_len(name: &str, v: &DVector<f64>, dim: usize) -> Result<()> {
    if v.len() == dim {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} has length {}, expected {dim}",
            v.len()
        )))
    }
}

fn spectral(r: &DMatrix<f64>, policy: RegularizationPolicy) -> Result<Spectral> {
    check_symmetric(r)?;
    policy.validate()?;
    let eigen = jacobi_eigen(r)?;
    let lambda_max = eigen.max_value();
    if !(lambda_max > 0.0) {
        return Err(Error::DegenerateCovariance(format!(
            "largest eigenvalue is {lambda_max:e}"
        )));
    }
    let (inverse, cond, rank, shift) = match policy {
        RegularizationPolicy::TruncatedSpectrum { rank_tol_rel } => {
            let floor = rank_tol_rel * lambda_max;
            let inverse: Vec<f64> = eigen
                .values
                .iter()
                .map(|&l| if l >= floor { 1.0 / l } else { 0.0 })
                .collect();
            let kept: Vec<f64> = eigen
                .values
                .iter()
                .copied()
                .filter(|&l| l >= floor)
                .collect();
            let smallest = kept.last().copied().unwrap_or(lambda_max);
            (inverse, lambda_max / smallest, kept.len(), 0.0)
        }
        RegularizationPolicy::Ridge { lambda_rel } => {
            let shift = lambda_rel * lambda_max;
            let inverse: Vec<f64> = eigen.values.iter().map(|&l| 1.0 / (l + shift)).collect();
            let smallest = eigen.values[eigen.values.len() - 1] + shift;
            if !(smallest > 0.0) {
                return Err(Error::DegenerateCovariance(format!(
                    "shifted covariance is not positive definite (smallest eigenvalue {smallest:e})"
                )));
            }
            (
                inverse,
                (lambda_max + shift) / smallest,
                eigen.values.len(),
                shift,
            )
        }
    };
    Ok(Spectral {
        eigen,
        inverse,
        cond,
        rank,
        shift,
    })
}

impl Spectral {
    /// `sum_i f(inverse_i) (q_i' v) q_i`
    fn apply(&self, v: &DVector<f64>, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let q = &self.eigen.vectors;
        let mut out = DVector::zeros(v.len());
        for (i, &inv) in self.inverse.iter().enumerate() {
            if inv == 0.0 {
                continue;
            }
            let col = q.column(i);
            let coef = f(inv) * col.dot(v);
            out.axpy(coef, &col, 1.0);
        }
        out
    }
}

/// `1 / sqrt(R_ii)`, or 1 where the variance is not positive.
fn equilibration(r: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(r.nrows(), |i, _| {
        let d = r[(i, i)];
        if d > 0.0 {
            1.0 / d.sqrt()
        } else {
            1.0
        }
    })
}

/// Applies the regularized inverse of `r` to `v`.
///
/// The policy acts on the unit-diagonal rescaling `S R S` with
/// `S = diag(R_ii^-1/2)`, and the solution is mapped back as
/// `S (S R S)^-1 S v`. Without regularization this equals `R^-1 v`; the
/// rescaling only keeps statistics of very different magnitude (such as
/// `z^4` next to `ln|z|`) from being truncated as noise. Tolerances and
/// the reported condition number refer to the rescaled matrix.
pub fn solve_covariance(
    r: &DMatrix<f64>,
    v: &DVector<f64>,
    policy: RegularizationPolicy,
) -> Result<CovarianceSolve> {
    check_symmetric(r)?;
    check_len("right-hand side", v, r.nrows())?;
    let s = equilibration(r);
    let c = DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] * s[i] * s[j]);
    let spec = spectral(&c, policy)?;
    let rhs = v.component_mul(&s);
    let y = match policy {
        RegularizationPolicy::Ridge { .. } => {
            let shifted = &c + DMatrix::<f64>::identity(c.nrows(), c.nrows()) * spec.shift;
            let chol = Cholesky::new(shifted).ok_or_else(|| {
                Error::DegenerateCovariance("shifted covariance is not positive definite".into())
            })?;
            chol.solve(&rhs)
        }
        RegularizationPolicy::TruncatedSpectrum { .. } => spec.apply(&rhs, |inv| inv),
    };
    Ok(CovarianceSolve {
        x: y.component_mul(&s),
        cond: spec.cond,
        effective_rank: spec.rank,
    })
}

/// The matched bound `dmu' R^-1 dmu` with its weights.
pub fn matched_bound(
    dmu: &DVector<f64>,
    r: &DMatrix<f64>,
    policy: RegularizationPolicy,
) -> Result<MatchedBound> {
    check_len("dmu", dmu, r.nrows())?;
    let solve = solve_covariance(r, dmu, policy)?;
    let raw = dmu.dot(&solve.x);
    if !raw.is_finite() {
        return Err(Error::DegenerateCovariance(format!(
            "quadratic form is {raw}"
        )));
    }
    Ok(MatchedBound {
        value: raw.max(0.0),
        clipped: raw < 0.0,
        weights: solve.x,
        cond: solve.cond,
        effective_rank: solve.effective_rank,
    })
}

/// `R^-1/2 dmu` normalized to unit length: the principal eigenvector of
/// `R^-1/2 dmu dmu' R^-1/2`. Uses the symmetric square root of `R` itself,
/// so the policy applies to the unscaled spectrum here.
pub fn optimal_weights_normalized(
    dmu: &DVector<f64>,
    r: &DMatrix<f64>,
    policy: RegularizationPolicy,
) -> Result<DVector<f64>> {
    check_len("dmu", dmu, r.nrows())?;
    let spec = spectral(r, policy)?;
    let w = spec.apply(dmu, f64::sqrt);
    let norm = w.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateWeights(
            "dmu has no component in the retained covariance eigenspace".into(),
        ));
    }
    Ok(w / norm)
}

/// Weighted bound for arbitrary `beta` and offset `alpha`.
pub fn generic_bound(
    beta: &DVector<f64>,
    alpha: f64,
    mu: &DVector<f64>,
    dmu: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<f64> {
    let dim = r.nrows();
    check_len("beta", beta, dim)?;
    check_len("mu", mu, dim)?;
    check_len("dmu", dmu, dim)?;
    if r.ncols() != dim {
        return Err(Error::Validation("covariance must be square".into()));
    }
    if beta.iter().all(|&b| b == 0.0) {
        return Err(Error::DegenerateWeights("beta is identically zero".into()));
    }
    let numerator = beta.dot(dmu).powi(2);
    let offset = alpha - beta.dot(mu);
    let denominator = (r * beta).dot(beta) + offset * offset;
    if !(denominator > 0.0) {
        return Err(Error::DegenerateWeights(format!(
            "score variance is {denominator:e} for the given weights"
        )));
    }
    Ok(numerator / denominator)
}

/// The offset maximizing [`generic_bound`] for fixed `beta`: `beta' mu`.
pub fn optimal_alpha(beta: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    beta.dot(mu)
}

/// Central difference `(mu(theta + h) - mu(theta - h)) / 2h`.
pub fn derivative_mu(triple: &MomentTriple) -> DVector<f64> {
    (&triple.at_plus.mean - &triple.at_minus.mean) / (2.0 * triple.h)
}

/// Matched bound for a stencil estimate, evaluated on the centre covariance.
pub fn bound_point(triple: &MomentTriple, policy: RegularizationPolicy) -> Result<BoundPoint> {
    let dmu = derivative_mu(triple);
    let cov = &triple.at_center.cov;
    let matched = matched_bound(&dmu, cov, policy)?;
    let unit_weights = optimal_weights_normalized(&dmu, cov, policy).ok();
    Ok(BoundPoint {
        theta: triple.theta(),
        value: matched.value,
        weights: matched.weights,
        unit_weights,
        dmu,
        cond: matched.cond,
        effective_rank: matched.effective_rank,
        clipped: matched.clipped,
        rel_se: None,
    })
}
