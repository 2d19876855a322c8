//! Reference Fisher information: closed forms and numerical quadrature of
//! `F(theta) = E[(d ln p / d theta)^2]` for systems with an analytic density.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::models::{StochasticSystem, Support};

/// Maximum bisection depth of any quadrature panel.
pub const MAX_LEVELS: u32 = 30;
const MAX_PANELS: usize = 20_000;
const INITIAL_PANELS: usize = 16;
const MAX_COUNT: u64 = 10_000_000;

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Numerical settings for [`fim_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    /// Relative step in `theta` for the central-difference score.
    pub fd_step_theta: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            fd_step_theta: 1e-5,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-2) {
            return Err(Error::Validation(format!(
                "rel_tol must lie in (0, 1e-2), got {}",
                self.rel_tol
            )));
        }
        if !(self.fd_step_theta > 0.0 && self.fd_step_theta.is_finite()) {
            return Err(Error::Validation(format!(
                "fd_step_theta must be positive, got {}",
                self.fd_step_theta
            )));
        }
        Ok(())
    }
}

/// Gauss-Kronrod estimate over `[a, b]`: (kronrod, gauss).
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (i, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let pair = f(center - half * x) + f(center + half * x);
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, gauss * half)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    level: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`,
/// bisecting the panel with the largest error until the summed error is
/// below `rel_tol` times the summed estimate.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let make = |a: f64, b: f64, level: u32| {
        let (k, g) = gk15(&f, a, b);
        Panel {
            a,
            b,
            value: k,
            error: (k - g).abs(),
            level,
        }
    };
    let width = (b - a) / INITIAL_PANELS as f64;
    let mut heap: BinaryHeap<Panel> = (0..INITIAL_PANELS)
        .map(|i| make(a + width * i as f64, a + width * (i + 1) as f64, 0))
        .collect();
    let mut previous = f64::NAN;
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if !total.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureFailure {
                last: total,
                previous,
            });
        }
        if error <= rel_tol * total.abs() || error == 0.0 {
            return Ok(total);
        }
        let worst = heap.pop().expect("non-empty panel set");
        if worst.level >= MAX_LEVELS || heap.len() >= MAX_PANELS {
            return Err(Error::QuadratureFailure {
                last: total,
                previous,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(make(worst.a, mid, worst.level + 1));
        heap.push(make(mid, worst.b, worst.level + 1));
        previous = total;
    }
}

/// Integrates `g(z)` over a half line `[0, inf)` via `z = t / (1 - t)`.
fn integrate_half_line(g: impl Fn(f64) -> f64, rel_tol: f64) -> Result<f64> {
    integrate_adaptive(
        |t| {
            let s = 1.0 - t;
            let value = g(t / s) / (s * s);
            if value.is_finite() {
                value
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        rel_tol,
    )
}

fn integrate_support(
    support: Support,
    g: impl Fn(f64) -> f64,
    mass: impl Fn(f64) -> f64,
    rel_tol: f64,
) -> Result<f64> {
    match support {
        Support::NonNegative => integrate_half_line(g, rel_tol),
        Support::Real => {
            let upper = integrate_half_line(&g, rel_tol)?;
            let lower = integrate_half_line(|z| g(-z), rel_tol)?;
            Ok(upper + lower)
        }
        Support::Counting => {
            let mut total = 0.0;
            let mut covered = 0.0;
            let mut last_term = 0.0;
            for k in 0..MAX_COUNT {
                let z = k as f64;
                let term = g(z);
                total += term;
                covered += mass(z);
                // Stop once the probability left in the tail is negligible
                // and the summand has stopped growing.
                if 1.0 - covered <= rel_tol
                    && term <= last_term
                    && term.abs() <= rel_tol * total.abs()
                {
                    return Ok(total);
                }
                last_term = term;
            }
            Err(Error::QuadratureFailure {
                last: total,
                previous: total - last_term,
            })
        }
    }
}

fn density<'a, M: StochasticSystem + ?Sized>(
    model: &'a M,
    theta: f64,
) -> Result<(Support, impl Fn(f64, f64) -> f64 + 'a)> {
    let unsupported =
        || Error::Unsupported(format!("model `{}` has no analytic density", model.name()));
    let support = model.support().ok_or_else(unsupported)?;
    model.pdf(0.0, theta).ok_or_else(unsupported)?;
    Ok((support, move |z, t| model.pdf(z, t).unwrap_or(0.0)))
}

/// Input-side (closed-form) Fisher information of the system.
pub fn fim_closed_form<M: StochasticSystem + ?Sized>(model: &M, theta: f64) -> Result<f64> {
    model.check_theta(theta)?;
    model.input_fisher(theta).ok_or_else(|| {
        Error::Unsupported(format!(
            "model `{}` has no closed-form Fisher information",
            model.name()
        ))
    })
}

/// Fisher information of the output density by quadrature, with the score
/// taken as a central difference of `ln p` in `theta`.
pub fn fim_quadrature<M: StochasticSystem + ?Sized>(
    model: &M,
    theta: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    model.check_theta(theta)?;
    let (support, pdf) = density(model, theta)?;
    let delta = spec.fd_step_theta * theta.abs().max(1.0);
    let integrand = |z: f64| {
        let p = pdf(z, theta);
        if !(p > 0.0) {
            return 0.0;
        }
        let lp = pdf(z, theta + delta).ln();
        let lm = pdf(z, theta - delta).ln();
        let score = (lp - lm) / (2.0 * delta);
        let value = score * score * p;
        if value.is_finite() {
            value
        } else {
            0.0
        }
    };
    integrate_support(support, integrand, |z| pdf(z, theta), spec.rel_tol)
}

/// Total probability of the analytic density at `theta`.
pub fn density_mass<M: StochasticSystem + ?Sized>(
    model: &M,
    theta: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    model.check_theta(theta)?;
    let (support, pdf) = density(model, theta)?;
    integrate_support(support, |z| pdf(z, theta), |z| pdf(z, theta), spec.rel_tol)
}

/// Cramer-Rao bound `1 / (n F)` on the variance of an unbiased estimator.
pub fn crlb(fisher_value: f64, n_samples: u64) -> Result<f64> {
    if !(fisher_value > 0.0) || !fisher_value.is_finite() {
        return Err(Error::DegenerateInformation(fisher_value));
    }
    if n_samples == 0 {
        return Err(Error::Validation("sample count must be at least 1".into()));
    }
    Ok(1.0 / (n_samples as f64 * fisher_value))
}

/// Parameter values of the stored Rician reference table.
pub const RICIAN_FIXTURE_THETAS: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 2.0];
pub const RICIAN_FIXTURE_REL_TOL: f64 = 1e-10;

/// Rician Fisher information at [`RICIAN_FIXTURE_THETAS`] as CSV text with
/// columns `theta,fim,rel_tol`.
pub fn rician_fixture_csv(rel_tol: f64) -> Result<String> {
    let model = crate::models::ModelSpec::rician(crate::models::DEFAULT_RICIAN_ANGLE)?;
    let spec = QuadratureSpec::with_rel_tol(rel_tol);
    let mut out = String::from("theta,fim,rel_tol\n");
    for theta in RICIAN_FIXTURE_THETAS {
        let fim = fim_quadrature(&model, theta, &spec)?;
        out.push_str(&format!("{theta},{fim:.17e},{rel_tol:e}\n"));
    }
    Ok(out)
}

/// Writes [`rician_fixture_csv`] to `path`.
pub fn write_rician_fixture(path: &std::path::Path, rel_tol: f64) -> Result<()> {
    let text = rician_fixture_csv(rel_tol)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::models::{ModelSpec, ReferenceFamily, DEFAULT_RICIAN_ANGLE};

    fn families() -> Vec<(ModelSpec, Vec<f64>)> {
        vec![
            (
                ModelSpec::reference(ReferenceFamily::GaussianMean { sigma2: 1.0 }).unwrap(),
                vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
            ),
            (
                ModelSpec::reference(ReferenceFamily::GaussianVariance).unwrap(),
                vec![0.25, 0.5, 1.0, 2.0, 4.0],
            ),
            (
                ModelSpec::reference(ReferenceFamily::ExponentialRate).unwrap(),
                vec![0.25, 0.5, 1.0, 2.0, 4.0],
            ),
            (
                ModelSpec::reference(ReferenceFamily::Poisson).unwrap(),
                vec![0.25, 0.5, 1.0, 2.0, 4.0],
            ),
        ]
    }

    #[test]
    fn gauss_kronrod_polynomial_exactness() {
        // Kronrod is exact to degree 22, Gauss to degree 13.
        let (k, g) = gk15(&|x: f64| x.powi(12) + 3.0 * x.powi(5), -1.0, 1.0);
        assert!((k - 2.0 / 13.0).abs() < 1e-15);
        assert!((g - 2.0 / 13.0).abs() < 1e-15);
        let (k, _) = gk15(&|x: f64| x.powi(22), 0.0, 1.0);
        assert!((k - 1.0 / 23.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let v =
            integrate_adaptive(|x| 1.0 / (1e-4 + (x - 0.3) * (x - 0.3)), 0.0, 1.0, 1e-10).unwrap();
        let exact = 100.0 * ((0.7f64 / 1e-2).atan() + (0.3f64 / 1e-2).atan());
        assert!(((v - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn non_convergence_is_reported() {
        let err = integrate_adaptive(
            |x| if x > 0.5 { 1.0 / (x - 0.5) } else { 0.0 },
            0.0,
            1.0,
            1e-10,
        );
        assert!(matches!(err, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let spec = QuadratureSpec::default();
        for (model, thetas) in families() {
            for theta in thetas {
                let q = fim_quadrature(&model, theta, &spec).unwrap();
                let c = fim_closed_form(&model, theta).unwrap();
                assert!(
                    ((q - c) / c).abs() < 1e-6,
                    "{} at {theta}: {q} vs {c}",
                    model.name()
                );
            }
        }
    }

    #[test]
    fn densities_normalize() {
        let spec = QuadratureSpec::default();
        let rician = ModelSpec::rician(DEFAULT_RICIAN_ANGLE).unwrap();
        for theta in [0.0, 0.5, 2.0, 10.0] {
            assert!((density_mass(&rician, theta, &spec).unwrap() - 1.0).abs() < 1e-6);
        }
        for (model, thetas) in families() {
            for theta in thetas {
                assert!((density_mass(&model, theta, &spec).unwrap() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn closed_form_values() {
        let saleh = ModelSpec::saleh(2.1587, 1.1517).unwrap();
        assert_eq!(fim_closed_form(&saleh, 1.0).unwrap(), 0.5);
        let rician = ModelSpec::rician(DEFAULT_RICIAN_ANGLE).unwrap();
        assert_eq!(fim_closed_form(&rician, 0.3).unwrap(), 1.0);
        let gm = ModelSpec::reference(ReferenceFamily::GaussianMean { sigma2: 4.0 }).unwrap();
        assert_eq!(fim_closed_form(&gm, 12.0).unwrap(), 0.25);
        let cubic = ModelSpec::cubic(0.0, 1.0).unwrap();
        assert!(matches!(
            fim_closed_form(&cubic, 0.5),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            fim_quadrature(&saleh, 1.0, &QuadratureSpec::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn rician_information_grows_towards_one() {
        let model = ModelSpec::rician(DEFAULT_RICIAN_ANGLE).unwrap();
        let spec = QuadratureSpec::default();
        let mut last = -1.0;
        for i in 0..=20 {
            let f = fim_quadrature(&model, 0.1 * i as f64, &spec).unwrap();
            assert!(f >= last - 1e-9, "not monotone at {}", 0.1 * i as f64);
            last = f;
        }
        let far = fim_quadrature(&model, 10.0, &spec).unwrap();
        assert!((far - 1.0).abs() < 0.05);
        assert!(last > 0.85 * far);
        assert_eq!(fim_quadrature(&model, 0.0, &spec).unwrap(), 0.0);
    }

    #[test]
    fn rician_matches_analytic_score() {
        // Independent reference: mpmath quadrature of (z I1(z t)/I0(z t) - t)^2 p(z; t)
        // with the analytic Bessel-ratio score.
        const REFERENCE: &[(f64, f64)] = &[
            (0.1, 0.0099012303848025903),
            (0.25, 0.058871693311263354586),
            (0.5, 0.20169578730501485549),
            (1.0, 0.52144692073438113703),
            (1.5, 0.73754689671913188740),
            (2.0, 0.85263205184353967925),
            (3.0, 0.94015123739051220162),
            (10.0, 0.99497448082635801307),
        ];
        let model = ModelSpec::rician(DEFAULT_RICIAN_ANGLE).unwrap();
        for &(theta, expected) in REFERENCE {
            let f = fim_quadrature(&model, theta, &QuadratureSpec::default()).unwrap();
            assert!(
                ((f - expected) / expected).abs() < 1e-6,
                "theta {theta}: {f} vs {expected}"
            );
        }
    }

    #[test]
    fn crlb_values() {
        assert!((crlb(2.0, 100).unwrap() - 0.005).abs() < 1e-18);
        assert_eq!(crlb(0.5, 1).unwrap(), 2.0);
        assert!((crlb(1.0 / 2.0, 10).unwrap() - 0.2).abs() < 1e-16);
        assert!(matches!(
            crlb(0.0, 10),
            Err(Error::DegenerateInformation(_))
        ));
        assert!(matches!(
            crlb(-1.0, 10),
            Err(Error::DegenerateInformation(_))
        ));
        assert!(crlb(1.0, 0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::with_rel_tol(0.1).validate().is_err());
        assert!(QuadratureSpec::with_rel_tol(0.0).validate().is_err());
        assert!(QuadratureSpec::default().validate().is_ok());
    }
}
