//! Black-box stochastic systems `p(z; theta)`.
//!
//! A system is anything that can turn a parameter value and a stream of
//! random draws into one scalar output. Analytic densities and input-side
//! Fisher information are optional extras used only for validation and
//! loss normalization.

pub mod draws;
pub mod special;

use std::f64::consts::PI;
use std::fmt;

use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::gamma_ur;

pub use draws::{standard_normal_quantile, DrawSource, DrawStream};

use crate::error::{Error, Result};

/// Admissible parameter interval `(lower, upper)`, lower end optionally closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaDomain {
    pub lower: f64,
    pub lower_closed: bool,
    pub upper: f64,
}

impl ThetaDomain {
    pub const REAL_LINE: ThetaDomain = ThetaDomain {
        lower: f64::NEG_INFINITY,
        lower_closed: false,
        upper: f64::INFINITY,
    };
    pub const POSITIVE: ThetaDomain = ThetaDomain {
        lower: 0.0,
        lower_closed: false,
        upper: f64::INFINITY,
    };
    pub const NON_NEGATIVE: ThetaDomain = ThetaDomain {
        lower: 0.0,
        lower_closed: true,
        upper: f64::INFINITY,
    };

    pub fn contains(&self, theta: f64) -> bool {
        let above = if self.lower_closed {
            theta >= self.lower
        } else {
            theta > self.lower
        };
        above && theta < self.upper
    }
}

impl fmt::Display for ThetaDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_closed { '[' } else { '(' };
        write!(f, "{open}{}, {})", self.lower, self.upper)
    }
}

/// Support of the output `z`, as needed by the quadrature oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// The whole real line.
    Real,
    /// `[0, inf)`.
    NonNegative,
    /// The non-negative integers.
    Counting,
}

/// A stochastic system observed only through its output samples.
pub trait StochasticSystem: Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> ThetaDomain;

    /// Draws one output at `theta` without checking the domain.
    ///
    /// Must be a pure function of `theta` and the variates consumed from
    /// `draws`.
    fn sample_unchecked(&self, theta: f64, draws: &mut DrawStream) -> f64;

    /// Density (or mass) of the output, when known in closed form.
    fn pdf(&self, _z: f64, _theta: f64) -> Option<f64> {
        None
    }

    fn support(&self) -> Option<Support> {
        None
    }

    /// Fisher information of the system input with respect to `theta`.
    fn input_fisher(&self, _theta: f64) -> Option<f64> {
        None
    }

    /// Default relative finite-difference step for `d mu / d theta`.
    fn default_fd_rel(&self) -> f64 {
        0.01
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if self.domain().contains(theta) {
            Ok(())
        } else {
            Err(Error::Domain {
                model: self.name().to_string(),
                theta,
                domain: self.domain().to_string(),
            })
        }
    }

    fn sample(&self, theta: f64, draws: &mut DrawStream) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.sample_unchecked(theta, draws))
    }
}

/// Exponential-family reference systems with known Fisher information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceFamily {
    /// `z ~ N(theta, sigma2)`.
    GaussianMean { sigma2: f64 },
    /// `z ~ N(0, theta)`.
    GaussianVariance,
    /// `z ~ Exp(theta)` with rate `theta`.
    ExponentialRate,
    /// `z ~ Poisson(theta)`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Saleh { a: f64, b: f64 },
    Rician { angle: f64 },
    Cubic { a: f64, b: f64 },
    Reference(ReferenceFamily),
}

/// One of the built-in systems.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    name: String,
    kind: ModelKind,
}

/// Default line-of-sight angle for the Rician system.
pub const DEFAULT_RICIAN_ANGLE: f64 = PI / 7.0;

/// Saleh amplitude characteristic `a x / (1 + b x^2)`.
#[inline]
pub fn saleh_output(a: f64, b: f64, x: f64) -> f64 {
    a * x / (1.0 + b * x * x)
}

/// Envelope of a line-of-sight component at distance `theta` plus unit
/// complex Gaussian noise `(u1, u2)`.
#[inline]
pub fn rician_output(theta: f64, angle: f64, u1: f64, u2: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    (theta * c + u1).hypot(theta * s + u2)
}

/// Cubic regression output `theta x^3 + x`.
#[inline]
pub fn cubic_output(theta: f64, x: f64) -> f64 {
    theta * x * x * x + x
}

/// Rician density `z exp(-(z^2 + theta^2)/2) I0(z theta)`.
pub fn rician_pdf(z: f64, theta: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let t = theta.abs();
    z * (-0.5 * (z - t) * (z - t)).exp() * special::bessel_i0_scaled(z * t)
}

fn gaussian_pdf(z: f64, mean: f64, var: f64) -> f64 {
    let d = z - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

fn poisson_pmf(z: f64, theta: f64) -> f64 {
    if z < 0.0 || z.fract() != 0.0 || theta <= 0.0 {
        return 0.0;
    }
    let k = z as u64;
    (z * theta.ln() - theta - ln_factorial(k)).exp()
}

/// Poisson variate by inversion of `u`, monotone in `theta` for fixed `u`.
fn poisson_inverse(theta: f64, u: f64) -> f64 {
    const DIRECT_LIMIT: f64 = 30.0;
    if theta <= DIRECT_LIMIT {
        let mut k = 0u32;
        let mut p = (-theta).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= theta / k as f64;
            let next = cdf + p;
            if next == cdf {
                break;
            }
            cdf = next;
        }
        k as f64
    } else {
        // P(X <= k) = Q(k + 1, theta); walk from the mean.
        let cdf = |k: f64| gamma_ur(k + 1.0, theta);
        let mut k = theta.floor();
        if cdf(k) >= u {
            while k > 0.0 && cdf(k - 1.0) >= u {
                k -= 1.0;
            }
        } else {
            while cdf(k) < u {
                k += 1.0;
            }
        }
        k
    }
}

impl ModelSpec {
    pub fn saleh(a: f64, b: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(Error::Validation(format!(
                "Saleh gain must be non-zero, got {a}"
            )));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Validation(format!(
                "Saleh saturation must be positive, got {b}"
            )));
        }
        Ok(Self {
            name: "saleh".into(),
            kind: ModelKind::Saleh { a, b },
        })
    }

    pub fn rician(angle: f64) -> Result<Self> {
        if !angle.is_finite() {
            return Err(Error::Validation(format!(
                "Rician angle must be finite, got {angle}"
            )));
        }
        Ok(Self {
            name: "rician".into(),
            kind: ModelKind::Rician { angle },
        })
    }

    pub fn cubic(input_mean: f64, input_var: f64) -> Result<Self> {
        if !input_mean.is_finite() {
            return Err(Error::Validation(format!(
                "input mean must be finite, got {input_mean}"
            )));
        }
        if !(input_var > 0.0 && input_var.is_finite()) {
            return Err(Error::Domain {
                model: "cubic".into(),
                theta: input_var,
                domain: "input variance b > 0".into(),
            });
        }
        Ok(Self {
            name: "cubic".into(),
            kind: ModelKind::Cubic {
                a: input_mean,
                b: input_var,
            },
        })
    }

    pub fn reference(family: ReferenceFamily) -> Result<Self> {
        let name = match family {
            ReferenceFamily::GaussianMean { sigma2 } => {
                if !(sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::Validation(format!(
                        "sigma2 must be positive, got {sigma2}"
                    )));
                }
                "ref:gauss-mean"
            }
            ReferenceFamily::GaussianVariance => "ref:gauss-var",
            ReferenceFamily::ExponentialRate => "ref:exp",
            ReferenceFamily::Poisson => "ref:poisson",
        };
        Ok(Self {
            name: name.into(),
            kind: ModelKind::Reference(family),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }
}

impl StochasticSystem for ModelSpec {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> ThetaDomain {
        match self.kind {
            ModelKind::Saleh { .. } | ModelKind::Cubic { .. } => ThetaDomain::POSITIVE,
            ModelKind::Rician { .. } => ThetaDomain::NON_NEGATIVE,
            ModelKind::Reference(ReferenceFamily::GaussianMean { .. }) => ThetaDomain::REAL_LINE,
            ModelKind::Reference(_) => ThetaDomain::POSITIVE,
        }
    }

    #[inline]
    fn sample_unchecked(&self, theta: f64, draws: &mut DrawStream) -> f64 {
        match self.kind {
            ModelKind::Saleh { a, b } => saleh_output(a, b, theta.sqrt() * draws.next_normal()),
            ModelKind::Rician { angle } => {
                let u1 = draws.next_normal();
                let u2 = draws.next_normal();
                rician_output(theta, angle, u1, u2)
            }
            ModelKind::Cubic { a, b } => cubic_output(theta, a + b.sqrt() * draws.next_normal()),
            ModelKind::Reference(family) => match family {
                ReferenceFamily::GaussianMean { sigma2 } => {
                    theta + sigma2.sqrt() * draws.next_normal()
                }
                ReferenceFamily::GaussianVariance => theta.sqrt() * draws.next_normal(),
                ReferenceFamily::ExponentialRate => -draws.next_uniform().ln() / theta,
                ReferenceFamily::Poisson => poisson_inverse(theta, draws.next_uniform()),
            },
        }
    }

    fn pdf(&self, z: f64, theta: f64) -> Option<f64> {
        match self.kind {
            ModelKind::Saleh { .. } | ModelKind::Cubic { .. } => None,
            ModelKind::Rician { .. } => Some(rician_pdf(z, theta)),
            ModelKind::Reference(family) => Some(match family {
                ReferenceFamily::GaussianMean { sigma2 } => gaussian_pdf(z, theta, sigma2),
                ReferenceFamily::GaussianVariance => gaussian_pdf(z, 0.0, theta),
                ReferenceFamily::ExponentialRate => {
                    if z < 0.0 {
                        0.0
                    } else {
                        theta * (-theta * z).exp()
                    }
                }
                ReferenceFamily::Poisson => poisson_pmf(z, theta),
            }),
        }
    }

    fn support(&self) -> Option<Support> {
        match self.kind {
            ModelKind::Saleh { .. } | ModelKind::Cubic { .. } => None,
            ModelKind::Rician { .. } => Some(Support::NonNegative),
            ModelKind::Reference(family) => Some(match family {
                ReferenceFamily::GaussianMean { .. } | ReferenceFamily::GaussianVariance => {
                    Support::Real
                }
                ReferenceFamily::ExponentialRate => Support::NonNegative,
                ReferenceFamily::Poisson => Support::Counting,
            }),
        }
    }

    fn input_fisher(&self, theta: f64) -> Option<f64> {
        match self.kind {
            ModelKind::Saleh { .. } => Some(1.0 / (2.0 * theta * theta)),
            ModelKind::Rician { .. } => Some(1.0),
            ModelKind::Cubic { .. } => None,
            ModelKind::Reference(family) => Some(match family {
                ReferenceFamily::GaussianMean { sigma2 } => 1.0 / sigma2,
                ReferenceFamily::GaussianVariance => 1.0 / (2.0 * theta * theta),
                ReferenceFamily::ExponentialRate => 1.0 / (theta * theta),
                ReferenceFamily::Poisson => 1.0 / theta,
            }),
        }
    }

    fn default_fd_rel(&self) -> f64 {
        match self.kind {
            // Lattice outputs change in unit jumps; a wider stencil keeps the
            // jump count per difference large enough to average out.
            ModelKind::Reference(ReferenceFamily::Poisson) => 0.1,
            _ => 0.01,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SALEH_A: f64 = 2.1587;
    const SALEH_B: f64 = 1.1517;

    #[test]
    fn saleh_values() {
        assert_eq!(saleh_output(SALEH_A, SALEH_B, 0.0), 0.0);
        let z = saleh_output(SALEH_A, SALEH_B, 1.0);
        assert!((z - 2.1587 / 2.1517).abs() < 1e-15);
        assert!((z - 1.003253).abs() < 1e-6);
        let m = ModelSpec::saleh(SALEH_A, SALEH_B).unwrap();
        assert_eq!(m.input_fisher(1.0), Some(0.5));
        assert!(ModelSpec::saleh(0.0, 1.0).is_err());
        assert!(ModelSpec::saleh(1.0, 0.0).is_err());
    }

    #[test]
    fn saleh_domain() {
        let m = ModelSpec::saleh(SALEH_A, SALEH_B).unwrap();
        let mut s = DrawSource::new(1, 0).stream();
        assert!(matches!(m.sample(0.0, &mut s), Err(Error::Domain { .. })));
        assert!(matches!(m.sample(-1.0, &mut s), Err(Error::Domain { .. })));
        assert!(m.sample(1.0, &mut s).is_ok());
    }

    #[test]
    fn rician_values() {
        assert_eq!(rician_output(0.0, DEFAULT_RICIAN_ANGLE, 3.0, 4.0), 5.0);
        assert_eq!(rician_output(1.0, 0.0, 0.0, 0.0), 1.0);
        let m = ModelSpec::rician(DEFAULT_RICIAN_ANGLE).unwrap();
        assert_eq!(m.input_fisher(0.5), Some(1.0));
        let mut s = DrawSource::new(1, 0).stream();
        assert!(m.sample(0.0, &mut s).is_ok());
        assert!(matches!(m.sample(-0.1, &mut s), Err(Error::Domain { .. })));
    }

    #[test]
    fn rician_reduces_to_rayleigh() {
        for z in [0.1f64, 0.5, 1.0, 2.0, 4.0] {
            let rayleigh = z * (-0.5 * z * z).exp();
            assert!((rician_pdf(z, 0.0) - rayleigh).abs() < 1e-15);
        }
        assert_eq!(rician_pdf(-1.0, 1.0), 0.0);
    }

    #[test]
    fn cubic_values() {
        assert_eq!(cubic_output(0.5, 2.0), 6.0);
        assert_eq!(cubic_output(0.37, 0.0), 0.0);
        assert!(matches!(
            ModelSpec::cubic(0.0, 0.0),
            Err(Error::Domain { .. })
        ));
        assert!(ModelSpec::cubic(0.0, -1.0).is_err());
        for (a, b) in [(0.0, 1.0), (1.0, 1.0), (0.0, 2.0), (2.0, 2.0)] {
            assert!(ModelSpec::cubic(a, b).is_ok());
        }
    }

    #[test]
    fn reference_fisher() {
        let var = ModelSpec::reference(ReferenceFamily::GaussianVariance).unwrap();
        assert_eq!(var.input_fisher(2.0), Some(0.125));
        let exp = ModelSpec::reference(ReferenceFamily::ExponentialRate).unwrap();
        assert_eq!(exp.input_fisher(0.5), Some(4.0));
        let poi = ModelSpec::reference(ReferenceFamily::Poisson).unwrap();
        assert_eq!(poi.input_fisher(4.0), Some(0.25));
        let mean = ModelSpec::reference(ReferenceFamily::GaussianMean { sigma2: 4.0 }).unwrap();
        assert_eq!(mean.input_fisher(-3.0), Some(0.25));
        assert!(ModelSpec::reference(ReferenceFamily::GaussianMean { sigma2: 0.0 }).is_err());
        let mut s = DrawSource::new(0, 0).stream();
        assert!(exp.sample(0.0, &mut s).is_err());
        assert!(mean.sample(-5.0, &mut s).is_ok());
    }

    #[test]
    fn sampling_is_reproducible() {
        let models = [
            ModelSpec::saleh(SALEH_A, SALEH_B).unwrap(),
            ModelSpec::rician(DEFAULT_RICIAN_ANGLE).unwrap(),
            ModelSpec::cubic(1.0, 2.0).unwrap(),
            ModelSpec::reference(ReferenceFamily::Poisson).unwrap(),
            ModelSpec::reference(ReferenceFamily::ExponentialRate).unwrap(),
        ];
        for m in &models {
            for i in 0..100 {
                let src = DrawSource::new(99, i);
                let a = m.sample(0.7, &mut src.stream()).unwrap();
                let b = m.sample(0.7, &mut src.stream()).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn poisson_inversion_is_monotone_and_consistent() {
        for i in 0..500 {
            let u = DrawSource::new(3, i).stream().next_uniform();
            let mut last = 0.0;
            for theta in [0.5, 1.0, 5.0, 29.9, 30.1, 60.0] {
                let k = poisson_inverse(theta, u);
                assert!(k >= last);
                last = k;
            }
            // Both branches agree just around the switch.
            let direct = poisson_inverse(30.0, u);
            let cdf_walk = {
                let cdf = |k: f64| gamma_ur(k + 1.0, 30.0);
                let mut k = 0.0;
                while cdf(k) < u {
                    k += 1.0;
                }
                k
            };
            assert!((direct - cdf_walk).abs() <= 1.0);
        }
        assert_eq!(poisson_pmf(2.5, 1.0), 0.0);
        assert!((poisson_pmf(0.0, 2.0) - (-2f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn domain_display() {
        assert_eq!(ThetaDomain::NON_NEGATIVE.to_string(), "[0, inf)");
        assert!(ThetaDomain::NON_NEGATIVE.contains(0.0));
        assert!(!ThetaDomain::POSITIVE.contains(0.0));
        assert!(ThetaDomain::REAL_LINE.contains(-1e300));
    }
}
