//! Output transformations used as surrogate sufficient statistics.
//!
//! A [`TransformSet`] is an ordered bank `phi(z) = [phi_1(z), ..., phi_L(z)]`.
//! The kinds mirror the sufficient statistics of the common exponential
//! families: powers of `z`, `|z|`, `ln|z|` and `ln^2|z|`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Default clamp applied to `|z|` before taking a logarithm.
pub const DEFAULT_LOG_GUARD: f64 = 1e-100;

/// A single scalar output transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    /// `z^k` for `k >= 1`.
    Power(u32),
    /// `|z|`
    Abs,
    /// `ln|z|`
    LogAbs,
    /// `ln^2|z|`
    LogAbsSquared,
}

impl TransformKind {
    /// Evaluates the transform given `z` and a precomputed guarded `ln|z|`.
    #[inline]
    fn apply(self, z: f64, log_abs: f64) -> f64 {
        match self {
            TransformKind::Power(1) => z,
            TransformKind::Power(2) => z * z,
            TransformKind::Power(k) => z.powi(k as i32),
            TransformKind::Abs => z.abs(),
            TransformKind::LogAbs => log_abs,
            TransformKind::LogAbsSquared => log_abs * log_abs,
        }
    }

    fn needs_log(self) -> bool {
        matches!(self, TransformKind::LogAbs | TransformKind::LogAbsSquared)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformKind::Power(1) => f.write_str("z"),
            TransformKind::Power(k) => write!(f, "z{k}"),
            TransformKind::Abs => f.write_str("abs"),
            TransformKind::LogAbs => f.write_str("logabs"),
            TransformKind::LogAbsSquared => f.write_str("logabs2"),
        }
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(token: &str) -> Result<Self> {
        match token {
            "z" => Ok(TransformKind::Power(1)),
            "abs" => Ok(TransformKind::Abs),
            "logabs" => Ok(TransformKind::LogAbs),
            "logabs2" => Ok(TransformKind::LogAbsSquared),
            _ => token
                .strip_prefix('z')
                .filter(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|digits| digits.parse::<u32>().ok())
                .filter(|&k| k >= 1)
                .map(TransformKind::Power)
                .ok_or_else(|| Error::Parse(format!("unknown transform token `{token}`"))),
        }
    }
}

/// Ordered, duplicate-free bank of output transformations.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSet {
    kinds: Vec<TransformKind>,
    log_guard_epsilon: f64,
    uses_log: bool,
}

impl TransformSet {
    pub fn new(kinds: Vec<TransformKind>) -> Result<Self> {
        Self::with_log_guard(kinds, DEFAULT_LOG_GUARD)
    }

    pub fn with_log_guard(kinds: Vec<TransformKind>, log_guard_epsilon: f64) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Validation("transform set must not be empty".into()));
        }
        if !(log_guard_epsilon > 0.0 && log_guard_epsilon.is_finite()) {
            return Err(Error::Validation(format!(
                "log guard must be positive and finite, got {log_guard_epsilon}"
            )));
        }
        for (i, kind) in kinds.iter().enumerate() {
            if let TransformKind::Power(0) = kind {
                return Err(Error::Validation(
                    "power exponent must be at least 1".into(),
                ));
            }
            if kinds[..i].contains(kind) {
                return Err(Error::Validation(format!("duplicate transform `{kind}`")));
            }
        }
        let uses_log = kinds.iter().any(|k| k.needs_log());
        Ok(Self {
            kinds,
            log_guard_epsilon,
            uses_log,
        })
    }

    pub fn kinds(&self) -> &[TransformKind] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn log_guard_epsilon(&self) -> f64 {
        self.log_guard_epsilon
    }

    /// The first `len` transforms as a new set.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        Self::with_log_guard(
            self.kinds[..len.min(self.kinds.len())].to_vec(),
            self.log_guard_epsilon,
        )
    }

    /// Evaluates `phi(z)`.
    pub fn evaluate(&self, z: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(z, &mut out)?;
        Ok(out)
    }

    /// Writes `phi(z)` into `out`, which must have length `L`.
    #[inline]
    pub fn evaluate_into(&self, z: f64, out: &mut [f64]) -> Result<()> {
        if !z.is_finite() {
            return Err(Error::InvalidSample(format!("non-finite output z = {z}")));
        }
        debug_assert_eq!(out.len(), self.kinds.len());
        let log_abs = if self.uses_log {
            z.abs().max(self.log_guard_epsilon).ln()
        } else {
            0.0
        };
        for (slot, kind) in out.iter_mut().zip(&self.kinds) {
            *slot = kind.apply(z, log_abs);
        }
        Ok(())
    }
}

impl fmt::Display for TransformSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, kind) in self.kinds.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{kind}")?;
        }
        Ok(())
    }
}

impl FromStr for TransformSet {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        parse_transform_spec(text)
    }
}

/// The seven-element bank `[z, z^2, z^3, z^4, |z|, ln|z|, ln^2|z|]`.
pub fn standard_transform_set() -> TransformSet {
    TransformSet::new(vec![
        TransformKind::Power(1),
        TransformKind::Power(2),
        TransformKind::Power(3),
        TransformKind::Power(4),
        TransformKind::Abs,
        TransformKind::LogAbs,
        TransformKind::LogAbsSquared,
    ])
    .expect("standard bank is valid")
}

/// Parses a comma-separated token list such as `"z,z2,abs,logabs"`.
pub fn parse_transform_spec(text: &str) -> Result<TransformSet> {
    let kinds = text
        .split(',')
        .map(|token| token.trim().parse::<TransformKind>())
        .collect::<Result<Vec<_>>>()?;
    TransformSet::new(kinds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standard_bank_layout() {
        let set = standard_transform_set();
        assert_eq!(set.len(), 7);
        assert_eq!(
            set.kinds(),
            &[
                TransformKind::Power(1),
                TransformKind::Power(2),
                TransformKind::Power(3),
                TransformKind::Power(4),
                TransformKind::Abs,
                TransformKind::LogAbs,
                TransformKind::LogAbsSquared,
            ]
        );
        assert_eq!(set.log_guard_epsilon(), 1e-100);
    }

    #[test]
    fn evaluate_at_two() {
        let v = standard_transform_set().evaluate(2.0).unwrap();
        let ln2 = 2f64.ln();
        let expected = [2.0, 4.0, 8.0, 16.0, 2.0, ln2, ln2 * ln2];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!((v[6] - 0.480453).abs() < 1e-6);
    }

    #[test]
    fn evaluate_at_minus_one() {
        let v = standard_transform_set().evaluate(-1.0).unwrap();
        assert_eq!(v, vec![-1.0, 1.0, -1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_is_guarded() {
        let v = standard_transform_set().evaluate(0.0).unwrap();
        let l = 1e-100f64.ln();
        assert_eq!(&v[..5], &[0.0; 5]);
        assert_eq!(v[5], l);
        assert_eq!(v[6], l * l);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn non_finite_sample_rejected() {
        let set = standard_transform_set();
        assert!(matches!(
            set.evaluate(f64::NAN),
            Err(Error::InvalidSample(_))
        ));
        assert!(matches!(
            set.evaluate(f64::INFINITY),
            Err(Error::InvalidSample(_))
        ));
    }

    #[test]
    fn parse_tokens() {
        let set = parse_transform_spec("z,z2").unwrap();
        assert_eq!(
            set.kinds(),
            &[TransformKind::Power(1), TransformKind::Power(2)]
        );
        assert_eq!(
            parse_transform_spec("z,z2,z3,z4,abs,logabs,logabs2").unwrap(),
            standard_transform_set()
        );
        assert_eq!(
            standard_transform_set().to_string(),
            "z,z2,z3,z4,abs,logabs,logabs2"
        );
    }

    #[test]
    fn parse_rejects_unknown_and_duplicates() {
        match parse_transform_spec("z,q7") {
            Err(Error::Parse(msg)) => assert_eq!(msg, "unknown transform token `q7`"),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_transform_spec("z0"), Err(Error::Parse(_))));
        assert!(matches!(parse_transform_spec(""), Err(Error::Parse(_))));
        assert!(matches!(
            parse_transform_spec("z,abs,z"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_transform_spec("z1,z"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn custom_power() {
        let set = parse_transform_spec("z6").unwrap();
        assert_eq!(set.evaluate(2.0).unwrap(), vec![64.0]);
    }

    #[test]
    fn invalid_guard() {
        assert!(TransformSet::with_log_guard(vec![TransformKind::Abs], 0.0).is_err());
        assert!(TransformSet::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn parity(z in -1e3f64..1e3) {
            let set = standard_transform_set();
            let pos = set.evaluate(z).unwrap();
            let neg = set.evaluate(-z).unwrap();
            for (kind, (a, b)) in set.kinds().iter().zip(pos.iter().zip(&neg)) {
                match kind {
                    TransformKind::Power(k) if k % 2 == 1 => prop_assert_eq!(*a, -*b),
                    _ => prop_assert_eq!(*a, *b),
                }
            }
        }

        #[test]
        fn guard_is_identity_above_epsilon(z in prop::num::f64::NORMAL) {
            prop_assume!(z.abs() >= 1e-100);
            let v = standard_transform_set().evaluate(z).unwrap();
            prop_assert_eq!(v[5], z.abs().ln());
        }

        #[test]
        fn order_preserved(z in -50f64..50.0) {
            let full = standard_transform_set();
            let v = full.evaluate(z).unwrap();
            for (l, kind) in full.kinds().iter().enumerate() {
                let single = TransformSet::new(vec![*kind]).unwrap().evaluate(z).unwrap();
                prop_assert_eq!(single[0], v[l]);
            }
        }
    }
}
