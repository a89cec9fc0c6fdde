//! Outcome families and their closed-form divergences.
//!
//! Two parametric families are supported: `Ber(theta)` and `N(theta, 1)`.
//! All divergences are natural-log KL. The kernels are generic over the
//! float width; the crate-level alias [`crate::Real`] pins f64 everywhere
//! the simulator touches them.

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// KL(Ber(p) || Ber(q)) in nats, with 0*ln(0) := 0.
///
/// Returns +inf when q sits on a boundary that p does not share.
pub fn bernoulli_kl<F: Float>(p: F, q: F) -> F {
    if p == q {
        return F::zero();
    }
    let one = F::one();
    let mut kl = F::zero();
    if p > F::zero() {
        kl = kl + p * (p / q).ln();
    }
    if p < one {
        kl = kl + (one - p) * ((one - p) / (one - q)).ln();
    }
    kl
}

/// KL(N(a,1) || N(b,1)) = (a-b)^2 / 2.
pub fn unit_gaussian_kl<F: Float>(a: F, b: F) -> F {
    let d = a - b;
    d * d / (F::one() + F::one())
}

/// A pairwise divergence that may be unbounded (Bernoulli boundary mismatch).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Unbounded,
}

impl Divergence {
    /// Collapse to an f64, mapping `Unbounded` to +inf.
    pub fn nats(self) -> f64 {
        match self {
            Divergence::Finite(v) => v,
            Divergence::Unbounded => f64::INFINITY,
        }
    }

    pub fn from_nats(v: f64) -> Self {
        if v.is_finite() {
            Divergence::Finite(v)
        } else {
            Divergence::Unbounded
        }
    }
}

/// The outcome distribution family shared by every action of an instance.
///
/// Serializes as the plain strings `"bernoulli"` / `"unit_gaussian"`; the
/// optional Bernoulli parameter box is a programmatic constraint, not part
/// of the file schema.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutcomeFamily {
    Bernoulli {
        /// Optional [theta_min, theta_max] box inside (0,1); when set, all
        /// table entries must respect it.
        range: Option<(f64, f64)>,
    },
    UnitGaussian,
}

impl Serialize for OutcomeFamily {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OutcomeFamily::Bernoulli { .. } => serializer.serialize_str("bernoulli"),
            OutcomeFamily::UnitGaussian => serializer.serialize_str("unit_gaussian"),
        }
    }
}

impl<'de> Deserialize<'de> for OutcomeFamily {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let tag = String::deserialize(deserializer)?;
        match tag.as_str() {
            "bernoulli" => Ok(OutcomeFamily::Bernoulli { range: None }),
            "unit_gaussian" => Ok(OutcomeFamily::UnitGaussian),
            other => Err(serde::de::Error::unknown_variant(
                other,
                &["bernoulli", "unit_gaussian"],
            )),
        }
    }
}

impl OutcomeFamily {
    pub fn bernoulli() -> Self {
        OutcomeFamily::Bernoulli { range: None }
    }

    pub fn validate_param(&self, theta: f64) -> Result<()> {
        match self {
            OutcomeFamily::Bernoulli { range } => {
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::InvalidParameter {
                        name: "theta",
                        reason: format!("Bernoulli mean {theta} outside [0,1]"),
                    });
                }
                if let Some((lo, hi)) = range {
                    if theta < *lo || theta > *hi {
                        return Err(Error::InvalidParameter {
                            name: "theta",
                            reason: format!("Bernoulli mean {theta} outside declared [{lo},{hi}]"),
                        });
                    }
                }
                Ok(())
            }
            OutcomeFamily::UnitGaussian => {
                if theta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter {
                        name: "theta",
                        reason: format!("Gaussian mean {theta} is not finite"),
                    })
                }
            }
        }
    }

    /// KL(D_theta1 || D_theta2). The Bernoulli boundary mismatch comes back
    /// as `Divergence::Unbounded`, not as an error.
    pub fn kl(&self, theta1: f64, theta2: f64) -> Result<Divergence> {
        self.validate_param(theta1)?;
        self.validate_param(theta2)?;
        match self {
            OutcomeFamily::Bernoulli { .. } => {
                if theta1 != theta2 && (theta2 == 0.0 || theta2 == 1.0) {
                    return Ok(Divergence::Unbounded);
                }
                Ok(Divergence::Finite(bernoulli_kl(theta1, theta2)))
            }
            OutcomeFamily::UnitGaussian => Ok(Divergence::Finite(unit_gaussian_kl(theta1, theta2))),
        }
    }

    /// Natural log of the outcome density/mass at `y` under parameter `theta`.
    pub fn log_density(&self, theta: f64, y: f64) -> f64 {
        match self {
            OutcomeFamily::Bernoulli { .. } => {
                if y >= 0.5 {
                    theta.ln()
                } else {
                    (1.0 - theta).ln()
                }
            }
            OutcomeFamily::UnitGaussian => {
                let d = y - theta;
                -0.5 * d * d - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    /// One outcome draw from D_theta.
    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        match self {
            OutcomeFamily::Bernoulli { .. } => {
                if rng.gen::<f64>() < theta {
                    1.0
                } else {
                    0.0
                }
            }
            OutcomeFamily::UnitGaussian => {
                let z: f64 = rng.sample(StandardNormal);
                theta + z
            }
        }
    }

    pub fn is_bernoulli(&self) -> bool {
        matches!(self, OutcomeFamily::Bernoulli { .. })
    }
}
