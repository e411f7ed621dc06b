//! Convex power curves and the analytic quantities built on them: the
//! inverse speed map, the marginal power at a load ratio, cumulative
//! marginal-power weights, and the critical speed minimizing per-job cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{count, fp, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("speed must be nonnegative, got {0}")]
    NegativeSpeed(f64),
    #[error("speed {speed} exceeds cap {cap}")]
    CapExceeded { speed: f64, cap: f64 },
    #[error("power must be nonnegative, got {0}")]
    NegativePower(f64),
    #[error("load ratio must be nonnegative, got {0}")]
    NegativeLoad(f64),
    #[error("step denominator must be at least 1")]
    ZeroDenominator,
    #[error("coefficient must be positive, got {0}")]
    BadCoefficient(f64),
    #[error("exponent must exceed 1, got {0}")]
    BadExponent(f64),
    #[error("offset must be nonnegative, got {0}")]
    BadOffset(f64),
    #[error("speed cap must be positive with P(cap) > 1, got cap {0}")]
    BadCap(f64),
}

fn lossy<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Common interface over the supported power-curve families. All curves are
/// strictly increasing, strictly convex and differentiable on `[0, inf)`.
pub trait PowerCurve<T: Real>: Clone + Send + Sync {
    /// Power drawn at speed `s`. Errors on negative speed and on speeds
    /// above the cap when one is set.
    fn eval(&self, speed: T) -> Result<T, PowerError>;

    /// Derivative of the curve at speed `s >= 0`.
    fn derivative(&self, speed: T) -> T;

    /// Generalized inverse, ignoring the speed cap: the least `s >= 0`
    /// with `P(s) >= p`.
    fn inverse_unclamped(&self, power: T) -> Result<T, PowerError>;

    /// Optional maximum allowable speed.
    fn speed_cap(&self) -> Option<T>;

    /// Speed minimizing `(1 + P(s)) / s`, i.e. the solution of
    /// `1 + P(s) = s P'(s)`.
    fn critical_speed(&self) -> T;

    /// Speed whose power draw is `p`, clamped to the cap when one is set.
    fn inverse(&self, power: T) -> Result<T, PowerError> {
        let s = self.inverse_unclamped(power)?;
        Ok(match self.speed_cap() {
            Some(cap) if s > cap => cap,
            _ => s,
        })
    }

    /// Marginal power at load ratio `beta`: the slope of the curve at the
    /// (uncapped) speed whose power draw is `beta`. Nondecreasing in `beta`.
    fn marginal_power(&self, beta: T) -> Result<T, PowerError> {
        if beta < T::zero() {
            return Err(PowerError::NegativeLoad(lossy(beta)));
        }
        Ok(self.derivative(self.inverse_unclamped(beta)?))
    }

    /// Cumulative marginal-power weight: the sum of `marginal_power(j / scale)`
    /// for `j = 1..=steps`; zero when `steps == 0`, strictly increasing in
    /// `steps`.
    fn marginal_power_sum(&self, steps: usize, scale: usize) -> Result<T, PowerError> {
        if scale == 0 {
            return Err(PowerError::ZeroDenominator);
        }
        let denom = count::<T>(scale);
        let mut acc = T::zero();
        for j in 1..=steps {
            acc += self.marginal_power(count::<T>(j) / denom)?;
        }
        Ok(acc)
    }

    /// Minimum of `(1 + P(s)) / s` over `s > 0`, which equals
    /// `P'(critical_speed())`: the cheapest possible flow-plus-energy cost
    /// of one unit job on one server.
    fn per_job_optimal_cost(&self) -> T {
        self.derivative(self.critical_speed())
    }
}

/// A monomial power curve `P(s) = c * s^alpha` with `c > 0`, `alpha > 1`,
/// optionally capped at a maximum speed `B` with `P(B) > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawMonomial<T>",
    bound(deserialize = "T: Real + serde::de::DeserializeOwned")
)]
pub struct PowerFunction<T: Real> {
    #[serde(rename = "c")]
    coefficient: T,
    #[serde(rename = "alpha")]
    exponent: T,
    #[serde(rename = "cap")]
    speed_cap: Option<T>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: serde::de::DeserializeOwned"))]
struct RawMonomial<T> {
    c: T,
    alpha: T,
    #[serde(default = "Option::default")]
    cap: Option<T>,
}

impl<T: Real> TryFrom<RawMonomial<T>> for PowerFunction<T> {
    type Error = PowerError;

    fn try_from(raw: RawMonomial<T>) -> Result<Self, PowerError> {
        match raw.cap {
            Some(cap) => PowerFunction::with_cap(raw.c, raw.alpha, cap),
            None => PowerFunction::new(raw.c, raw.alpha),
        }
    }
}

impl<T: Real> PowerFunction<T> {
    pub fn new(coefficient: T, exponent: T) -> Result<Self, PowerError> {
        if !coefficient.is_finite() || coefficient <= T::zero() {
            return Err(PowerError::BadCoefficient(lossy(coefficient)));
        }
        if !exponent.is_finite() || exponent <= T::one() {
            return Err(PowerError::BadExponent(lossy(exponent)));
        }
        Ok(Self {
            coefficient,
            exponent,
            speed_cap: None,
        })
    }

    /// Capped variant; requires `P(cap) > 1` so the speed rules that place
    /// unit power on a server stay feasible.
    pub fn with_cap(coefficient: T, exponent: T, cap: T) -> Result<Self, PowerError> {
        let pf = Self::new(coefficient, exponent)?;
        if !cap.is_finite() || cap <= T::zero() || coefficient * cap.powf(exponent) <= T::one() {
            return Err(PowerError::BadCap(lossy(cap)));
        }
        Ok(Self {
            speed_cap: Some(cap),
            ..pf
        })
    }

    /// Unit-coefficient curve `s^alpha`.
    pub fn monomial(exponent: T) -> Result<Self, PowerError> {
        Self::new(T::one(), exponent)
    }

    pub fn coefficient(&self) -> T {
        self.coefficient
    }

    pub fn exponent(&self) -> T {
        self.exponent
    }
}

impl<T: Real> PowerCurve<T> for PowerFunction<T> {
    fn eval(&self, speed: T) -> Result<T, PowerError> {
        if speed < T::zero() {
            return Err(PowerError::NegativeSpeed(lossy(speed)));
        }
        if let Some(cap) = self.speed_cap {
            if speed > cap {
                return Err(PowerError::CapExceeded {
                    speed: lossy(speed),
                    cap: lossy(cap),
                });
            }
        }
        Ok(self.coefficient * speed.powf(self.exponent))
    }

    fn derivative(&self, speed: T) -> T {
        self.coefficient * self.exponent * speed.powf(self.exponent - T::one())
    }

    fn inverse_unclamped(&self, power: T) -> Result<T, PowerError> {
        if power < T::zero() {
            return Err(PowerError::NegativePower(lossy(power)));
        }
        Ok((power / self.coefficient).powf(self.exponent.recip()))
    }

    fn speed_cap(&self) -> Option<T> {
        self.speed_cap
    }

    fn critical_speed(&self) -> T {
        // 1 + c s^a = c a s^a  =>  s = (c (a - 1))^(-1/a)
        (self.coefficient * (self.exponent - T::one()))
            .recip()
            .powf(self.exponent.recip())
    }
}

/// Affine power curve `P(s) = offset + scale * s^alpha`, the general convex
/// increasing family. Exposed behind the same interface as the monomial;
/// the inverse and critical speed are found by bisection at relative
/// tolerance 1e-12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePower<T: Real> {
    offset: T,
    scale: T,
    exponent: T,
    speed_cap: Option<T>,
}

const BISECT_REL_TOL: f64 = 1e-12;

impl<T: Real> AffinePower<T> {
    pub fn new(offset: T, scale: T, exponent: T) -> Result<Self, PowerError> {
        if !offset.is_finite() || offset < T::zero() {
            return Err(PowerError::BadOffset(lossy(offset)));
        }
        if !scale.is_finite() || scale <= T::zero() {
            return Err(PowerError::BadCoefficient(lossy(scale)));
        }
        if !exponent.is_finite() || exponent <= T::one() {
            return Err(PowerError::BadExponent(lossy(exponent)));
        }
        Ok(Self {
            offset,
            scale,
            exponent,
            speed_cap: None,
        })
    }

    pub fn with_cap(offset: T, scale: T, exponent: T, cap: T) -> Result<Self, PowerError> {
        let pf = Self::new(offset, scale, exponent)?;
        if !cap.is_finite() || cap <= T::zero() || offset + scale * cap.powf(exponent) <= T::one() {
            return Err(PowerError::BadCap(lossy(cap)));
        }
        Ok(Self {
            speed_cap: Some(cap),
            ..pf
        })
    }

    fn raw_eval(&self, speed: T) -> T {
        self.offset + self.scale * speed.powf(self.exponent)
    }

    /// Bisect a nondecreasing function to find the least `s >= 0` with
    /// `g(s) >= 0`, assuming `g(0) <= 0`.
    fn bisect_root(&self, g: impl Fn(T) -> T) -> T {
        let mut hi = T::one();
        let mut grow = 0;
        while g(hi) < T::zero() {
            hi = hi + hi;
            grow += 1;
            if grow > 600 {
                return hi;
            }
        }
        let mut lo = T::zero();
        let tol = fp::<T>(BISECT_REL_TOL);
        while hi - lo > tol * (T::one() + hi) {
            let mid = (lo + hi) * fp(0.5);
            if g(mid) < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * fp(0.5)
    }
}

impl<T: Real> PowerCurve<T> for AffinePower<T> {
    fn eval(&self, speed: T) -> Result<T, PowerError> {
        if speed < T::zero() {
            return Err(PowerError::NegativeSpeed(lossy(speed)));
        }
        if let Some(cap) = self.speed_cap {
            if speed > cap {
                return Err(PowerError::CapExceeded {
                    speed: lossy(speed),
                    cap: lossy(cap),
                });
            }
        }
        Ok(self.raw_eval(speed))
    }

    fn derivative(&self, speed: T) -> T {
        self.scale * self.exponent * speed.powf(self.exponent - T::one())
    }

    fn inverse_unclamped(&self, power: T) -> Result<T, PowerError> {
        if power < T::zero() {
            return Err(PowerError::NegativePower(lossy(power)));
        }
        // Generalized inverse: levels below P(0) map to speed 0.
        if power <= self.offset {
            return Ok(T::zero());
        }
        Ok(self.bisect_root(|s| self.raw_eval(s) - power))
    }

    fn speed_cap(&self) -> Option<T> {
        self.speed_cap
    }

    fn critical_speed(&self) -> T {
        // s P'(s) - P(s) - 1 is strictly increasing from -(1 + offset).
        self.bisect_root(|s| s * self.derivative(s) - self.raw_eval(s) - T::one())
    }
}
