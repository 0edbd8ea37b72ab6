//! Laplace primitives and the geometrically decaying noise schedule.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Scale `b` of a zero-mean Laplace distribution. `b = 0` stands for the
/// point mass at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParam<F>(F);

impl<F: Real> LaplaceParam<F> {
    pub fn new(b: F) -> Result<Self> {
        if b.is_nan() || b < F::zero() || b.is_infinite() {
            return Err(Error::NonPositiveScale(b.as_f64()));
        }
        Ok(Self(b))
    }

    pub fn scale(&self) -> F {
        self.0
    }

    pub fn is_point_mass(&self) -> bool {
        self.0.is_zero()
    }

    /// `2 b²`
    pub fn variance(&self) -> F {
        F::lit(2.0) * self.0 * self.0
    }

    pub fn pdf(&self, x: F) -> Result<F> {
        laplace_pdf(x, self.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        if self.is_point_mass() {
            return F::zero();
        }
        draw(self.0, rng)
    }
}

/// Density `exp(-|x|/b) / (2b)`.
pub fn laplace_pdf<F: Real>(x: F, b: F) -> Result<F> {
    if b.is_nan() || b <= F::zero() || b.is_infinite() {
        return Err(Error::NonPositiveScale(b.as_f64()));
    }
    Ok((-x.abs() / b).exp() / (F::lit(2.0) * b))
}

/// Draws a `Lap(b)` variate by inverting the CDF. A scale of exactly zero
/// yields `0`.
pub fn sample_laplace<F: Real, R: Rng + ?Sized>(b: F, rng: &mut R) -> Result<F> {
    Ok(LaplaceParam::new(b)?.sample(rng))
}

fn draw<F: Real, R: Rng + ?Sized>(b: F, rng: &mut R) -> F {
    let half = F::lit(0.5);
    let two = F::lit(2.0);
    loop {
        let u = F::lit(rng.random::<f64>()) - half;
        let tail = F::one() - two * u.abs();
        // u = -1/2 would give ln(0)
        if tail > F::zero() {
            let magnitude = -b * tail.ln();
            return if u < F::zero() { -magnitude } else { magnitude };
        }
    }
}

/// Per-round Laplace scale `c·qᵗ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule<F> {
    c: F,
    q: F,
}

impl<F: Real> NoiseSchedule<F> {
    /// `c ≥ 0` (zero gives a noiseless run) and `0 < q < 1`.
    pub fn new(c: F, q: F) -> Result<Self> {
        if c.is_nan() || c < F::zero() || c.is_infinite() {
            return Err(Error::InvalidParameter {
                name: "c",
                reason: format!("must be a finite real >= 0, got {c:?}"),
            });
        }
        if !(q > F::zero() && q < F::one()) {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: format!("must lie in the open interval (0,1), got {q:?}"),
            });
        }
        Ok(Self { c, q })
    }

    pub fn noiseless(q: F) -> Result<Self> {
        Self::new(F::zero(), q)
    }

    pub fn c(&self) -> F {
        self.c
    }

    pub fn q(&self) -> F {
        self.q
    }

    pub fn scale_at(&self, t: usize) -> F {
        self.c * self.q.powi(t.min(i32::MAX as usize) as i32)
    }

    pub fn param_at(&self, t: usize) -> LaplaceParam<F> {
        LaplaceParam(self.scale_at(t))
    }
}

/// Free-function form of [`NoiseSchedule::scale_at`].
pub fn schedule_scale<F: Real>(sched: &NoiseSchedule<F>, t: usize) -> F {
    sched.scale_at(t)
}
