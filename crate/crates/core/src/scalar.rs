//! Floating-point scalars and the nilpotent jet used for directional derivatives.
//!
//! [`Field`] is the minimal arithmetic a right-hand side needs; it is implemented
//! for `f64`, [`Extended`], [`Jet`] and exact [`Rational`]. [`Scalar`] adds the transcendental
//! functions required for stepping and is implemented for the two float types.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, FloatConst};

use crate::rational::{self, Rational};

/// IEEE binary128 (113-bit significand) used for extended-precision runs.
pub type Extended = f128::f128;

/// Environment variable selecting the default precision (`double` or `extended`).
pub const PRECISION_ENV: &str = "RKENERGY_PRECISION";

pub trait Field:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Embeds a real constant.
    fn lift(x: f64) -> Self;

    fn lift_zero() -> Self {
        Self::lift(0.0)
    }

    /// Nearest `f64` to the value part (the constant term of a jet).
    fn value_f64(&self) -> f64;
}

pub trait Scalar:
    Field + Float + FloatConst + Copy + Display + Send + Sync + 'static
{
    fn from_rational(r: &Rational) -> Self;
    fn to_f64_lossy(self) -> f64;
}

impl Field for f64 {
    fn lift(x: f64) -> Self {
        x
    }

    fn value_f64(&self) -> f64 {
        *self
    }
}

/// Exact evaluation of polynomial right-hand sides.
impl Field for Rational {
    /// Panics on non-finite input.
    fn lift(x: f64) -> Self {
        Rational::from_float(x).expect("finite constant")
    }

    fn value_f64(&self) -> f64 {
        rational::to_f64(self)
    }
}

impl Scalar for f64 {
    fn from_rational(r: &Rational) -> Self {
        rational::to_f64(r)
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Field for Extended {
    fn lift(x: f64) -> Self {
        Extended::from(x)
    }

    fn value_f64(&self) -> f64 {
        self.to_f64_lossy()
    }
}

impl Scalar for Extended {
    /// Sums three successive `f64` remainders, enough for the 113-bit significand.
    fn from_rational(r: &Rational) -> Self {
        let mut rest = r.clone();
        let mut acc = Extended::from(0.0);
        for _ in 0..3 {
            let part = rational::to_f64(&rest);
            let Some(exact) = Rational::from_float(part) else {
                return Extended::from(part);
            };
            acc += Extended::from(part);
            rest -= exact;
        }
        acc
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Double,
    Extended,
}

impl Precision {
    /// Reads [`PRECISION_ENV`]; anything other than `extended` means double.
    pub fn from_env() -> Self {
        match std::env::var(PRECISION_ENV) {
            Ok(v) if v.eq_ignore_ascii_case("extended") => Precision::Extended,
            _ => Precision::Double,
        }
    }
}

/// Truncated multivariate Taylor number with `m` nilpotent generators
/// `ε₁..ε_m`, `εₖ² = 0`.
///
/// Coefficients are indexed by subset bitmask. Evaluating a map at
/// `u + Σ εₖ vₖ` leaves `f⁽ᵐ⁾(u; v₁, …, v_m)` in the coefficient of the full
/// mask. A constant is stored with a single coefficient and broadcasts against
/// jets with more generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<F> {
    coeffs: Vec<F>,
}

impl<F: Field> Jet<F> {
    pub fn constant(x: F) -> Self {
        Jet { coeffs: vec![x] }
    }

    /// `x + Σ dirs[k] εₖ` for a single component.
    pub fn seeded(x: F, dirs: &[F]) -> Self {
        let len = 1usize << dirs.len();
        let mut coeffs = vec![F::lift_zero(); len];
        coeffs[0] = x;
        for (k, d) in dirs.iter().enumerate() {
            coeffs[1 << k] = d.clone();
        }
        Jet { coeffs }
    }

    pub fn generators(&self) -> usize {
        self.coeffs.len().trailing_zeros() as usize
    }

    pub fn value(&self) -> &F {
        &self.coeffs[0]
    }

    /// Coefficient of `Π_{k ∈ mask} εₖ`.
    pub fn coeff(&self, mask: usize) -> F {
        self.coeffs.get(mask).cloned().unwrap_or_else(F::lift_zero)
    }

    /// Coefficient of `ε₁ ε₂ ⋯ ε_m`.
    pub fn top(&self) -> F {
        self.coeff(self.coeffs.len() - 1)
    }

    fn zip_with(self, rhs: Self, op: impl Fn(F, F) -> F) -> Self {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        let mut a = self.coeffs.into_iter();
        let mut b = rhs.coeffs.into_iter();
        let coeffs = (0..len)
            .map(|_| {
                let x = a.next().unwrap_or_else(F::lift_zero);
                let y = b.next().unwrap_or_else(F::lift_zero);
                op(x, y)
            })
            .collect();
        Jet { coeffs }
    }

    fn scale(&self, s: &F) -> Self {
        Jet {
            coeffs: self.coeffs.iter().map(|c| c.clone() * s.clone()).collect(),
        }
    }

    fn recip(&self) -> Self {
        // 1/(a + n) = (1/a) Σ_k (−n/a)^k, with n nilpotent of index m + 1
        let a = self.coeffs[0].clone();
        let inv = F::lift(1.0) / a;
        let mut nil = self.clone();
        nil.coeffs[0] = F::lift_zero();
        let ratio = nil.scale(&(-inv.clone()));
        let mut term = Jet::constant(inv.clone());
        let mut acc = Jet::constant(inv);
        for _ in 0..self.generators() {
            term = term * ratio.clone();
            acc = acc + term.clone();
        }
        acc
    }
}

impl<F: Field> Add for Jet<F> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip_with(rhs, |x, y| x + y)
    }
}

impl<F: Field> Sub for Jet<F> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip_with(rhs, |x, y| x - y)
    }
}

impl<F: Field> Neg for Jet<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet {
            coeffs: self.coeffs.into_iter().map(|c| -c).collect(),
        }
    }
}

impl<F: Field> Mul for Jet<F> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        if self.coeffs.len() == 1 {
            return rhs.scale(&self.coeffs[0]);
        }
        if rhs.coeffs.len() == 1 {
            return self.scale(&rhs.coeffs[0]);
        }
        let len = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = vec![F::lift_zero(); len];
        for (mask, slot) in out.iter_mut().enumerate() {
            // enumerate submasks `sub ⊆ mask`, including the empty set
            let mut sub = mask;
            loop {
                let rest = mask ^ sub;
                if sub < self.coeffs.len() && rest < rhs.coeffs.len() {
                    *slot = slot.clone() + self.coeffs[sub].clone() * rhs.coeffs[rest].clone();
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & mask;
            }
        }
        Jet { coeffs: out }
    }
}

impl<F: Field> Div for Jet<F> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        if rhs.coeffs.len() == 1 {
            let inv = F::lift(1.0) / rhs.coeffs[0].clone();
            return self.scale(&inv);
        }
        self * rhs.recip()
    }
}

impl<F: Field> Field for Jet<F> {
    fn lift(x: f64) -> Self {
        Jet::constant(F::lift(x))
    }

    fn value_f64(&self) -> f64 {
        self.coeffs[0].value_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_product_rule() {
        // d/dε (x·y) at x = 2 + ε·3, y = 5 + ε·7 is 3·5 + 2·7
        let x = Jet::seeded(2.0, &[3.0]);
        let y = Jet::seeded(5.0, &[7.0]);
        let p = x * y;
        assert_eq!(*p.value(), 10.0);
        assert_eq!(p.top(), 29.0);
    }

    #[test]
    fn jet_mixed_second_derivative_of_cube() {
        // g(x) = x³, g''(x; v, w) = 6 x v w
        let x = Jet::seeded(1.5, &[2.0, -0.5]);
        let g = x.clone() * x.clone() * x;
        assert!((g.top() - 6.0 * 1.5 * 2.0 * -0.5).abs() < 1e-14);
    }

    #[test]
    fn jet_reciprocal_derivatives() {
        // h(x) = 1/x, h'''(x; 1, 1, 1) = −6/x⁴
        let x = Jet::seeded(2.0, &[1.0, 1.0, 1.0]);
        let h = Jet::lift(1.0) / x;
        assert!((h.top() + 6.0 / 16.0).abs() < 1e-14);
        assert!((h.coeff(0b011) - 2.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn extended_from_rational_keeps_tail() {
        let third = crate::rational::rat(1, 3);
        let x = Extended::from_rational(&third);
        let back = x * Extended::from(3.0) - Extended::from(1.0);
        assert!(back.abs().to_f64_lossy() < 1e-32);
        let y = Extended::from_rational(&crate::rational::rat(1, 10));
        let back = y * Extended::from(10.0) - Extended::from(1.0);
        assert!(back.abs().to_f64_lossy() < 1e-32);
    }
}
