//! Order-2 forward-mode jets: value plus first and second derivative,
//! propagated exactly by the Leibniz rules.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::C64;

/// Value and first two derivatives of a function at an evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub value: C64,
    pub d1: C64,
    pub d2: C64,
}

impl Jet2 {
    pub fn new(value: C64, d1: C64, d2: C64) -> Self {
        Jet2 { value, d1, d2 }
    }

    /// Jet of a constant.
    pub fn constant(c: C64) -> Self {
        Jet2::new(c, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// Jet of the identity at `p`.
    pub fn variable(p: C64) -> Self {
        Jet2::new(p, C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    /// Integer power by binary exponentiation. Negative exponents invert
    /// first; the caller checks the base against the pole threshold.
    pub fn powi(self, n: i32) -> Jet2 {
        if n == 0 {
            return Jet2::constant(C64::new(1.0, 0.0));
        }
        let mut base = if n < 0 {
            Jet2::constant(C64::new(1.0, 0.0)) / self
        } else {
            self
        };
        let mut k = n.unsigned_abs();
        let mut acc = Jet2::constant(C64::new(1.0, 0.0));
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }

    pub fn exp(self) -> Jet2 {
        let e = self.value.exp();
        Jet2::new(e, e * self.d1, e * (self.d2 + self.d1 * self.d1))
    }

    /// Principal-branch square root jet.
    pub fn sqrt(self) -> Jet2 {
        let s = self.value.sqrt();
        let d1 = self.d1 / (2.0 * s);
        let d2 = self.d2 / (2.0 * s) - self.d1 * self.d1 / (4.0 * s * self.value);
        Jet2::new(s, d1, d2)
    }

    /// Principal-branch logarithm jet.
    pub fn ln(self) -> Jet2 {
        let d1 = self.d1 / self.value;
        Jet2::new(self.value.ln(), d1, self.d2 / self.value - d1 * d1)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.value + rhs.value, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.value - rhs.value, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

/// Quotient jet; the caller is responsible for the pole check on the
/// denominator value.
impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, rhs: Jet2) -> Jet2 {
        let q0 = self.value / rhs.value;
        let q1 = (self.d1 - q0 * rhs.d1) / rhs.value;
        let q2 = (self.d2 - q0 * rhs.d2 - 2.0 * q1 * rhs.d1) / rhs.value;
        Jet2::new(q0, q1, q2)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2::new(
            self.value * rhs.value,
            self.d1 * rhs.value + self.value * rhs.d1,
            self.d2 * rhs.value + 2.0 * self.d1 * rhs.d1 + self.value * rhs.d2,
        )
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::new(-self.value, -self.d1, -self.d2)
    }
}
