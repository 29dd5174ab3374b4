//! Forward-mode dual numbers.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by `f64` and [`Jet`], so one residual implementation
/// yields both values and exact derivatives.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::constant(k)
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

/// Value plus `N` partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub value: f64,
    pub partials: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            partials: [0.0; N],
        }
    }

    /// Independent variable `i`: unit partial in slot `i`.
    pub fn variable(value: f64, i: usize) -> Self {
        let mut partials = [0.0; N];
        partials[i] = 1.0;
        Self { value, partials }
    }

    fn chain(self, value: f64, derivative: f64) -> Self {
        Self {
            value,
            partials: self.partials.map(|p| p * derivative),
        }
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut partials = self.partials;
        for (p, q) in partials.iter_mut().zip(o.partials) {
            *p += q;
        }
        Self {
            value: self.value + o.value,
            partials,
        }
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            value: -self.value,
            partials: self.partials.map(|p| -p),
        }
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut partials = [0.0; N];
        for (i, p) in partials.iter_mut().enumerate() {
            *p = self.partials[i] * o.value + self.value * o.partials[i];
        }
        Self {
            value: self.value * o.value,
            partials,
        }
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.value;
        let value = self.value * inv;
        let mut partials = [0.0; N];
        for (i, p) in partials.iter_mut().enumerate() {
            *p = (self.partials[i] - value * o.partials[i]) * inv;
        }
        Self { value, partials }
    }
}

impl<const N: usize> Scalar for Jet<N> {
    fn constant(v: f64) -> Self {
        Jet::constant(v)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Jet::<1>::variable(3.0, 0);
        let y = x * x;
        assert_eq!((y.value, y.partials[0]), (9.0, 6.0));
    }

    #[test]
    fn chain_rule_through_composition() {
        // f(x, y) = sin(x·y) / sqrt(x)
        let (x0, y0) = (0.7, 1.3);
        let x = Jet::<2>::variable(x0, 0);
        let y = Jet::<2>::variable(y0, 1);
        let f = (x * y).sin() / x.sqrt();
        let dfdx = y0 * (x0 * y0).cos() / x0.sqrt() - 0.5 * (x0 * y0).sin() * x0.powf(-1.5);
        let dfdy = x0 * (x0 * y0).cos() / x0.sqrt();
        assert!((f.partials[0] - dfdx).abs() < 1e-14);
        assert!((f.partials[1] - dfdy).abs() < 1e-14);
        let g = (x - y).cos() + -x;
        assert!((g.partials[1] - (x0 - y0).sin()).abs() < 1e-14);
    }
}
