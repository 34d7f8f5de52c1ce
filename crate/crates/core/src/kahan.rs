//! Neumaier-compensated summation.
//!
//! The quartic sums in this crate run over O(N³) terms with large
//! cancellations; compensated accumulation keeps the 1e−12 identities
//! (split identity, divergence dual form) testable.

use num_complex::Complex;

use crate::scalar::Scalar;

/// Kahan–Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy)]
pub struct NeumaierSum<S: Scalar> {
    s: S,
    c: S,
}

impl<S: Scalar> Default for NeumaierSum<S> {
    fn default() -> Self {
        Self {
            s: S::zero(),
            c: S::zero(),
        }
    }
}

impl<S: Scalar> NeumaierSum<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: S) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    /// Merge another accumulator into this one (order-sensitive, callers
    /// must merge in a fixed order for determinism).
    pub fn merge(&mut self, other: &Self) {
        self.add(other.s);
        self.add(other.c);
    }

    pub fn total(&self) -> S {
        self.s + self.c
    }
}

/// Compensated accumulator for complex values (independent halves).
#[derive(Debug, Clone, Copy)]
pub struct ComplexNeumaierSum<S: Scalar> {
    re: NeumaierSum<S>,
    im: NeumaierSum<S>,
}

impl<S: Scalar> Default for ComplexNeumaierSum<S> {
    fn default() -> Self {
        Self {
            re: NeumaierSum::default(),
            im: NeumaierSum::default(),
        }
    }
}

impl<S: Scalar> ComplexNeumaierSum<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, z: Complex<S>) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn merge(&mut self, other: &Self) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn total(&self) -> Complex<S> {
        Complex::new(self.re.total(), self.im.total())
    }
}
