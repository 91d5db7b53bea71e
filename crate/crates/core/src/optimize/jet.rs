//! Forward-mode dual numbers carrying up to [`MAX_DOF`] partial derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::geometry::scalar::Real;

pub const MAX_DOF: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub re: f64,
    pub eps: [f64; MAX_DOF],
}

impl Jet {
    pub fn constant(re: f64) -> Jet {
        Jet { re, eps: [0.0; MAX_DOF] }
    }

    /// Independent variable `i` with value `re`.
    pub fn variable(re: f64, i: usize) -> Jet {
        let mut eps = [0.0; MAX_DOF];
        eps[i] = 1.0;
        Jet { re, eps }
    }

    #[inline]
    fn map_eps(self, f: impl Fn(f64) -> f64) -> [f64; MAX_DOF] {
        self.eps.map(f)
    }

    #[inline]
    fn zip_eps(self, o: Jet, f: impl Fn(f64, f64) -> f64) -> [f64; MAX_DOF] {
        let mut eps = [0.0; MAX_DOF];
        for (i, e) in eps.iter_mut().enumerate() {
            *e = f(self.eps[i], o.eps[i]);
        }
        eps
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        Jet { re: self.re + o.re, eps: self.zip_eps(o, |a, b| a + b) }
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        Jet { re: self.re - o.re, eps: self.zip_eps(o, |a, b| a - b) }
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        Jet { re: self.re * o.re, eps: self.zip_eps(o, |a, b| a * o.re + self.re * b) }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        let inv = 1.0 / o.re;
        let re = self.re * inv;
        Jet { re, eps: self.zip_eps(o, |a, b| (a - re * b) * inv) }
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        Jet { re: -self.re, eps: self.map_eps(|a| -a) }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: f64) -> Jet {
        Jet { re: self.re + o, eps: self.eps }
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: f64) -> Jet {
        Jet { re: self.re - o, eps: self.eps }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: f64) -> Jet {
        Jet { re: self.re * o, eps: self.map_eps(|a| a * o) }
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: f64) -> Jet {
        Jet { re: self.re / o, eps: self.map_eps(|a| a / o) }
    }
}

impl Real for Jet {
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let k = 0.5 / s;
        Jet { re: s, eps: self.map_eps(|a| a * k) }
    }
    fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        Jet { re: s, eps: self.map_eps(|a| a * c) }
    }
    fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        Jet { re: c, eps: self.map_eps(|a| -a * s) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_composite() {
        // f(x, y) = sin(x) * y / sqrt(x + y)
        let (x0, y0) = (0.7, 2.0);
        let x = Jet::variable(x0, 0);
        let y = Jet::variable(y0, 1);
        let f = x.sin() * y / (x + y).sqrt();
        let g = |x: f64, y: f64| x.sin() * y / (x + y).sqrt();
        let h = 1e-6;
        let dx = (g(x0 + h, y0) - g(x0 - h, y0)) / (2.0 * h);
        let dy = (g(x0, y0 + h) - g(x0, y0 - h)) / (2.0 * h);
        assert!((f.re - g(x0, y0)).abs() < 1e-15);
        assert!((f.eps[0] - dx).abs() < 1e-8);
        assert!((f.eps[1] - dy).abs() < 1e-8);
    }
}
