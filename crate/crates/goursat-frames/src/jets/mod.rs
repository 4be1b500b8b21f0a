//! Truncated multivariate Taylor arithmetic.
//!
//! A [`JetScalar`] holds the Taylor coefficients of a scalar function at a
//! point, up to a fixed total degree. Arithmetic follows the usual jet
//! semantics: products silently drop terms above the truncation order, while
//! asking for a derivative the jet cannot represent is an error.

mod linalg;
mod shape;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

pub use linalg::{
    jet_cholesky_upper, jet_inverse, jet_matmul, jet_solve, jet_transpose, JetMatrix,
};
pub use shape::{jet_budget, monomial_count, set_jet_budget, DEFAULT_JET_BUDGET};

use shape::Shape;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("singular evaluation in {op}")]
    SingularEvaluation { op: &'static str },
    #[error("insufficient jet order: need {needed}, have {available}")]
    InsufficientOrder { needed: usize, available: usize },
    #[error("variable index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("jet shapes differ: ({0}, {1}) vs ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error(
        "jet budget exceeded: {dim} variables to order {order} needs {coefficients} coefficients (budget {budget})"
    )]
    Budget {
        dim: usize,
        order: usize,
        coefficients: usize,
        budget: usize,
    },
}

/// Truncated Taylor expansion of a scalar function in `dim` variables.
#[derive(Clone)]
pub struct JetScalar {
    shape: Arc<Shape>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for JetScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c != 0.0 || i == 0 {
                m.entry(&self.shape.exponents(i), &c);
            }
        }
        m.finish()
    }
}

impl PartialEq for JetScalar {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

impl JetScalar {
    /// The constant function `value`.
    pub fn constant(dim: usize, order: usize, value: f64) -> Result<Self, JetError> {
        let shape = Shape::get(dim, order)?;
        let mut coeffs = vec![0.0; shape.len()];
        coeffs[0] = value;
        Ok(JetScalar { shape, coeffs })
    }

    /// Jet of the coordinate function `x_var` at `point`.
    pub fn seed(point: &[f64], var: usize, order: usize) -> Result<Self, JetError> {
        if var >= point.len() {
            return Err(JetError::IndexOutOfRange {
                index: var,
                dim: point.len(),
            });
        }
        let mut j = Self::constant(point.len(), order, point[var])?;
        if order > 0 {
            j.coeffs[1 + var] = 1.0;
        }
        Ok(j)
    }

    /// Coordinate jets for every variable at `point`.
    pub fn seed_all(point: &[f64], order: usize) -> Result<Vec<Self>, JetError> {
        (0..point.len())
            .map(|v| Self::seed(point, v, order))
            .collect()
    }

    /// A constant with the same shape as `self`.
    pub fn constant_like(&self, value: f64) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        coeffs[0] = value;
        JetScalar {
            shape: self.shape.clone(),
            coeffs,
        }
    }

    pub fn zero_like(&self) -> Self {
        self.constant_like(0.0)
    }

    /// Build a jet from raw coefficients in this crate's monomial order.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Self, JetError> {
        let shape = Shape::get(dim, order)?;
        if coeffs.len() != shape.len() {
            return Err(JetError::ShapeMismatch(dim, order, coeffs.len(), 0));
        }
        Ok(JetScalar { shape, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn order(&self) -> usize {
        self.shape.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Exponent vector of the `i`-th stored coefficient.
    pub fn exponents(&self, i: usize) -> Vec<usize> {
        self.shape
            .exponents(i)
            .iter()
            .map(|&e| e as usize)
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn check_index(&self, multi: &[usize]) -> Result<usize, JetError> {
        if multi.len() != self.dim() {
            return Err(JetError::IndexOutOfRange {
                index: multi.len(),
                dim: self.dim(),
            });
        }
        let deg: usize = multi.iter().sum();
        if deg > self.order() {
            return Err(JetError::InsufficientOrder {
                needed: deg,
                available: self.order(),
            });
        }
        let key: Vec<u8> = multi.iter().map(|&e| e as u8).collect();
        Ok(self.shape.index_of(&key).expect("degree checked"))
    }

    /// Raw Taylor coefficient of the monomial `multi`.
    pub fn coeff(&self, multi: &[usize]) -> Result<f64, JetError> {
        Ok(self.coeffs[self.check_index(multi)?])
    }

    /// Partial derivative `∂^multi f` at the expansion point.
    pub fn derivative(&self, multi: &[usize]) -> Result<f64, JetError> {
        let c = self.coeffs[self.check_index(multi)?];
        Ok(multi.iter().fold(c, |acc, &e| acc * factorial(e)))
    }

    /// Gradient at the expansion point.
    pub fn gradient(&self) -> Result<Vec<f64>, JetError> {
        if self.order() == 0 {
            return Err(JetError::InsufficientOrder {
                needed: 1,
                available: 0,
            });
        }
        Ok(self.coeffs[1..1 + self.dim()].to_vec())
    }

    /// Jet of `∂f/∂x_var`, one order lower.
    pub fn partial(&self, var: usize) -> Result<Self, JetError> {
        if var >= self.dim() {
            return Err(JetError::IndexOutOfRange {
                index: var,
                dim: self.dim(),
            });
        }
        if self.order() == 0 {
            return Err(JetError::InsufficientOrder {
                needed: 1,
                available: 0,
            });
        }
        let out_shape = Shape::get(self.dim(), self.order() - 1)?;
        let mut coeffs = vec![0.0; out_shape.len()];
        for (i, c) in coeffs.iter_mut().enumerate() {
            let up = self.shape.inc(var, i) as usize;
            let e = self.shape.exponents(up)[var] as f64;
            *c = e * self.coeffs[up];
        }
        Ok(JetScalar {
            shape: out_shape,
            coeffs,
        })
    }

    /// Re-express in `dim` variables, sending variable `i` of `self` to variable `vars[i]`.
    pub fn embed(&self, dim: usize, vars: &[usize]) -> Result<Self, JetError> {
        if vars.len() != self.dim() {
            return Err(JetError::ShapeMismatch(
                self.dim(),
                self.order(),
                vars.len(),
                dim,
            ));
        }
        if let Some(&v) = vars.iter().find(|&&v| v >= dim) {
            return Err(JetError::IndexOutOfRange { index: v, dim });
        }
        let shape = Shape::get(dim, self.order())?;
        let mut coeffs = vec![0.0; shape.len()];
        let mut exps = vec![0u8; dim];
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            exps.iter_mut().for_each(|e| *e = 0);
            for (k, &e) in self.shape.exponents(i).iter().enumerate() {
                exps[vars[k]] += e;
            }
            let at = shape
                .index_of(&exps)
                .expect("embedded monomial within order");
            coeffs[at] += c;
        }
        Ok(JetScalar { shape, coeffs })
    }

    /// Drop every term above `order`.
    pub fn truncate(&self, order: usize) -> Result<Self, JetError> {
        if order > self.order() {
            return Err(JetError::InsufficientOrder {
                needed: order,
                available: self.order(),
            });
        }
        if order == self.order() {
            return Ok(self.clone());
        }
        let shape = Shape::get(self.dim(), order)?;
        let coeffs = self.coeffs[..shape.len()].to_vec();
        Ok(JetScalar { shape, coeffs })
    }

    fn same_shape(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.shape, &other.shape)
    }

    fn assert_shape(&self, other: &Self) {
        assert!(
            self.same_shape(other),
            "jet arithmetic on mismatched shapes ({}, {}) vs ({}, {})",
            self.dim(),
            self.order(),
            other.dim(),
            other.order()
        );
    }

    /// Checked version of the operators: errors instead of panicking on shape mismatch.
    pub fn check_same_shape(&self, other: &Self) -> Result<(), JetError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(JetError::ShapeMismatch(
                self.dim(),
                self.order(),
                other.dim(),
                other.order(),
            ))
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        JetScalar {
            shape: self.shape.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        self.assert_shape(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    fn mul_impl(&self, other: &Self) -> Self {
        self.assert_shape(other);
        let shape = &self.shape;
        let mut out = vec![0.0; self.coeffs.len()];
        if self.coeffs.len() == 1 {
            out[0] = self.coeffs[0] * other.coeffs[0];
            return JetScalar {
                shape: shape.clone(),
                coeffs: out,
            };
        }
        let nz_a = self.coeffs.iter().filter(|c| **c != 0.0).count();
        let nz_b = other.coeffs.iter().filter(|c| **c != 0.0).count();
        let (outer, inner) = if nz_a <= nz_b {
            (self, other)
        } else {
            (other, self)
        };
        let nz: Vec<u32> = inner
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, _)| j as u32)
            .collect();
        if nz.is_empty() {
            return JetScalar {
                shape: shape.clone(),
                coeffs: out,
            };
        }
        let (row_off, entries) = shape.mul_table();
        let order = shape.order;
        for (i, &ai) in outer.coeffs.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let lim = shape.upto[order - shape.degree[i] as usize] as u32;
            let row = &entries[row_off[i]..];
            for &j in &nz {
                if j >= lim {
                    break;
                }
                out[row[j as usize] as usize] += ai * inner.coeffs[j as usize];
            }
        }
        JetScalar {
            shape: shape.clone(),
            coeffs: out,
        }
    }

    /// Compose with a univariate Taylor series `g(a0 + h) = Σ c_k h^k` where `a0 = self.value()`.
    pub fn compose_series(&self, series: &[f64]) -> Self {
        let order = self.order();
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let top = order.min(series.len().saturating_sub(1));
        let mut acc = self.constant_like(*series.get(top).unwrap_or(&0.0));
        for k in (0..top).rev() {
            acc = acc.mul_impl(&h);
            acc.coeffs[0] += series[k];
        }
        acc
    }

    /// Evaluate this jet, taken at some point `p`, on inner jets whose values equal `p`.
    ///
    /// The result is `Σ_α c_α Π_v (inner_v − p_v)^{α_v}` in the shape of the inner jets.
    pub fn compose(&self, inner: &[JetScalar]) -> Result<Self, JetError> {
        if inner.len() != self.dim() {
            return Err(JetError::IndexOutOfRange {
                index: inner.len(),
                dim: self.dim(),
            });
        }
        let Some(first) = inner.first() else {
            return Ok(self.clone());
        };
        for j in inner {
            first.check_same_shape(j)?;
        }
        let hs: Vec<JetScalar> = inner
            .iter()
            .map(|j| {
                let mut h = j.clone();
                h.coeffs[0] = 0.0;
                h
            })
            .collect();
        let top = self.order().min(first.order());
        let n = self.shape.count_upto(top);
        let mut powers: Vec<JetScalar> = Vec::with_capacity(n);
        let mut acc = first.zero_like();
        for i in 0..n {
            let p = if i == 0 {
                first.constant_like(1.0)
            } else {
                let (parent, v) = self.shape.parent(i);
                powers[parent].mul_impl(&hs[v])
            };
            let c = self.coeffs[i];
            if c != 0.0 {
                acc.axpy(c, &p);
            }
            powers.push(p);
        }
        Ok(acc)
    }

    pub fn recip(&self) -> Result<Self, JetError> {
        let a0 = self.value();
        if a0 == 0.0 || !a0.is_finite() {
            return Err(JetError::SingularEvaluation { op: "division" });
        }
        let k = self.order();
        let mut s = Vec::with_capacity(k + 1);
        let mut term = 1.0 / a0;
        for _ in 0..=k {
            s.push(term);
            term *= -1.0 / a0;
        }
        Ok(self.compose_series(&s))
    }

    pub fn div(&self, other: &Self) -> Result<Self, JetError> {
        self.assert_shape(other);
        Ok(self.mul_impl(&other.recip()?))
    }

    /// Integer power by repeated squaring (negative exponents via the reciprocal).
    pub fn powi(&self, n: i32) -> Result<Self, JetError> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut result = self.constant_like(1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_impl(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_impl(&base);
            }
        }
        Ok(result)
    }

    /// Real power `self^r`.
    pub fn powf(&self, r: f64) -> Result<Self, JetError> {
        if r.fract() == 0.0 && r.abs() <= 64.0 {
            let n = r as i32;
            if n < 0 && self.value() == 0.0 {
                return Err(JetError::SingularEvaluation { op: "pow" });
            }
            return self.powi(n);
        }
        let a0 = self.value();
        if !(a0 > 0.0) || !a0.is_finite() {
            return Err(JetError::SingularEvaluation { op: "pow" });
        }
        let k = self.order();
        let mut s = Vec::with_capacity(k + 1);
        // binom(r, j) a0^(r-j)
        let mut coef = a0.powf(r);
        for j in 0..=k {
            s.push(coef);
            coef *= (r - j as f64) / ((j + 1) as f64) / a0;
        }
        Ok(self.compose_series(&s))
    }

    pub fn sqrt(&self) -> Result<Self, JetError> {
        if !(self.value() > 0.0) {
            return Err(JetError::SingularEvaluation { op: "sqrt" });
        }
        self.powf(0.5)
    }

    pub fn exp(&self) -> Self {
        let a0 = self.value();
        let e0 = a0.exp();
        let s: Vec<f64> = (0..=self.order()).map(|k| e0 / factorial(k)).collect();
        self.compose_series(&s)
    }

    pub fn ln(&self) -> Result<Self, JetError> {
        let a0 = self.value();
        if !(a0 > 0.0) || !a0.is_finite() {
            return Err(JetError::SingularEvaluation { op: "ln" });
        }
        let mut s = vec![a0.ln()];
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            s.push(sign / (k as f64 * a0.powi(k as i32)));
        }
        Ok(self.compose_series(&s))
    }

    fn sin_cos_series(&self, phase: usize) -> Self {
        // derivatives of sin cycle through sin, cos, -sin, -cos
        let a0 = self.value();
        let cyc = [a0.sin(), a0.cos(), -a0.sin(), -a0.cos()];
        let s: Vec<f64> = (0..=self.order())
            .map(|k| cyc[(k + phase) % 4] / factorial(k))
            .collect();
        self.compose_series(&s)
    }

    pub fn sin(&self) -> Self {
        self.sin_cos_series(0)
    }

    pub fn cos(&self) -> Self {
        self.sin_cos_series(1)
    }

    pub fn tan(&self) -> Result<Self, JetError> {
        if self.value().cos() == 0.0 {
            return Err(JetError::SingularEvaluation { op: "tan" });
        }
        self.sin()
            .div(&self.cos())
            .map_err(|_| JetError::SingularEvaluation { op: "tan" })
    }
}

impl Add for &JetScalar {
    type Output = JetScalar;
    fn add(self, rhs: &JetScalar) -> JetScalar {
        self.assert_shape(rhs);
        JetScalar {
            shape: self.shape.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &JetScalar {
    type Output = JetScalar;
    fn sub(self, rhs: &JetScalar) -> JetScalar {
        self.assert_shape(rhs);
        JetScalar {
            shape: self.shape.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &JetScalar {
    type Output = JetScalar;
    fn mul(self, rhs: &JetScalar) -> JetScalar {
        self.mul_impl(rhs)
    }
}

impl Neg for &JetScalar {
    type Output = JetScalar;
    fn neg(self) -> JetScalar {
        self.scale(-1.0)
    }
}

macro_rules! owned_ops {
    ($tr:ident, $m:ident) => {
        impl $tr for JetScalar {
            type Output = JetScalar;
            fn $m(self, rhs: JetScalar) -> JetScalar {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&JetScalar> for JetScalar {
            type Output = JetScalar;
            fn $m(self, rhs: &JetScalar) -> JetScalar {
                (&self).$m(rhs)
            }
        }
        impl $tr<JetScalar> for &JetScalar {
            type Output = JetScalar;
            fn $m(self, rhs: JetScalar) -> JetScalar {
                self.$m(&rhs)
            }
        }
    };
}

owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);

impl Neg for JetScalar {
    type Output = JetScalar;
    fn neg(self) -> JetScalar {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn seed_examples() {
        let j = JetScalar::seed(&[2.0, 5.0], 0, 2).unwrap();
        assert_eq!(j.value(), 2.0);
        assert_eq!(j.derivative(&[1, 0]).unwrap(), 1.0);
        assert_eq!(j.derivative(&[0, 1]).unwrap(), 0.0);
        assert_eq!(j.derivative(&[1, 1]).unwrap(), 0.0);
        let j = JetScalar::seed(&[0.0, 0.0, 0.0], 2, 1).unwrap();
        assert_eq!(j.derivative(&[0, 0, 1]).unwrap(), 1.0);
        let j = JetScalar::seed(&[1.0], 0, 0).unwrap();
        assert_eq!(j.coeffs(), &[1.0]);
        assert!(JetScalar::seed(&[1.0], 3, 2).is_err());
    }

    #[test]
    fn sin_maclaurin() {
        let x = JetScalar::seed(&[0.0], 0, 3).unwrap();
        let s = x.sin();
        assert_relative_eq!(s.coeff(&[0]).unwrap(), 0.0);
        assert_relative_eq!(s.coeff(&[1]).unwrap(), 1.0);
        assert_relative_eq!(s.coeff(&[2]).unwrap(), 0.0);
        assert_relative_eq!(s.coeff(&[3]).unwrap(), -1.0 / 6.0);
    }

    #[test]
    fn product_rule_example() {
        let x = JetScalar::seed(&[1.0, 1.0], 0, 2).unwrap();
        let y = JetScalar::seed(&[1.0, 1.0], 1, 2).unwrap();
        let p = &x * &y;
        assert_eq!(p.value(), 1.0);
        assert_eq!(p.derivative(&[1, 0]).unwrap(), 1.0);
        assert_eq!(p.derivative(&[0, 1]).unwrap(), 1.0);
        assert_eq!(p.coeff(&[1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn third_derivative_of_geometric_series() {
        let x = JetScalar::seed(&[0.0], 0, 3).unwrap();
        let f = x.constant_like(1.0) - &x;
        let g = f.recip().unwrap();
        assert_relative_eq!(g.derivative(&[3]).unwrap(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn extract_examples() {
        let x = JetScalar::seed(&[3.0], 0, 2).unwrap();
        let sq = &x * &x;
        assert_relative_eq!(sq.derivative(&[2]).unwrap(), 2.0);
        let p = [0.0, 0.0];
        let x = JetScalar::seed(&p, 0, 3).unwrap();
        let y = JetScalar::seed(&p, 1, 3).unwrap();
        let f = &x.sin() * &y.cos();
        assert_relative_eq!(f.derivative(&[1, 1]).unwrap(), 0.0);
        assert_eq!(f.derivative(&[0, 0]).unwrap(), f.value());
        assert!(matches!(
            sq.derivative(&[3]),
            Err(JetError::InsufficientOrder { .. })
        ));
    }

    #[test]
    fn domain_errors_name_the_operation() {
        let x = JetScalar::seed(&[-1.0], 0, 2).unwrap();
        assert_eq!(
            x.sqrt().unwrap_err(),
            JetError::SingularEvaluation { op: "sqrt" }
        );
        assert_eq!(
            x.ln().unwrap_err(),
            JetError::SingularEvaluation { op: "ln" }
        );
        let z = x.zero_like();
        assert_eq!(
            x.div(&z).unwrap_err(),
            JetError::SingularEvaluation { op: "division" }
        );
        assert!(x.powf(0.5).is_err());
        assert!(x.powf(3.0).is_ok());
    }

    #[test]
    fn partial_lowers_order() {
        let p = [0.3, -0.2];
        let x = JetScalar::seed(&p, 0, 4).unwrap();
        let y = JetScalar::seed(&p, 1, 4).unwrap();
        let f = (&x * &x) * &y;
        let fx = f.partial(0).unwrap();
        assert_eq!(fx.order(), 3);
        assert_relative_eq!(fx.value(), 2.0 * 0.3 * -0.2, epsilon = 1e-15);
        assert_relative_eq!(fx.derivative(&[1, 0]).unwrap(), 2.0 * -0.2, epsilon = 1e-15);
        assert_relative_eq!(fx.derivative(&[1, 1]).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn compose_with_curve() {
        // f(x, y) = x * y along (t, t^2) at t = 0.5 is t^3
        let t = JetScalar::seed(&[0.5], 0, 4).unwrap();
        let p = [0.5, 0.25];
        let x = JetScalar::seed(&p, 0, 4).unwrap();
        let y = JetScalar::seed(&p, 1, 4).unwrap();
        let f = &x * &y;
        let g = f.compose(&[t.clone(), &t * &t]).unwrap();
        let expect = t.powi(3).unwrap();
        for (a, b) in g.coeffs().iter().zip(expect.coeffs()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn truncation_is_prefix() {
        let p = [0.1, 0.2, 0.3];
        let x = JetScalar::seed(&p, 2, 5).unwrap();
        let f = x.exp();
        let t = f.truncate(2).unwrap();
        assert_eq!(t.order(), 2);
        assert_eq!(&f.coeffs()[..t.coeffs().len()], t.coeffs());
        assert!(f.truncate(6).is_err());
    }

    #[test]
    fn tan_matches_ratio() {
        let x = JetScalar::seed(&[0.4], 0, 5).unwrap();
        let t = x.tan().unwrap();
        let r = x.sin().div(&x.cos()).unwrap();
        for (a, b) in t.coeffs().iter().zip(r.coeffs()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
        assert_relative_eq!(
            t.derivative(&[1]).unwrap(),
            1.0 / 0.4f64.cos().powi(2),
            epsilon = 1e-13
        );
    }

    #[test]
    fn embed_moves_variables() {
        let p = [0.5, -1.0];
        let xs = JetScalar::seed_all(&p, 3).unwrap();
        let f = &(&xs[0] * &xs[1]) + &xs[1].sin();
        let g = f.embed(4, &[3, 1]).unwrap();
        let q = [9.0, -1.0, 7.0, 0.5];
        let ys = JetScalar::seed_all(&q, 3).unwrap();
        let h = &(&ys[3] * &ys[1]) + &ys[1].sin();
        for (a, b) in g.coeffs().iter().zip(h.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
