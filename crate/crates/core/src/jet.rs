//! Truncated univariate power series ("jets") and the [`Real`] abstraction
//! that lets every model function be written once and evaluated on either
//! plain `f64` or on jets.
//!
//! A jet of order K stores the Taylor coefficients u_0..u_K of u(s) around
//! s = 0, so the k-th derivative is k!·u_k. Operations on order-K jets yield
//! order-K jets. The constant term of every operation is computed with the
//! same floating-point expression as the scalar operation, so degree-0 jets
//! reproduce scalar evaluation bit for bit.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Scalar-like number type used by the model functions.
pub trait Real:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A constant with the same shape (jet order) as `self`.
    fn constant(&self, v: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(&self) -> Self;
    fn exp_m1(&self) -> Self;
    fn ln(&self) -> Self;
    fn recip(&self) -> Self;

    /// Integer power by repeated multiplication (shared by all
    /// implementations so scalar and jet agree exactly).
    fn ipow(&self, n: u32) -> Self {
        if n == 0 {
            return self.constant(1.0);
        }
        let mut acc = self.clone();
        for _ in 1..n {
            acc = acc * self.clone();
        }
        acc
    }

    /// Logistic function 1/(1 + e^{-u}).
    fn sigmoid(&self) -> Self {
        ((-self.clone()).exp() + 1.0).recip()
    }

    /// κ(φ) = φ/(e^{-φ} − 1), continuous through φ = 0 where κ(0) = −1.
    fn ghk_kernel(&self) -> Self {
        if self.value().abs() < GHK_SWITCH {
            ghk_kernel_series(self)
        } else {
            self.clone() / (-self.clone()).exp_m1()
        }
    }
}

/// Below this |φ| the GHK kernel is evaluated from its Bernoulli series.
pub const GHK_SWITCH: f64 = 1e-4;

const GHK_SERIES_TERMS: usize = 24;

/// Coefficients a_n of κ(φ) = Σ a_n φ^n. Since t/(e^t − 1) = Σ B_n t^n/n!,
/// κ(φ) = −Σ B_n (−φ)^n/n!.
fn ghk_series_coefficients() -> &'static [f64; GHK_SERIES_TERMS] {
    static COEFFS: OnceLock<[f64; GHK_SERIES_TERMS]> = OnceLock::new();
    COEFFS.get_or_init(|| {
        // b[n] = B_n/n!, from Σ_{k=0}^{n} b_k/(n+1−k)! = 0 for n ≥ 1.
        let mut b = [0.0f64; GHK_SERIES_TERMS];
        let mut inv_fact = [1.0f64; GHK_SERIES_TERMS + 2];
        for i in 1..inv_fact.len() {
            inv_fact[i] = inv_fact[i - 1] / i as f64;
        }
        b[0] = 1.0;
        for n in 1..GHK_SERIES_TERMS {
            let s: f64 = (0..n).map(|k| b[k] * inv_fact[n + 1 - k]).sum();
            b[n] = -s;
        }
        let mut a = [0.0; GHK_SERIES_TERMS];
        for n in 0..GHK_SERIES_TERMS {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            a[n] = -sign * b[n];
        }
        // odd Bernoulli numbers beyond B_1 vanish
        for n in (3..GHK_SERIES_TERMS).step_by(2) {
            a[n] = 0.0;
        }
        a
    })
}

fn ghk_kernel_series<T: Real>(phi: &T) -> T {
    let a = ghk_series_coefficients();
    let mut acc = phi.constant(a[GHK_SERIES_TERMS - 1]);
    for n in (0..GHK_SERIES_TERMS - 1).rev() {
        acc = acc * phi.clone() + a[n];
    }
    acc
}

/// dκ/dφ for scalars, continuous through φ = 0.
pub fn ghk_kernel_d1(phi: f64) -> f64 {
    if phi.abs() < GHK_SWITCH {
        let a = ghk_series_coefficients();
        let mut acc = 0.0;
        for n in (1..GHK_SERIES_TERMS).rev() {
            acc = acc * phi + n as f64 * a[n];
        }
        acc
    } else {
        let em = (-phi).exp_m1();
        (em + phi * (-phi).exp()) / (em * em)
    }
}

impl Real for f64 {
    fn constant(&self, v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn exp_m1(&self) -> Self {
        f64::exp_m1(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
}

/// Truncated power series with scalar coefficients.
#[derive(Clone, PartialEq)]
pub struct Jet {
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet{:?}", self.c)
    }
}

impl Jet {
    /// Constant series of order `order`.
    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Jet { c }
    }

    /// The series v + s of order `order`.
    pub fn variable(v: f64, order: usize) -> Self {
        let mut j = Self::constant(v, order);
        if order > 0 {
            j.c[1] = 1.0;
        }
        j
    }

    /// The series v + d·s, a point moving along direction d.
    pub fn line(v: f64, d: f64, order: usize) -> Self {
        let mut j = Self::constant(v, order);
        if order > 0 {
            j.c[1] = d;
        }
        j
    }

    pub fn from_coeffs(c: Vec<f64>) -> Self {
        assert!(!c.is_empty(), "a jet needs at least the constant term");
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.c
    }

    /// k-th derivative at s = 0.
    pub fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.coeff(k) * fact
    }

    /// Horner evaluation at s.
    pub fn eval(&self, s: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &a| acc * s + a)
    }

    pub fn scale(&self, a: f64) -> Self {
        Jet { c: self.c.iter().map(|v| v * a).collect() }
    }

    /// Division that reports a zero constant term instead of producing inf.
    pub fn checked_div(&self, rhs: &Jet) -> Result<Jet> {
        if rhs.c[0] == 0.0 {
            return Err(Error::SingularJet("division by a jet with zero constant term"));
        }
        Ok(self.clone() / rhs.clone())
    }

    pub fn checked_recip(&self) -> Result<Jet> {
        self.constant_like(1.0).checked_div(self)
    }

    pub fn checked_ln(&self) -> Result<Jet> {
        if !(self.c[0] > 0.0) {
            return Err(Error::SingularJet("logarithm of a jet with nonpositive constant term"));
        }
        Ok(Real::ln(self))
    }

    /// u^a for real a; needs a positive constant term.
    pub fn powf(&self, a: f64) -> Result<Jet> {
        let u = &self.c;
        if !(u[0] > 0.0) {
            return Err(Error::SingularJet("real power of a jet with nonpositive constant term"));
        }
        let n = u.len();
        let mut p = vec![0.0; n];
        p[0] = u[0].powf(a);
        for k in 1..n {
            let mut s = 0.0;
            for j in 1..=k {
                s += ((a + 1.0) * j as f64 - k as f64) * u[j] * p[k - j];
            }
            p[k] = s / (k as f64 * u[0]);
        }
        Ok(Jet { c: p })
    }

    fn constant_like(&self, v: f64) -> Self {
        Jet::constant(v, self.order())
    }

    fn check_order(&self, other: &Jet) {
        assert_eq!(self.c.len(), other.c.len(), "jet orders differ");
    }

    /// Coefficients of exp(u) with the constant term supplied separately.
    fn exp_coeffs(&self) -> Vec<f64> {
        let u = &self.c;
        let n = u.len();
        let mut e = vec![0.0; n];
        e[0] = u[0].exp();
        for k in 1..n {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * u[j] * e[k - j];
            }
            e[k] = s / k as f64;
        }
        e
    }
}

impl Real for Jet {
    fn constant(&self, v: f64) -> Self {
        self.constant_like(v)
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn exp(&self) -> Self {
        Jet { c: self.exp_coeffs() }
    }
    fn exp_m1(&self) -> Self {
        let mut c = self.exp_coeffs();
        c[0] = self.c[0].exp_m1();
        Jet { c }
    }
    fn ln(&self) -> Self {
        let u = &self.c;
        let n = u.len();
        let mut l = vec![0.0; n];
        l[0] = u[0].ln();
        for k in 1..n {
            let mut s = 0.0;
            for j in 1..k {
                s += j as f64 * l[j] * u[k - j];
            }
            l[k] = (u[k] - s / k as f64) / u[0];
        }
        Jet { c: l }
    }
    fn recip(&self) -> Self {
        self.constant_like(1.0) / self.clone()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self.check_order(&rhs);
        for (a, b) in self.c.iter_mut().zip(&rhs.c) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self.check_order(&rhs);
        for (a, b) in self.c.iter_mut().zip(&rhs.c) {
            *a -= b;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        self.check_order(&rhs);
        let n = self.c.len();
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mut s = 0.0;
            for j in 0..=k {
                s += self.c[j] * rhs.c[k - j];
            }
            out[k] = s;
        }
        Jet { c: out }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        self.check_order(&rhs);
        let n = self.c.len();
        let b = &rhs.c;
        let mut q = vec![0.0; n];
        q[0] = self.c[0] / b[0];
        for k in 1..n {
            let mut s = self.c[k];
            for j in 1..=k {
                s -= b[j] * q[k - j];
            }
            q[k] = s / b[0];
        }
        Jet { c: q }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for a in &mut self.c {
            *a = -*a;
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for a in &mut self.c {
            *a *= rhs;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(mut self, rhs: f64) -> Jet {
        for a in &mut self.c {
            *a /= rhs;
        }
        self
    }
}

/// Writes `order,coefficient` rows for debugging.
pub fn jet_to_csv(j: &Jet) -> String {
    let mut s = String::from("order,coefficient\n");
    for (k, c) in j.c.iter().enumerate() {
        s.push_str(&format!("{k},{c:.16e}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn product_and_geometric_series() {
        let a = Jet::from_coeffs(vec![1.0, 1.0, 0.0, 0.0]);
        let b = Jet::from_coeffs(vec![1.0, -1.0, 0.0, 0.0]);
        assert_eq!((a * b).coeffs(), &[1.0, 0.0, -1.0, 0.0]);
        let r = Jet::from_coeffs(vec![1.0, -1.0, 0.0, 0.0, 0.0]).recip();
        assert_eq!(r.coeffs(), &[1.0; 5]);
    }

    #[test]
    fn elementary_series() {
        let s = Jet::variable(0.0, 5);
        close(s.exp().coeffs(), &[1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0], 1e-15);
        let l = Jet::variable(1.0, 4).ln();
        close(l.coeffs(), &[0.0, 1.0, -0.5, 1.0 / 3.0, -0.25], 1e-15);
        let em = Jet::variable(0.0, 3).exp_m1();
        close(em.coeffs(), &[0.0, 1.0, 0.5, 1.0 / 6.0], 1e-15);
    }

    #[test]
    fn powf_matches_binomial_series() {
        // (1+s)^{1/2} = 1 + s/2 − s²/8 + s³/16
        let p = Jet::variable(1.0, 3).powf(0.5).unwrap();
        close(p.coeffs(), &[1.0, 0.5, -0.125, 0.0625], 1e-15);
        assert!(Jet::variable(0.0, 3).powf(0.5).is_err());
    }

    #[test]
    fn division_by_zero_constant_is_reported() {
        let z = Jet::variable(0.0, 2);
        assert!(matches!(Jet::constant(1.0, 2).checked_div(&z), Err(Error::SingularJet(_))));
        assert!(z.checked_ln().is_err());
        assert!(z.checked_recip().is_err());
    }

    #[test]
    fn ghk_kernel_series_matches_closed_form() {
        let a = ghk_series_coefficients();
        close(&a[..5], &[-1.0, -0.5, -1.0 / 12.0, 0.0, 1.0 / 720.0], 1e-15);
        for &phi in &[1e-4, 2e-4, -2e-4, 1e-3] {
            let direct = phi / (-phi).exp_m1();
            assert!((ghk_kernel_series(&phi) - direct).abs() < 1e-15);
        }
        assert_eq!(0.0f64.ghk_kernel(), -1.0);
    }

    #[test]
    fn ghk_kernel_derivative_is_continuous() {
        let below = ghk_kernel_d1(GHK_SWITCH * (1.0 - 1e-9));
        let above = ghk_kernel_d1(GHK_SWITCH * (1.0 + 1e-9));
        assert!((below - above).abs() < 1e-9);
        assert!((ghk_kernel_d1(0.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn jet_of_kernel_across_switch() {
        for &phi0 in &[0.0, 5e-5, 0.3] {
            let j = Jet::variable(phi0, 2).ghk_kernel();
            let d1 = ghk_kernel_d1(phi0);
            assert!((j.coeff(1) - d1).abs() < 1e-12, "{phi0}");
        }
    }
}
