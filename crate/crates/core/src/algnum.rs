//! Exact arithmetic in number fields `Q[t]/(f(t))`, exact characteristic
//! polynomials and singularity decisions, and the encoding of semidefinite
//! feasibility into an existential formula over the reals.
//!
//! Polynomials are coefficient vectors over [`Rational`], lowest degree
//! first.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CMat;
use crate::rational::{self, Rational};

/// Largest characteristic polynomial dimension accepted.
pub const MAX_CHAR_POLY_DIM: usize = 64;
/// Integer polynomials with a constant term above this are not tested for
/// irreducibility (divisor enumeration is by trial division).
pub const MAX_IRREDUCIBILITY_CONSTANT: u64 = 1 << 40;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgError {
    #[error("elements or matrices belong to different fields")]
    FieldMismatch,
    #[error("division by zero")]
    DivisionByZero,
    #[error("modulus must be monic of degree at least 1")]
    NotMonic,
    #[error("modulus is reducible over the rationals")]
    Reducible,
    #[error("irreducibility testing supports degree <= 4, got {0}")]
    DegreeTooLarge(usize),
    #[error("constant term too large for the irreducibility test")]
    ConstantTooLarge,
    #[error("expected {expected} coefficients, got {got}")]
    Length { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} projector is not idempotent")]
    NotIdempotent(&'static str),
    #[error("field has no known complex conjugation")]
    NoConjugation,
    #[error("bad root isolation: {0}")]
    Isolation(String),
    #[error("bad JSON: {0}")]
    Json(String),
}

mod poly {
    use super::*;

    pub fn trim(mut p: Vec<Rational>) -> Vec<Rational> {
        while p.last().is_some_and(|c| c.is_zero()) {
            p.pop();
        }
        p
    }

    pub fn degree(p: &[Rational]) -> Option<usize> {
        p.iter().rposition(|c| !c.is_zero())
    }

    pub fn mul(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![Rational::zero(); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        trim(out)
    }

    pub fn sub(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
        let n = a.len().max(b.len());
        let zero = Rational::zero();
        trim(
            (0..n)
                .map(|i| a.get(i).unwrap_or(&zero) - b.get(i).unwrap_or(&zero))
                .collect(),
        )
    }

    /// Quotient and remainder; `b` must be nonzero.
    pub fn divmod(a: &[Rational], b: &[Rational]) -> (Vec<Rational>, Vec<Rational>) {
        let db = degree(b).expect("nonzero divisor");
        let lead = &b[db];
        let mut r = trim(a.to_vec());
        let mut q = vec![Rational::zero(); r.len().saturating_sub(db).max(1)];
        while let Some(dr) = degree(&r) {
            if dr < db {
                break;
            }
            let c = &r[dr] / lead;
            let shift = dr - db;
            for (i, bi) in b[..=db].iter().enumerate() {
                r[i + shift] -= &c * bi;
            }
            q[shift] = c;
            r = trim(r);
        }
        (trim(q), r)
    }

    pub fn eval(p: &[Rational], x: &Rational) -> Rational {
        p.iter().rev().fold(Rational::zero(), |acc, c| acc * x + c)
    }

    pub fn derivative(p: &[Rational]) -> Vec<Rational> {
        trim(
            p.iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * Rational::from_integer(BigInt::from(i)))
                .collect(),
        )
    }

    /// Inverse of `a` modulo `m` by the extended Euclidean algorithm, or
    /// `None` when they share a factor.
    pub fn inverse_mod(a: &[Rational], m: &[Rational]) -> Option<Vec<Rational>> {
        let (mut r0, mut r1) = (m.to_vec(), trim(a.to_vec()));
        let (mut s0, mut s1) = (Vec::new(), vec![Rational::one()]);
        while degree(&r1).is_some() {
            let (q, r) = divmod(&r0, &r1);
            let s = sub(&s0, &mul(&q, &s1));
            r0 = std::mem::replace(&mut r1, r);
            s0 = std::mem::replace(&mut s1, s);
        }
        // r0 is the gcd; it must be a nonzero constant.
        if degree(&r0) != Some(0) {
            return None;
        }
        let c = r0[0].clone();
        Some(s0.into_iter().map(|x| x / &c).collect())
    }
}

/// `Q[t]/(f(t))` with a chosen complex embedding of `t`.
#[derive(Debug, Clone)]
pub struct NumberField {
    name: String,
    modulus: Vec<Rational>,
    root: Complex64,
    /// Image of `t` under complex conjugation, when known.
    conjugate_of_t: Option<Vec<Rational>>,
}

impl PartialEq for NumberField {
    fn eq(&self, other: &Self) -> bool {
        self.modulus == other.modulus
    }
}

impl Eq for NumberField {}

fn coeffs(cs: &[i64]) -> Vec<Rational> {
    cs.iter().map(|&c| rational::int(c)).collect()
}

impl NumberField {
    /// The rationals, as `Q[t]/(t)`.
    pub fn rationals() -> Arc<Self> {
        Arc::new(NumberField {
            name: "Q".into(),
            modulus: coeffs(&[0, 1]),
            root: Complex64::new(0.0, 0.0),
            conjugate_of_t: Some(coeffs(&[0])),
        })
    }

    /// `Q(sqrt 2)` as `Q[t]/(t^2 - 2)`, `t -> sqrt 2`.
    pub fn sqrt2() -> Arc<Self> {
        Arc::new(NumberField {
            name: "Q(sqrt2)".into(),
            modulus: coeffs(&[-2, 0, 1]),
            root: Complex64::new(2f64.sqrt(), 0.0),
            conjugate_of_t: Some(coeffs(&[0, 1])),
        })
    }

    /// `Q(i)` as `Q[t]/(t^2 + 1)`, `t -> i`.
    pub fn gaussian() -> Arc<Self> {
        Arc::new(NumberField {
            name: "Q(i)".into(),
            modulus: coeffs(&[1, 0, 1]),
            root: Complex64::new(0.0, 1.0),
            conjugate_of_t: Some(coeffs(&[0, -1])),
        })
    }

    /// `Q(zeta_8)` as `Q[t]/(t^4 + 1)`, `t -> e^{i pi/4}`. Contains
    /// `1/sqrt 2 = (t - t^3)/2` and `i = t^2`.
    pub fn zeta8() -> Arc<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Arc::new(NumberField {
            name: "Q(zeta8)".into(),
            modulus: coeffs(&[1, 0, 0, 0, 1]),
            root: Complex64::new(h, h),
            // conj(zeta) = zeta^7 = -zeta^3
            conjugate_of_t: Some(coeffs(&[0, 0, 0, -1])),
        })
    }

    pub fn presets() -> Vec<Arc<Self>> {
        vec![Self::rationals(), Self::sqrt2(), Self::gaussian(), Self::zeta8()]
    }

    pub fn preset(name: &str) -> Option<Arc<Self>> {
        Self::presets().into_iter().find(|f| f.name == name)
    }

    /// A field from a monic modulus (lowest degree first), tested for
    /// irreducibility. `t` embeds as the root with the largest real part,
    /// then the largest imaginary part. Conjugation is only known when that
    /// root is real.
    pub fn new(name: &str, modulus: Vec<Rational>) -> Result<Arc<Self>, AlgError> {
        let modulus = poly::trim(modulus);
        if modulus.len() < 2 || !modulus.last().is_some_and(|c| c.is_one()) {
            return Err(AlgError::NotMonic);
        }
        if !is_irreducible(&modulus)? {
            return Err(AlgError::Reducible);
        }
        let d = modulus.len() - 1;
        let companion = DMatrix::from_fn(d, d, |i, j| {
            if j == d - 1 {
                -rational::to_f64(&modulus[i])
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let root = companion
            .complex_eigenvalues()
            .iter()
            .copied()
            .fold(None::<Complex64>, |best, z| match best {
                Some(b) if (b.re, b.im) >= (z.re, z.im) => Some(b),
                _ => Some(z),
            })
            .expect("degree at least 1");
        let real = root.im.abs() < 1e-12;
        let mut t = vec![Rational::zero(); d];
        if d > 1 {
            t[1] = Rational::one();
        }
        Ok(Arc::new(NumberField {
            name: name.to_string(),
            root: if real { Complex64::new(root.re, 0.0) } else { root },
            conjugate_of_t: real.then_some(if d == 1 { vec![-modulus[0].clone()] } else { t }),
            modulus,
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn degree(&self) -> usize {
        self.modulus.len() - 1
    }

    pub fn modulus(&self) -> &[Rational] {
        &self.modulus
    }

    pub fn root(&self) -> Complex64 {
        self.root
    }
}

/// Irreducibility over the rationals for degree at most 4, by the rational
/// root test and, for quartics, a search for integer quadratic factors.
pub fn is_irreducible(f: &[Rational]) -> Result<bool, AlgError> {
    let f = poly::trim(f.to_vec());
    let d = f.len().checked_sub(1).ok_or(AlgError::NotMonic)?;
    if d > 4 {
        return Err(AlgError::DegreeTooLarge(d));
    }
    if d <= 1 {
        return Ok(d == 1);
    }
    let g = monic_integer(&f);
    if g[0].is_zero() {
        return Ok(false);
    }
    let c0 = g[0]
        .abs()
        .to_u64()
        .filter(|&c| c <= MAX_IRREDUCIBILITY_CONSTANT)
        .ok_or(AlgError::ConstantTooLarge)?;
    let divisors = divisors(c0);
    let eval = |x: &BigInt| g.iter().rev().fold(BigInt::zero(), |acc, c| acc * x + c);
    for &p in &divisors {
        for sign in [1i64, -1] {
            if eval(&(BigInt::from(p) * sign)).is_zero() {
                return Ok(false);
            }
        }
    }
    if d < 4 {
        return Ok(true);
    }
    // x^4 + g3 x^3 + g2 x^2 + g1 x + g0 = (x^2 + b x + c)(x^2 + b' x + c')
    let (g0, g1, g2, g3) = (&g[0], &g[1], &g[2], &g[3]);
    for &p in &divisors {
        for sign in [1i64, -1] {
            let c = BigInt::from(p) * sign;
            let c2 = g0 / &c;
            let candidates: Vec<BigInt> = if c != c2 {
                // b (c' - c) = g1 - g3 c
                let num = g1 - g3 * &c;
                let den = &c2 - &c;
                if (&num % &den).is_zero() {
                    vec![num / den]
                } else {
                    vec![]
                }
            } else if *g1 == g3 * &c {
                // b + b' = g3, b b' = g2 - 2c
                let disc: BigInt = g3 * g3 - BigInt::from(4) * (g2 - BigInt::from(2) * &c);
                if disc.is_negative() {
                    vec![]
                } else {
                    let r = disc.sqrt();
                    if &r * &r == disc && ((g3 + &r) % BigInt::from(2)).is_zero() {
                        vec![(g3 + &r) / BigInt::from(2)]
                    } else {
                        vec![]
                    }
                }
            } else {
                vec![]
            };
            for b in candidates {
                let b2 = g3 - &b;
                if &c + &c2 + &b * &b2 == *g2 && &b * &c2 + &b2 * &c == *g1 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// `D^d f(x / D)` for the least common denominator `D`: monic with integer
/// coefficients, and irreducible exactly when `f` is.
fn monic_integer(f: &[Rational]) -> Vec<BigInt> {
    let d = f.len() - 1;
    let lcm = f
        .iter()
        .fold(BigInt::one(), |acc, c| num_integer::lcm(acc, c.denom().clone()));
    (0..=d)
        .map(|i| {
            let scaled = &f[i] * Rational::from_integer(num_traits::pow(lcm.clone(), d - i));
            scaled.to_integer()
        })
        .collect()
}

fn divisors(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut i = 1;
    while i * i <= n {
        if n.is_multiple_of(i) {
            out.push(i);
            if i != n / i {
                out.push(n / i);
            }
        }
        i += 1;
    }
    out.sort_unstable();
    out
}

/// Element of a number field: a polynomial of degree below the field degree.
#[derive(Debug, Clone)]
pub struct NfElement {
    field: Arc<NumberField>,
    coeffs: Vec<Rational>,
}

impl PartialEq for NfElement {
    fn eq(&self, other: &Self) -> bool {
        self.field == other.field && self.coeffs == other.coeffs
    }
}

impl Eq for NfElement {}

impl NfElement {
    pub fn new(field: &Arc<NumberField>, coeffs: Vec<Rational>) -> Result<Self, AlgError> {
        if coeffs.len() != field.degree() {
            return Err(AlgError::Length {
                expected: field.degree(),
                got: coeffs.len(),
            });
        }
        Ok(NfElement {
            field: field.clone(),
            coeffs,
        })
    }

    /// Reduces an arbitrary polynomial in `t` modulo the field polynomial.
    pub fn from_poly(field: &Arc<NumberField>, p: &[Rational]) -> Self {
        let (_, r) = poly::divmod(p, &field.modulus);
        let mut coeffs = r;
        coeffs.resize(field.degree(), Rational::zero());
        NfElement {
            field: field.clone(),
            coeffs,
        }
    }

    pub fn from_rational(field: &Arc<NumberField>, r: Rational) -> Self {
        Self::from_poly(field, &[r])
    }

    pub fn zero(field: &Arc<NumberField>) -> Self {
        Self::from_rational(field, Rational::zero())
    }

    pub fn one(field: &Arc<NumberField>) -> Self {
        Self::from_rational(field, Rational::one())
    }

    /// The class of `t`.
    pub fn generator(field: &Arc<NumberField>) -> Self {
        Self::from_poly(field, &coeffs(&[0, 1]))
    }

    /// Coefficients with numerators in `[-bound, bound]` and denominators in
    /// `[1, bound]`.
    pub fn random<R: Rng + ?Sized>(field: &Arc<NumberField>, rng: &mut R, bound: i64) -> Self {
        let coeffs = (0..field.degree())
            .map(|_| rational::rat(rng.random_range(-bound..=bound), rng.random_range(1..=bound)))
            .collect();
        NfElement {
            field: field.clone(),
            coeffs,
        }
    }

    pub fn field(&self) -> &Arc<NumberField> {
        &self.field
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    fn same_field(&self, other: &Self) -> Result<(), AlgError> {
        if Arc::ptr_eq(&self.field, &other.field) || self.field == other.field {
            Ok(())
        } else {
            Err(AlgError::FieldMismatch)
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, AlgError> {
        self.same_field(other)?;
        Ok(NfElement {
            field: self.field.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, AlgError> {
        self.same_field(other)?;
        Ok(NfElement {
            field: self.field.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, AlgError> {
        self.same_field(other)?;
        Ok(Self::from_poly(&self.field, &poly::mul(&self.coeffs, &other.coeffs)))
    }

    pub fn inverse(&self) -> Result<Self, AlgError> {
        if self.is_zero() {
            return Err(AlgError::DivisionByZero);
        }
        let inv = poly::inverse_mod(&self.coeffs, &self.field.modulus).expect("nonzero element of a field is a unit");
        Ok(Self::from_poly(&self.field, &inv))
    }

    pub fn try_div(&self, other: &Self) -> Result<Self, AlgError> {
        self.same_field(other)?;
        self.try_mul(&other.inverse()?)
    }

    pub fn scale(&self, r: &Rational) -> Self {
        NfElement {
            field: self.field.clone(),
            coeffs: self.coeffs.iter().map(|c| c * r).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::one(&self.field), |acc, _| &acc * self)
    }

    /// Image under complex conjugation of the embedding.
    pub fn conjugate(&self) -> Result<Self, AlgError> {
        let image = self.field.conjugate_of_t.as_ref().ok_or(AlgError::NoConjugation)?;
        let t = Self::from_poly(&self.field, image);
        Ok(self.coeffs.iter().rev().fold(Self::zero(&self.field), |acc, c| {
            &(&acc * &t) + &Self::from_rational(&self.field, c.clone())
        }))
    }

    /// Value under the field's complex embedding.
    pub fn to_complex(&self) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| {
            acc * self.field.root + rational::to_f64(c)
        })
    }
}

impl fmt::Display for NfElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => format!("{c}"),
                1 => format!("{c}*t"),
                _ => format!("{c}*t^{i}"),
            })
            .collect();
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

// Operators panic on mismatched fields; the `try_` methods report it.
impl Add for &NfElement {
    type Output = NfElement;
    fn add(self, rhs: &NfElement) -> NfElement {
        self.try_add(rhs).expect("same field")
    }
}

impl Sub for &NfElement {
    type Output = NfElement;
    fn sub(self, rhs: &NfElement) -> NfElement {
        self.try_sub(rhs).expect("same field")
    }
}

impl Mul for &NfElement {
    type Output = NfElement;
    fn mul(self, rhs: &NfElement) -> NfElement {
        self.try_mul(rhs).expect("same field")
    }
}

impl Neg for &NfElement {
    type Output = NfElement;
    fn neg(self) -> NfElement {
        self.scale(&-Rational::one())
    }
}

/// Square matrix over a number field, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NfMatrix {
    field: Arc<NumberField>,
    n: usize,
    entries: Vec<NfElement>,
}

impl NfMatrix {
    pub fn from_fn(
        field: &Arc<NumberField>,
        n: usize,
        mut f: impl FnMut(usize, usize) -> NfElement,
    ) -> Result<Self, AlgError> {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let e = f(i, j);
                if e.field != *field {
                    return Err(AlgError::FieldMismatch);
                }
                entries.push(e);
            }
        }
        Ok(NfMatrix {
            field: field.clone(),
            n,
            entries,
        })
    }

    pub fn from_rows(field: &Arc<NumberField>, rows: Vec<Vec<NfElement>>) -> Result<Self, AlgError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(AlgError::Dimension("matrix must be square".into()));
        }
        Self::from_fn(field, n, |i, j| rows[i][j].clone())
    }

    /// Rational entries `num/den` embedded in the field.
    pub fn from_rationals(field: &Arc<NumberField>, rows: &[Vec<Rational>]) -> Result<Self, AlgError> {
        Self::from_rows(
            field,
            rows.iter()
                .map(|r| r.iter().map(|x| NfElement::from_rational(field, x.clone())).collect())
                .collect(),
        )
    }

    pub fn zero(field: &Arc<NumberField>, n: usize) -> Self {
        Self::scalar(field, n, &NfElement::zero(field))
    }

    pub fn identity(field: &Arc<NumberField>, n: usize) -> Self {
        Self::scalar(field, n, &NfElement::one(field))
    }

    pub fn scalar(field: &Arc<NumberField>, n: usize, c: &NfElement) -> Self {
        let zero = NfElement::zero(field);
        Self::from_fn(field, n, |i, j| if i == j { c.clone() } else { zero.clone() }).expect("same field")
    }

    pub fn random<R: Rng + ?Sized>(field: &Arc<NumberField>, n: usize, rng: &mut R, bound: i64) -> Self {
        Self::from_fn(field, n, |_, _| NfElement::random(field, rng, bound)).expect("same field")
    }

    pub fn field(&self) -> &Arc<NumberField> {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &NfElement {
        &self.entries[i * self.n + j]
    }

    fn check(&self, other: &Self) -> Result<(), AlgError> {
        if self.field != other.field {
            return Err(AlgError::FieldMismatch);
        }
        if self.n != other.n {
            return Err(AlgError::Dimension(format!("{} vs {}", self.n, other.n)));
        }
        Ok(())
    }

    fn zip(&self, other: &Self, f: impl Fn(&NfElement, &NfElement) -> NfElement) -> Result<Self, AlgError> {
        self.check(other)?;
        Ok(NfMatrix {
            field: self.field.clone(),
            n: self.n,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, AlgError> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, AlgError> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, AlgError> {
        self.check(other)?;
        let n = self.n;
        let zero = NfElement::zero(&self.field);
        Self::from_fn(&self.field, n, |i, j| {
            (0..n).fold(zero.clone(), |acc, k| &acc + &(self.get(i, k) * other.get(k, j)))
        })
    }

    pub fn scale(&self, c: &NfElement) -> Result<Self, AlgError> {
        if c.field != self.field {
            return Err(AlgError::FieldMismatch);
        }
        Ok(NfMatrix {
            field: self.field.clone(),
            n: self.n,
            entries: self.entries.iter().map(|e| e * c).collect(),
        })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(&self.field, self.n, |i, j| self.get(j, i).clone()).expect("same field")
    }

    /// Conjugate transpose under the field's complex embedding.
    pub fn adjoint(&self) -> Result<Self, AlgError> {
        let conj = self
            .entries
            .iter()
            .map(|e| e.conjugate())
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_fn(&self.field, self.n, |i, j| conj[j * self.n + i].clone())
    }

    pub fn kron(&self, other: &Self) -> Result<Self, AlgError> {
        if self.field != other.field {
            return Err(AlgError::FieldMismatch);
        }
        let m = other.n;
        Self::from_fn(&self.field, self.n * m, |i, j| {
            self.get(i / m, j / m) * other.get(i % m, j % m)
        })
    }

    pub fn trace(&self) -> NfElement {
        (0..self.n).fold(NfElement::zero(&self.field), |acc, i| &acc + self.get(i, i))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(NfElement::is_zero)
    }

    pub fn is_idempotent(&self) -> bool {
        self.mul(self).is_ok_and(|sq| sq == *self)
    }

    /// Entries under the field's complex embedding.
    pub fn to_complex(&self) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.get(i, j).to_complex())
    }

    /// Coefficients of `det(x I - M)`, lowest degree first, by the
    /// Faddeev-LeVerrier recurrence
    /// `M_k = A M_{k-1} + c_{n-k+1} I`, `c_{n-k} = -tr(A M_k) / k`.
    pub fn char_poly(&self) -> Result<Vec<NfElement>, AlgError> {
        let n = self.n;
        if n > MAX_CHAR_POLY_DIM {
            return Err(AlgError::Dimension(format!("{n} exceeds {MAX_CHAR_POLY_DIM}")));
        }
        let mut c = vec![NfElement::zero(&self.field); n + 1];
        c[n] = NfElement::one(&self.field);
        let mut m = NfMatrix::zero(&self.field, n);
        for k in 1..=n {
            m = self.mul(&m)?.add(&NfMatrix::scalar(&self.field, n, &c[n - k + 1]))?;
            let tr = self.mul(&m)?.trace();
            c[n - k] = tr.scale(&-rational::rat(1, k as i64));
        }
        Ok(c)
    }

    /// `p(M)` by Horner's rule.
    pub fn eval_poly(&self, p: &[NfElement]) -> Result<Self, AlgError> {
        let mut acc = NfMatrix::zero(&self.field, self.n);
        for c in p.iter().rev() {
            acc = self.mul(&acc)?.add(&NfMatrix::scalar(&self.field, self.n, c))?;
        }
        Ok(acc)
    }

    pub fn determinant(&self) -> Result<NfElement, AlgError> {
        let c = self.char_poly()?;
        Ok(if self.n.is_multiple_of(2) { c[0].clone() } else { -&c[0] })
    }

    /// Exact: the constant term of the characteristic polynomial is zero.
    pub fn is_singular(&self) -> Result<bool, AlgError> {
        Ok(self.char_poly()?[0].is_zero())
    }
}

/// `A = P_init U^dagger P_acc U P_init`: the one-round acceptance operator,
/// whose eigenvalue 1 (equivalently, singular `I - A`) signals a witness
/// accepted with certainty.
pub fn qma_acceptance_operator(u: &NfMatrix, init: &NfMatrix, acc: &NfMatrix) -> Result<NfMatrix, AlgError> {
    u.check(init)?;
    u.check(acc)?;
    if !init.is_idempotent() {
        return Err(AlgError::NotIdempotent("initial"));
    }
    if !acc.is_idempotent() {
        return Err(AlgError::NotIdempotent("accepting"));
    }
    init.mul(&u.adjoint()?)?.mul(acc)?.mul(u)?.mul(init)
}

/// A real algebraic number as its minimal polynomial and a rational interval
/// holding exactly one root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgebraicRealEncoding {
    poly: Vec<Rational>,
    lower: Rational,
    upper: Rational,
}

impl AlgebraicRealEncoding {
    pub fn new(poly: Vec<Rational>, lower: Rational, upper: Rational) -> Result<Self, AlgError> {
        let poly = poly::trim(poly);
        if poly::degree(&poly).is_none_or(|d| d == 0) {
            return Err(AlgError::Isolation("polynomial must be nonconstant".into()));
        }
        if lower >= upper {
            return Err(AlgError::Isolation("need lower < upper".into()));
        }
        let (fa, fb) = (poly::eval(&poly, &lower), poly::eval(&poly, &upper));
        if fa.is_zero() || fb.is_zero() || fa.signum() == fb.signum() {
            return Err(AlgError::Isolation("no sign change at the endpoints".into()));
        }
        let enc = AlgebraicRealEncoding { poly, lower, upper };
        let roots = enc.root_count();
        if roots != 1 {
            return Err(AlgError::Isolation(format!("{roots} roots in the interval")));
        }
        Ok(enc)
    }

    /// `sqrt 2` as `(t^2 - 2, 1, 2)`.
    pub fn sqrt2() -> Self {
        Self::new(coeffs(&[-2, 0, 1]), rational::int(1), rational::int(2)).expect("valid preset")
    }

    /// A rational `c` as `(t - c, c - 1, c + 1)`.
    pub fn rational(c: Rational) -> Self {
        let one = Rational::one();
        Self::new(vec![-c.clone(), one.clone()], &c - &one, &c + &one).expect("valid preset")
    }

    pub fn poly(&self) -> &[Rational] {
        &self.poly
    }

    pub fn lower(&self) -> &Rational {
        &self.lower
    }

    pub fn upper(&self) -> &Rational {
        &self.upper
    }

    /// Distinct roots in `(lower, upper)` by Sturm's theorem.
    pub fn root_count(&self) -> usize {
        let mut seq = vec![self.poly.clone(), poly::derivative(&self.poly)];
        while poly::degree(seq.last().expect("nonempty")).is_some_and(|d| d > 0) {
            let n = seq.len();
            let (_, r) = poly::divmod(&seq[n - 2], &seq[n - 1]);
            if poly::degree(&r).is_none() {
                break;
            }
            seq.push(r.into_iter().map(|c| -c).collect());
        }
        let changes = |x: &Rational| {
            let signs: Vec<i32> = seq
                .iter()
                .map(|p| poly::eval(p, x))
                .filter(|v| !v.is_zero())
                .map(|v| if v.is_positive() { 1 } else { -1 })
                .collect();
            signs.windows(2).filter(|w| w[0] != w[1]).count()
        };
        changes(&self.lower) - changes(&self.upper)
    }

    /// Bisection to within `tol`.
    pub fn approx(&self, tol: f64) -> f64 {
        let (mut a, mut b) = (self.lower.clone(), self.upper.clone());
        let sign_a = poly::eval(&self.poly, &a).is_positive();
        while rational::to_f64(&(&b - &a)) > tol {
            let mid = (&a + &b) / rational::int(2);
            let v = poly::eval(&self.poly, &mid);
            if v.is_zero() {
                return rational::to_f64(&mid);
            }
            if v.is_positive() == sign_a {
                a = mid;
            } else {
                b = mid;
            }
        }
        rational::to_f64(&((a + b) / rational::int(2)))
    }
}

/// A coefficient of a semidefinite feasibility instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Coefficient {
    Rational(Rational),
    Algebraic(AlgebraicRealEncoding),
}

impl Coefficient {
    fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Rational(r) if r.is_zero())
    }

    fn is_one(&self) -> bool {
        matches!(self, Coefficient::Rational(r) if r.is_one())
    }
}

/// One constraint `Tr(A X) = b`, with `A` given row by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdfConstraint {
    pub a: Vec<Vec<Coefficient>>,
    pub b: Coefficient,
}

/// Does a `d x d` matrix `X >= 0` satisfy every constraint?
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdfInstance {
    pub dim: usize,
    pub constraints: Vec<SdfConstraint>,
}

fn sexp_rational(r: &Rational) -> String {
    let mag = if r.is_integer() {
        r.abs().numer().to_string()
    } else {
        format!("(/ {} {})", r.numer().abs(), r.denom())
    };
    if r.is_negative() {
        format!("(- {mag})")
    } else {
        mag
    }
}

fn sexp_apply(op: &str, args: &[String]) -> String {
    match args.len() {
        0 if op == "+" => "0".into(),
        1 if op == "+" || op == "*" => args[0].clone(),
        _ => format!("({op} {})", args.join(" ")),
    }
}

fn sexp_poly(p: &[Rational], var: &str) -> String {
    let terms: Vec<String> = p
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| {
            let mut factors = Vec::new();
            if !c.is_one() || i == 0 {
                factors.push(sexp_rational(c));
            }
            factors.extend(std::iter::repeat_n(var.to_string(), i));
            sexp_apply("*", &factors)
        })
        .collect();
    sexp_apply("+", &terms)
}

/// Renders the instance as an existential formula over the reals, in
/// s-expression form:
///
/// ```text
/// (exists (a0 .. x_0_0 .. m_0_0 ..)
///   (and
///     <per algebraic coefficient: (= f(a) 0) (> (- a lo) 0) (> (- hi a) 0)>
///     <per constraint: (= (+ (* A_ij x_j_i) ..) b)>
///     <per entry: (= x_i_j (+ (* m_0_i m_0_j) ..))>))
/// ```
///
/// Each algebraic coefficient occurrence gets its own variable `a<k>`,
/// numbered in constraint order (`A` row-major, then `b`). `X = M^T M`
/// states positive semidefiniteness. Rationals print as integers, `(/ n d)`
/// and `(- ..)`. Lines end in `\n` and nested lines indent by two spaces.
pub fn encode_sdf_as_etr(instance: &SdfInstance) -> Result<String, AlgError> {
    let d = instance.dim;
    if d == 0 {
        return Err(AlgError::Dimension("dimension must be positive".into()));
    }
    for (i, c) in instance.constraints.iter().enumerate() {
        if c.a.len() != d || c.a.iter().any(|r| r.len() != d) {
            return Err(AlgError::Dimension(format!("constraint {i} is not {d}x{d}")));
        }
    }
    let x = |i: usize, j: usize| format!("x_{i}_{j}");
    let m = |i: usize, j: usize| format!("m_{i}_{j}");
    fn render<'a>(c: &'a Coefficient, algebraic: &mut Vec<&'a AlgebraicRealEncoding>) -> String {
        match c {
            Coefficient::Rational(r) => sexp_rational(r),
            Coefficient::Algebraic(a) => {
                algebraic.push(a);
                format!("a{}", algebraic.len() - 1)
            }
        }
    }
    let mut algebraic: Vec<&AlgebraicRealEncoding> = Vec::new();
    let mut linear = Vec::new();
    for c in &instance.constraints {
        let mut terms = Vec::new();
        for (i, row) in c.a.iter().enumerate() {
            for (j, coeff) in row.iter().enumerate() {
                if coeff.is_zero() {
                    continue;
                }
                // Tr(A X) = sum_ij A_ij X_ji
                let var = x(j, i);
                terms.push(if coeff.is_one() {
                    var
                } else {
                    sexp_apply("*", &[render(coeff, &mut algebraic), var])
                });
            }
        }
        linear.push(format!(
            "(= {} {})",
            sexp_apply("+", &terms),
            render(&c.b, &mut algebraic)
        ));
    }
    let mut body = Vec::new();
    for (k, a) in algebraic.iter().enumerate() {
        let v = format!("a{k}");
        body.push(format!("(= {} 0)", sexp_poly(&a.poly, &v)));
        body.push(format!("(> (- {v} {}) 0)", sexp_rational(&a.lower)));
        body.push(format!("(> (- {} {v}) 0)", sexp_rational(&a.upper)));
    }
    body.extend(linear);
    for i in 0..d {
        for j in 0..d {
            let products: Vec<String> = (0..d).map(|k| format!("(* {} {})", m(k, i), m(k, j))).collect();
            body.push(format!("(= {} {})", x(i, j), sexp_apply("+", &products)));
        }
    }
    let mut vars: Vec<String> = (0..algebraic.len()).map(|k| format!("a{k}")).collect();
    vars.extend((0..d * d).map(|e| x(e / d, e % d)));
    vars.extend((0..d * d).map(|e| m(e / d, e % d)));
    let mut out = format!("(exists ({})\n  (and\n", vars.join(" "));
    for line in &body {
        out.push_str("    ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("  ))\n");
    Ok(out)
}

/// Variables bound by an encoded formula's `exists`.
pub fn etr_variable_count(formula: &str) -> usize {
    formula
        .strip_prefix("(exists (")
        .and_then(|rest| rest.split_once(')'))
        .map_or(0, |(vars, _)| vars.split_whitespace().count())
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    name: String,
    modulus: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    field: FieldJson,
    rows: Vec<Vec<Vec<String>>>,
}

fn texts(cs: &[Rational]) -> Vec<String> {
    cs.iter().map(rational::to_text).collect()
}

fn parse_texts(cs: &[String]) -> Result<Vec<Rational>, AlgError> {
    cs.iter()
        .map(|c| rational::from_text(c).map_err(|e| AlgError::Json(e.to_string())))
        .collect()
}

fn field_json(f: &NumberField) -> FieldJson {
    FieldJson {
        name: f.name.clone(),
        modulus: texts(&f.modulus),
    }
}

fn field_from_json(j: &FieldJson) -> Result<Arc<NumberField>, AlgError> {
    let modulus = parse_texts(&j.modulus)?;
    match NumberField::preset(&j.name) {
        Some(f) if f.modulus == modulus => Ok(f),
        _ => NumberField::new(&j.name, modulus),
    }
}

impl NumberField {
    /// `{"name": .., "modulus": ["num/den", ..]}`, lowest degree first.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&field_json(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Arc<Self>, AlgError> {
        let j: FieldJson = serde_json::from_str(text).map_err(|e| AlgError::Json(e.to_string()))?;
        field_from_json(&j)
    }
}

impl NfMatrix {
    /// `{"field": {..}, "rows": [[["num/den", ..], ..], ..]}`, each entry the
    /// element's coefficient list.
    pub fn to_json(&self) -> String {
        let rows = (0..self.n)
            .map(|i| (0..self.n).map(|j| texts(&self.get(i, j).coeffs)).collect())
            .collect();
        serde_json::to_string(&MatrixJson {
            field: field_json(&self.field),
            rows,
        })
        .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, AlgError> {
        let j: MatrixJson = serde_json::from_str(text).map_err(|e| AlgError::Json(e.to_string()))?;
        let field = field_from_json(&j.field)?;
        let rows = j
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|e| NfElement::new(&field, parse_texts(e)?))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(&field, rows)
    }
}

/// Hadamard `(1/sqrt 2)[[1, 1], [1, -1]]` over `Q(sqrt 2)` or `Q(zeta_8)`.
pub fn hadamard(field: &Arc<NumberField>) -> Result<NfMatrix, AlgError> {
    let h = inv_sqrt2(field)?;
    let minus = -&h;
    NfMatrix::from_rows(field, vec![vec![h.clone(), h.clone()], vec![h, minus]])
}

fn inv_sqrt2(field: &Arc<NumberField>) -> Result<NfElement, AlgError> {
    let half = rational::rat(1, 2);
    if **field == *NumberField::sqrt2() {
        Ok(NfElement::generator(field).scale(&half))
    } else if **field == *NumberField::zeta8() {
        Ok(NfElement::from_poly(
            field,
            &[Rational::zero(), half.clone(), Rational::zero(), -half],
        ))
    } else {
        Err(AlgError::Dimension(format!("{} does not contain 1/sqrt 2", field.name)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(x: i64) -> Rational {
        rational::int(x)
    }

    #[test]
    fn sqrt2_arithmetic() {
        let f = NumberField::sqrt2();
        let t = NfElement::generator(&f);
        let one = NfElement::one(&f);
        assert_eq!(&t * &t, NfElement::from_rational(&f, q(2)));
        assert_eq!(&(&one + &t) * &(&t - &one), one);
        assert_eq!(t.inverse().unwrap(), t.scale(&rational::rat(1, 2)));
        assert_eq!(NfElement::zero(&f).inverse(), Err(AlgError::DivisionByZero));
    }

    #[test]
    fn inverses_in_every_preset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in NumberField::presets() {
            for _ in 0..100 {
                let x = NfElement::random(&f, &mut rng, 9);
                if x.is_zero() {
                    continue;
                }
                assert_eq!(&x * &x.inverse().unwrap(), NfElement::one(&f), "{x} in {}", f.name());
            }
        }
    }

    #[test]
    fn conjugation_matches_the_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in NumberField::presets() {
            let x = NfElement::random(&f, &mut rng, 5);
            let c = x.conjugate().unwrap();
            assert!((c.to_complex() - x.to_complex().conj()).norm() < 1e-12);
            assert_eq!(c.conjugate().unwrap(), x);
        }
    }

    #[test]
    fn zeta8_contains_the_gate_entries() {
        let f = NumberField::zeta8();
        let h = inv_sqrt2(&f).unwrap();
        assert_eq!(&h * &h, NfElement::from_rational(&f, rational::rat(1, 2)));
        let i = NfElement::generator(&f).pow(2);
        assert_eq!(&i * &i, NfElement::from_rational(&f, q(-1)));
    }

    #[test]
    fn irreducibility() {
        assert!(is_irreducible(&coeffs(&[-2, 0, 1])).unwrap());
        assert!(!is_irreducible(&coeffs(&[-4, 0, 1])).unwrap());
        assert!(is_irreducible(&coeffs(&[1, 0, 0, 0, 1])).unwrap());
        // x^4 + 4 = (x^2 + 2x + 2)(x^2 - 2x + 2)
        assert!(!is_irreducible(&coeffs(&[4, 0, 0, 0, 1])).unwrap());
        // x^4 - 10x^2 + 1, minimal polynomial of sqrt 2 + sqrt 3
        assert!(is_irreducible(&coeffs(&[1, 0, -10, 0, 1])).unwrap());
        // (x^2 + 1)^2
        assert!(!is_irreducible(&coeffs(&[1, 0, 2, 0, 1])).unwrap());
        // t^2 - 1/4 has the root 1/2
        assert!(!is_irreducible(&[rational::rat(-1, 4), q(0), q(1)]).unwrap());
        assert_eq!(
            is_irreducible(&coeffs(&[1, 0, 0, 0, 0, 1])),
            Err(AlgError::DegreeTooLarge(5))
        );
        assert_eq!(
            NumberField::new("bad", coeffs(&[-1, 0, 1])).unwrap_err(),
            AlgError::Reducible
        );
        assert_eq!(
            NumberField::new("bad", coeffs(&[-1, 2])).unwrap_err(),
            AlgError::NotMonic
        );
    }

    #[test]
    fn custom_real_field() {
        let f = NumberField::new("Q(cbrt2)", coeffs(&[-2, 0, 0, 1])).unwrap();
        let t = NfElement::generator(&f);
        assert!((t.to_complex().re - 2f64.cbrt()).abs() < 1e-12);
        assert_eq!(t.pow(3), NfElement::from_rational(&f, q(2)));
        assert_eq!(t.conjugate().unwrap(), t);
    }

    #[test]
    fn char_poly_examples() {
        let qf = NumberField::rationals();
        let swap = NfMatrix::from_rationals(&qf, &[vec![q(0), q(1)], vec![q(1), q(0)]]).unwrap();
        let expected: Vec<NfElement> = [-1, 0, 1]
            .iter()
            .map(|&c| NfElement::from_rational(&qf, q(c)))
            .collect();
        assert_eq!(swap.char_poly().unwrap(), expected);
        let f = NumberField::sqrt2();
        let h = hadamard(&f).unwrap();
        let expected: Vec<NfElement> = [-1, 0, 1].iter().map(|&c| NfElement::from_rational(&f, q(c))).collect();
        assert_eq!(h.char_poly().unwrap(), expected);
    }

    #[test]
    fn cayley_hamilton_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for f in NumberField::presets() {
            let m = NfMatrix::random(&f, 3, &mut rng, 4);
            assert!(m.eval_poly(&m.char_poly().unwrap()).unwrap().is_zero());
        }
    }

    #[test]
    fn singularity() {
        let f = NumberField::sqrt2();
        let id = NfMatrix::identity(&f, 2);
        assert!(id.sub(&hadamard(&f).unwrap()).unwrap().is_singular().unwrap());
        let half = id.scale(&NfElement::from_rational(&f, rational::rat(1, 2))).unwrap();
        assert!(!id.sub(&half).unwrap().is_singular().unwrap());
        assert_eq!(
            half.determinant().unwrap(),
            NfElement::from_rational(&f, rational::rat(1, 4))
        );
    }

    #[test]
    fn acceptance_operator_shapes() {
        let f = NumberField::sqrt2();
        let zero = NfElement::zero(&f);
        let one = NfElement::one(&f);
        let p0 = NfMatrix::from_rows(
            &f,
            vec![vec![one.clone(), zero.clone()], vec![zero.clone(), zero.clone()]],
        )
        .unwrap();
        let id = NfMatrix::identity(&f, 2);
        let a = qma_acceptance_operator(&id, &p0, &p0).unwrap();
        assert_eq!(a, p0);
        assert!(id.sub(&a).unwrap().is_singular().unwrap());
        let none = qma_acceptance_operator(&id, &p0, &NfMatrix::zero(&f, 2)).unwrap();
        assert!(none.is_zero());
        assert!(!id.sub(&none).unwrap().is_singular().unwrap());
        let two = id.scale(&NfElement::from_rational(&f, q(2))).unwrap();
        assert_eq!(
            qma_acceptance_operator(&id, &two, &p0),
            Err(AlgError::NotIdempotent("initial"))
        );
    }

    #[test]
    fn isolation() {
        let s = AlgebraicRealEncoding::sqrt2();
        assert!((s.approx(1e-12) - 2f64.sqrt()).abs() < 1e-11);
        // x^3 - x has three roots in (-2, 2) and a sign change there.
        assert!(matches!(
            AlgebraicRealEncoding::new(coeffs(&[0, -1, 0, 1]), q(-2), q(2)),
            Err(AlgError::Isolation(_))
        ));
        assert!(AlgebraicRealEncoding::new(coeffs(&[-2, 0, 1]), q(2), q(3)).is_err());
        assert_eq!(AlgebraicRealEncoding::rational(rational::rat(3, 2)).root_count(), 1);
    }

    #[test]
    fn etr_sqrt2_constraint_text() {
        let inst = SdfInstance {
            dim: 1,
            constraints: vec![SdfConstraint {
                a: vec![vec![Coefficient::Algebraic(AlgebraicRealEncoding::sqrt2())]],
                b: Coefficient::Rational(q(1)),
            }],
        };
        let text = encode_sdf_as_etr(&inst).unwrap();
        assert!(
            text.contains("(= (+ (- 2) (* a0 a0)) 0) (> (- a0 1) 0) (> (- 2 a0) 0)")
                || text.contains("(= (+ (- 2) (* a0 a0)) 0)\n    (> (- a0 1) 0)\n    (> (- 2 a0) 0)")
        );
        assert_eq!(etr_variable_count(&text), 1 + 1 + 1);
        let bad = SdfInstance {
            dim: 2,
            constraints: inst.constraints.clone(),
        };
        assert!(matches!(encode_sdf_as_etr(&bad), Err(AlgError::Dimension(_))));
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for f in NumberField::presets() {
            let m = NfMatrix::random(&f, 2, &mut rng, 7);
            assert_eq!(NfMatrix::from_json(&m.to_json()).unwrap(), m);
            assert_eq!(*NumberField::from_json(&f.to_json()).unwrap(), *f);
        }
        assert!(
            NfMatrix::from_json("{\"field\":{\"name\":\"Q\",\"modulus\":[\"0/1\",\"1/1\"]},\"rows\":[[[\"x\"]]]}")
                .is_err()
        );
    }
}
