//! Exact rationals and their `"num/den"` text form.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serializer};
use thiserror::Error;

/// Arbitrary-precision rational, always kept in lowest terms with a positive
/// denominator.
pub type Rational = num_rational::BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse {0:?} as a rational")]
pub struct ParseRationalError(pub String);

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `1 / 2^e`.
pub fn inv_pow2(e: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << e)
}

pub fn pow(base: &Rational, e: u32) -> Rational {
    let mut acc = Rational::one();
    for _ in 0..e {
        acc *= base;
    }
    acc
}

/// Formats as `"num/den"`, including `"1/1"` for integers.
pub fn to_text(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Accepts `"num/den"`, a bare integer, or a decimal such as `"0.25"`.
pub fn from_text(text: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        let n: BigInt = digits.parse().map_err(|_| err())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let r = Rational::new(n, d);
        return Ok(if negative { -r } else { r });
    }
    let n: BigInt = t.parse().map_err(|_| err())?;
    Ok(Rational::from_integer(n))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Both parts overflow f64; scale down before dividing.
        let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(1000);
        let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
        let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Nearest multiple of `1/denominator` to `x`.
pub fn round_to_denominator(x: f64, denominator: u64) -> Rational {
    let scaled = (x * denominator as f64).round();
    Rational::new(BigInt::from(scaled as i128), BigInt::from(denominator))
}

pub fn abs(r: &Rational) -> Rational {
    r.abs()
}

pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&to_text(r))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
    let text = String::deserialize(d)?;
    from_text(&text).map_err(serde::de::Error::custom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_forms() {
        assert_eq!(to_text(&rat(6, -8)), "-3/4");
        assert_eq!(to_text(&int(1)), "1/1");
        assert_eq!(from_text("15/16").unwrap(), rat(15, 16));
        assert_eq!(from_text(" 3 ").unwrap(), int(3));
        assert_eq!(from_text("-0.25").unwrap(), rat(-1, 4));
        assert!(from_text("1/0").is_err());
        assert!(from_text("x").is_err());
    }

    #[test]
    fn rounding() {
        assert_eq!(round_to_denominator(0.5 + 1e-15, 1 << 40), rat(1, 2));
        assert_eq!(inv_pow2(3), rat(1, 8));
        assert!((to_f64(&rat(1, 3)) - 1.0 / 3.0).abs() < 1e-16);
    }
}
