//! Helpers around exact rationals: parsing, rendering, float conversion, and
//! the small numeric trait that lets exact and float code share algorithms.

use std::fmt::Debug;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Parses `"num/den"`, an integer, or a plain decimal (`"0.15"`, `"1e-3"`)
/// into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::Parse("empty rational".into()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let num: BigInt = n
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad numerator in {t:?}")))?;
        let den: BigInt = d
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad denominator in {t:?}")))?;
        if den.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {t:?}")));
        }
        return Ok(BigRational::new(num, den));
    }
    parse_decimal(t)
}

fn parse_decimal(t: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("not a rational or decimal: {t:?}"));
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| bad())?
    };
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let mut r = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Ok(r)
}

/// Renders a rational as `"num/den"` (denominator always present).
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Exact rational value of a finite float, via its shortest decimal rendering.
///
/// `0.1` becomes `1/10`, which is what a user typing `0.1` means.
pub fn rational_from_decimal_f64(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::Parse(format!("non-finite value {x}")));
    }
    parse_decimal(&format!("{x:?}"))
}

/// Correctly scaled `num/den` as f64, even when both exceed the f64 range.
pub fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let negative = (num.sign() == Sign::Minus) != (den.sign() == Sign::Minus);
    let n = num.magnitude();
    let d = den.magnitude();
    let v = biguint_ratio_to_f64(n, d);
    if negative {
        -v
    } else {
        v
    }
}

pub(crate) fn biguint_ratio_to_f64(n: &BigUint, d: &BigUint) -> f64 {
    if n.is_zero() {
        return 0.0;
    }
    let shift = 64i64 - (n.bits() as i64 - d.bits() as i64);
    let q = if shift >= 0 {
        (n << shift as u64) / d
    } else {
        n / (d << (-shift) as u64)
    };
    let mut v = q.to_f64().unwrap_or(f64::INFINITY);
    let mut e = -shift;
    while e != 0 {
        let step = e.clamp(-1000, 1000);
        v *= 2f64.powi(step as i32);
        e -= step;
    }
    v
}

pub fn to_f64(r: &BigRational) -> f64 {
    ratio_to_f64(r.numer(), r.denom())
}

/// Exact binary value of a finite f64.
pub fn rational_from_f64_exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

pub fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Least common multiple of the denominators of `values`.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a BigRational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Three-way sign with zero as its own class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignClass {
    Negative,
    Zero,
    Positive,
}

impl SignClass {
    pub fn of_rational(r: &BigRational) -> Self {
        if r.is_zero() {
            SignClass::Zero
        } else if r.is_positive() {
            SignClass::Positive
        } else {
            SignClass::Negative
        }
    }

    /// Float sign with a dead band around zero.
    pub fn of_f64(x: f64, dead_band: f64) -> Self {
        if x.abs() <= dead_band {
            SignClass::Zero
        } else if x > 0.0 {
            SignClass::Positive
        } else {
            SignClass::Negative
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            SignClass::Negative => "-",
            SignClass::Zero => "0",
            SignClass::Positive => "+",
        }
    }
}

/// Numbers the shared exact/float algorithms run on.
pub trait Scalar:
    Clone + Debug + PartialOrd + num_traits::Num + Signed + FromPrimitive + Send + Sync
{
    fn to_f64_lossy(&self) -> f64;
    fn from_ratio(num: i64, den: i64) -> Self;
}

impl Scalar for f64 {
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

impl Scalar for BigRational {
    fn to_f64_lossy(&self) -> f64 {
        to_f64(self)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        ratio(num, den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_integer_and_decimal() {
        assert_eq!(parse_rational("1/5").unwrap(), ratio(1, 5));
        assert_eq!(parse_rational(" 6/4 ").unwrap(), ratio(3, 2));
        assert_eq!(parse_rational("3").unwrap(), rat_int(3));
        assert_eq!(parse_rational("0.15").unwrap(), ratio(3, 20));
        assert_eq!(parse_rational("1e-3").unwrap(), ratio(1, 1000));
        assert_eq!(parse_rational("-.5").unwrap(), ratio(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn decimal_f64_roundtrip_is_the_typed_value() {
        assert_eq!(rational_from_decimal_f64(0.1).unwrap(), ratio(1, 10));
        assert_eq!(rational_from_decimal_f64(0.25).unwrap(), ratio(1, 4));
        assert_eq!(
            rational_from_decimal_f64(1e-20).unwrap(),
            parse_rational("1/100000000000000000000").unwrap()
        );
    }

    #[test]
    fn huge_ratios_convert() {
        let big = BigInt::from(5u32).pow(5000);
        let r = ratio_to_f64(&(BigInt::from(3u32) * &big), &(BigInt::from(4u32) * &big));
        assert!((r - 0.75).abs() < 1e-15);
        let tiny = ratio_to_f64(&BigInt::one(), &BigInt::from(2u32).pow(1070));
        assert!(tiny > 0.0 && tiny < 1e-300);
        assert_eq!(
            ratio_to_f64(&BigInt::one(), &BigInt::from(2u32).pow(5000)),
            0.0
        );
        assert_eq!(to_f64(&ratio(-1, 8)), -0.125);
    }

    #[test]
    fn binomials_and_factorials() {
        assert_eq!(binomial(5, 2), BigUint::from(10u32));
        assert_eq!(binomial(3, 4), BigUint::zero());
        assert_eq!(factorial(5), BigUint::from(120u32));
    }
}
