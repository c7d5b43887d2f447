//! Exact nonnegative rationals and their text forms.

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary precision rational, always stored reduced.
pub type Rat = num_rational::BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseRatError {
    #[error("empty number")]
    Empty,
    #[error("malformed number `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

pub fn int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn zero() -> Rat {
    Rat::zero()
}

pub fn one() -> Rat {
    Rat::one()
}

/// Parses `p/q`, integers, and finite decimals with optional exponent.
///
/// Decimals are read exactly: `"0.1"` is one tenth, not the nearest double.
pub fn parse_rat(text: &str) -> Result<Rat, ParseRatError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(ParseRatError::Empty);
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_decimal(num.trim()).ok_or_else(|| ParseRatError::Malformed(s.into()))?;
        let d = parse_decimal(den.trim()).ok_or_else(|| ParseRatError::Malformed(s.into()))?;
        if d.is_zero() {
            return Err(ParseRatError::ZeroDenominator(s.into()));
        }
        return Ok(n / d);
    }
    parse_decimal(s).ok_or_else(|| ParseRatError::Malformed(s.into()))
}

fn parse_decimal(s: &str) -> Option<Rat> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let joined = format!("{whole}{frac}");
    let mut n: BigInt = if joined.is_empty() {
        BigInt::zero()
    } else {
        joined.parse().ok()?
    };
    if neg {
        n = -n;
    }
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    Some(if scale >= 0 {
        Rat::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        Rat::new(n, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Reduced fraction text, `3/2` or `4`.
pub fn fmt_frac(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Huge numerators or denominators: fall back to logs.
        let (n, d) = (r.numer(), r.denom());
        if n.is_zero() {
            return 0.0;
        }
        let ln = ln_big(n) - ln_big(d);
        let v = ln.exp();
        if n.sign() == Sign::Minus {
            -v
        } else {
            v
        }
    })
}

fn ln_big(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits < 1000 {
        return n.abs().to_f64().unwrap_or(f64::MAX).ln();
    }
    let shift = bits - 64;
    let top: BigInt = n.abs() >> shift;
    top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Exact rational nearest to `x` on a grid of step `1/scale`.
///
/// Used to turn sampled innovations into exact values; returns `None` for
/// nonpositive or non-finite input or if rounding hits zero.
pub fn from_f64_grid(x: f64, scale: u64) -> Option<Rat> {
    if !x.is_finite() || x <= 0.0 {
        return None;
    }
    let scaled = (x * scale as f64).round();
    if scaled < 1.0 {
        return None;
    }
    let n = BigInt::from(scaled as u128);
    Some(Rat::new(n, BigInt::from(scale)))
}

/// Natural logarithm, exact enough for diagnostics only.
pub fn ln(r: &Rat) -> f64 {
    ln_big(r.numer()) - ln_big(r.denom())
}

pub fn is_positive(r: &Rat) -> bool {
    r.is_positive()
}

pub fn max_assign(acc: &mut Rat, v: Rat) {
    if v > *acc {
        *acc = v;
    }
}
