//! Exact rational scalars.
//!
//! Every computation in this crate is exact; no floating point anywhere.
//! `BigRational` keeps values in lowest terms with a positive denominator,
//! which makes equality-to-zero and serialization canonical.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::str::FromStr;

pub type Scalar = BigRational;

pub fn zero() -> Scalar {
    Scalar::zero()
}

pub fn one() -> Scalar {
    Scalar::one()
}

pub fn int(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

pub fn ratio(num: i64, den: i64) -> Scalar {
    assert!(den != 0, "zero denominator");
    Scalar::new(BigInt::from(num), BigInt::from(den))
}

/// (-1)^exp as a scalar.
pub fn sign_pow(exp: i64) -> Scalar {
    if exp % 2 == 0 {
        one()
    } else {
        -one()
    }
}

pub fn is_zero(s: &Scalar) -> bool {
    s.is_zero()
}

/// Renders `p` or `p/q`, matching the accepted input syntax.
pub fn scalar_to_string(s: &Scalar) -> String {
    if s.denom().is_one() {
        s.numer().to_string()
    } else {
        format!("{}/{}", s.numer(), s.denom())
    }
}

/// Parses `p` or `p/q` with an optional leading sign.
pub fn parse_scalar(text: &str) -> Result<Scalar, String> {
    let text = text.trim();
    match text.split_once('/') {
        None => BigInt::from_str(text)
            .map(Scalar::from_integer)
            .map_err(|e| format!("bad integer {text:?}: {e}")),
        Some((num, den)) => {
            let num = BigInt::from_str(num.trim()).map_err(|e| format!("bad numerator: {e}"))?;
            let den = BigInt::from_str(den.trim()).map_err(|e| format!("bad denominator: {e}"))?;
            if den.is_zero() {
                return Err(format!("zero denominator in {text:?}"));
            }
            Ok(Scalar::new(num, den))
        }
    }
}

/// True when `s` is a positive scalar; used by canonical normalizations.
pub fn is_positive(s: &Scalar) -> bool {
    s.is_positive()
}
