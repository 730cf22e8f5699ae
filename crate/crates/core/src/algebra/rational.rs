//! Exact rational functions of the symbolic sample size `m`.
//!
//! Every value is kept in canonical form: numerator and denominator share
//! no polynomial factor and no integer content, and the denominator's
//! leading coefficient is positive. Canonical form makes equality a plain
//! field comparison.

use super::poly::Poly;
use crate::error::{Error, Result};
use num::{BigInt, BigRational, Integer, Signed, Zero};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Ratio of two integer-coefficient polynomials in `m`, canonical.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct RationalFn {
    num: Poly,
    den: Poly,
}

impl RationalFn {
    /// Builds `num / den`, normalizing. The denominator must be nonzero.
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::normalized(num, den))
    }

    fn normalized(num: Poly, den: Poly) -> Self {
        debug_assert!(!den.is_zero());
        if num.is_zero() {
            return RationalFn {
                num: Poly::zero(),
                den: Poly::one(),
            };
        }
        let g = Poly::gcd(&num, &den);
        let mut num = num.div_exact(&g);
        let mut den = den.div_exact(&g);
        let mut content = num.content().gcd(&den.content());
        if den.leading().unwrap().is_negative() {
            content = -content;
        }
        num = num.div_content(&content);
        den = den.div_content(&content);
        RationalFn { num, den }
    }

    pub fn zero() -> Self {
        RationalFn {
            num: Poly::zero(),
            den: Poly::one(),
        }
    }

    pub fn one() -> Self {
        RationalFn {
            num: Poly::one(),
            den: Poly::one(),
        }
    }

    pub fn from_int<T: Into<BigInt>>(v: T) -> Self {
        RationalFn {
            num: Poly::constant(v),
            den: Poly::one(),
        }
    }

    pub fn from_rat(q: &BigRational) -> Self {
        Self::normalized(
            Poly::constant(q.numer().clone()),
            Poly::constant(q.denom().clone()),
        )
    }

    pub fn from_poly(p: Poly) -> Self {
        RationalFn {
            num: p,
            den: Poly::one(),
        }
    }

    /// The symbolic sample size `m`.
    pub fn m() -> Self {
        Self::from_poly(Poly::m())
    }

    /// The falling factorial `m_n`.
    pub fn falling_factorial(n: u32) -> Self {
        Self::from_poly(Poly::falling_factorial(n))
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num.is_one() && self.den.is_one()
    }

    /// True for a constant (degree-zero) rational function.
    pub fn is_constant(&self) -> bool {
        self.num.degree().unwrap_or(0) == 0 && self.den.degree().unwrap_or(0) == 0
    }

    pub fn as_rat(&self) -> Option<BigRational> {
        if self.is_constant() {
            let n = self
                .num
                .coeffs()
                .first()
                .cloned()
                .unwrap_or_else(BigInt::zero);
            let d = self.den.coeffs()[0].clone();
            Some(BigRational::new(n, d))
        } else {
            None
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = RationalFn::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    pub fn recip(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::normalized(self.den.clone(), self.num.clone()))
    }

    /// Exact substitution of a concrete sample count.
    pub fn eval(&self, m: u64) -> Result<BigRational> {
        let mv = BigInt::from(m);
        let den = self.den.eval_int(&mv);
        if den.is_zero() {
            return Err(Error::PoleAt {
                m,
                context: self.to_string(),
            });
        }
        Ok(BigRational::new(self.num.eval_int(&mv), den))
    }

    pub fn eval_f64(&self, m: u64) -> Result<f64> {
        use num::ToPrimitive;
        Ok(self.eval(m)?.to_f64().unwrap_or(f64::NAN))
    }

    /// Positive integer poles (roots of the canonical denominator).
    pub fn positive_poles(&self) -> Vec<u64> {
        self.den.positive_integer_roots()
    }

    /// True when the value stays finite as `m -> infinity`.
    pub fn bounded_at_infinity(&self) -> bool {
        if self.is_zero() {
            return true;
        }
        self.num.degree().unwrap() <= self.den.degree().unwrap()
    }
}

impl Add for &RationalFn {
    type Output = RationalFn;
    fn add(self, rhs: &RationalFn) -> RationalFn {
        RationalFn::normalized(
            &(&self.num * &rhs.den) + &(&rhs.num * &self.den),
            &self.den * &rhs.den,
        )
    }
}

impl Sub for &RationalFn {
    type Output = RationalFn;
    fn sub(self, rhs: &RationalFn) -> RationalFn {
        self + &(-rhs)
    }
}

impl Neg for &RationalFn {
    type Output = RationalFn;
    fn neg(self) -> RationalFn {
        RationalFn {
            num: -&self.num,
            den: self.den.clone(),
        }
    }
}

impl Mul for &RationalFn {
    type Output = RationalFn;
    fn mul(self, rhs: &RationalFn) -> RationalFn {
        RationalFn::normalized(&self.num * &rhs.num, &self.den * &rhs.den)
    }
}

/// Division panics on a zero divisor; use [`RationalFn::recip`] for the
/// checked form.
impl Div for &RationalFn {
    type Output = RationalFn;
    fn div(self, rhs: &RationalFn) -> RationalFn {
        assert!(!rhs.is_zero(), "division by zero rational function");
        RationalFn::normalized(&self.num * &rhs.den, &self.den * &rhs.num)
    }
}

macro_rules! forward_owned_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for RationalFn {
            type Output = RationalFn;
            fn $method(self, rhs: RationalFn) -> RationalFn {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&RationalFn> for RationalFn {
            type Output = RationalFn;
            fn $method(self, rhs: &RationalFn) -> RationalFn {
                (&self).$method(rhs)
            }
        }
        impl $trait<RationalFn> for &RationalFn {
            type Output = RationalFn;
            fn $method(self, rhs: RationalFn) -> RationalFn {
                self.$method(&rhs)
            }
        }
    };
}

forward_owned_binop!(Add, add);
forward_owned_binop!(Sub, sub);
forward_owned_binop!(Mul, mul);
forward_owned_binop!(Div, div);

impl Neg for RationalFn {
    type Output = RationalFn;
    fn neg(self) -> RationalFn {
        -&self
    }
}

impl fmt::Display for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            if self.num.degree().unwrap_or(0) == 0 {
                write!(f, "{}", self.num)
            } else {
                write!(f, "({})", self.num)
            }
        } else {
            write!(f, "({})/({})", self.num, self.den)
        }
    }
}
