//! Dense integer-coefficient polynomials in the symbolic sample size `m`.
//!
//! Degrees stay small (at most ~8 after an eighth-order expansion), so a
//! dense ascending coefficient list is the representation of choice.
//! Coefficients are arbitrary precision: fourth-order variance derivations
//! overflow 64-bit intermediates.

use num::bigint::Sign;
use num::{BigInt, BigRational, Integer, One, Signed, Zero};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Integer-coefficient polynomial in `m`, coefficients ascending by power.
/// The zero polynomial is the empty coefficient list.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Poly {
    coeffs: Vec<BigInt>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Poly::constant(BigInt::one())
    }

    pub fn constant<T: Into<BigInt>>(c: T) -> Self {
        let c = c.into();
        if c.is_zero() {
            Poly::zero()
        } else {
            Poly { coeffs: vec![c] }
        }
    }

    /// The variable `m` itself.
    pub fn m() -> Self {
        Poly {
            coeffs: vec![BigInt::zero(), BigInt::one()],
        }
    }

    /// `m + c` for integer `c`.
    pub fn m_plus(c: i64) -> Self {
        Poly {
            coeffs: vec![BigInt::from(c), BigInt::one()],
        }
        .trimmed()
    }

    pub fn from_coeffs<T: Into<BigInt>>(coeffs: Vec<T>) -> Self {
        Poly {
            coeffs: coeffs.into_iter().map(Into::into).collect(),
        }
        .trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.coeffs.last().is_some_and(Zero::is_zero) {
            self.coeffs.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_one()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn leading(&self) -> Option<&BigInt> {
        self.coeffs.last()
    }

    pub fn eval_int(&self, m: &BigInt) -> BigInt {
        let mut acc = BigInt::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * m + c;
        }
        acc
    }

    pub fn eval_rat(&self, m: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * m + BigRational::from_integer(c.clone());
        }
        acc
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Poly::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// The falling factorial `m_n = m (m-1) ... (m-n+1)`.
    pub fn falling_factorial(n: u32) -> Self {
        let mut acc = Poly::one();
        for i in 0..n {
            acc = &acc * &Poly::m_plus(-(i as i64));
        }
        acc
    }

    /// Greatest common divisor of the integer coefficients (positive), or
    /// zero for the zero polynomial.
    pub fn content(&self) -> BigInt {
        let mut g = BigInt::zero();
        for c in &self.coeffs {
            g = g.gcd(c);
        }
        g
    }

    /// Divides all coefficients by `d`, which must divide exactly.
    pub fn div_content(&self, d: &BigInt) -> Self {
        debug_assert!(!d.is_zero());
        Poly {
            coeffs: self
                .coeffs
                .iter()
                .map(|c| {
                    let (q, r) = c.div_rem(d);
                    debug_assert!(r.is_zero());
                    q
                })
                .collect(),
        }
        .trimmed()
    }

    /// Exact polynomial division; `divisor` must divide without remainder.
    pub fn div_exact(&self, divisor: &Poly) -> Self {
        let (q, r) = self.div_rem_rat(divisor);
        debug_assert!(r.iter().all(Zero::is_zero), "non-exact polynomial division");
        // All quotient coefficients of an exact division of integer
        // polynomials by a gcd factor are integers after clearing content,
        // but intermediate values are rational, so reconstruct carefully.
        let mut coeffs = Vec::with_capacity(q.len());
        for c in q {
            debug_assert!(c.denom().is_one(), "non-integer quotient coefficient");
            coeffs.push(c.numer().clone());
        }
        Poly { coeffs }.trimmed()
    }

    /// Long division over the rationals: returns (quotient, remainder).
    fn div_rem_rat(&self, divisor: &Poly) -> (Vec<BigRational>, Vec<BigRational>) {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        let mut rem: Vec<BigRational> = self
            .coeffs
            .iter()
            .map(|c| BigRational::from_integer(c.clone()))
            .collect();
        let dlead = BigRational::from_integer(divisor.leading().unwrap().clone());
        let ddeg = divisor.degree().unwrap();
        let ndeg = self.coeffs.len();
        if ndeg == 0 || ndeg - 1 < ddeg {
            return (Vec::new(), rem);
        }
        let qlen = ndeg - ddeg;
        let mut quot = vec![BigRational::zero(); qlen];
        for i in (0..qlen).rev() {
            let lead = rem[i + ddeg].clone();
            if lead.is_zero() {
                continue;
            }
            let q = lead / &dlead;
            for (j, dc) in divisor.coeffs.iter().enumerate() {
                let sub = &q * BigRational::from_integer(dc.clone());
                rem[i + j] -= sub;
            }
            quot[i] = q;
        }
        rem.truncate(ddeg);
        (quot, rem)
    }

    /// Primitive gcd with positive leading coefficient, by the Euclidean
    /// algorithm over the rationals followed by content normalization.
    pub fn gcd(a: &Poly, b: &Poly) -> Poly {
        if a.is_zero() {
            return b.primitive_positive();
        }
        if b.is_zero() {
            return a.primitive_positive();
        }
        let mut r0: Vec<BigRational> = a
            .coeffs
            .iter()
            .map(|c| BigRational::from_integer(c.clone()))
            .collect();
        let mut r1: Vec<BigRational> = b
            .coeffs
            .iter()
            .map(|c| BigRational::from_integer(c.clone()))
            .collect();
        while !r1.iter().all(Zero::is_zero) {
            let r2 = rat_poly_rem(&r0, &r1);
            r0 = r1;
            r1 = r2;
        }
        rat_poly_to_primitive(&r0)
    }

    /// Divides out the content and flips the sign so the leading
    /// coefficient is positive.
    pub fn primitive_positive(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut c = self.content();
        if self.leading().unwrap().is_negative() {
            c = -c;
        }
        self.div_content(&c)
    }

    /// Positive integer roots, found by scanning up to the Cauchy root
    /// bound (integer roots of an integer polynomial are real roots, and
    /// every real root has absolute value below 1 + max|a_i|/|a_lead|).
    pub fn positive_integer_roots(&self) -> Vec<u64> {
        if self.is_zero() {
            return Vec::new();
        }
        // Strip powers of m; m = 0 is not a positive root anyway.
        let mut coeffs = self.coeffs.clone();
        while coeffs.first().is_some_and(Zero::is_zero) {
            coeffs.remove(0);
        }
        let p = Poly { coeffs }.trimmed();
        if p.degree() == Some(0) {
            return Vec::new();
        }
        let lead = p.leading().unwrap().magnitude().clone();
        let maxc = p
            .coeffs
            .iter()
            .map(|c| c.magnitude().clone())
            .max()
            .unwrap();
        // ceil(max/lead) + 1 bounds all real roots.
        let bound = (&maxc + &lead - 1u32) / &lead + 1u32;
        let bound: u64 = bound.try_into().unwrap_or(u64::MAX).min(1 << 20);
        let mut roots = Vec::new();
        for r in 1..=bound {
            if p.eval_int(&BigInt::from(r)).is_zero() {
                roots.push(r);
            }
        }
        roots
    }
}

fn rat_poly_rem(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let bdeg = b.iter().rposition(|c| !c.is_zero()).expect("b nonzero");
    let blead = b[bdeg].clone();
    let mut rem = a.to_vec();
    loop {
        let adeg = match rem.iter().rposition(|c| !c.is_zero()) {
            Some(d) => d,
            None => return Vec::new(),
        };
        if adeg < bdeg {
            rem.truncate(adeg + 1);
            return rem;
        }
        let q = &rem[adeg] / &blead;
        let shift = adeg - bdeg;
        for (j, bc) in b.iter().enumerate().take(bdeg + 1) {
            let sub = &q * bc;
            rem[shift + j] -= sub;
        }
    }
}

fn rat_poly_to_primitive(coeffs: &[BigRational]) -> Poly {
    // Clear denominators, then normalize to primitive with positive lead.
    let mut denom_lcm = BigInt::one();
    for c in coeffs {
        denom_lcm = denom_lcm.lcm(c.denom());
    }
    let ints: Vec<BigInt> = coeffs
        .iter()
        .map(|c| c.numer() * (&denom_lcm / c.denom()))
        .collect();
    Poly { coeffs: ints }.trimmed().primitive_positive()
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for i in 0..n {
            let a = self.coeffs.get(i).cloned().unwrap_or_else(BigInt::zero);
            let b = rhs.coeffs.get(i).cloned().unwrap_or_else(BigInt::zero);
            coeffs.push(a + b);
        }
        Poly { coeffs }.trimmed()
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(-rhs)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![BigInt::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Poly { coeffs }.trimmed()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (pow, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let mag = c.magnitude();
            if first {
                if c.sign() == Sign::Minus {
                    write!(f, "-")?;
                }
                first = false;
            } else if c.sign() == Sign::Minus {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            match pow {
                0 => write!(f, "{mag}")?,
                _ => {
                    if !mag.is_one() {
                        write!(f, "{mag}")?;
                    }
                    write!(f, "m")?;
                    if pow > 1 {
                        write!(f, "^{pow}")?;
                    }
                }
            }
        }
        Ok(())
    }
}
