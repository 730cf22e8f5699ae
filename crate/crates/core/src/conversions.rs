//! Recursive conversion between multivariate moments and cumulants, and an
//! exact-cumulant oracle for finite-support distributions.
//!
//! Both directions use the same two-sum recursion: the order-N quantity
//! equals the plain product term plus a sum over ways to split the slot
//! set, weighted by nu/N. Expanding recursively gives either cumulants as
//! polynomials in joint moments or moments as polynomials in joint
//! cumulants. All coefficients stay exact rationals; float contamination
//! would break canonical-form equality.

use crate::algebra::{canonical_cmp, canonicalize_blocks, subset_splits, Rat, RationalFn};
use crate::error::{Error, Result};
use crate::expectation::MomentProduct;
use crate::vars::{Var, VarSet};
use num::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::rc::Rc;

/// A product of joint cumulants: blocks `{x,y},{z}` encode `C2(x,y)C1(z)`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CumulantProduct {
    blocks: Vec<Vec<Var>>,
}

impl CumulantProduct {
    pub fn new(mut blocks: Vec<Vec<Var>>) -> Self {
        canonicalize_blocks(&mut blocks);
        CumulantProduct { blocks }
    }

    pub fn blocks(&self) -> &[Vec<Var>] {
        &self.blocks
    }

    pub fn display(&self, vars: &VarSet) -> String {
        let mut s = String::new();
        for b in &self.blocks {
            let _ = write!(s, "{}", display_cumulant_factor(b, vars));
        }
        s
    }
}

pub(crate) fn display_cumulant_factor(block: &[Var], vars: &VarSet) -> String {
    let inner: Vec<&str> = block.iter().map(|v| vars.name(*v)).collect();
    format!("C{}({})", block.len(), inner.join(","))
}

impl PartialOrd for CumulantProduct {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CumulantProduct {
    fn cmp(&self, other: &Self) -> Ordering {
        canonical_cmp(&self.blocks, &other.blocks)
    }
}

macro_rules! expr_impl {
    ($expr:ident, $product:ident) => {
        /// Linear combination of products with rational-in-m coefficients.
        /// Terms with identical canonical products are merged and zero
        /// coefficients removed.
        #[derive(Clone, PartialEq, Eq, Debug, Default)]
        pub struct $expr {
            terms: BTreeMap<$product, RationalFn>,
        }

        impl $expr {
            pub fn zero() -> Self {
                Self::default()
            }

            /// The empty product with coefficient one.
            pub fn one() -> Self {
                let mut e = Self::zero();
                e.add_term($product::new(Vec::new()), RationalFn::one());
                e
            }

            pub fn is_zero(&self) -> bool {
                self.terms.is_empty()
            }

            pub fn add_term(&mut self, product: $product, coeff: RationalFn) {
                if coeff.is_zero() {
                    return;
                }
                let entry = self.terms.entry(product);
                match entry {
                    std::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(coeff);
                    }
                    std::collections::btree_map::Entry::Occupied(mut o) => {
                        let sum = &*o.get() + &coeff;
                        if sum.is_zero() {
                            o.remove();
                        } else {
                            *o.get_mut() = sum;
                        }
                    }
                }
            }

            pub fn terms(&self) -> impl Iterator<Item = (&$product, &RationalFn)> {
                self.terms.iter()
            }

            pub fn len(&self) -> usize {
                self.terms.len()
            }

            pub fn is_empty(&self) -> bool {
                self.terms.is_empty()
            }

            pub fn coeff(&self, product: &$product) -> RationalFn {
                self.terms.get(product).cloned().unwrap_or_else(RationalFn::zero)
            }

            pub fn add(&self, other: &Self) -> Self {
                let mut out = self.clone();
                for (p, c) in other.terms() {
                    out.add_term(p.clone(), c.clone());
                }
                out
            }

            pub fn sub(&self, other: &Self) -> Self {
                let mut out = self.clone();
                for (p, c) in other.terms() {
                    out.add_term(p.clone(), -c);
                }
                out
            }

            pub fn scale(&self, factor: &RationalFn) -> Self {
                let mut out = Self::zero();
                if factor.is_zero() {
                    return out;
                }
                for (p, c) in self.terms() {
                    out.add_term(p.clone(), c * factor);
                }
                out
            }

            /// Multiplies every term by one extra factor block.
            pub fn mul_block(&self, block: &[Var]) -> Self {
                let mut out = Self::zero();
                for (p, c) in self.terms() {
                    let mut blocks = p.blocks().to_vec();
                    blocks.push(block.to_vec());
                    out.add_term($product::new(blocks), c.clone());
                }
                out
            }

            /// Product of two expressions (factor multisets concatenate).
            pub fn mul(&self, other: &Self) -> Self {
                let mut out = Self::zero();
                for (p, c) in self.terms() {
                    for (q, d) in other.terms() {
                        let mut blocks = p.blocks().to_vec();
                        blocks.extend(q.blocks().iter().cloned());
                        out.add_term($product::new(blocks), c * d);
                    }
                }
                out
            }

            pub fn display(&self, vars: &VarSet) -> String {
                if self.is_zero() {
                    return "0".to_string();
                }
                let mut s = String::new();
                for (i, (p, c)) in self.terms().enumerate() {
                    if i > 0 {
                        s.push_str(" + ");
                    }
                    let _ = write!(s, "[{}] {}", c, p.display(vars));
                }
                s
            }
        }
    };
}

expr_impl!(MomentExpr, MomentProduct);
expr_impl!(CumulantExpr, CumulantProduct);

/// Memoizing converter between moment and cumulant representations.
#[derive(Default)]
pub struct Converter {
    c_in_moments: HashMap<Vec<Var>, Rc<MomentExpr>>,
    m_in_cumulants: HashMap<Vec<Var>, Rc<CumulantExpr>>,
}

impl Converter {
    pub fn new() -> Self {
        Self::default()
    }

    /// C_N over the given slots as a polynomial in joint moments.
    pub fn cumulant_in_moments(&mut self, slots: &[Var]) -> Result<Rc<MomentExpr>> {
        check_order(slots.len())?;
        let mut sorted = slots.to_vec();
        sorted.sort_unstable();
        Ok(self.c_in_moments_rec(&sorted))
    }

    fn c_in_moments_rec(&mut self, slots: &[Var]) -> Rc<MomentExpr> {
        if let Some(hit) = self.c_in_moments.get(slots) {
            return Rc::clone(hit);
        }
        let n = slots.len();
        let mut expr = MomentExpr::zero();
        expr.add_term(MomentProduct::new(vec![slots.to_vec()]), RationalFn::one());
        let positions: Vec<usize> = (0..n).collect();
        for nu in 1..n {
            let weight = RationalFn::from_rat(&Rat::new(
                (-(nu as i64)).into(),
                (n as i64).into(),
            ));
            for (chosen, rest) in subset_splits(&positions, nu).expect("nu in range") {
                let mut chosen_labels: Vec<Var> = chosen.iter().map(|&i| slots[i]).collect();
                chosen_labels.sort_unstable();
                let mut rest_labels: Vec<Var> = rest.iter().map(|&i| slots[i]).collect();
                rest_labels.sort_unstable();
                let inner = self.c_in_moments_rec(&chosen_labels);
                let contribution = inner.mul_block(&rest_labels).scale(&weight);
                expr = expr.add(&contribution);
            }
        }
        let expr = Rc::new(expr);
        self.c_in_moments.insert(slots.to_vec(), Rc::clone(&expr));
        expr
    }

    /// M_N over the given slots as a polynomial in joint cumulants.
    pub fn moment_in_cumulants(&mut self, slots: &[Var]) -> Result<Rc<CumulantExpr>> {
        check_order(slots.len())?;
        let mut sorted = slots.to_vec();
        sorted.sort_unstable();
        Ok(self.m_in_cumulants_rec(&sorted))
    }

    fn m_in_cumulants_rec(&mut self, slots: &[Var]) -> Rc<CumulantExpr> {
        if let Some(hit) = self.m_in_cumulants.get(slots) {
            return Rc::clone(hit);
        }
        let n = slots.len();
        let mut expr = CumulantExpr::zero();
        expr.add_term(CumulantProduct::new(vec![slots.to_vec()]), RationalFn::one());
        let positions: Vec<usize> = (0..n).collect();
        for nu in 1..n {
            let weight =
                RationalFn::from_rat(&Rat::new((nu as i64).into(), (n as i64).into()));
            for (chosen, rest) in subset_splits(&positions, nu).expect("nu in range") {
                let mut chosen_labels: Vec<Var> = chosen.iter().map(|&i| slots[i]).collect();
                chosen_labels.sort_unstable();
                let mut rest_labels: Vec<Var> = rest.iter().map(|&i| slots[i]).collect();
                rest_labels.sort_unstable();
                let inner = self.m_in_cumulants_rec(&rest_labels);
                let contribution = inner.mul_block(&chosen_labels).scale(&weight);
                expr = expr.add(&contribution);
            }
        }
        let expr = Rc::new(expr);
        self.m_in_cumulants.insert(slots.to_vec(), Rc::clone(&expr));
        expr
    }

    /// Rewrites a moment expression as a pure cumulant expression by
    /// expanding every moment factor.
    pub fn moments_to_cumulants(&mut self, expr: &MomentExpr) -> Result<CumulantExpr> {
        let mut out = CumulantExpr::zero();
        for (product, coeff) in expr.terms() {
            let mut term = CumulantExpr::one();
            for block in product.blocks() {
                let factor = self.moment_in_cumulants(block)?;
                term = term.mul(&factor);
            }
            out = out.add(&term.scale(coeff));
        }
        Ok(out)
    }

    /// Rewrites a cumulant expression as a pure moment expression.
    pub fn cumulants_to_moments(&mut self, expr: &CumulantExpr) -> Result<MomentExpr> {
        let mut out = MomentExpr::zero();
        for (product, coeff) in expr.terms() {
            let mut term = MomentExpr::one();
            for block in product.blocks() {
                let factor = self.cumulant_in_moments(block)?;
                term = term.mul(&factor);
            }
            out = out.add(&term.scale(coeff));
        }
        Ok(out)
    }
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 || n > 8 {
        Err(Error::OrderOutOfRange(n))
    } else {
        Ok(())
    }
}

/// C_N(slots) in joint moments, with a fresh memo table.
pub fn cumulants_from_moments(slots: &[Var]) -> Result<MomentExpr> {
    Ok((*Converter::new().cumulant_in_moments(slots)?).clone())
}

/// M_N(slots) in joint cumulants, with a fresh memo table.
pub fn moments_from_cumulants(slots: &[Var]) -> Result<CumulantExpr> {
    Ok((*Converter::new().moment_in_cumulants(slots)?).clone())
}

/// Smith's univariate recursion: cumulants C_1..C_N from raw moments
/// M_1..M_N.
pub fn smith_univariate_cumulants(moments: &[Rat]) -> Vec<Rat> {
    let n = moments.len();
    let mut cumulants: Vec<Rat> = Vec::with_capacity(n);
    for order in 1..=n {
        let mut c = moments[order - 1].clone();
        for nu in 1..order {
            let b = binomial(order - 1, nu - 1);
            c -= Rat::from_integer(b.into()) * &cumulants[nu - 1] * &moments[order - nu - 1];
        }
        cumulants.push(c);
    }
    cumulants
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut r: u64 = 1;
    for i in 0..k {
        r = r * (n - i) as u64 / (i + 1) as u64;
    }
    r
}

/// Scalar values the exact oracle can work over. Implemented for exact
/// rationals and for complex numbers with exact rational parts.
pub trait RingScalar: Clone + PartialEq + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, q: &Rat) -> Self;
    fn is_zero(&self) -> bool;
}

impl RingScalar for Rat {
    fn zero() -> Self {
        <Rat as Zero>::zero()
    }
    fn one() -> Self {
        <Rat as One>::one()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn scale(&self, q: &Rat) -> Self {
        self * q
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

/// Complex number with exact rational real and imaginary parts.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComplexRat {
    pub re: Rat,
    pub im: Rat,
}

impl ComplexRat {
    pub fn new(re: Rat, im: Rat) -> Self {
        ComplexRat { re, im }
    }

    pub fn from_rat(re: Rat) -> Self {
        ComplexRat {
            re,
            im: <Rat as Zero>::zero(),
        }
    }

    pub fn conj(&self) -> Self {
        ComplexRat {
            re: self.re.clone(),
            im: -self.im.clone(),
        }
    }
}

impl RingScalar for ComplexRat {
    fn zero() -> Self {
        ComplexRat::from_rat(<Rat as Zero>::zero())
    }
    fn one() -> Self {
        ComplexRat::from_rat(<Rat as One>::one())
    }
    fn add(&self, other: &Self) -> Self {
        ComplexRat::new(&self.re + &other.re, &self.im + &other.im)
    }
    fn sub(&self, other: &Self) -> Self {
        ComplexRat::new(&self.re - &other.re, &self.im - &other.im)
    }
    fn mul(&self, other: &Self) -> Self {
        ComplexRat::new(
            &self.re * &other.re - &self.im * &other.im,
            &self.re * &other.im + &self.im * &other.re,
        )
    }
    fn scale(&self, q: &Rat) -> Self {
        ComplexRat::new(&self.re * q, &self.im * q)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(&self.re) && Zero::is_zero(&self.im)
    }
}

/// Finite-support distribution with exact probabilities, the ground-truth
/// carrier for every brute-force expectation in the test suites.
#[derive(Clone, Debug)]
pub struct FiniteDistribution<S = Rat> {
    support: Vec<Vec<S>>,
    probs: Vec<Rat>,
}

impl<S: RingScalar> FiniteDistribution<S> {
    pub fn new(support: Vec<Vec<S>>, probs: Vec<Rat>) -> Result<Self> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(Error::InvalidParameter(
                "support and probability counts differ or are empty".into(),
            ));
        }
        let dim = support[0].len();
        if support.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidParameter(
                "support points have mixed dimensions".into(),
            ));
        }
        if probs.iter().any(|p| p.is_negative()) {
            return Err(Error::InvalidParameter("negative probability".into()));
        }
        let total: Rat = probs.iter().cloned().sum();
        if !total.is_one() {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(FiniteDistribution { support, probs })
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn support(&self) -> &[Vec<S>] {
        &self.support
    }

    pub fn probs(&self) -> &[Rat] {
        &self.probs
    }

    /// Joint raw moment over the given coordinates (repeats allowed).
    pub fn moment(&self, slots: &[usize]) -> Result<S> {
        for &s in slots {
            if s >= self.dim() {
                return Err(Error::SlotOutOfRange {
                    slot: s,
                    dim: self.dim(),
                });
            }
        }
        let mut acc = S::zero();
        for (point, prob) in self.support.iter().zip(&self.probs) {
            let mut prod = S::one();
            for &s in slots {
                prod = prod.mul(&point[s]);
            }
            acc = acc.add(&prod.scale(prob));
        }
        Ok(acc)
    }

    /// Independent product: coordinates of `other` are appended.
    pub fn product(&self, other: &FiniteDistribution<S>) -> FiniteDistribution<S> {
        let mut support = Vec::with_capacity(self.support.len() * other.support.len());
        let mut probs = Vec::with_capacity(support.capacity());
        for (p, pp) in self.support.iter().zip(&self.probs) {
            for (q, qp) in other.support.iter().zip(&other.probs) {
                let mut point = p.clone();
                point.extend(q.iter().cloned());
                support.push(point);
                probs.push(pp * qp);
            }
        }
        FiniteDistribution { support, probs }
    }

    /// Distribution of the coordinate-wise sum of two independent vectors
    /// of the same dimension.
    pub fn independent_sum(&self, other: &FiniteDistribution<S>) -> Result<FiniteDistribution<S>> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidParameter(
                "independent sum requires equal dimensions".into(),
            ));
        }
        let mut support = Vec::new();
        let mut probs = Vec::new();
        for (p, pp) in self.support.iter().zip(&self.probs) {
            for (q, qp) in other.support.iter().zip(&other.probs) {
                let point: Vec<S> = p.iter().zip(q).map(|(a, b)| a.add(b)).collect();
                support.push(point);
                probs.push(pp * qp);
            }
        }
        Ok(FiniteDistribution { support, probs })
    }

    /// Adds a constant to one coordinate.
    pub fn shift(&self, coord: usize, offset: &S) -> FiniteDistribution<S> {
        let mut out = self.clone();
        for p in &mut out.support {
            p[coord] = p[coord].add(offset);
        }
        out
    }

    /// Scales one coordinate.
    pub fn scale_coord(&self, coord: usize, factor: &S) -> FiniteDistribution<S> {
        let mut out = self.clone();
        for p in &mut out.support {
            p[coord] = p[coord].mul(factor);
        }
        out
    }
}

impl FiniteDistribution<Rat> {
    /// Convenience for rational-valued distributions.
    pub fn moment_rat(&self, slots: &[usize]) -> Rat {
        self.moment(slots).expect("slots in range")
    }
}

/// Exact joint cumulant of a finite distribution over the given
/// coordinates (repeats allowed, at most eight slots).
pub fn exact_cumulant<S: RingScalar>(dist: &FiniteDistribution<S>, slots: &[usize]) -> Result<S> {
    check_order(slots.len())?;
    for &s in slots {
        if s >= dist.dim() {
            return Err(Error::SlotOutOfRange {
                slot: s,
                dim: dist.dim(),
            });
        }
    }
    let vars: Vec<Var> = slots.iter().map(|&s| Var(s as u32)).collect();
    let expr = cumulants_from_moments(&vars)?;
    let mut acc = S::zero();
    for (product, coeff) in expr.terms() {
        let q = coeff
            .as_rat()
            .expect("conversion coefficients are constants");
        let mut prod = S::one();
        for block in product.blocks() {
            let coords: Vec<usize> = block.iter().map(|v| v.index()).collect();
            prod = prod.mul(&dist.moment(&coords)?);
        }
        acc = acc.add(&prod.scale(&q));
    }
    Ok(acc)
}
