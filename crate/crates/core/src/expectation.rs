//! Symbolic expected values of products of sample means over i.i.d.
//! samples, and the multiplicity matrices built from them.
//!
//! The workhorse is a recursion on the mean factors: the expectation of a
//! product of N sample means splits over which of the remaining factors
//! share the sample index of the first factor. Each recursion level
//! contributes a factor `m - depth`, which is where the falling factorials
//! `m_n` in the matrix entries come from. Dividing by `m^N` yields exact
//! rational-in-m multiplicities that sum to one: the index configurations
//! are exhaustive and mutually exclusive.

use crate::algebra::{canonical_cmp, canonicalize_blocks, set_partitions, Poly, RationalFn};
use crate::conversions::MomentExpr;
use crate::error::{Error, Result};
use crate::vars::{Var, VarSet};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::rc::Rc;

/// A product of sample means, encoded as a grouping of the estimator's
/// variable slots: blocks `{x,y},{z}` encode `mean(xy)*mean(z)`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MeanProductTerm {
    blocks: Vec<Vec<Var>>,
}

/// A product of expectation factors: blocks `{x,y},{z}` encode `<xy><z>`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MomentProduct {
    blocks: Vec<Vec<Var>>,
}

macro_rules! block_product_impl {
    ($ty:ident) => {
        impl $ty {
            /// Builds the canonical form: blocks sorted internally, then by
            /// size descending and label sequence.
            pub fn new(mut blocks: Vec<Vec<Var>>) -> Self {
                canonicalize_blocks(&mut blocks);
                $ty { blocks }
            }

            pub fn blocks(&self) -> &[Vec<Var>] {
                &self.blocks
            }

            pub fn slot_count(&self) -> usize {
                self.blocks.iter().map(Vec::len).sum()
            }

            pub fn display(&self, vars: &VarSet) -> String {
                let mut s = String::new();
                for b in &self.blocks {
                    let inner: Vec<&str> = b.iter().map(|v| vars.name(*v)).collect();
                    let _ = write!(s, "{}{}{}", $ty::OPEN, inner.join(" "), $ty::CLOSE);
                }
                s
            }
        }

        impl PartialOrd for $ty {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl Ord for $ty {
            fn cmp(&self, other: &Self) -> Ordering {
                canonical_cmp(&self.blocks, &other.blocks)
            }
        }
    };
}

block_product_impl!(MeanProductTerm);
block_product_impl!(MomentProduct);

impl MeanProductTerm {
    const OPEN: &'static str = "mean(";
    const CLOSE: &'static str = ")";

    /// Concatenation of two mean products (used when squaring estimators).
    pub fn join(&self, other: &MeanProductTerm) -> MeanProductTerm {
        let mut blocks = self.blocks.clone();
        blocks.extend(other.blocks.iter().cloned());
        MeanProductTerm::new(blocks)
    }
}

impl MomentProduct {
    const OPEN: &'static str = "<";
    const CLOSE: &'static str = ">";
}

/// Memoizing expander for mean products. Each instance owns its memo
/// table, so independent derivations can run concurrently.
#[derive(Default)]
pub struct MeanExpander {
    memo: HashMap<(Vec<Vec<Var>>, u32), Rc<Vec<(Poly, Vec<Vec<Var>>)>>>,
}

impl MeanExpander {
    pub fn new() -> Self {
        Self::default()
    }

    /// Exact expansion of `<mean-product>` into moment products with
    /// rational-in-m coefficients. The coefficients sum to one.
    pub fn expand(&mut self, term: &MeanProductTerm) -> Result<MomentExpr> {
        let slots = term.slot_count();
        if slots > 8 {
            return Err(Error::TooManySlots { slots });
        }
        let n = term.blocks().len() as u32;
        let raw = self.h_expand(term.blocks(), 0);
        let denom = Poly::m().pow(n);
        let mut expr = MomentExpr::zero();
        for (poly, blocks) in raw.iter() {
            let coeff = RationalFn::new(poly.clone(), denom.clone())?;
            expr.add_term(MomentProduct::new(blocks.clone()), coeff);
        }
        Ok(expr)
    }

    /// Recursive expansion over blocks still to be absorbed. `depth` is
    /// the number of recursion levels already taken, so the sample-count
    /// factor contributed at this level is `m - depth`.
    fn h_expand(&mut self, blocks: &[Vec<Var>], depth: u32) -> Rc<Vec<(Poly, Vec<Vec<Var>>)>> {
        if blocks.is_empty() {
            return Rc::new(vec![(Poly::one(), Vec::new())]);
        }
        let key = (blocks.to_vec(), depth);
        if let Some(hit) = self.memo.get(&key) {
            return Rc::clone(hit);
        }
        let first = &blocks[0];
        let rest = &blocks[1..];
        let level_factor = Poly::m_plus(-(depth as i64));
        let mut acc: BTreeMap<Vec<Vec<Var>>, Poly> = BTreeMap::new();
        for mask in 0u32..(1 << rest.len()) {
            let mut merged = first.clone();
            let mut remaining = Vec::with_capacity(rest.len());
            for (i, b) in rest.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    merged.extend(b.iter().copied());
                } else {
                    remaining.push(b.clone());
                }
            }
            merged.sort_unstable();
            let sub = self.h_expand(&remaining, depth + 1);
            for (p, prod) in sub.iter() {
                let mut blocks = prod.clone();
                blocks.push(merged.clone());
                canonicalize_blocks(&mut blocks);
                let coeff = &level_factor * p;
                acc.entry(blocks)
                    .and_modify(|c| *c = &*c + &coeff)
                    .or_insert(coeff);
            }
        }
        let out: Vec<(Poly, Vec<Vec<Var>>)> = acc
            .into_iter()
            .filter(|(_, p)| !p.is_zero())
            .map(|(b, p)| (p, b))
            .collect();
        let out = Rc::new(out);
        self.memo.insert(key, Rc::clone(&out));
        out
    }
}

/// One-shot expansion with a fresh memo table.
pub fn expand_mean_product(term: &MeanProductTerm) -> Result<MomentExpr> {
    MeanExpander::new().expand(term)
}

/// The matrix linking expected mean products to products of moments for a
/// given slot list. Rows and columns run over all distinct canonical
/// partitions of the slots, coarsest first, which makes the matrix lower
/// triangular under the refinement order.
#[derive(Clone, Debug)]
pub struct MultiplicityMatrix {
    slots: Vec<Var>,
    rows: Vec<MeanProductTerm>,
    cols: Vec<MomentProduct>,
    entries: Vec<Vec<RationalFn>>,
}

impl MultiplicityMatrix {
    /// Builds the matrix for the given slots. Repeated labels collapse
    /// rows and columns, which is how the reduced (single-variable)
    /// matrices arise; the collapsed multiplicities, like the factor 3 on
    /// the squared-mean row of the one-variable third-order matrix, come
    /// out of the expansion automatically.
    pub fn build(slots: &[Var]) -> Result<Self> {
        if slots.is_empty() || slots.len() > 8 {
            return Err(Error::TooManySlots { slots: slots.len() });
        }
        let mut groupings: Vec<Vec<Vec<Var>>> = Vec::new();
        for part in set_partitions(slots.len()) {
            let mut blocks: Vec<Vec<Var>> = part
                .blocks()
                .iter()
                .map(|b| b.iter().map(|&i| slots[i]).collect())
                .collect();
            canonicalize_blocks(&mut blocks);
            if !groupings.contains(&blocks) {
                groupings.push(blocks);
            }
        }
        groupings.sort_by(|a, b| canonical_cmp(a, b));
        let rows: Vec<MeanProductTerm> = groupings
            .iter()
            .map(|g| MeanProductTerm::new(g.clone()))
            .collect();
        let cols: Vec<MomentProduct> = groupings
            .iter()
            .map(|g| MomentProduct::new(g.clone()))
            .collect();
        let col_index: BTreeMap<&MomentProduct, usize> =
            cols.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let mut expander = MeanExpander::new();
        let mut entries = Vec::with_capacity(rows.len());
        for row in &rows {
            let mut line = vec![RationalFn::zero(); cols.len()];
            for (product, coeff) in expander.expand(row)?.terms() {
                let j = *col_index
                    .get(product)
                    .expect("expansion stays within the partition lattice");
                line[j] = coeff.clone();
            }
            entries.push(line);
        }
        Ok(MultiplicityMatrix {
            slots: slots.to_vec(),
            rows,
            cols,
            entries,
        })
    }

    pub fn slots(&self) -> &[Var] {
        &self.slots
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[MeanProductTerm] {
        &self.rows
    }

    pub fn cols(&self) -> &[MomentProduct] {
        &self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &RationalFn {
        &self.entries[i][j]
    }

    pub fn col_index(&self, product: &MomentProduct) -> Option<usize> {
        self.cols.iter().position(|c| c == product)
    }

    /// Inverse over the rational-function field. The matrix is lower
    /// triangular with nonzero diagonal, so forward substitution suffices.
    pub fn invert(&self) -> Vec<Vec<RationalFn>> {
        let n = self.size();
        for i in 0..n {
            for j in i + 1..n {
                debug_assert!(self.entries[i][j].is_zero(), "matrix not lower triangular");
            }
            debug_assert!(!self.entries[i][i].is_zero(), "singular diagonal");
        }
        let mut inv = vec![vec![RationalFn::zero(); n]; n];
        for i in 0..n {
            inv[i][i] = self.entries[i][i].recip().expect("nonzero diagonal");
            for j in 0..i {
                let mut acc = RationalFn::zero();
                for k in j..i {
                    if !self.entries[i][k].is_zero() && !inv[k][j].is_zero() {
                        acc = &acc + &(&self.entries[i][k] * &inv[k][j]);
                    }
                }
                if !acc.is_zero() {
                    inv[i][j] = &(-&acc) / &self.entries[i][i];
                }
            }
        }
        inv
    }
}
