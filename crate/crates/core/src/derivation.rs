//! Derivation of unbiased estimators from condition sets, exact variance
//! computation in terms of cumulants, symbolic unbiasedness checks, and
//! Gauss-optimal variants.
//!
//! An estimator is the inner product of a target vector (the cumulant's
//! moment expansion, reduced by the declared conditions) with the inverse
//! multiplicity matrix applied to the mean-product vector. Zero-mean
//! conditions drop moment products at the moment level; vanishing
//! covariances rewrite pair moments into mean products there, and kill
//! the corresponding second-order cumulants after conversion.

use crate::algebra::{Rat, RationalFn};
use crate::conversions::{
    display_cumulant_factor, CumulantExpr, CumulantProduct, Converter, MomentExpr,
};
use crate::error::{Error, Result};
use crate::expectation::{MeanExpander, MeanProductTerm, MomentProduct, MultiplicityMatrix};
use crate::vars::{Var, VarSet};
use num::{BigInt, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// Conditions under which an estimator is unbiased: which variables are
/// average-free, which pairs have vanishing covariance, how the estimator
/// slots map onto variables, and the conjugation structure of complex
/// variables.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ConditionSet {
    pub vars: VarSet,
    /// Slot-to-variable assignment; repeated variables encode slot
    /// equalities like `x = y`.
    pub slots: Vec<Var>,
    pub zero_mean: BTreeSet<Var>,
    /// Unordered pairs with C2 = 0, stored as (min, max).
    pub zero_cov: BTreeSet<(Var, Var)>,
    /// (plain, conjugated) variable pairs for complex data.
    pub conjugate_pairs: Vec<(Var, Var)>,
    /// Groups of conjugate-pair indices whose variables share one random
    /// phase. Cumulants unbalanced in a group's star count vanish; a
    /// separate group per pair models independent phases, one joint group
    /// models equal frequencies.
    pub phase_groups: Vec<Vec<usize>>,
}

impl ConditionSet {
    pub fn new(vars: VarSet, slots: Vec<Var>) -> Self {
        ConditionSet {
            vars,
            slots,
            ..Default::default()
        }
    }

    pub fn order(&self) -> usize {
        self.slots.len()
    }

    pub fn with_zero_mean(mut self, vars: &[Var]) -> Self {
        self.zero_mean.extend(vars.iter().copied());
        self
    }

    pub fn with_zero_cov(mut self, pairs: &[(Var, Var)]) -> Self {
        for &(u, v) in pairs {
            self.zero_cov.insert(normalize_pair(u, v));
        }
        self
    }

    pub fn with_conjugates(mut self, pairs: &[(Var, Var)], phase_groups: Vec<Vec<usize>>) -> Self {
        self.conjugate_pairs = pairs.to_vec();
        self.phase_groups = phase_groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len() as u32;
        let in_range = |v: Var| v.0 < n;
        if self.slots.is_empty() {
            return Err(Error::InconsistentConditions("no slots declared".into()));
        }
        if !self.slots.iter().all(|&v| in_range(v))
            || !self.zero_mean.iter().all(|&v| in_range(v))
        {
            return Err(Error::InconsistentConditions(
                "condition references an undeclared variable".into(),
            ));
        }
        for &(u, v) in &self.zero_cov {
            if !in_range(u) || !in_range(v) {
                return Err(Error::InconsistentConditions(
                    "condition references an undeclared variable".into(),
                ));
            }
            if u == v {
                return Err(Error::InconsistentConditions(format!(
                    "C2({0},{0}) = 0 is not expressible as a covariance condition",
                    self.vars.name(u)
                )));
            }
        }
        for &(p, s) in &self.conjugate_pairs {
            if !in_range(p) || !in_range(s) || p == s {
                return Err(Error::InconsistentConditions(
                    "malformed conjugate pair".into(),
                ));
            }
        }
        for group in &self.phase_groups {
            if group.iter().any(|&i| i >= self.conjugate_pairs.len()) {
                return Err(Error::InconsistentConditions(
                    "phase group references an unknown conjugate pair".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_zero_mean(&self, v: Var) -> bool {
        self.zero_mean.contains(&v)
    }

    pub fn covariance_vanishes(&self, u: Var, v: Var) -> bool {
        u != v && self.zero_cov.contains(&normalize_pair(u, v))
    }

    pub fn is_conjugate_pair(&self, u: Var, v: Var) -> bool {
        self.conjugate_pairs
            .iter()
            .any(|&(p, s)| (p, s) == (u, v) || (p, s) == (v, u))
    }

    /// The conjugate of `v` under the declared pairs, if any.
    pub fn conjugate_of(&self, v: Var) -> Option<Var> {
        for &(p, s) in &self.conjugate_pairs {
            if p == v {
                return Some(s);
            }
            if s == v {
                return Some(p);
            }
        }
        None
    }

    /// Variables that carry a data binding: every variable that is not
    /// the starred half of a conjugate pair, in declaration order.
    pub fn binding_vars(&self) -> Vec<Var> {
        let starred: BTreeSet<Var> = self.conjugate_pairs.iter().map(|&(_, s)| s).collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &v in &self.slots {
            let base = if starred.contains(&v) {
                self.conjugate_of(v).expect("starred var has a pair")
            } else {
                v
            };
            if seen.insert(base) {
                out.push(base);
            }
        }
        out
    }

    /// Human-readable condition summary.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if !self.zero_mean.is_empty() {
            let names: Vec<&str> = self.zero_mean.iter().map(|&v| self.vars.name(v)).collect();
            parts.push(format!("<{}> = 0", names.join("> = <")));
        }
        for &(u, v) in &self.zero_cov {
            parts.push(format!(
                "C2({},{}) = 0",
                self.vars.name(u),
                self.vars.name(v)
            ));
        }
        if parts.is_empty() {
            "no conditions".to_string()
        } else {
            parts.join(", ")
        }
    }
}

fn normalize_pair(u: Var, v: Var) -> (Var, Var) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Applies moment-level reductions: products containing a first-order
/// moment of an average-free variable vanish, and a pair moment with
/// vanishing covariance factorizes into first-order moments.
pub fn reduce_moments(expr: &MomentExpr, conds: &ConditionSet) -> MomentExpr {
    let mut out = MomentExpr::zero();
    let mut queue: Vec<(MomentProduct, RationalFn)> = expr
        .terms()
        .map(|(p, c)| (p.clone(), c.clone()))
        .collect();
    'queue: while let Some((product, coeff)) = queue.pop() {
        for block in product.blocks() {
            if block.len() == 1 && conds.is_zero_mean(block[0]) {
                continue 'queue;
            }
        }
        for (i, block) in product.blocks().iter().enumerate() {
            if block.len() == 2 && conds.covariance_vanishes(block[0], block[1]) {
                let mut blocks = product.blocks().to_vec();
                let pair = blocks.remove(i);
                blocks.push(vec![pair[0]]);
                blocks.push(vec![pair[1]]);
                queue.push((MomentProduct::new(blocks), coeff));
                continue 'queue;
            }
        }
        out.add_term(product, coeff);
    }
    out
}

/// Applies cumulant-level reductions: first-order cumulants of
/// average-free variables, vanishing covariances, and phase-unbalanced
/// cumulants of circular complex variables all drop.
pub fn reduce_cumulants(expr: &CumulantExpr, conds: &ConditionSet) -> CumulantExpr {
    let mut out = CumulantExpr::zero();
    'terms: for (product, coeff) in expr.terms() {
        for block in product.blocks() {
            if block.len() == 1 && conds.is_zero_mean(block[0]) {
                continue 'terms;
            }
            if block.len() == 2 && conds.covariance_vanishes(block[0], block[1]) {
                continue 'terms;
            }
            for group in &conds.phase_groups {
                let mut balance: i64 = 0;
                for &pair_idx in group {
                    let (p, s) = conds.conjugate_pairs[pair_idx];
                    balance += block.iter().filter(|&&v| v == p).count() as i64;
                    balance -= block.iter().filter(|&&v| v == s).count() as i64;
                }
                if balance != 0 {
                    continue 'terms;
                }
            }
        }
        out.add_term(product.clone(), coeff.clone());
    }
    out
}

/// An unbiased estimator: a linear combination of mean products with
/// rational-in-m coefficients, valid under its conditions for all
/// `m >= min_m`.
#[derive(Clone, PartialEq, Debug)]
pub struct EstimatorSpec {
    pub name: Option<String>,
    pub terms: Vec<(RationalFn, MeanProductTerm)>,
    pub conditions: ConditionSet,
    pub min_m: u64,
    shift_invariant: bool,
}

impl EstimatorSpec {
    /// Builds a spec from terms, computing `min_m` from coefficient poles.
    pub fn new(terms: Vec<(RationalFn, MeanProductTerm)>, conditions: ConditionSet) -> Self {
        let min_m = min_m_from_terms(&terms);
        let mut terms = terms;
        terms.sort_by(|a, b| a.1.cmp(&b.1));
        let shift_invariant = compute_shift_invariance(&terms, &conditions.slots);
        EstimatorSpec {
            name: None,
            terms,
            conditions,
            min_m,
            shift_invariant,
        }
    }

    /// True when the value is unchanged by adding a constant to any
    /// variable, proved symbolically at construction. The full
    /// estimators (k-statistics and their multivariate forms) have this
    /// property; numeric evaluation exploits it by centering columns.
    pub fn is_shift_invariant(&self) -> bool {
        self.shift_invariant
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn order(&self) -> usize {
        self.conditions.order()
    }

    pub fn coeff(&self, term: &MeanProductTerm) -> RationalFn {
        self.terms
            .iter()
            .find(|(_, t)| t == term)
            .map(|(c, _)| c.clone())
            .unwrap_or_else(RationalFn::zero)
    }

    /// `a * self + b * other`; both specs must share slot structure. The
    /// result inherits the given conditions.
    pub fn linear_combination(
        a: &RationalFn,
        s1: &EstimatorSpec,
        b: &RationalFn,
        s2: &EstimatorSpec,
        conditions: ConditionSet,
    ) -> EstimatorSpec {
        let mut merged: BTreeMap<MeanProductTerm, RationalFn> = BTreeMap::new();
        for (c, t) in &s1.terms {
            let add = a * c;
            let e = merged.entry(t.clone()).or_insert_with(RationalFn::zero);
            *e = &*e + &add;
        }
        for (c, t) in &s2.terms {
            let add = b * c;
            let e = merged.entry(t.clone()).or_insert_with(RationalFn::zero);
            *e = &*e + &add;
        }
        let terms: Vec<(RationalFn, MeanProductTerm)> = merged
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(t, c)| (c, t))
            .collect();
        EstimatorSpec::new(terms, conditions)
    }
}

fn min_m_from_terms(terms: &[(RationalFn, MeanProductTerm)]) -> u64 {
    let mut min_m = 1u64;
    for (coeff, _) in terms {
        for pole in coeff.positive_poles() {
            min_m = min_m.max(pole + 1);
        }
    }
    min_m
}

/// Symbolic shift-invariance check: substitutes `v -> v + t` for every
/// variable and requires all coefficients of positive powers of t to
/// cancel identically.
fn compute_shift_invariance(terms: &[(RationalFn, MeanProductTerm)], slots: &[Var]) -> bool {
    let distinct: BTreeSet<Var> = slots.iter().copied().collect();
    for &v in &distinct {
        let mut by_power: BTreeMap<(u32, MeanProductTerm), RationalFn> = BTreeMap::new();
        for (coeff, term) in terms {
            expand_shift(term, v, coeff, &mut by_power);
        }
        for ((power, _), c) in &by_power {
            if *power > 0 && !c.is_zero() {
                return false;
            }
        }
    }
    true
}

fn expand_shift(
    term: &MeanProductTerm,
    v: Var,
    coeff: &RationalFn,
    out: &mut BTreeMap<(u32, MeanProductTerm), RationalFn>,
) {
    fn small_binomial(n: usize, k: usize) -> i64 {
        let mut r: i64 = 1;
        for i in 0..k {
            r = r * (n - i) as i64 / (i + 1) as i64;
        }
        r
    }
    fn rec(
        blocks: &[Vec<Var>],
        v: Var,
        idx: usize,
        power: u32,
        acc: &mut Vec<Vec<Var>>,
        multiplier: i64,
        coeff: &RationalFn,
        out: &mut BTreeMap<(u32, MeanProductTerm), RationalFn>,
    ) {
        if idx == blocks.len() {
            let product = MeanProductTerm::new(acc.clone());
            let add = coeff * &RationalFn::from_int(multiplier);
            let entry = out
                .entry((power, product))
                .or_insert_with(RationalFn::zero);
            *entry = &*entry + &add;
            return;
        }
        let block = &blocks[idx];
        let count = block.iter().filter(|&&u| u == v).count();
        let rest: Vec<Var> = block.iter().copied().filter(|&u| u != v).collect();
        for replaced in 0..=count {
            let mut kept = rest.clone();
            kept.extend(std::iter::repeat(v).take(count - replaced));
            let pushed = !kept.is_empty();
            if pushed {
                acc.push(kept);
            }
            rec(
                blocks,
                v,
                idx + 1,
                power + replaced as u32,
                acc,
                multiplier * small_binomial(count, replaced),
                coeff,
                out,
            );
            if pushed {
                acc.pop();
            }
        }
    }
    let mut acc = Vec::new();
    rec(term.blocks(), v, 0, 0, &mut acc, 1, coeff, out);
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vars = &self.conditions.vars;
        if let Some(name) = &self.name {
            write!(f, "{name} = ")?;
        }
        for (i, (c, t)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "[{}] {}", c, t.display(vars))?;
        }
        if self.terms.is_empty() {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Shared scratch state so repeated derivations reuse expansion memos.
#[derive(Default)]
pub struct DerivationCtx {
    expander: MeanExpander,
    converter: Converter,
}

impl DerivationCtx {
    pub fn new() -> Self {
        Self::default()
    }

    /// As [`symbolic_variance`], reusing this context's memo tables.
    pub fn variance(&mut self, spec: &EstimatorSpec) -> Result<VarianceExpr> {
        symbolic_variance_with(self, spec)
    }

    /// As [`verify_unbiased`], reusing this context's memo tables.
    pub fn unbiased(&mut self, spec: &EstimatorSpec) -> Result<(MomentExpr, bool)> {
        verify_unbiased_with(self, spec)
    }
}

/// Derives the unique unbiased estimator of the order-n cumulant over the
/// condition set's slots: the reduced moment expansion of the target,
/// contracted with the inverse multiplicity matrix.
pub fn derive_estimator(conds: &ConditionSet) -> Result<EstimatorSpec> {
    conds.validate()?;
    let matrix = MultiplicityMatrix::build(&conds.slots)?;
    let gamma = target_gamma(&matrix, conds)?;
    spec_from_gamma(&matrix, &matrix.invert(), &gamma, conds)
}

fn target_gamma(matrix: &MultiplicityMatrix, conds: &ConditionSet) -> Result<Vec<RationalFn>> {
    let target = crate::conversions::cumulants_from_moments(&conds.slots)?;
    let reduced = reduce_moments(&target, conds);
    let mut gamma = vec![RationalFn::zero(); matrix.size()];
    for (product, coeff) in reduced.terms() {
        let j = matrix.col_index(product).ok_or_else(|| {
            Error::InconsistentConditions(format!(
                "target moment product {} is not a matrix column",
                product.display(&conds.vars)
            ))
        })?;
        gamma[j] = coeff.clone();
    }
    Ok(gamma)
}

fn spec_from_gamma(
    matrix: &MultiplicityMatrix,
    inverse: &[Vec<RationalFn>],
    gamma: &[RationalFn],
    conds: &ConditionSet,
) -> Result<EstimatorSpec> {
    let n = matrix.size();
    let mut terms = Vec::new();
    for j in 0..n {
        let mut coeff = RationalFn::zero();
        for i in 0..n {
            if !gamma[i].is_zero() && !inverse[i][j].is_zero() {
                coeff = &coeff + &(&gamma[i] * &inverse[i][j]);
            }
        }
        if !coeff.is_zero() {
            terms.push((coeff, matrix.rows()[j].clone()));
        }
    }
    Ok(EstimatorSpec::new(terms, conds.clone()))
}

/// The affine family of unbiased estimators for a condition set: the
/// derived estimator together with the null directions, one per moment
/// product whose statistical value the conditions force to zero. Adding
/// any combination of null directions preserves unbiasedness; the
/// Gauss-optimizer picks the combination of least Gaussian variance.
pub fn unbiased_family(conds: &ConditionSet) -> Result<(EstimatorSpec, Vec<EstimatorSpec>)> {
    conds.validate()?;
    let matrix = MultiplicityMatrix::build(&conds.slots)?;
    let inverse = matrix.invert();
    let gamma = target_gamma(&matrix, conds)?;
    let base = spec_from_gamma(&matrix, &inverse, &gamma, conds)?;
    let mut nulls = Vec::new();
    for j in 0..matrix.size() {
        if forced_zero(&matrix.cols()[j], conds) {
            let mut unit = vec![RationalFn::zero(); matrix.size()];
            unit[j] = RationalFn::one();
            nulls.push(spec_from_gamma(&matrix, &inverse, &unit, conds)?);
        }
    }
    Ok((base, nulls))
}

/// Symbolic expectation check: expands every term, applies the
/// conditions, and subtracts the reduced target. The residual is the
/// bias; the estimator is unbiased iff it is identically zero.
pub fn verify_unbiased(spec: &EstimatorSpec) -> Result<(MomentExpr, bool)> {
    let mut ctx = DerivationCtx::new();
    verify_unbiased_with(&mut ctx, spec)
}

fn verify_unbiased_with(
    ctx: &mut DerivationCtx,
    spec: &EstimatorSpec,
) -> Result<(MomentExpr, bool)> {
    let mut expect = MomentExpr::zero();
    for (coeff, term) in &spec.terms {
        expect = expect.add(&ctx.expander.expand(term)?.scale(coeff));
    }
    let expect = reduce_moments(&expect, &spec.conditions);
    let target = crate::conversions::cumulants_from_moments(&spec.conditions.slots)?;
    let target = reduce_moments(&target, &spec.conditions);
    let residual = expect.sub(&target);
    let unbiased = residual.is_zero();
    Ok((residual, unbiased))
}

/// The scaled variance `m * V(c)` as a linear combination of products of
/// joint cumulants.
#[derive(Clone, PartialEq, Debug)]
pub struct VarianceExpr {
    scaled: CumulantExpr,
}

impl VarianceExpr {
    pub fn from_scaled(scaled: CumulantExpr) -> Self {
        VarianceExpr { scaled }
    }

    /// m * V(c).
    pub fn scaled_expr(&self) -> &CumulantExpr {
        &self.scaled
    }

    /// Consistency: every coefficient of m*V stays finite as m grows, so
    /// V itself decays at least like 1/m.
    pub fn is_consistent(&self) -> bool {
        self.scaled.terms().all(|(_, c)| c.bounded_at_infinity())
    }

    /// Drops every cumulant factor of order three or higher; optionally
    /// substitutes values for second-order factors (pairs not present in
    /// the map stay symbolic).
    pub fn gaussian_restriction(
        &self,
        c2_values: Option<&BTreeMap<(Var, Var), Rat>>,
    ) -> VarianceExpr {
        let mut out = CumulantExpr::zero();
        'terms: for (product, c) in self.scaled.terms() {
            let mut coeff = c.clone();
            let mut blocks = Vec::new();
            for b in product.blocks() {
                if b.len() >= 3 {
                    continue 'terms;
                }
                if b.len() == 2 {
                    if let Some(map) = c2_values {
                        if let Some(v) = map.get(&normalize_pair(b[0], b[1])) {
                            if v.is_zero() {
                                continue 'terms;
                            }
                            coeff = &coeff * &RationalFn::from_rat(v);
                            continue;
                        }
                    }
                }
                blocks.push(b.clone());
            }
            out.add_term(CumulantProduct::new(blocks), coeff);
        }
        VarianceExpr { scaled: out }
    }

    /// Numeric evaluation of (m*V, V) at a concrete sample count, looking
    /// cumulant factors up through `resolve`. A `None` from the resolver
    /// aborts with an error naming the missing factor.
    pub fn eval(
        &self,
        m: u64,
        vars: &VarSet,
        resolve: &dyn Fn(&[Var]) -> Option<f64>,
    ) -> Result<(f64, f64)> {
        let mut scaled = 0.0f64;
        for (product, coeff) in self.scaled.terms() {
            let mut value = coeff.eval_f64(m)?;
            for block in product.blocks() {
                match resolve(block) {
                    Some(v) => value *= v,
                    None => {
                        return Err(Error::MissingCumulant(display_cumulant_factor(
                            block, vars,
                        )))
                    }
                }
            }
            scaled += value;
        }
        Ok((scaled, scaled / m as f64))
    }

    pub fn display(&self, vars: &VarSet) -> String {
        self.scaled.display(vars)
    }
}

/// Exact scaled variance `m(<c^2> - <c>^2)` of an estimator, expanded via
/// the mean-product recursion, converted to cumulants, and reduced under
/// the estimator's conditions.
pub fn symbolic_variance(spec: &EstimatorSpec) -> Result<VarianceExpr> {
    let mut ctx = DerivationCtx::new();
    symbolic_variance_with(&mut ctx, spec)
}

fn symbolic_variance_with(ctx: &mut DerivationCtx, spec: &EstimatorSpec) -> Result<VarianceExpr> {
    let slots = spec.order() * 2;
    if slots > 8 {
        return Err(Error::TooManySlots { slots });
    }
    let mut moment_sq = MomentExpr::zero();
    for (ci, ti) in &spec.terms {
        for (cj, tj) in &spec.terms {
            let joined = ti.join(tj);
            let expansion = ctx.expander.expand(&joined)?;
            moment_sq = moment_sq.add(&expansion.scale(&(ci * cj)));
        }
    }
    let mut moment_mean = MomentExpr::zero();
    for (ci, ti) in &spec.terms {
        moment_mean = moment_mean.add(&ctx.expander.expand(ti)?.scale(ci));
    }
    let moment_sq = reduce_moments(&moment_sq, &spec.conditions);
    let moment_mean = reduce_moments(&moment_mean, &spec.conditions);
    let cum_sq = ctx.converter.moments_to_cumulants(&moment_sq)?;
    let cum_mean = ctx.converter.moments_to_cumulants(&moment_mean)?;
    let variance = cum_sq.sub(&cum_mean.mul(&cum_mean));
    let variance = reduce_cumulants(&variance, &spec.conditions);
    Ok(VarianceExpr {
        scaled: variance.scale(&RationalFn::m()),
    })
}

/// True when the moment product's statistical value is forced to zero by
/// the conditions, making its target component a free parameter of the
/// unbiased family.
fn forced_zero(product: &MomentProduct, conds: &ConditionSet) -> bool {
    product.blocks().iter().any(|b| match b.len() {
        1 => conds.is_zero_mean(b[0]),
        2 => {
            conds.covariance_vanishes(b[0], b[1])
                && (conds.is_zero_mean(b[0]) || conds.is_zero_mean(b[1]))
        }
        _ => false,
    })
}

/// Gaussian objective with canonical unit second moments: first-order
/// cumulants and distinct-variable covariances are zero, variances and
/// conjugate-pair covariances are one. This is the figure of merit the
/// optimizer minimizes.
fn gaussian_unit_objective(var: &VarianceExpr, conds: &ConditionSet) -> RationalFn {
    let mut total = RationalFn::zero();
    'terms: for (product, coeff) in var.scaled.terms() {
        for b in product.blocks() {
            match b.len() {
                2 if b[0] == b[1] || conds.is_conjugate_pair(b[0], b[1]) => {}
                _ => continue 'terms,
            }
        }
        total = &total + coeff;
    }
    total
}

/// Finds the unbiased estimator with minimal Gaussian variance over all
/// free target components. The conditions must leave at least one moment
/// product with forced zero value for anything to optimize; otherwise the
/// unique unbiased estimator is returned unchanged.
pub fn gauss_optimize(conds: &ConditionSet) -> Result<EstimatorSpec> {
    conds.validate()?;
    let matrix = MultiplicityMatrix::build(&conds.slots)?;
    let inverse = matrix.invert();
    let gamma0 = target_gamma(&matrix, conds)?;
    let free: Vec<usize> = (0..matrix.size())
        .filter(|&j| forced_zero(&matrix.cols()[j], conds))
        .collect();
    if free.is_empty() {
        return spec_from_gamma(&matrix, &inverse, &gamma0, conds);
    }
    let mut ctx = DerivationCtx::new();
    let mut evaluate = |alpha: &[RationalFn]| -> Result<RationalFn> {
        let mut gamma = gamma0.clone();
        for (k, &j) in free.iter().enumerate() {
            gamma[j] = alpha[k].clone();
        }
        let spec = spec_from_gamma(&matrix, &inverse, &gamma, conds)?;
        let var = symbolic_variance_with(&mut ctx, &spec)?;
        Ok(gaussian_unit_objective(&var, conds))
    };

    // The objective is an exact quadratic in the free components; three
    // axis evaluations per component plus the pairwise points recover it.
    let k = free.len();
    let zero_alpha = vec![RationalFn::zero(); k];
    let base = evaluate(&zero_alpha)?;
    let mut lin = vec![RationalFn::zero(); k];
    let mut quad = vec![vec![RationalFn::zero(); k]; k];
    for i in 0..k {
        let mut a1 = zero_alpha.clone();
        a1[i] = RationalFn::one();
        let v1 = evaluate(&a1)?;
        let mut a2 = zero_alpha.clone();
        a2[i] = RationalFn::from_int(2);
        let v2 = evaluate(&a2)?;
        let half = RationalFn::from_rat(&Rat::new(1.into(), 2.into()));
        quad[i][i] = (&(&v2 - &(&v1 + &v1)) + &base) * half;
        lin[i] = &(&v1 - &base) - &quad[i][i];
    }
    for i in 0..k {
        for j in i + 1..k {
            let mut a = zero_alpha.clone();
            a[i] = RationalFn::one();
            a[j] = RationalFn::one();
            let v = evaluate(&a)?;
            let mut qij = &(&v - &base) - &(&lin[i] + &lin[j]);
            qij = &qij - &(&quad[i][i] + &quad[j][j]);
            let half = RationalFn::from_rat(&Rat::new(1.into(), 2.into()));
            let qij = qij * half;
            quad[i][j] = qij.clone();
            quad[j][i] = qij;
        }
    }
    // Cross-check the quadratic model at an off-grid point.
    {
        let probe: Vec<RationalFn> = (0..k).map(|i| RationalFn::from_int(i as i64 + 1)).collect();
        let direct = evaluate(&probe)?;
        let mut model = base.clone();
        for i in 0..k {
            model = &model + &(&lin[i] * &probe[i]);
            for j in 0..k {
                model = &model + &(&(&quad[i][j] * &probe[i]) * &probe[j]);
            }
        }
        debug_assert_eq!(direct, model, "objective is not quadratic");
    }
    // Stationarity: 2 Q alpha = -lin.
    let a: Vec<Vec<RationalFn>> = quad
        .iter()
        .map(|row| row.iter().map(|q| q + q).collect())
        .collect();
    let b: Vec<RationalFn> = lin.iter().map(|l| -l).collect();
    let alpha = match solve_linear_system(a.clone(), b.clone()) {
        Some(alpha) => alpha,
        None => minimal_norm_solution(&a, &b)?,
    };
    let mut gamma = gamma0;
    for (idx, &j) in free.iter().enumerate() {
        gamma[j] = alpha[idx].clone();
    }
    spec_from_gamma(&matrix, &inverse, &gamma, conds)
}

/// Gaussian elimination over the rational-function field. Returns `None`
/// for a singular system.
fn solve_linear_system(
    mut a: Vec<Vec<RationalFn>>,
    mut b: Vec<RationalFn>,
) -> Option<Vec<RationalFn>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].recip().ok()?;
        for j in col..n {
            a[col][j] = &a[col][j] * &inv;
        }
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in col..n {
                    a[r][j] = &a[r][j] - &(&f * &a[col][j]);
                }
                b[r] = &b[r] - &(&f * &b[col]);
            }
        }
    }
    Some(b)
}

/// Degenerate stationarity systems are resolved by the minimal-norm
/// solution: particular solution with free components zero, then the
/// nullspace correction minimizing the squared coefficient norm.
fn minimal_norm_solution(a: &[Vec<RationalFn>], b: &[RationalFn]) -> Result<Vec<RationalFn>> {
    let n = b.len();
    let mut aug: Vec<Vec<RationalFn>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    // Reduced row echelon form.
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !aug[r][col].is_zero()) else {
            continue;
        };
        aug.swap(row, p);
        let inv = aug[row][col].recip().expect("nonzero pivot");
        for j in 0..=n {
            aug[row][j] = &aug[row][j] * &inv;
        }
        for r in 0..n {
            if r != row && !aug[r][col].is_zero() {
                let f = aug[r][col].clone();
                for j in 0..=n {
                    aug[r][j] = &aug[r][j] - &(&f * &aug[row][j]);
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
        if row == n {
            break;
        }
    }
    for r in row..n {
        if !aug[r][n].is_zero() {
            return Err(Error::InconsistentConditions(
                "stationarity system is inconsistent".into(),
            ));
        }
    }
    let free_cols: Vec<usize> = (0..n).filter(|c| !pivot_cols.contains(c)).collect();
    let mut particular = vec![RationalFn::zero(); n];
    for (r, &pc) in pivot_cols.iter().enumerate() {
        particular[pc] = aug[r][n].clone();
    }
    if free_cols.is_empty() {
        return Ok(particular);
    }
    // Nullspace basis columns.
    let mut basis: Vec<Vec<RationalFn>> = Vec::new();
    for &fc in &free_cols {
        let mut v = vec![RationalFn::zero(); n];
        v[fc] = RationalFn::one();
        for (r, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -&aug[r][fc];
        }
        basis.push(v);
    }
    // Solve (N^T N) t = -N^T particular.
    let kk = basis.len();
    let mut ntn = vec![vec![RationalFn::zero(); kk]; kk];
    let mut rhs = vec![RationalFn::zero(); kk];
    for i in 0..kk {
        for j in 0..kk {
            let mut acc = RationalFn::zero();
            for r in 0..n {
                acc = &acc + &(&basis[i][r] * &basis[j][r]);
            }
            ntn[i][j] = acc;
        }
        let mut acc = RationalFn::zero();
        for r in 0..n {
            acc = &acc + &(&basis[i][r] * &particular[r]);
        }
        rhs[i] = -&acc;
    }
    let t = solve_linear_system(ntn, rhs).ok_or_else(|| {
        Error::InconsistentConditions("degenerate nullspace projection".into())
    })?;
    let mut out = particular;
    for (i, ti) in t.iter().enumerate() {
        for r in 0..n {
            out[r] = &out[r] + &(ti * &basis[i][r]);
        }
    }
    Ok(out)
}

/// The two canonical single-variable third-order estimators under a zero
/// mean: the k-statistic and the plain third-moment mean.
fn superposition_parts() -> Result<(EstimatorSpec, EstimatorSpec, ConditionSet)> {
    let mut vars = VarSet::new();
    let x = vars.intern("x");
    let full = ConditionSet::new(vars.clone(), vec![x, x, x]);
    let reduced = full.clone().with_zero_mean(&[x]);
    let k3 = derive_estimator(&full)?;
    let plain = EstimatorSpec::new(
        vec![(RationalFn::one(), MeanProductTerm::new(vec![vec![x, x, x]]))],
        reduced.clone(),
    );
    Ok((k3, plain, reduced))
}

/// Gaussian scaled variance of the superposition `alpha k3 + (1-alpha)
/// mean(x^3)` for an average-free variable, with the second-order
/// cumulant kept symbolic.
pub fn superposition_variance(alpha: &RationalFn) -> Result<VarianceExpr> {
    let (k3, plain, conds) = superposition_parts()?;
    let spec = EstimatorSpec::linear_combination(
        alpha,
        &k3,
        &(&RationalFn::one() - alpha),
        &plain,
        conds,
    );
    Ok(symbolic_variance(&spec)?.gaussian_restriction(None))
}

/// The mixing weight minimizing the superposition's Gaussian variance,
/// recovered exactly from three evaluations of the quadratic.
pub fn superposition_argmin() -> Result<RationalFn> {
    let x = Var(0);
    let c2_cubed = CumulantProduct::new(vec![vec![x, x], vec![x, x], vec![x, x]]);
    let value = |alpha: i64| -> Result<RationalFn> {
        let v = superposition_variance(&RationalFn::from_int(alpha))?;
        Ok(v.scaled_expr().coeff(&c2_cubed))
    };
    let f0 = value(0)?;
    let f1 = value(1)?;
    let f2 = value(2)?;
    let half = RationalFn::from_rat(&Rat::new(1.into(), 2.into()));
    let a = (&(&f2 - &(&f1 + &f1)) + &f0) * half;
    let b = &(&f1 - &f0) - &a;
    Ok(&(-&b) / &(&a + &a))
}

// ---------------------------------------------------------------------
// Structured text document for estimator specs.

#[derive(Serialize, Deserialize)]
struct SpecDocument {
    name: Option<String>,
    order: usize,
    vars: Vec<String>,
    slots: Vec<u32>,
    zero_mean: Vec<u32>,
    zero_cov: Vec<(u32, u32)>,
    conjugate_pairs: Vec<(u32, u32)>,
    phase_groups: Vec<Vec<usize>>,
    min_m: u64,
    terms: Vec<TermDocument>,
}

#[derive(Serialize, Deserialize)]
struct TermDocument {
    /// Numerator coefficients by ascending power of m, as decimal strings.
    num: Vec<String>,
    /// Denominator coefficients by ascending power of m.
    den: Vec<String>,
    blocks: Vec<Vec<u32>>,
}

impl EstimatorSpec {
    /// Serializes to a structured text document (JSON) with exact integer
    /// coefficient arrays; round-trips bit-exactly.
    pub fn to_document(&self) -> String {
        let conds = &self.conditions;
        let doc = SpecDocument {
            name: self.name.clone(),
            order: self.order(),
            vars: conds.vars.names().to_vec(),
            slots: conds.slots.iter().map(|v| v.0).collect(),
            zero_mean: conds.zero_mean.iter().map(|v| v.0).collect(),
            zero_cov: conds.zero_cov.iter().map(|&(u, v)| (u.0, v.0)).collect(),
            conjugate_pairs: conds
                .conjugate_pairs
                .iter()
                .map(|&(p, s)| (p.0, s.0))
                .collect(),
            phase_groups: conds.phase_groups.clone(),
            min_m: self.min_m,
            terms: self
                .terms
                .iter()
                .map(|(c, t)| TermDocument {
                    num: c.num().coeffs().iter().map(BigInt::to_string).collect(),
                    den: c.den().coeffs().iter().map(BigInt::to_string).collect(),
                    blocks: t
                        .blocks()
                        .iter()
                        .map(|b| b.iter().map(|v| v.0).collect())
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("document serialization")
    }

    pub fn from_document(text: &str) -> Result<EstimatorSpec> {
        let doc: SpecDocument =
            serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))?;
        let vars = VarSet::from_names(&doc.vars);
        let parse_big = |s: &String| -> Result<BigInt> {
            BigInt::from_str(s).map_err(|e| Error::MalformedDocument(e.to_string()))
        };
        let mut conds = ConditionSet::new(vars, doc.slots.iter().map(|&i| Var(i)).collect());
        conds.zero_mean = doc.zero_mean.iter().map(|&i| Var(i)).collect();
        conds.zero_cov = doc
            .zero_cov
            .iter()
            .map(|&(u, v)| normalize_pair(Var(u), Var(v)))
            .collect();
        conds.conjugate_pairs = doc
            .conjugate_pairs
            .iter()
            .map(|&(p, s)| (Var(p), Var(s)))
            .collect();
        conds.phase_groups = doc.phase_groups;
        conds.validate()?;
        if doc.order != conds.slots.len() {
            return Err(Error::MalformedDocument(
                "order does not match slot count".into(),
            ));
        }
        let mut terms = Vec::new();
        for term in &doc.terms {
            let num: Vec<BigInt> = term.num.iter().map(&parse_big).collect::<Result<_>>()?;
            let den: Vec<BigInt> = term.den.iter().map(&parse_big).collect::<Result<_>>()?;
            let coeff = RationalFn::new(
                crate::algebra::Poly::from_coeffs(num),
                crate::algebra::Poly::from_coeffs(den),
            )?;
            let blocks: Vec<Vec<Var>> = term
                .blocks
                .iter()
                .map(|b| b.iter().map(|&i| Var(i)).collect())
                .collect();
            terms.push((coeff, MeanProductTerm::new(blocks)));
        }
        let spec = EstimatorSpec::new(terms, conds);
        let spec = match doc.name {
            Some(name) => spec.named(&name),
            None => spec,
        };
        if spec.min_m != doc.min_m {
            return Err(Error::MalformedDocument(format!(
                "declared min_m {} disagrees with coefficient poles ({})",
                doc.min_m, spec.min_m
            )));
        }
        Ok(spec)
    }
}
