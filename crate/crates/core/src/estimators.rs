//! Numeric evaluation of the named estimators on sample batches, the
//! condition-indexed estimator registry, and plug-in variance evaluation.
//!
//! Batch means are computed once per distinct mean factor in a single
//! pass with Neumaier-compensated summation. Coefficients are evaluated
//! exactly at the concrete sample count and converted to floating point
//! once; prefactors like (m+1)(m+2)/((m-1)(m-2)) lose accuracy when
//! assembled in floats.

use crate::conversions::display_cumulant_factor;
use crate::derivation::{
    derive_estimator, gauss_optimize, symbolic_variance, ConditionSet, EstimatorSpec,
    VarianceExpr,
};
use crate::error::{Error, Result};
use crate::vars::{Var, VarSet};
use num::complex::Complex64;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

/// Kahan-Neumaier compensated accumulator.
#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.comp
    }
}

/// One column of samples, real or complex.
#[derive(Clone, Debug)]
pub enum Column {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Real(v) => v.len(),
            Column::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Column::Complex(_))
    }

    fn is_finite(&self) -> bool {
        match self {
            Column::Real(v) => v.iter().all(|x| x.is_finite()),
            Column::Complex(v) => v.iter().all(|x| x.re.is_finite() && x.im.is_finite()),
        }
    }

    fn get(&self, j: usize, conj: bool) -> Complex64 {
        match self {
            Column::Real(v) => Complex64::new(v[j], 0.0),
            Column::Complex(v) => {
                if conj {
                    v[j].conj()
                } else {
                    v[j]
                }
            }
        }
    }
}

/// m samples of d variables.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    labels: Vec<String>,
    columns: Vec<Column>,
}

impl SampleBatch {
    pub fn new(labels: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        if labels.len() != columns.len() || columns.is_empty() {
            return Err(Error::InvalidData(
                "label and column counts differ or are empty".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(Error::InvalidData(format!("duplicate column label {l:?}")));
            }
        }
        let m = columns[0].len();
        if m == 0 {
            return Err(Error::InvalidData("empty batch".into()));
        }
        for (l, c) in labels.iter().zip(&columns) {
            if c.len() != m {
                return Err(Error::InvalidData(format!(
                    "column {l:?} has {} rows, expected {m}",
                    c.len()
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidData(format!(
                    "column {l:?} contains a non-finite entry"
                )));
            }
        }
        Ok(SampleBatch { labels, columns })
    }

    pub fn from_real(labels: Vec<String>, data: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(labels, data.into_iter().map(Column::Real).collect())
    }

    /// Single real column named `x`.
    pub fn univariate(data: Vec<f64>) -> Result<Self> {
        Self::from_real(vec!["x".to_string()], vec![data])
    }

    pub fn m(&self) -> usize {
        self.columns[0].len()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }
}

/// A single estimate; complex estimators keep their imaginary part, which
/// is itself a diagnostic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EstimateValue {
    Real(f64),
    Complex(Complex64),
}

impl EstimateValue {
    pub fn as_complex(self) -> Complex64 {
        match self {
            EstimateValue::Real(v) => Complex64::new(v, 0.0),
            EstimateValue::Complex(v) => v,
        }
    }

    pub fn re(self) -> f64 {
        self.as_complex().re
    }

    pub fn is_complex(self) -> bool {
        matches!(self, EstimateValue::Complex(_))
    }
}

/// Evaluates an estimator on a batch. `columns[i]` is the batch column
/// bound to the i-th binding variable of the spec (starred variables read
/// the conjugated column of their plain partner).
pub fn evaluate(spec: &EstimatorSpec, batch: &SampleBatch, columns: &[usize]) -> Result<EstimateValue> {
    let m = batch.m();
    if (m as u64) < spec.min_m {
        return Err(Error::TooFewSamples {
            name: spec
                .name
                .clone()
                .unwrap_or_else(|| "derived estimator".into()),
            min_m: spec.min_m,
            m: m as u64,
        });
    }
    let binding = spec.conditions.binding_vars();
    if columns.len() != binding.len() {
        return Err(Error::BindingMismatch(format!(
            "{} columns supplied, {} binding variables",
            columns.len(),
            binding.len()
        )));
    }
    for &c in columns {
        if c >= batch.dim() {
            return Err(Error::BindingMismatch(format!(
                "column index {c} out of range for a batch of {} columns",
                batch.dim()
            )));
        }
    }
    let mut var_binding: BTreeMap<Var, (usize, bool)> = BTreeMap::new();
    for (&v, &c) in binding.iter().zip(columns) {
        var_binding.insert(v, (c, false));
    }
    for &(p, s) in &spec.conditions.conjugate_pairs {
        if let Some(&(c, _)) = var_binding.get(&p) {
            var_binding.insert(s, (c, true));
        }
    }
    let any_complex = var_binding
        .values()
        .any(|&(c, _)| batch.column(c).is_complex());

    // Shift-invariant estimators are evaluated on centered columns: the
    // value is unchanged exactly, and the cancellation between large
    // mean products for offset data disappears.
    let mut centered: HashMap<usize, Column> = HashMap::new();
    if spec.is_shift_invariant() {
        for &(c, _) in var_binding.values() {
            centered
                .entry(c)
                .or_insert_with(|| center_column(batch.column(c)));
        }
    }
    // One pass per distinct mean factor.
    let mut means: HashMap<Vec<(usize, bool)>, Complex64> = HashMap::new();
    for (_, term) in &spec.terms {
        for block in term.blocks() {
            let mut key: Vec<(usize, bool)> = Vec::with_capacity(block.len());
            for v in block {
                let &(c, conj) = var_binding.get(v).ok_or_else(|| {
                    Error::BindingMismatch(format!(
                        "no binding for variable {}",
                        spec.conditions.vars.name(*v)
                    ))
                })?;
                key.push((c, conj));
            }
            key.sort_unstable();
            if !means.contains_key(&key) {
                let value = block_mean(m, batch, &centered, &key);
                means.insert(key, value);
            }
        }
    }
    let mut acc_re = Neumaier::default();
    let mut acc_im = Neumaier::default();
    for (coeff, term) in &spec.terms {
        let mut value = Complex64::new(coeff.eval_f64(m as u64)?, 0.0);
        for block in term.blocks() {
            let mut key: Vec<(usize, bool)> = block
                .iter()
                .map(|v| var_binding[v])
                .collect();
            key.sort_unstable();
            value *= means[&key];
        }
        acc_re.add(value.re);
        acc_im.add(value.im);
    }
    let total = Complex64::new(acc_re.total(), acc_im.total());
    if any_complex {
        Ok(EstimateValue::Complex(total))
    } else {
        Ok(EstimateValue::Real(total.re))
    }
}

fn block_mean(
    m: usize,
    batch: &SampleBatch,
    centered: &HashMap<usize, Column>,
    factors: &[(usize, bool)],
) -> Complex64 {
    let column_for = |c: usize| -> &Column { centered.get(&c).unwrap_or_else(|| batch.column(c)) };
    let all_real = factors.iter().all(|&(c, _)| !column_for(c).is_complex());
    if all_real {
        let mut acc = Neumaier::default();
        for j in 0..m {
            let mut prod = 1.0f64;
            for &(c, _) in factors {
                if let Column::Real(v) = column_for(c) {
                    prod *= v[j];
                }
            }
            acc.add(prod);
        }
        Complex64::new(acc.total() / m as f64, 0.0)
    } else {
        let mut acc_re = Neumaier::default();
        let mut acc_im = Neumaier::default();
        for j in 0..m {
            let mut prod = Complex64::new(1.0, 0.0);
            for &(c, conj) in factors {
                prod *= column_for(c).get(j, conj);
            }
            acc_re.add(prod.re);
            acc_im.add(prod.im);
        }
        Complex64::new(acc_re.total() / m as f64, acc_im.total() / m as f64)
    }
}

fn center_column(col: &Column) -> Column {
    match col {
        Column::Real(v) => {
            let mut acc = Neumaier::default();
            for &x in v {
                acc.add(x);
            }
            let mean = acc.total() / v.len() as f64;
            Column::Real(v.iter().map(|x| x - mean).collect())
        }
        Column::Complex(v) => {
            let mut re = Neumaier::default();
            let mut im = Neumaier::default();
            for x in v {
                re.add(x.re);
                im.add(x.im);
            }
            let mean = Complex64::new(re.total() / v.len() as f64, im.total() / v.len() as f64);
            Column::Complex(v.iter().map(|x| x - mean).collect())
        }
    }
}

/// A named estimator from the overview table.
#[derive(Debug)]
pub struct RegistryEntry {
    pub name: String,
    /// Table row tag: a, b, c, ..., j, ca, cb, cc, cd.
    pub table_row: String,
    pub order: usize,
    pub spec: EstimatorSpec,
    /// Proved Gauss-optimal.
    pub gauss_optimal: bool,
    /// This entry is the Gauss-optimized variant of its row.
    pub go_variant: bool,
}

impl RegistryEntry {
    /// Number of conditions the entry requires.
    pub fn specificity(&self) -> usize {
        self.spec.conditions.zero_mean.len() + self.spec.conditions.zero_cov.len()
    }

    pub fn binding_vars(&self) -> Vec<Var> {
        self.spec.conditions.binding_vars()
    }

    pub fn describe_conditions(&self) -> String {
        self.spec.conditions.describe()
    }
}

#[derive(Debug, Default)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// The immutable estimator registry, derived once at first use. Every
/// formula is produced by the derivation engine from its condition row,
/// so registry and derivation agree by construction; the golden tests pin
/// the printed forms.
pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}

struct RowBuilder {
    vars: VarSet,
}

impl RowBuilder {
    fn new(names: &[&str]) -> Self {
        RowBuilder {
            vars: VarSet::from_names(names),
        }
    }

    fn v(&self, name: &str) -> Var {
        self.vars.get(name).expect("declared variable")
    }

    fn conds(&self, slots: &[&str]) -> ConditionSet {
        ConditionSet::new(self.vars.clone(), slots.iter().map(|s| self.v(s)).collect())
    }
}

fn build_registry() -> Registry {
    let mut entries = Vec::new();
    let mut push = |name: &str, row: &str, spec: EstimatorSpec, go: bool, variant: bool| {
        entries.push(RegistryEntry {
            name: name.to_string(),
            table_row: row.to_string(),
            order: spec.order(),
            spec: spec.named(name),
            gauss_optimal: go,
            go_variant: variant,
        });
    };
    let derive = |conds: &ConditionSet| derive_estimator(conds).expect("registry derivation");

    let r = RowBuilder::new(&["x", "y", "z", "w"]);
    // Second order.
    push("c2a", "a", derive(&r.conds(&["x", "y"])), true, false);
    push("c2b", "b", derive(&r.conds(&["x", "x"])), true, false);
    push(
        "c2c",
        "c",
        derive(&r.conds(&["x", "x"]).with_zero_mean(&[r.v("x")])),
        true,
        false,
    );
    push(
        "c2d",
        "d",
        derive(&r.conds(&["x", "y"]).with_zero_mean(&[r.v("x"), r.v("y")])),
        true,
        false,
    );
    push(
        "c2e",
        "e",
        derive(&r.conds(&["x", "y"]).with_zero_mean(&[r.v("x")])),
        true,
        false,
    );
    // Third order.
    push("c3a", "a", derive(&r.conds(&["x", "y", "z"])), true, false);
    push("c3b", "b", derive(&r.conds(&["x", "x", "x"])), true, false);
    let c3c_conds = r.conds(&["x", "x", "x"]).with_zero_mean(&[r.v("x")]);
    push("c3c", "c", derive(&c3c_conds), false, false);
    push(
        "c3cgo",
        "c",
        gauss_optimize(&c3c_conds).expect("single-variable third-order optimization"),
        true,
        true,
    );
    push(
        "c3d",
        "d",
        derive(
            &r.conds(&["x", "y", "z"])
                .with_zero_mean(&[r.v("x"), r.v("y"), r.v("z")]),
        ),
        true,
        false,
    );
    push(
        "c3e",
        "e",
        derive(&r.conds(&["x", "y", "z"]).with_zero_mean(&[r.v("x")])),
        true,
        false,
    );
    push(
        "c3f",
        "f",
        derive(&r.conds(&["x", "y", "z"]).with_zero_mean(&[r.v("x"), r.v("y")])),
        true,
        false,
    );
    let c3h_conds = r.conds(&["x", "x", "z"]).with_zero_mean(&[r.v("x"), r.v("z")]);
    push("c3h", "h", derive(&c3h_conds), false, false);
    push(
        "c3hgo",
        "h",
        gauss_optimize(&c3h_conds).expect("two-variable third-order optimization"),
        true,
        true,
    );
    push(
        "c3i",
        "i",
        derive(&r.conds(&["x", "y", "z"]).with_zero_cov(&[(r.v("x"), r.v("y"))])),
        false,
        false,
    );
    push(
        "c3j",
        "j",
        derive(
            &r.conds(&["x", "y", "z"])
                .with_zero_mean(&[r.v("x"), r.v("y"), r.v("z")])
                .with_zero_cov(&[
                    (r.v("x"), r.v("y")),
                    (r.v("x"), r.v("z")),
                    (r.v("y"), r.v("z")),
                ]),
        ),
        false,
        false,
    );
    // Fourth order.
    push("c4a", "a", derive(&r.conds(&["x", "y", "z", "w"])), true, false);
    push("c4b", "b", derive(&r.conds(&["x", "x", "x", "x"])), true, false);
    push(
        "c4c",
        "c",
        derive(&r.conds(&["x", "x", "x", "x"]).with_zero_mean(&[r.v("x")])),
        true,
        false,
    );
    push(
        "c4d",
        "d",
        derive(
            &r.conds(&["x", "y", "z", "w"])
                .with_zero_mean(&[r.v("x"), r.v("y"), r.v("z"), r.v("w")]),
        ),
        false,
        false,
    );
    push(
        "c4e",
        "e",
        derive(&r.conds(&["x", "y", "z", "w"]).with_zero_mean(&[r.v("x")])),
        false,
        false,
    );
    push(
        "c4f",
        "f",
        derive(&r.conds(&["x", "y", "z", "w"]).with_zero_mean(&[r.v("x"), r.v("y")])),
        false,
        false,
    );
    push(
        "c4g",
        "g",
        derive(
            &r.conds(&["x", "y", "z", "w"])
                .with_zero_mean(&[r.v("x"), r.v("y"), r.v("z")]),
        ),
        false,
        false,
    );
    push(
        "c4j",
        "j",
        derive(
            &r.conds(&["x", "y", "z", "w"])
                .with_zero_mean(&[r.v("x"), r.v("y"), r.v("z"), r.v("w")])
                .with_zero_cov(&[
                    (r.v("x"), r.v("y")),
                    (r.v("x"), r.v("z")),
                    (r.v("x"), r.v("w")),
                    (r.v("y"), r.v("z")),
                    (r.v("y"), r.v("w")),
                    (r.v("z"), r.v("w")),
                ]),
        ),
        false,
        false,
    );
    // Complex rows. Conjugate variables are formally independent; the
    // phase groups encode which variables share a random phase.
    let c = RowBuilder::new(&["a", "a*", "b", "b*"]);
    let conj = [(c.v("a"), c.v("a*")), (c.v("b"), c.v("b*"))];
    let zm_all = [c.v("a"), c.v("a*"), c.v("b"), c.v("b*")];
    let cov_all = [
        (c.v("a"), c.v("b")),
        (c.v("a"), c.v("b*")),
        (c.v("a*"), c.v("b")),
        (c.v("a*"), c.v("b*")),
    ];
    push(
        "c4ca",
        "ca",
        derive(
            &c.conds(&["a", "a*", "b", "b*"])
                .with_zero_mean(&zm_all)
                .with_zero_cov(&cov_all)
                .with_conjugates(&conj, vec![vec![0], vec![1]]),
        ),
        false,
        false,
    );
    push(
        "c4cb",
        "cb",
        derive(
            &c.conds(&["a", "a*", "b", "b*"])
                .with_zero_mean(&zm_all)
                .with_zero_cov(&[(c.v("a"), c.v("b")), (c.v("a*"), c.v("b*"))])
                .with_conjugates(&conj, vec![vec![0, 1]]),
        ),
        false,
        false,
    );
    push(
        "c4cc",
        "cc",
        derive(
            &c.conds(&["a", "a*", "b", "b*"])
                .with_zero_mean(&[c.v("b"), c.v("b*")])
                .with_zero_cov(&cov_all)
                .with_conjugates(&conj, vec![vec![1]]),
        ),
        false,
        false,
    );
    push(
        "c3cd",
        "cd",
        derive(
            &c.conds(&["a", "a*", "b"])
                .with_zero_mean(&[c.v("a"), c.v("a*")])
                .with_zero_cov(&cov_all)
                .with_conjugates(&conj, vec![vec![0]]),
        ),
        true,
        false,
    );
    Registry { entries }
}

/// User-declared conditions for estimator selection.
#[derive(Clone, Debug, Default)]
pub struct SelectionQuery {
    pub vars: VarSet,
    pub slots: Vec<Var>,
    pub zero_mean: BTreeSet<Var>,
    pub zero_cov: BTreeSet<(Var, Var)>,
    pub conjugate_pairs: Vec<(Var, Var)>,
}

impl SelectionQuery {
    fn conjugate_of(&self, v: Var) -> Option<Var> {
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

    fn covariance_vanishes(&self, u: Var, v: Var) -> bool {
        let key = if u <= v { (u, v) } else { (v, u) };
        self.zero_cov.contains(&key)
    }
}

/// A matched registry entry together with the mapping of entry binding
/// variables to query variables.
#[derive(Debug)]
pub struct Selection {
    pub entry: &'static RegistryEntry,
    /// Query variable bound to each of `entry.binding_vars()`, in order.
    pub bound_query_vars: Vec<Var>,
}

/// Picks the most-reduced registry estimator whose slot pattern matches
/// the query exactly and whose conditions are all declared. With the
/// flag set, a Gauss-optimized row variant is preferred where one exists.
pub fn select_estimator(query: &SelectionQuery, prefer_gauss_optimal: bool) -> Result<Selection> {
    let mut candidates: Vec<(usize, &'static RegistryEntry, Vec<Var>)> = Vec::new();
    for entry in registry().entries() {
        if entry.order != query.slots.len() {
            continue;
        }
        if let Some(bound) = match_entry(entry, query) {
            candidates.push((entry.specificity(), entry, bound));
        }
    }
    if candidates.is_empty() {
        return Err(Error::UnsupportedEstimator(format!(
            "order {}, {} slot(s)",
            query.slots.len(),
            query
                .slots
                .iter()
                .map(|&v| query.vars.name(v))
                .collect::<Vec<_>>()
                .join(",")
        )));
    }
    let best = candidates.iter().map(|(s, _, _)| *s).max().unwrap();
    let mut at_best: Vec<&(usize, &'static RegistryEntry, Vec<Var>)> =
        candidates.iter().filter(|(s, _, _)| *s == best).collect();
    if at_best.iter().any(|(_, e, _)| e.go_variant == prefer_gauss_optimal) {
        at_best.retain(|(_, e, _)| e.go_variant == prefer_gauss_optimal);
    }
    let (_, entry, bound) = at_best[0];
    Ok(Selection {
        entry,
        bound_query_vars: bound.clone(),
    })
}

/// Tries all slot permutations; a match requires the equality classes of
/// the slots to correspond bijectively and every entry condition to be
/// declared in the query.
fn match_entry(entry: &RegistryEntry, query: &SelectionQuery) -> Option<Vec<Var>> {
    let mut perm: Vec<usize> = (0..entry.order).collect();
    loop {
        if let Some(bound) = try_assignment(entry, query, &perm) {
            return Some(bound);
        }
        if !next_permutation(&mut perm) {
            return None;
        }
    }
}

fn try_assignment(entry: &RegistryEntry, query: &SelectionQuery, perm: &[usize]) -> Option<Vec<Var>> {
    let conds = &entry.spec.conditions;
    let mut map: BTreeMap<Var, Var> = BTreeMap::new();
    for (i, &qi) in perm.iter().enumerate() {
        let ev = conds.slots[i];
        let qv = query.slots[qi];
        match map.get(&ev) {
            Some(&existing) if existing != qv => return None,
            None => {
                map.insert(ev, qv);
            }
            _ => {}
        }
    }
    // Injectivity: the equality classes must correspond one-to-one.
    let values: BTreeSet<Var> = map.values().copied().collect();
    if values.len() != map.len() {
        return None;
    }
    // Extend through conjugation for condition variables that are not
    // slots (the starred partner of a real slot variable, say).
    for &(p, s) in &conds.conjugate_pairs {
        if let (Some(&qp), None) = (map.get(&p), map.get(&s)) {
            map.insert(s, query.conjugate_of(qp)?);
        } else if let (None, Some(&qs)) = (map.get(&p), map.get(&s)) {
            map.insert(p, query.conjugate_of(qs)?);
        }
    }
    // Conjugate structure must be declared in the same orientation.
    for &(p, s) in &conds.conjugate_pairs {
        if let (Some(&qp), Some(&qs)) = (map.get(&p), map.get(&s)) {
            if !query.conjugate_pairs.contains(&(qp, qs)) {
                return None;
            }
        }
    }
    // Required conditions must all be declared.
    for &v in &conds.zero_mean {
        let qv = map.get(&v)?;
        if !query.zero_mean.contains(qv) {
            return None;
        }
    }
    for &(u, v) in &conds.zero_cov {
        match (map.get(&u), map.get(&v)) {
            (Some(&qu), Some(&qv)) => {
                if !query.covariance_vanishes(qu, qv) {
                    return None;
                }
            }
            // A condition on a variable with no counterpart in the query
            // (an unused starred partner) cannot be checked or violated.
            _ => continue,
        }
    }
    let bound: Vec<Var> = entry
        .binding_vars()
        .iter()
        .map(|v| map[v])
        .collect();
    Some(bound)
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// The exact variance formula of a registry estimator, computed once and
/// cached; the eighth-order expansions take a visible moment.
pub fn variance_formula(name: &str) -> Result<Arc<VarianceExpr>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<VarianceExpr>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(name) {
        return Ok(Arc::clone(hit));
    }
    let entry = registry()
        .get(name)
        .ok_or_else(|| Error::UnknownEstimator(name.to_string()))?;
    let formula = Arc::new(symbolic_variance(&entry.spec)?);
    cache
        .lock()
        .unwrap()
        .insert(name.to_string(), Arc::clone(&formula));
    Ok(formula)
}

/// Evaluates a named variance formula at given cumulant values. Keys are
/// either exact factors like `C4(x,x,y,y)` or order shorthands like `C4`
/// that apply to every factor of that order. Returns (m V, V).
pub fn plug_in_variance(
    name: &str,
    cumulants: &BTreeMap<String, f64>,
    m: u64,
) -> Result<(f64, f64)> {
    let entry = registry()
        .get(name)
        .ok_or_else(|| Error::UnknownEstimator(name.to_string()))?;
    let formula = variance_formula(name)?;
    let vars = &entry.spec.conditions.vars;
    formula.eval(m, vars, &|block: &[Var]| {
        let key = display_cumulant_factor(block, vars);
        if let Some(v) = cumulants.get(&key) {
            return Some(*v);
        }
        cumulants.get(&format!("C{}", block.len())).copied()
    })
}

/// Combined estimate from M batches of equal size: the mean of the
/// per-batch estimates, with the standard error from their empirical
/// scatter.
#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub value: EstimateValue,
    pub estimator_name: String,
    pub m: usize,
    pub batches: usize,
    pub standard_error: Option<f64>,
    pub plug_in_variance: Option<f64>,
}

impl EstimateResult {
    /// Attaches a plug-in variance V(c) of a single estimate; the
    /// standard error of the M-batch average then follows as
    /// sqrt(V / M), so standard_error^2 * (m M) = m V.
    pub fn set_plug_in(&mut self, variance: f64) {
        self.plug_in_variance = Some(variance);
        self.standard_error = Some((variance / self.batches as f64).sqrt());
    }
}

pub fn multi_batch_estimate(
    batches: &[SampleBatch],
    spec: &EstimatorSpec,
    columns: &[usize],
) -> Result<EstimateResult> {
    if batches.is_empty() {
        return Err(Error::InvalidData("no batches".into()));
    }
    let m = batches[0].m();
    for b in batches {
        if b.m() != m {
            return Err(Error::MixedBatchSizes(m, b.m()));
        }
    }
    let mut estimates = Vec::with_capacity(batches.len());
    let mut any_complex = false;
    for b in batches {
        let v = evaluate(spec, b, columns)?;
        any_complex |= v.is_complex();
        estimates.push(v.as_complex());
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<Complex64>() / n;
    let standard_error = if estimates.len() > 1 {
        let var = estimates
            .iter()
            .map(|e| (e - mean).norm_sqr())
            .sum::<f64>()
            / (n - 1.0);
        Some((var / n).sqrt())
    } else {
        None
    };
    Ok(EstimateResult {
        value: if any_complex {
            EstimateValue::Complex(mean)
        } else {
            EstimateValue::Real(mean.re)
        },
        estimator_name: spec
            .name
            .clone()
            .unwrap_or_else(|| "derived estimator".into()),
        m,
        batches: batches.len(),
        standard_error,
        plug_in_variance: None,
    })
}

/// Soft warnings when data contradicts a declared zero-mean condition.
/// Conditions are statements about the process and not verifiable from a
/// single batch, so these never block evaluation.
pub fn zero_mean_diagnostics(
    spec: &EstimatorSpec,
    batch: &SampleBatch,
    columns: &[usize],
) -> Result<Vec<String>> {
    let binding = spec.conditions.binding_vars();
    if columns.len() != binding.len() {
        return Err(Error::BindingMismatch(format!(
            "{} columns supplied, {} binding variables",
            columns.len(),
            binding.len()
        )));
    }
    let m = batch.m() as f64;
    let mut warnings = Vec::new();
    for (&v, &c) in binding.iter().zip(columns) {
        if !spec.conditions.is_zero_mean(v) {
            continue;
        }
        let col = batch.column(c);
        let mut acc = (Neumaier::default(), Neumaier::default());
        for j in 0..batch.m() {
            let x = col.get(j, false);
            acc.0.add(x.re);
            acc.1.add(x.im);
        }
        let mean = Complex64::new(acc.0.total() / m, acc.1.total() / m);
        let mut sq = Neumaier::default();
        for j in 0..batch.m() {
            sq.add((col.get(j, false) - mean).norm_sqr());
        }
        let std = (sq.total() / (m - 1.0).max(1.0)).sqrt();
        if mean.norm() > 4.0 * std / m.sqrt() {
            warnings.push(format!(
                "column {:?} bound to average-free {} has sample mean {:.3e} \
                 (more than 4 standard errors from zero)",
                batch.labels()[c],
                spec.conditions.vars.name(v),
                mean.norm()
            ));
        }
    }
    Ok(warnings)
}

/// Quasi-Poisson population cumulant C_n = lambda^(1 - n/2) for the
/// standardized variable (h - lambda)/sqrt(lambda).
pub fn quasi_poisson_cumulant(lambda: f64, order: u32) -> f64 {
    lambda.powf(1.0 - order as f64 / 2.0)
}

/// Convenience map with the quasi-Poisson cumulants up to order eight,
/// keyed by order shorthand.
pub fn quasi_poisson_cumulants(lambda: f64) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    for order in 1..=8u32 {
        let value = if order == 1 {
            0.0
        } else {
            quasi_poisson_cumulant(lambda, order)
        };
        map.insert(format!("C{order}"), value);
    }
    map
}
