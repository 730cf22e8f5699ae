//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers. Monte Carlo criteria use fixed seeds, so
//! every run is reproducible.

use cumulants::algebra::{Poly, Rat, RationalFn};
use cumulants::conversions::{
    cumulants_from_moments, exact_cumulant, moments_from_cumulants, smith_univariate_cumulants,
    ComplexRat, Converter, CumulantExpr, CumulantProduct, FiniteDistribution, MomentExpr,
    RingScalar,
};
use cumulants::derivation::{
    gauss_optimize, superposition_argmin, verify_unbiased, ConditionSet, EstimatorSpec,
};
use cumulants::estimators::{registry, variance_formula, RegistryEntry};
use cumulants::expectation::{MeanProductTerm, MomentProduct, MultiplicityMatrix};
use cumulants::simulation::{run_experiment, ExperimentEstimator, ProcessKind, ProcessSpec};
use cumulants::vars::{Var, VarSet};
use num::{One, Zero};

fn rat(n: i64) -> Rat {
    Rat::from_integer(n.into())
}

fn ratq(n: i64, d: i64) -> Rat {
    Rat::new(n.into(), d.into())
}

fn mp(k: i64) -> Poly {
    Poly::m_plus(k)
}

fn pmul(factors: &[Poly]) -> Poly {
    factors.iter().fold(Poly::one(), |acc, f| &acc * f)
}

fn rf(num: Poly, den: Poly) -> RationalFn {
    RationalFn::new(num, den).unwrap()
}

fn rf_int(v: i64) -> RationalFn {
    RationalFn::from_int(v)
}

const X: Var = Var(0);
const Y: Var = Var(1);
const Z: Var = Var(2);
const W: Var = Var(3);
// Complex rows declare a, a*, b, b* in that order.
const A: Var = Var(0);
const AS: Var = Var(1);
const B: Var = Var(2);
const BS: Var = Var(3);

// ---------------------------------------------------------------------
// Criterion 1: brute-force unbiasedness oracle.

/// Exact expectation of an estimator over all m-tuples of a finite
/// distribution: the independent oracle for unbiasedness. Variables map
/// to distribution coordinates by their declaration index.
fn brute_force_expectation<S: RingScalar>(
    spec: &EstimatorSpec,
    dist: &FiniteDistribution<S>,
    m: usize,
) -> S {
    let support = dist.support().len();
    let mut total = S::zero();
    let mut idx = vec![0usize; m];
    loop {
        let mut prob = <Rat as One>::one();
        for &i in &idx {
            prob *= dist.probs()[i].clone();
        }
        let mut value = S::zero();
        for (coeff, term) in &spec.terms {
            let mut term_value = S::one();
            for block in term.blocks() {
                let mut mean = S::zero();
                for &i in &idx {
                    let mut point_product = S::one();
                    for v in block {
                        point_product = point_product.mul(&dist.support()[i][v.index()]);
                    }
                    mean = mean.add(&point_product);
                }
                mean = mean.scale(&Rat::new(1.into(), (m as i64).into()));
                term_value = term_value.mul(&mean);
            }
            let c = coeff.eval(m as u64).expect("m >= min_m");
            value = value.add(&term_value.scale(&c));
        }
        total = total.add(&value.scale(&prob));
        let mut k = 0;
        while k < m {
            idx[k] += 1;
            if idx[k] < support {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == m {
            return total;
        }
    }
}

/// A rational-valued three-point distribution over (x, y, z, w) with the
/// entry's average-free coordinates shifted to exact zero mean.
fn real_oracle_distribution(entry: &RegistryEntry) -> FiniteDistribution<Rat> {
    let conds = &entry.spec.conditions;
    let mut dist = if entry.table_row == "i" {
        // The y value of the third point is chosen so that C2(x,y) = 0
        // exactly while means stay generic.
        FiniteDistribution::new(
            vec![
                vec![rat(1), rat(2), rat(-1), rat(1)],
                vec![rat(-1), rat(1), rat(3), rat(2)],
                vec![rat(2), rat(0), rat(1), rat(-1)],
            ],
            vec![ratq(1, 2), ratq(1, 3), ratq(1, 6)],
        )
        .unwrap()
    } else if entry.table_row == "j" {
        // Pairwise vanishing covariances with nonzero variances need a
        // full-rank covariance, beyond any three-point support: use an
        // independent product of zero-mean three-point variables.
        let probs = vec![ratq(1, 2), ratq(1, 3), ratq(1, 6)];
        let component = |values: [i64; 3]| {
            FiniteDistribution::new(
                values.iter().map(|&v| vec![rat(v)]).collect(),
                probs.clone(),
            )
            .unwrap()
        };
        let mut dist = component([3, -1, -7]).product(&component([1, 2, -7]));
        dist = dist.product(&component([-2, 1, 4]));
        if entry.order == 4 {
            dist = dist.product(&component([-4, 3, 6]));
        } else {
            dist = dist.product(&component([5, -3, -9]));
        }
        return dist;
    } else {
        FiniteDistribution::new(
            vec![
                vec![rat(1), rat(2), rat(-1), rat(1)],
                vec![rat(-1), rat(1), rat(3), rat(2)],
                vec![rat(2), rat(-1), rat(1), rat(-1)],
            ],
            vec![ratq(1, 2), ratq(1, 3), ratq(1, 6)],
        )
        .unwrap()
    };
    for v in conds.vars.vars() {
        if conds.zero_mean.contains(&v) {
            let mean = dist.moment_rat(&[v.index()]);
            dist = dist.shift(v.index(), &(-mean));
        }
    }
    dist
}

/// Independent product of two complex three-point variables laid out as
/// (a, a*, b, b*); independence gives every cross-covariance exactly
/// zero. Average-free halves are shifted to exact zero mean.
fn complex_oracle_distribution(entry: &RegistryEntry) -> FiniteDistribution<ComplexRat> {
    let conds = &entry.spec.conditions;
    let probs = vec![ratq(1, 2), ratq(1, 3), ratq(1, 6)];
    let component = |values: [(i64, i64); 3]| {
        FiniteDistribution::new(
            values
                .iter()
                .map(|&(re, im)| {
                    let v = ComplexRat::new(rat(re), rat(im));
                    vec![v.clone(), v.conj()]
                })
                .collect(),
            probs.clone(),
        )
        .unwrap()
    };
    let mut dist = component([(1, 2), (-1, 1), (2, -3)]).product(&component([(2, -1), (1, 1), (-3, 2)]));
    for v in conds.vars.vars() {
        if conds.zero_mean.contains(&v) && v.index() % 2 == 0 {
            // Shift the plain coordinate and its conjugate together.
            let mean = dist.moment(&[v.index()]).unwrap();
            dist = dist.shift(v.index(), &ComplexRat::new(-mean.re.clone(), -mean.im.clone()));
            dist = dist.shift(v.index() + 1, &ComplexRat::new(-mean.re, mean.im));
        }
    }
    dist
}

#[test]
fn criterion_1_exact_unbiasedness_oracle() {
    let mut checked = 0;
    for entry in registry().entries() {
        let slots: Vec<usize> = entry
            .spec
            .conditions
            .slots
            .iter()
            .map(|v| v.index())
            .collect();
        let complex_row = entry.table_row.starts_with('c') && entry.table_row.len() == 2;
        for m in [entry.spec.min_m, entry.spec.min_m + 1] {
            if complex_row {
                let dist = complex_oracle_distribution(entry);
                let expect = brute_force_expectation(&entry.spec, &dist, m as usize);
                let truth = exact_cumulant(&dist, &slots).unwrap();
                assert_eq!(expect, truth, "{} at m={m}", entry.name);
            } else {
                let dist = real_oracle_distribution(entry);
                let expect = brute_force_expectation(&entry.spec, &dist, m as usize);
                let truth = exact_cumulant(&dist, &slots).unwrap();
                assert_eq!(expect, truth, "{} at m={m}", entry.name);
            }
            checked += 1;
        }
    }
    println!(
        "criterion 1 PASS: exact unbiasedness oracle, {} registry estimators x two sample \
         counts = {checked} exact-equality checks",
        registry().entries().len()
    );
}

// ---------------------------------------------------------------------
// Criterion 2: symbolic golden formulas.

fn assert_estimator(name: &str, expected: &[(RationalFn, Vec<Vec<Var>>)]) {
    let entry = registry().get(name).unwrap();
    assert_eq!(
        entry.spec.terms.len(),
        expected.len(),
        "{name}: term count (got {})",
        entry.spec
    );
    for (coeff, blocks) in expected {
        let term = MeanProductTerm::new(blocks.clone());
        assert_eq!(
            &entry.spec.coeff(&term),
            coeff,
            "{name}: coefficient of {}",
            term.display(&entry.spec.conditions.vars)
        );
    }
}

/// Expected matrix entry m_k / m^j.
fn falling_over_power(k: u32, j: u32) -> RationalFn {
    rf(Poly::falling_factorial(k), Poly::m().pow(j))
}

fn assert_matrix(slots: &[Var], expected: &[Vec<Option<(u32, u32)>>]) {
    let matrix = MultiplicityMatrix::build(slots).unwrap();
    assert_eq!(matrix.size(), expected.len());
    for (i, row) in expected.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let want = match cell {
                None => RationalFn::zero(),
                Some((k, pow)) => falling_over_power(*k, *pow),
            };
            assert_eq!(matrix.entry(i, j), &want, "entry ({i},{j})");
        }
    }
}

#[test]
fn criterion_2_symbolic_golden_formulas() {
    // --- second order ---
    let bessel = rf(Poly::m(), mp(-1));
    assert_estimator(
        "c2a",
        &[
            (bessel.clone(), vec![vec![X, Y]]),
            (-&bessel, vec![vec![X], vec![Y]]),
        ],
    );
    assert_estimator(
        "c2b",
        &[
            (bessel.clone(), vec![vec![X, X]]),
            (-&bessel, vec![vec![X], vec![X]]),
        ],
    );
    assert_estimator("c2c", &[(rf_int(1), vec![vec![X, X]])]);
    assert_estimator("c2d", &[(rf_int(1), vec![vec![X, Y]])]);
    assert_estimator("c2e", &[(rf_int(1), vec![vec![X, Y]])]);

    // --- third order ---
    let pref3 = rf(Poly::m().pow(2), pmul(&[mp(-1), mp(-2)]));
    assert_estimator(
        "c3a",
        &[
            (pref3.clone(), vec![vec![X, Y, Z]]),
            (-&pref3, vec![vec![X, Y], vec![Z]]),
            (-&pref3, vec![vec![X, Z], vec![Y]]),
            (-&pref3, vec![vec![Y, Z], vec![X]]),
            (&rf_int(2) * &pref3, vec![vec![X], vec![Y], vec![Z]]),
        ],
    );
    assert_estimator(
        "c3b",
        &[
            (pref3.clone(), vec![vec![X, X, X]]),
            (&rf_int(-3) * &pref3, vec![vec![X, X], vec![X]]),
            (&rf_int(2) * &pref3, vec![vec![X], vec![X], vec![X]]),
        ],
    );
    assert_estimator(
        "c3e",
        &[
            (rf(mp(1), mp(-1)), vec![vec![X, Y, Z]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, Y], vec![Z]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, Z], vec![Y]]),
        ],
    );
    assert_estimator(
        "c3f",
        &[
            (bessel.clone(), vec![vec![X, Y, Z]]),
            (-&bessel, vec![vec![X, Y], vec![Z]]),
        ],
    );
    assert_estimator("c3d", &[(rf_int(1), vec![vec![X, Y, Z]])]);
    assert_estimator("c3c", &[(rf_int(1), vec![vec![X, X, X]])]);
    assert_estimator(
        "c3cd",
        &[
            (bessel.clone(), vec![vec![A, AS, B]]),
            (-&bessel, vec![vec![A, AS], vec![B]]),
        ],
    );

    // The uncorrelated-pair estimator: the printed two-variable form
    // (prefactor m/(m-2) on the four-term bracket) is biased; symbolic
    // expectation shows the unique unbiased rescaling of that bracket is
    // m^2/(m-1)^2. The registry keeps the direct matrix contraction,
    // which carries a fifth term; both pass the unbiasedness oracle.
    {
        let vars = VarSet::from_names(&["x", "y", "z"]);
        let conds = ConditionSet::new(vars, vec![X, Y, Z]).with_zero_cov(&[(X, Y)]);
        let bracket = vec![
            (rf_int(1), MeanProductTerm::new(vec![vec![X, Y, Z]])),
            (rf_int(-1), MeanProductTerm::new(vec![vec![X, Z], vec![Y]])),
            (rf_int(-1), MeanProductTerm::new(vec![vec![Y, Z], vec![X]])),
            (rf_int(1), MeanProductTerm::new(vec![vec![X], vec![Y], vec![Z]])),
        ];
        let scale_terms = |factor: &RationalFn| {
            bracket
                .iter()
                .map(|(c, t)| (factor * c, t.clone()))
                .collect::<Vec<_>>()
        };
        let printed = EstimatorSpec::new(scale_terms(&rf(Poly::m(), mp(-2))), conds.clone());
        assert!(!verify_unbiased(&printed).unwrap().1);
        let corrected = EstimatorSpec::new(
            scale_terms(&rf(Poly::m().pow(2), mp(-1).pow(2))),
            conds.clone(),
        );
        assert!(verify_unbiased(&corrected).unwrap().1);
        let registry_form = &registry().get("c3i").unwrap().spec;
        assert!(verify_unbiased(registry_form).unwrap().1);
        assert_eq!(
            registry_form.coeff(&MeanProductTerm::new(vec![vec![X, Y, Z]])),
            rf(Poly::m(), mp(-2))
        );
    }

    // --- fourth order ---
    let d4 = pmul(&[mp(-1), mp(-2), mp(-3)]);
    let lead4 = rf(pmul(&[Poly::m().pow(2), mp(1)]), d4.clone());
    let pair4 = rf(-&pmul(&[Poly::m().pow(2), mp(-1)]), d4.clone());
    let split4 = rf(&Poly::constant(2) * &Poly::m().pow(3), d4.clone());
    let all4 = rf(&Poly::constant(-6) * &Poly::m().pow(3), d4.clone());
    assert_estimator(
        "c4a",
        &[
            (lead4.clone(), vec![vec![X, Y, Z, W]]),
            (-&lead4, vec![vec![X, Y, Z], vec![W]]),
            (-&lead4, vec![vec![X, Y, W], vec![Z]]),
            (-&lead4, vec![vec![X, Z, W], vec![Y]]),
            (-&lead4, vec![vec![Y, Z, W], vec![X]]),
            (pair4.clone(), vec![vec![X, Y], vec![Z, W]]),
            (pair4.clone(), vec![vec![X, Z], vec![Y, W]]),
            (pair4.clone(), vec![vec![X, W], vec![Y, Z]]),
            (split4.clone(), vec![vec![X, Y], vec![Z], vec![W]]),
            (split4.clone(), vec![vec![X, Z], vec![Y], vec![W]]),
            (split4.clone(), vec![vec![X, W], vec![Y], vec![Z]]),
            (split4.clone(), vec![vec![Y, Z], vec![X], vec![W]]),
            (split4.clone(), vec![vec![Y, W], vec![X], vec![Z]]),
            (split4.clone(), vec![vec![Z, W], vec![X], vec![Y]]),
            (all4.clone(), vec![vec![X], vec![Y], vec![Z], vec![W]]),
        ],
    );
    assert_estimator(
        "c4b",
        &[
            (lead4.clone(), vec![vec![X, X, X, X]]),
            (&rf_int(-4) * &lead4, vec![vec![X, X, X], vec![X]]),
            (&rf_int(3) * &pair4, vec![vec![X, X], vec![X, X]]),
            (&rf_int(6) * &split4, vec![vec![X, X], vec![X], vec![X]]),
            (all4.clone(), vec![vec![X], vec![X], vec![X], vec![X]]),
        ],
    );
    let d2 = pmul(&[mp(-1), mp(-2)]);
    assert_estimator(
        "c4e",
        &[
            (rf(pmul(&[mp(1), mp(2)]), d2.clone()), vec![vec![X, Y, Z, W]]),
            (
                rf(-&pmul(&[Poly::m(), mp(2)]), d2.clone()),
                vec![vec![X, Y, Z], vec![W]],
            ),
            (
                rf(-&pmul(&[Poly::m(), mp(2)]), d2.clone()),
                vec![vec![X, Y, W], vec![Z]],
            ),
            (
                rf(-&pmul(&[Poly::m(), mp(2)]), d2.clone()),
                vec![vec![X, Z, W], vec![Y]],
            ),
            (rf(-&Poly::m().pow(2), d2.clone()), vec![vec![X, Y], vec![Z, W]]),
            (rf(-&Poly::m().pow(2), d2.clone()), vec![vec![X, Z], vec![Y, W]]),
            (rf(-&Poly::m().pow(2), d2.clone()), vec![vec![X, W], vec![Y, Z]]),
            (
                rf(&Poly::constant(2) * &Poly::m().pow(2), d2.clone()),
                vec![vec![X, Y], vec![Z], vec![W]],
            ),
            (
                rf(&Poly::constant(2) * &Poly::m().pow(2), d2.clone()),
                vec![vec![X, Z], vec![Y], vec![W]],
            ),
            (
                rf(&Poly::constant(2) * &Poly::m().pow(2), d2.clone()),
                vec![vec![X, W], vec![Y], vec![Z]],
            ),
        ],
    );
    assert_estimator(
        "c4f",
        &[
            (
                rf(Poly::from_coeffs(vec![-4, 2, 1]), d2.clone()),
                vec![vec![X, Y, Z, W]],
            ),
            (rf(-&Poly::m().pow(2), d2.clone()), vec![vec![X, Y, Z], vec![W]]),
            (rf(-&Poly::m().pow(2), d2.clone()), vec![vec![X, Y, W], vec![Z]]),
            (rf(-&Poly::m().pow(2), d2.clone()), vec![vec![X, Y], vec![Z, W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, Z], vec![Y, W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, W], vec![Y, Z]]),
            (
                rf(&Poly::constant(2) * &Poly::m().pow(2), d2.clone()),
                vec![vec![X, Y], vec![Z], vec![W]],
            ),
        ],
    );
    assert_estimator(
        "c4g",
        &[
            (rf(mp(3), mp(-1)), vec![vec![X, Y, Z, W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, Y, Z], vec![W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, Y], vec![Z, W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, Z], vec![Y, W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, W], vec![Y, Z]]),
        ],
    );
    assert_estimator(
        "c4d",
        &[
            (rf(mp(2), mp(-1)), vec![vec![X, Y, Z, W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, Y], vec![Z, W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, Z], vec![Y, W]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![X, W], vec![Y, Z]]),
        ],
    );
    assert_estimator(
        "c4c",
        &[
            (rf(mp(2), mp(-1)), vec![vec![X, X, X, X]]),
            (
                rf(&Poly::constant(-3) * &Poly::m(), mp(-1)),
                vec![vec![X, X], vec![X, X]],
            ),
        ],
    );
    assert_estimator("c4j", &[(rf_int(1), vec![vec![X, Y, Z, W]])]);
    assert_estimator(
        "c4ca",
        &[
            (bessel.clone(), vec![vec![A, AS, B, BS]]),
            (-&bessel, vec![vec![A, AS], vec![B, BS]]),
        ],
    );
    assert_estimator(
        "c4cb",
        &[
            (rf(mp(1), mp(-1)), vec![vec![A, AS, B, BS]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![A, AS], vec![B, BS]]),
            (rf(-&Poly::m(), mp(-1)), vec![vec![A, BS], vec![AS, B]]),
        ],
    );
    assert_estimator(
        "c4cc",
        &[
            (pref3.clone(), vec![vec![A, AS, B, BS]]),
            (-&pref3, vec![vec![A, B, BS], vec![AS]]),
            (-&pref3, vec![vec![AS, B, BS], vec![A]]),
            (-&pref3, vec![vec![A, AS], vec![B, BS]]),
            (&rf_int(2) * &pref3, vec![vec![B, BS], vec![A], vec![AS]]),
        ],
    );

    // --- multiplicity matrices ---
    assert_matrix(
        &[X, Y],
        &[
            vec![Some((0, 0)), None],
            vec![Some((1, 2)), Some((2, 2))],
        ],
    );
    assert_matrix(
        &[X, Y, Z],
        &[
            vec![Some((0, 0)), None, None, None, None],
            vec![Some((1, 2)), Some((2, 2)), None, None, None],
            vec![Some((1, 2)), None, Some((2, 2)), None, None],
            vec![Some((1, 2)), None, None, Some((2, 2)), None],
            vec![Some((1, 3)), Some((2, 3)), Some((2, 3)), Some((2, 3)), Some((3, 3))],
        ],
    );
    // Fourth-order matrix, entry for entry. Columns: xyzw | xyz.w xyw.z
    // xzw.y yzw.x | xy.zw xz.yw xw.yz | xy.z.w xz.y.w xw.y.z yz.x.w
    // yw.x.z zw.x.y | x.y.z.w.
    let e = |k: u32, j: u32| Some((k, j));
    let row_31 = |diag: usize| {
        let mut r = vec![None; 15];
        r[0] = e(1, 2);
        r[diag] = e(2, 2);
        r
    };
    let row_211 = |diag: usize, coarser: [usize; 3]| {
        let mut r = vec![None; 15];
        r[0] = e(1, 3);
        for c in coarser {
            r[c] = e(2, 3);
        }
        r[diag] = e(3, 3);
        r
    };
    let mut last = vec![None; 15];
    last[0] = e(1, 4);
    for c in 1..=7 {
        last[c] = e(2, 4);
    }
    for c in 8..=13 {
        last[c] = e(3, 4);
    }
    last[14] = e(4, 4);
    let mut first = vec![None; 15];
    first[0] = e(0, 0);
    assert_matrix(
        &[X, Y, Z, W],
        &[
            first,
            row_31(1),
            row_31(2),
            row_31(3),
            row_31(4),
            row_31(5),
            row_31(6),
            row_31(7),
            row_211(8, [1, 2, 5]),
            row_211(9, [1, 3, 6]),
            row_211(10, [2, 3, 7]),
            row_211(11, [1, 4, 7]),
            row_211(12, [2, 4, 6]),
            row_211(13, [3, 4, 5]),
            last,
        ],
    );
    println!(
        "criterion 2 PASS: estimator formulas and multiplicity matrices match the printed \
         forms exactly (the uncorrelated-pair row is pinned to its unbiased correction)"
    );
}

// ---------------------------------------------------------------------
// Criterion 3: variance golden formulas.

fn assert_variance(name: &str, expected: &[(RationalFn, Vec<Vec<Var>>)]) {
    let formula = variance_formula(name).unwrap();
    let expr = formula.scaled_expr();
    assert_eq!(
        expr.len(),
        expected.len(),
        "{name}: variance term count (got {})",
        formula.display(&registry().get(name).unwrap().spec.conditions.vars)
    );
    for (coeff, blocks) in expected {
        let product = CumulantProduct::new(blocks.clone());
        assert_eq!(
            &expr.coeff(&product),
            coeff,
            "{name}: coefficient of {}",
            product.display(&registry().get(name).unwrap().spec.conditions.vars)
        );
    }
    assert!(formula.is_consistent(), "{name}: m*V must stay bounded");
}

#[test]
fn criterion_3_variance_golden_formulas() {
    let bessel = rf(Poly::m(), mp(-1));
    let two_fac = rf(Poly::m().pow(2), pmul(&[mp(-1), mp(-2)]));
    // Second order.
    assert_variance(
        "c2a",
        &[
            (rf_int(1), vec![vec![X, X, Y, Y]]),
            (bessel.clone(), vec![vec![X, Y], vec![X, Y]]),
            (bessel.clone(), vec![vec![X, X], vec![Y, Y]]),
        ],
    );
    assert_variance(
        "c2d",
        &[
            (rf_int(1), vec![vec![X, X, Y, Y]]),
            (rf_int(1), vec![vec![X, Y], vec![X, Y]]),
            (rf_int(1), vec![vec![X, X], vec![Y, Y]]),
        ],
    );
    // Third order, full three-variable estimator.
    assert_variance(
        "c3a",
        &[
            (rf_int(1), vec![vec![X, X, Y, Y, Z, Z]]),
            (bessel.clone(), vec![vec![X, X, Y, Y], vec![Z, Z]]),
            (bessel.clone(), vec![vec![X, X, Z, Z], vec![Y, Y]]),
            (bessel.clone(), vec![vec![Y, Y, Z, Z], vec![X, X]]),
            (&rf_int(2) * &bessel, vec![vec![X, X, Y, Z], vec![Y, Z]]),
            (&rf_int(2) * &bessel, vec![vec![X, Y, Y, Z], vec![X, Z]]),
            (&rf_int(2) * &bessel, vec![vec![X, Y, Z, Z], vec![X, Y]]),
            (&rf_int(2) * &bessel, vec![vec![X, X, Y], vec![Y, Z, Z]]),
            (&rf_int(2) * &bessel, vec![vec![X, X, Z], vec![Y, Y, Z]]),
            (&rf_int(2) * &bessel, vec![vec![X, Y, Y], vec![X, Z, Z]]),
            (&rf_int(3) * &bessel, vec![vec![X, Y, Z], vec![X, Y, Z]]),
            (two_fac.clone(), vec![vec![X, X], vec![Y, Z], vec![Y, Z]]),
            (two_fac.clone(), vec![vec![Y, Y], vec![X, Z], vec![X, Z]]),
            (two_fac.clone(), vec![vec![Z, Z], vec![X, Y], vec![X, Y]]),
            (&rf_int(2) * &two_fac, vec![vec![X, Y], vec![X, Z], vec![Y, Z]]),
            (two_fac.clone(), vec![vec![X, X], vec![Y, Y], vec![Z, Z]]),
        ],
    );
    // Third order, single variable: the k-statistic and the plain mean.
    assert_variance(
        "c3b",
        &[
            (rf_int(1), vec![vec![X; 6]]),
            (&rf_int(9) * &bessel, vec![vec![X; 4], vec![X, X]]),
            (&rf_int(9) * &bessel, vec![vec![X; 3], vec![X; 3]]),
            (&rf_int(6) * &two_fac, vec![vec![X, X], vec![X, X], vec![X, X]]),
        ],
    );
    assert_variance(
        "c3c",
        &[
            (rf_int(1), vec![vec![X; 6]]),
            (rf_int(15), vec![vec![X; 4], vec![X, X]]),
            (rf_int(9), vec![vec![X; 3], vec![X; 3]]),
            (rf_int(15), vec![vec![X, X], vec![X, X], vec![X, X]]),
        ],
    );
    // Third order, all variables average-free.
    assert_variance(
        "c3d",
        &[
            (rf_int(1), vec![vec![X, X, Y, Y, Z, Z]]),
            (rf_int(1), vec![vec![X, X, Y, Y], vec![Z, Z]]),
            (rf_int(1), vec![vec![X, X, Z, Z], vec![Y, Y]]),
            (rf_int(1), vec![vec![Y, Y, Z, Z], vec![X, X]]),
            (rf_int(4), vec![vec![X, X, Y, Z], vec![Y, Z]]),
            (rf_int(4), vec![vec![X, Y, Y, Z], vec![X, Z]]),
            (rf_int(4), vec![vec![X, Y, Z, Z], vec![X, Y]]),
            (rf_int(2), vec![vec![X, X, Y], vec![Y, Z, Z]]),
            (rf_int(2), vec![vec![X, X, Z], vec![Y, Y, Z]]),
            (rf_int(2), vec![vec![X, Y, Y], vec![X, Z, Z]]),
            (rf_int(3), vec![vec![X, Y, Z], vec![X, Y, Z]]),
            (rf_int(2), vec![vec![X, X], vec![Y, Z], vec![Y, Z]]),
            (rf_int(2), vec![vec![Y, Y], vec![X, Z], vec![X, Z]]),
            (rf_int(2), vec![vec![Z, Z], vec![X, Y], vec![X, Y]]),
            (rf_int(8), vec![vec![X, Y], vec![X, Z], vec![Y, Z]]),
            (rf_int(1), vec![vec![X, X], vec![Y, Y], vec![Z, Z]]),
        ],
    );
    // Fourth order, single variable.
    assert_variance(
        "c4b",
        &[
            (rf_int(1), vec![vec![X; 8]]),
            (&rf_int(16) * &bessel, vec![vec![X; 6], vec![X, X]]),
            (&rf_int(48) * &bessel, vec![vec![X; 5], vec![X; 3]]),
            (&rf_int(34) * &bessel, vec![vec![X; 4], vec![X; 4]]),
            (&rf_int(72) * &two_fac, vec![vec![X; 4], vec![X, X], vec![X, X]]),
            (&rf_int(144) * &two_fac, vec![vec![X; 3], vec![X; 3], vec![X, X]]),
            (
                rf(
                    &Poly::constant(24) * &pmul(&[Poly::m().pow(2), mp(1)]),
                    pmul(&[mp(-1), mp(-2), mp(-3)]),
                ),
                vec![vec![X, X]; 4],
            ),
        ],
    );
    assert_variance(
        "c4c",
        &[
            (rf_int(1), vec![vec![X; 8]]),
            (rf_int(16), vec![vec![X; 6], vec![X, X]]),
            (rf_int(56), vec![vec![X; 5], vec![X; 3]]),
            (rf(Poly::from_coeffs(vec![-16, 34]), mp(-1)), vec![vec![X; 4], vec![X; 4]]),
            (&rf_int(72) * &bessel, vec![vec![X; 4], vec![X, X], vec![X, X]]),
            (rf_int(160), vec![vec![X; 3], vec![X; 3], vec![X, X]]),
            (
                rf(&Poly::constant(24) * &mp(2), mp(-1)),
                vec![vec![X, X]; 4],
            ),
        ],
    );
    // Complex fourth order, independent phases: all printed terms, exactly.
    assert_variance(
        "c4ca",
        &[
            (rf_int(1), vec![vec![A, A, AS, AS, B, B, BS, BS]]),
            (rf_int(2), vec![vec![A, A, AS, AS, B, BS], vec![B, BS]]),
            (rf_int(2), vec![vec![A, AS, B, B, BS, BS], vec![A, AS]]),
            (bessel.clone(), vec![vec![A, A, AS, AS], vec![B, B, BS, BS]]),
            (
                rf(Poly::from_coeffs(vec![-6, 7]), mp(-1)),
                vec![vec![A, AS, B, BS], vec![A, AS, B, BS]],
            ),
            (bessel.clone(), vec![vec![A, A, AS, AS], vec![B, BS], vec![B, BS]]),
            (rf_int(4), vec![vec![A, AS, B, BS], vec![A, AS], vec![B, BS]]),
            (bessel.clone(), vec![vec![B, B, BS, BS], vec![A, AS], vec![A, AS]]),
            (
                bessel.clone(),
                vec![vec![A, AS], vec![A, AS], vec![B, BS], vec![B, BS]],
            ),
        ],
    );
    // Shared-phase complex case: the printed second-order-only terms are
    // the Gaussian restriction of the derived variance.
    {
        let formula = variance_formula("c4cb").unwrap();
        let restricted = formula.gaussian_restriction(None);
        let expr = restricted.scaled_expr();
        assert_eq!(expr.len(), 3);
        let plus = rf(mp(1), mp(-1));
        assert_eq!(
            expr.coeff(&CumulantProduct::new(vec![
                vec![A, AS],
                vec![A, AS],
                vec![B, BS],
                vec![B, BS]
            ])),
            plus
        );
        assert_eq!(
            expr.coeff(&CumulantProduct::new(vec![
                vec![A, AS],
                vec![A, BS],
                vec![AS, B],
                vec![B, BS]
            ])),
            &rf_int(2) * &plus
        );
        assert_eq!(
            expr.coeff(&CumulantProduct::new(vec![
                vec![A, BS],
                vec![A, BS],
                vec![AS, B],
                vec![AS, B]
            ])),
            plus
        );
    }
    println!(
        "criterion 3 PASS: variance formulas match the printed forms exactly, including the \
         (34m-16)/(m(m-1)) fourth-order coefficient and the shared-phase Gaussian terms"
    );
}

// ---------------------------------------------------------------------
// Criterion 4: Gauss-optimal suite.

#[test]
fn criterion_4_gauss_optimal_suite() {
    // Two-variable third order: exact printed coefficients.
    let mut vars = VarSet::new();
    let x = vars.intern("x");
    let z = vars.intern("z");
    let conds = ConditionSet::new(vars, vec![x, x, z]).with_zero_mean(&[x, z]);
    let go = gauss_optimize(&conds).unwrap();
    assert_eq!(go.terms.len(), 2);
    assert_eq!(
        go.coeff(&MeanProductTerm::new(vec![vec![x, x, z]])),
        rf(mp(2), mp(1))
    );
    assert_eq!(
        go.coeff(&MeanProductTerm::new(vec![vec![x, x], vec![z]])),
        rf(-&Poly::m(), mp(1))
    );
    assert!(verify_unbiased(&go).unwrap().1);

    // Single-variable third order: exactly unbiased, Gaussian scaled
    // variance exactly 6(m+4)/(m+1) <x^2>^3.
    let entry = registry().get("c3cgo").unwrap();
    assert!(verify_unbiased(&entry.spec).unwrap().1);
    let variance = variance_formula("c3cgo").unwrap();
    let restricted = variance.gaussian_restriction(None);
    let expr = restricted.scaled_expr();
    assert_eq!(expr.len(), 1);
    assert_eq!(
        expr.coeff(&CumulantProduct::new(vec![vec![X, X], vec![X, X], vec![X, X]])),
        rf(&Poly::constant(6) * &mp(4), mp(1))
    );

    // Second and fourth order single-variable optimizations return the
    // reduced estimators unchanged.
    let mut vars = VarSet::new();
    let x = vars.intern("x");
    let c2 = ConditionSet::new(vars.clone(), vec![x, x]).with_zero_mean(&[x]);
    let go2 = gauss_optimize(&c2).unwrap();
    assert_eq!(go2.terms, registry().get("c2c").unwrap().spec.terms);
    let c4 = ConditionSet::new(vars, vec![x, x, x, x]).with_zero_mean(&[x]);
    let go4 = gauss_optimize(&c4).unwrap();
    assert_eq!(go4.terms, registry().get("c4c").unwrap().spec.terms);

    // Superposition minimizer.
    assert_eq!(
        superposition_argmin().unwrap(),
        rf(Poly::from_coeffs(vec![6, -9, 3]), Poly::from_coeffs(vec![2, -3, 3]))
    );
    println!(
        "criterion 4 PASS: Gauss-optimal coefficients, the 6(m+4)/(m+1) variance, the \
         unchanged second/fourth-order reductions, and the superposition minimizer"
    );
}

// ---------------------------------------------------------------------
// Criterion 5: quasi-Poisson reproduction at paper scale.

#[test]
fn criterion_5_quasi_poisson_reproduction() {
    let estimators = vec![
        ExperimentEstimator::named("c3c"),
        ExperimentEstimator::named("c3cgo"),
    ];
    let proc = ProcessSpec {
        kind: ProcessKind::QuasiPoisson {
            lambda: 25.0,
            dim: 1,
        },
        seed: 7,
    };
    let report = run_experiment(&proc, &estimators, 100_000, 300).unwrap();
    let var_c3c = report.estimators[0].variance;
    let var_go = report.estimators[1].variance;
    let ratio = var_c3c / var_go;
    assert!(
        (1.2e-4..=2.0e-4).contains(&var_c3c),
        "sigma^2(c3c) = {var_c3c:.3e}"
    );
    assert!(
        (4.5e-5..=7.5e-5).contains(&var_go),
        "sigma^2(c3cgo) = {var_go:.3e}"
    );
    assert!((2.1..=2.9).contains(&ratio), "ratio = {ratio:.3}");
    // Larger Poisson parameters: estimates centered on 1/sqrt(lambda).
    let mut checked = Vec::new();
    for (lambda, truth, seed) in [(100.0, 0.1, 11), (400.0, 0.05, 13)] {
        let proc = ProcessSpec {
            kind: ProcessKind::QuasiPoisson { lambda, dim: 1 },
            seed,
        };
        let report = run_experiment(&proc, &estimators, 100_000, 300).unwrap();
        for stat in &report.estimators {
            let dev = (stat.mean.re - truth).abs();
            assert!(
                dev <= 5.0 * stat.standard_error,
                "lambda={lambda} {}: mean {} vs {truth} (se {})",
                stat.name,
                stat.mean.re,
                stat.standard_error
            );
            checked.push(format!("{}@{lambda}", stat.name));
        }
    }
    println!(
        "criterion 5 PASS: lambda=25 gives sigma^2(c3c)={var_c3c:.2e}, \
         sigma^2(c3cgo)={var_go:.2e}, ratio={ratio:.2}; means at lambda=100,400 within 5 se"
    );
}

// ---------------------------------------------------------------------
// Criterion 6: Gaussian variance orderings (the two figures).

/// Standard error of an empirical variance, from the scatter's fourth
/// central moment; for a near-Gaussian scatter this reduces to the
/// familiar sqrt(2/M) V.
fn variance_standard_error(stat: &cumulants::simulation::EstimatorStats) -> f64 {
    let n = stat.estimates.len() as f64;
    let m4: f64 = stat
        .estimates
        .iter()
        .map(|e| (e - stat.mean).norm_sqr().powi(2))
        .sum::<f64>()
        / n;
    ((m4 - stat.variance * stat.variance * (n - 3.0) / (n - 1.0)) / n)
        .max(0.0)
        .sqrt()
}

#[test]
fn criterion_6_gaussian_variance_orderings() {
    let repeats = 10_000;
    let univariate = vec![
        ExperimentEstimator::named("c2b"),
        ExperimentEstimator::named("c3b"),
        ExperimentEstimator::named("c3c"),
        ExperimentEstimator::named("c4c"),
    ];
    let theory: Vec<(&str, fn(f64) -> f64)> = vec![
        ("c2b", |m| 2.0 * m / (m - 1.0)),
        ("c3b", |m| 6.0 * m * m / ((m - 1.0) * (m - 2.0))),
        ("c3c", |_| 15.0),
        ("c4c", |m| 24.0 * (m + 2.0) / (m - 1.0)),
    ];
    let mut crossover: Vec<(usize, f64, f64)> = Vec::new();
    for (i, &m) in [4usize, 5, 10, 50].iter().enumerate() {
        let proc = ProcessSpec {
            kind: ProcessKind::Gaussian {
                mean: 0.0,
                variance: 1.0,
                dim: 1,
                complex: false,
            },
            seed: 100 + i as u64,
        };
        let repeats_here = if m == 4 { 40_000 } else { repeats };
        let report = run_experiment(&proc, &univariate, m, repeats_here).unwrap();
        for stat in &report.estimators {
            let want = theory
                .iter()
                .find(|(n, _)| *n == stat.name)
                .map(|(_, f)| f(m as f64))
                .unwrap();
            let band = 4.0 * m as f64 * variance_standard_error(stat);
            let dev = (stat.scaled_variance - want).abs();
            assert!(
                dev <= band,
                "m={m} {}: mV = {:.4} vs theory {want:.4} (dev {dev:.4}, 4 se = {band:.4})",
                stat.name,
                stat.scaled_variance
            );
        }
        let v_c3b = report
            .estimators
            .iter()
            .find(|s| s.name == "c3b")
            .unwrap()
            .scaled_variance;
        let v_c3c = report
            .estimators
            .iter()
            .find(|s| s.name == "c3c")
            .unwrap()
            .scaled_variance;
        crossover.push((m, v_c3b, v_c3c));
    }
    for &(m, v_c3b, v_c3c) in &crossover {
        if m >= 5 {
            assert!(
                v_c3c > v_c3b,
                "m={m}: reduced estimator should be worse ({v_c3c:.3} vs {v_c3b:.3})"
            );
        } else {
            assert!(
                v_c3c < v_c3b,
                "m={m}: reduced estimator should be better ({v_c3c:.3} vs {v_c3b:.3})"
            );
        }
    }
    // Two independent average-free unit Gaussians: the optimized
    // two-variable estimator beats the plain one at every m.
    let bivariate = vec![
        ExperimentEstimator::with_columns("c3h", vec![0, 1]),
        ExperimentEstimator::with_columns("c3hgo", vec![0, 1]),
    ];
    for (i, &m) in [4usize, 5, 10, 50].iter().enumerate() {
        let proc = ProcessSpec {
            kind: ProcessKind::Gaussian {
                mean: 0.0,
                variance: 1.0,
                dim: 2,
                complex: false,
            },
            seed: 200 + i as u64,
        };
        let report = run_experiment(&proc, &bivariate, m, repeats).unwrap();
        let v_h = report.estimators[0].scaled_variance;
        let v_go = report.estimators[1].scaled_variance;
        let band_h = 4.0 * m as f64 * variance_standard_error(&report.estimators[0]);
        let band_go = 4.0 * m as f64 * variance_standard_error(&report.estimators[1]);
        let want_go = 2.0 * (m as f64 + 2.0) / (m as f64 + 1.0);
        assert!(
            (v_h - 3.0).abs() <= band_h,
            "m={m} c3h: mV = {v_h:.4} vs 3 (4 se = {band_h:.4})"
        );
        assert!(
            (v_go - want_go).abs() <= band_go,
            "m={m} c3hgo: mV = {v_go:.4} vs {want_go:.4} (4 se = {band_go:.4})"
        );
        assert!(v_go < v_h, "m={m}: optimized variant must win");
    }
    println!(
        "criterion 6 PASS: scaled variances within 4 se of theory for six estimators at \
         m in (4,5,10,50), with the third-order crossover at m = 5"
    );
}

// ---------------------------------------------------------------------
// Criterion 7: O(1/m) decay of the full estimators.

#[test]
fn criterion_7_consistency_decay() {
    // V(m)/V(4m) should be close to 4 for an O(1/m) variance. Stated
    // band: [3.4, 4.7]. For the fourth-order k-statistic the exact
    // Gaussian theory value at m = 25 is
    //   V(25)/V(100) = [24 m(m+1)/((m-1)(m-2)(m-3))] ratio = 4.987,
    // which lies outside the stated band, so that leg fails by theory
    // rather than by sampling noise; the measured value is printed for
    // the record.
    let m_small = 25usize;
    let m_large = 100usize;
    let repeats = 40_000;
    let names = ["c2b", "c3b", "c4b"];
    let estimators: Vec<ExperimentEstimator> = names
        .iter()
        .map(|n| ExperimentEstimator::named(n))
        .collect();
    let small = run_experiment(
        &ProcessSpec {
            kind: ProcessKind::Gaussian {
                mean: 0.0,
                variance: 1.0,
                dim: 1,
                complex: false,
            },
            seed: 31,
        },
        &estimators,
        m_small,
        repeats,
    )
    .unwrap();
    let large = run_experiment(
        &ProcessSpec {
            kind: ProcessKind::Gaussian {
                mean: 0.0,
                variance: 1.0,
                dim: 1,
                complex: false,
            },
            seed: 37,
        },
        &estimators,
        m_large,
        repeats,
    )
    .unwrap();
    let mut failures = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let ratio = small.estimators[i].variance / large.estimators[i].variance;
        println!("criterion 7: {name} V({m_small})/V({m_large}) = {ratio:.3}");
        if !(3.4..=4.7).contains(&ratio) {
            failures.push(format!("{name} ratio {ratio:.3} outside [3.4, 4.7]"));
        }
    }
    if failures.is_empty() {
        println!("criterion 7 PASS: variance decay ratios within [3.4, 4.7]");
    } else {
        panic!(
            "criterion 7 FAIL: {} (the fourth-order decay ratio is 4.99 by exact Gaussian \
             theory, outside the stated band; see the notes in the decay discussion above)",
            failures.join("; ")
        );
    }
}

// ---------------------------------------------------------------------
// Criterion 8: complex estimator diagnosis at equal frequencies.

#[test]
fn criterion_8_complex_estimator_diagnosis() {
    // a = b (one complex Gaussian column bound to both variables): the
    // shared-phase estimator stays centered on zero while the
    // independent-phase estimator picks up a spurious contribution.
    let proc = ProcessSpec {
        kind: ProcessKind::Gaussian {
            mean: 0.0,
            variance: 1.0,
            dim: 1,
            complex: true,
        },
        seed: 41,
    };
    let estimators = vec![
        ExperimentEstimator::with_columns("c4cb", vec![0, 0]),
        ExperimentEstimator::with_columns("c4ca", vec![0, 0]),
    ];
    let report = run_experiment(&proc, &estimators, 8, 4000).unwrap();
    let cb = &report.estimators[0];
    let ca = &report.estimators[1];
    assert!(
        cb.mean.norm() <= 5.0 * cb.standard_error,
        "c4cb mean {} (se {})",
        cb.mean,
        cb.standard_error
    );
    assert!(
        ca.mean.norm() > 5.0 * ca.standard_error,
        "c4ca mean {} should be biased here (se {})",
        ca.mean,
        ca.standard_error
    );
    println!(
        "criterion 8 PASS: with a = b the shared-phase estimator is centered on zero \
         ({:.3e} vs se {:.1e}) while the independent-phase one reads {:.3}",
        cb.mean.norm(),
        cb.standard_error,
        ca.mean.re
    );
}

// ---------------------------------------------------------------------
// Criterion 9: conversion round trip and cross-oracle.

#[test]
fn criterion_9_conversion_round_trip_and_cross_oracle() {
    let vars = VarSet::from_names(&["x", "y", "z", "w", "u", "v"]);
    let all: Vec<Var> = vars.vars().collect();
    let mut conv = Converter::new();
    for n in 1..=6usize {
        let slots = &all[..n];
        let m = moments_from_cumulants(slots).unwrap();
        let back = conv.cumulants_to_moments(&m).unwrap();
        let mut expected = MomentExpr::zero();
        expected.add_term(MomentProduct::new(vec![slots.to_vec()]), RationalFn::one());
        assert_eq!(back, expected, "moment identity at n={n}");
        let c = cumulants_from_moments(slots).unwrap();
        let back = conv.moments_to_cumulants(&c).unwrap();
        let mut expected = CumulantExpr::zero();
        expected.add_term(CumulantProduct::new(vec![slots.to_vec()]), RationalFn::one());
        assert_eq!(back, expected, "cumulant identity at n={n}");
    }
    // Smith's univariate recursion against the multivariate recursion on
    // 100 pseudo-random rational moment sequences.
    let u = Var(0);
    let mut state: u64 = 0x243F6A8885A308D3;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) as i64 % 23) - 11
    };
    for case in 0..100 {
        let moments: Vec<Rat> = (0..8)
            .map(|_| Rat::new(next().into(), (1 + next().rem_euclid(7)).into()))
            .collect();
        let smith = smith_univariate_cumulants(&moments);
        for n in 1..=8usize {
            let expr = conv.cumulant_in_moments(&vec![u; n]).unwrap();
            let mut acc = <Rat as Zero>::zero();
            for (product, coeff) in expr.terms() {
                let mut value = coeff.as_rat().unwrap();
                for block in product.blocks() {
                    value *= moments[block.len() - 1].clone();
                }
                acc += value;
            }
            assert_eq!(acc, smith[n - 1], "case {case}, order {n}");
        }
    }
    println!(
        "criterion 9 PASS: moment/cumulant round trip up to order six and Smith agreement \
         on 100 random moment sequences up to order eight"
    );
}
