//! Command-line front end: data ingestion, estimator selection and
//! evaluation, symbolic derivation printing, Monte Carlo runs, and
//! plot-data emission.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 unsupported
//! estimator. Failures print a single machine-parsable record to stderr.

mod ingest;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cumulants::algebra::Rat;
use cumulants::derivation::{
    derive_estimator, gauss_optimize, symbolic_variance, verify_unbiased, ConditionSet,
    EstimatorSpec,
};
use cumulants::estimators::{
    evaluate, plug_in_variance, quasi_poisson_cumulants, registry,
    select_estimator, zero_mean_diagnostics, SelectionQuery,
};
use cumulants::simulation::{
    consistency_scan, run_experiment, ExperimentEstimator, ProcessKind, ProcessSpec,
};
use cumulants::vars::{Var, VarSet};
use output::{fmt_f64, OutputFormat, RecordWriter};
use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cumulants",
    about = "Unbiased multivariate cumulant estimation: evaluate, derive, simulate",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a cumulant estimator on a delimited data file.
    Estimate(EstimateArgs),
    /// Derive an unbiased estimator for given conditions and print it.
    Derive(DeriveArgs),
    /// Evaluate a named variance formula at given cumulant values.
    Variance(VarianceArgs),
    /// Monte Carlo benchmarking of estimators on generated processes.
    Simulate(SimulateArgs),
    /// Print the estimator registry.
    List(ListArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Input file with a header row; complex columns as name_re,name_im.
    #[arg(long)]
    input: String,
    /// Field delimiter.
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Registry estimator to apply; variables bind to --vars columns.
    #[arg(long, conflicts_with = "cumulant")]
    estimator: Option<String>,
    /// Cumulant order to estimate (c2, c3, c4) with automatic selection.
    #[arg(long)]
    cumulant: Option<String>,
    /// Comma-separated column names, one per estimator slot; a trailing
    /// `*` conjugates a complex column (a,a*,b,b*).
    #[arg(long, value_delimiter = ',')]
    vars: Vec<String>,
    /// Columns declared average-free.
    #[arg(long, value_delimiter = ',')]
    zero_mean: Vec<String>,
    /// Column pairs with vanishing covariance, as u:v.
    #[arg(long, value_delimiter = ',')]
    zero_cov: Vec<String>,
    /// Prefer the Gauss-optimal variant where the registry has one.
    #[arg(long)]
    gauss_optimal: bool,
    /// Cumulant values for an optional plug-in standard error, as
    /// KEY=VALUE pairs (C2=1,C3=0.2 or exact keys like C2(x,x)=1).
    #[arg(long, value_delimiter = ',')]
    plug_in: Vec<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Human)]
    format: OutputFormat,
}

#[derive(Args)]
struct DeriveArgs {
    /// Estimator slots as comma-separated variable names; repeats encode
    /// slot equalities (x,x,z).
    #[arg(long, value_delimiter = ',')]
    vars: Vec<String>,
    /// Cumulant order; defaults to the slot count.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    zero_mean: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    zero_cov: Vec<String>,
    /// Minimize the Gaussian variance over the free components.
    #[arg(long)]
    gauss_optimal: bool,
    /// Also print the exact variance in terms of cumulants.
    #[arg(long)]
    variance: bool,
    /// Restrict the printed variance to Gaussian processes.
    #[arg(long)]
    gaussian: bool,
    /// With --gaussian: unit variances, vanishing cross-covariances.
    #[arg(long)]
    unit_c2: bool,
    /// Emit the estimator as its structured JSON document.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VarianceArgs {
    /// Registry estimator name.
    #[arg(long)]
    estimator: String,
    /// Sample count to evaluate at.
    #[arg(long)]
    m: u64,
    /// Cumulant values as KEY=VALUE pairs.
    #[arg(long, value_delimiter = ',')]
    cumulants: Vec<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Human)]
    format: OutputFormat,
}

#[derive(Args)]
struct SimulateArgs {
    /// Process kind.
    #[arg(value_enum)]
    process: ProcessArg,
    /// Poisson parameter for the quasi-Poisson process.
    #[arg(long, default_value_t = 25.0)]
    lambda: f64,
    /// Gaussian mean.
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    /// Gaussian variance.
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    /// Number of independent columns to generate.
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Generate complex Gaussian columns.
    #[arg(long)]
    complex: bool,
    /// Samples per batch.
    #[arg(long)]
    m: usize,
    /// Number of batches (estimates).
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    /// Estimators to evaluate, comma separated; bind columns explicitly
    /// with name@0,1 (default binding is the leading columns).
    #[arg(long, value_delimiter = ',', required = true)]
    estimators: Vec<String>,
    /// RNG seed; the CUMULANTS_SEED environment variable sets the
    /// default and the flag overrides it.
    #[arg(long, env = "CUMULANTS_SEED", default_value_t = 1)]
    seed: u64,
    /// Emit one record per repeat (scatter data for external plotting).
    #[arg(long)]
    emit_estimates: bool,
    /// Emit only the first N estimate records; the summary statistics
    /// still use all repeats, so the plotted point count and the
    /// variance sample count are independent knobs.
    #[arg(long)]
    emit_count: Option<usize>,
    /// Overlay plug-in theory values where the process cumulants are known.
    #[arg(long)]
    theory: bool,
    /// Run a consistency scan over this ascending m grid instead of a
    /// single experiment.
    #[arg(long, value_delimiter = ',')]
    scan: Vec<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Human)]
    format: OutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProcessArg {
    Gaussian,
    Poisson,
}

#[derive(Args)]
struct ListArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Human)]
    format: OutputFormat,
}

enum CliError {
    Usage(String),
    Data(String),
    Unsupported(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Unsupported(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Unsupported(_) => "unsupported-estimator",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Unsupported(m) => m,
        }
    }
}

impl From<cumulants::Error> for CliError {
    fn from(e: cumulants::Error) -> Self {
        use cumulants::Error as E;
        match e {
            E::UnknownEstimator(_) | E::UnsupportedEstimator(_) => {
                CliError::Unsupported(e.to_string())
            }
            E::InvalidParameter(_) | E::BindingMismatch(_) | E::InconsistentConditions(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Derive(args) => cmd_derive(args),
        Command::Variance(args) => cmd_variance(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::List(args) => cmd_list(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "error code={} kind={} message={:?}",
                e.code(),
                e.kind(),
                e.message()
            );
            ExitCode::from(e.code())
        }
    }
}

/// Splits a variable token into (column name, conjugated).
fn parse_var_token(token: &str) -> (String, bool) {
    match token.strip_suffix('*') {
        Some(base) => (base.to_string(), true),
        None => (token.to_string(), false),
    }
}

fn parse_pairs(pairs: &[String]) -> Result<Vec<(String, String)>, CliError> {
    pairs
        .iter()
        .map(|p| {
            p.split_once(':')
                .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("expected u:v pair, got {p:?}")))
        })
        .collect()
}

fn parse_key_values(items: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut map = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got {item:?}")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("not a number: {v:?}")))?;
        map.insert(k.trim().to_string(), value);
    }
    Ok(map)
}

/// Builds the variable universe for a slot list with conditions: starred
/// tokens intern both halves of the conjugate pair, and covariance
/// conditions are closed under conjugation.
struct DeclaredConditions {
    vars: VarSet,
    slots: Vec<Var>,
    zero_mean: BTreeSet<Var>,
    zero_cov: BTreeSet<(Var, Var)>,
    conjugate_pairs: Vec<(Var, Var)>,
}

fn declare_conditions(
    slot_tokens: &[String],
    zero_mean: &[String],
    zero_cov: &[String],
    complex_bases: &dyn Fn(&str) -> bool,
) -> Result<DeclaredConditions, CliError> {
    let mut vars = VarSet::new();
    let mut conjugate_pairs: Vec<(Var, Var)> = Vec::new();
    let mut slots = Vec::new();
    let intern_token = |vars: &mut VarSet,
                            conj: &mut Vec<(Var, Var)>,
                            token: &str|
     -> Var {
        let (base, starred) = parse_var_token(token);
        if starred || complex_bases(&base) {
            let p = vars.intern(&base);
            let s = vars.intern(&format!("{base}*"));
            if !conj.contains(&(p, s)) {
                conj.push((p, s));
            }
            if starred {
                s
            } else {
                p
            }
        } else {
            vars.intern(&base)
        }
    };
    for token in slot_tokens {
        let v = intern_token(&mut vars, &mut conjugate_pairs, token);
        slots.push(v);
    }
    let mut zm = BTreeSet::new();
    for token in zero_mean {
        let v = intern_token(&mut vars, &mut conjugate_pairs, token);
        zm.insert(v);
        // An average-free complex variable is average-free in conjugate too.
        if let Some(&(p, s)) = conjugate_pairs.iter().find(|&&(p, s)| p == v || s == v) {
            zm.insert(p);
            zm.insert(s);
        }
    }
    let mut zc = BTreeSet::new();
    for (a, b) in parse_pairs(zero_cov)? {
        let u = intern_token(&mut vars, &mut conjugate_pairs, &a);
        let v = intern_token(&mut vars, &mut conjugate_pairs, &b);
        if u == v {
            return Err(CliError::Usage(format!(
                "C2({a},{b}) = 0 is not a covariance condition"
            )));
        }
        zc.insert(norm_pair(u, v));
        // Conjugate closure: C2(u,v) = 0 implies C2(u*,v*) = 0.
        let conj_of = |x: Var| {
            conjugate_pairs
                .iter()
                .find_map(|&(p, s)| match x {
                    _ if x == p => Some(s),
                    _ if x == s => Some(p),
                    _ => None,
                })
        };
        if let (Some(uc), Some(vc)) = (conj_of(u), conj_of(v)) {
            if uc != v || vc != u {
                zc.insert(norm_pair(uc, vc));
            }
        }
    }
    Ok(DeclaredConditions {
        vars,
        slots,
        zero_mean: zm,
        zero_cov: zc,
        conjugate_pairs,
    })
}

fn norm_pair(u: Var, v: Var) -> (Var, Var) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let batch = ingest::ingest(&args.input, args.delimiter)?;
    if args.vars.is_empty() {
        return Err(CliError::Usage("--vars is required".into()));
    }
    let is_complex_column = |name: &str| {
        batch
            .label_index(name)
            .is_some_and(|i| batch.column(i).is_complex())
    };
    let (spec, columns): (&EstimatorSpec, Vec<usize>) = if let Some(name) = &args.estimator {
        let entry = registry()
            .get(name)
            .ok_or_else(|| cumulants::Error::UnknownEstimator(name.clone()))?;
        let binding = entry.binding_vars();
        if args.vars.len() != binding.len() {
            return Err(CliError::Usage(format!(
                "{name} takes {} binding column(s): {}",
                binding.len(),
                binding
                    .iter()
                    .map(|&v| entry.spec.conditions.vars.name(v))
                    .collect::<Vec<_>>()
                    .join(",")
            )));
        }
        let columns = args
            .vars
            .iter()
            .map(|t| {
                batch
                    .label_index(t)
                    .ok_or_else(|| CliError::Data(format!("no column named {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        (&entry.spec, columns)
    } else {
        let order = match args.cumulant.as_deref() {
            Some("c2") => 2,
            Some("c3") => 3,
            Some("c4") => 4,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "unknown cumulant {other:?}; expected c2, c3, or c4"
                )))
            }
            None => {
                return Err(CliError::Usage(
                    "either --estimator or --cumulant is required".into(),
                ))
            }
        };
        if args.vars.len() != order {
            return Err(CliError::Usage(format!(
                "--cumulant {} needs {} slot(s) in --vars",
                args.cumulant.as_deref().unwrap_or(""),
                order
            )));
        }
        let declared = declare_conditions(
            &args.vars,
            &args.zero_mean,
            &args.zero_cov,
            &is_complex_column,
        )?;
        let query = SelectionQuery {
            vars: declared.vars.clone(),
            slots: declared.slots.clone(),
            zero_mean: declared.zero_mean.clone(),
            zero_cov: declared.zero_cov.clone(),
            conjugate_pairs: declared.conjugate_pairs.clone(),
        };
        let selection = select_estimator(&query, args.gauss_optimal)?;
        let columns = selection
            .bound_query_vars
            .iter()
            .map(|&qv| {
                let name = declared.vars.name(qv);
                batch
                    .label_index(name)
                    .ok_or_else(|| CliError::Data(format!("no column named {name:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        (&selection.entry.spec, columns)
    };

    for warning in zero_mean_diagnostics(spec, &batch, &columns)? {
        eprintln!("warning: {warning}");
    }
    let value = evaluate(spec, &batch, &columns)?;
    let name = spec.name.clone().unwrap_or_else(|| "derived".into());
    let plug_in = if args.plug_in.is_empty() {
        None
    } else {
        let cumulants = parse_key_values(&args.plug_in)?;
        let (_, v) = plug_in_variance(&name, &cumulants, batch.m() as u64)?;
        Some(v)
    };
    let mut w = RecordWriter::new(args.format);
    let mut fields: Vec<(String, String)> = vec![
        ("record".into(), "estimate".into()),
        ("estimator".into(), name),
        ("m".into(), batch.m().to_string()),
        ("min_m".into(), spec.min_m.to_string()),
        ("value".into(), fmt_f64(value.re())),
    ];
    if value.is_complex() {
        fields.push(("value_im".into(), fmt_f64(value.as_complex().im)));
    }
    if let Some(v) = plug_in {
        fields.push(("plug_in_variance".into(), fmt_f64(v)));
        fields.push(("plug_in_stderr".into(), fmt_f64(v.sqrt())));
    }
    w.record(&fields);
    w.finish();
    Ok(())
}

fn cmd_derive(args: DeriveArgs) -> Result<(), CliError> {
    if args.vars.is_empty() {
        return Err(CliError::Usage("--vars is required".into()));
    }
    if let Some(order) = args.order {
        if order != args.vars.len() {
            return Err(CliError::Usage(format!(
                "--order {order} disagrees with {} slot(s) in --vars",
                args.vars.len()
            )));
        }
    }
    let declared = declare_conditions(&args.vars, &args.zero_mean, &args.zero_cov, &|_| false)?;
    let mut conds = ConditionSet::new(declared.vars, declared.slots);
    conds.zero_mean = declared.zero_mean;
    conds.zero_cov = declared.zero_cov;
    conds.conjugate_pairs = declared.conjugate_pairs.clone();
    conds.phase_groups = (0..declared.conjugate_pairs.len()).map(|i| vec![i]).collect();
    let spec = if args.gauss_optimal {
        gauss_optimize(&conds)?
    } else {
        derive_estimator(&conds)?
    };
    let (_, unbiased) = verify_unbiased(&spec)?;
    if args.json {
        println!("{}", spec.to_document());
        return Ok(());
    }
    println!("estimator: {spec}");
    println!("conditions: {}", spec.conditions.describe());
    println!("min_m: {}", spec.min_m);
    println!("unbiased: {unbiased}");
    if args.variance || args.gaussian {
        let variance = symbolic_variance(&spec)?;
        let printed = if args.gaussian {
            let subs = args.unit_c2.then(|| {
                let mut map = BTreeMap::new();
                let distinct: BTreeSet<Var> = spec.conditions.slots.iter().copied().collect();
                for &u in &distinct {
                    for &v in &distinct {
                        if u <= v {
                            let value = if u == v || spec.conditions.is_conjugate_pair(u, v) {
                                Rat::from_integer(1.into())
                            } else {
                                Rat::from_integer(0.into())
                            };
                            map.insert((u, v), value);
                        }
                    }
                }
                map
            });
            variance.gaussian_restriction(subs.as_ref())
        } else {
            variance
        };
        println!("scaled variance m*V: {}", printed.display(&spec.conditions.vars));
    }
    Ok(())
}

fn cmd_variance(args: VarianceArgs) -> Result<(), CliError> {
    let cumulants = parse_key_values(&args.cumulants)?;
    let (scaled, plain) = plug_in_variance(&args.estimator, &cumulants, args.m)?;
    let mut w = RecordWriter::new(args.format);
    w.record(&[
        ("record".into(), "variance".into()),
        ("estimator".into(), args.estimator.clone()),
        ("m".into(), args.m.to_string()),
        ("scaled_variance".into(), fmt_f64(scaled)),
        ("variance".into(), fmt_f64(plain)),
    ]);
    w.finish();
    Ok(())
}

fn parse_experiment_estimators(tokens: &[String]) -> Result<Vec<ExperimentEstimator>, CliError> {
    tokens
        .iter()
        .map(|t| {
            if let Some((name, cols)) = t.split_once('@') {
                let columns = cols
                    .split(';')
                    .map(|c| {
                        c.parse::<usize>()
                            .map_err(|_| CliError::Usage(format!("bad column index {c:?} in {t:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ExperimentEstimator::with_columns(name, columns))
            } else {
                Ok(ExperimentEstimator::named(t))
            }
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let kind = match args.process {
        ProcessArg::Gaussian => ProcessKind::Gaussian {
            mean: args.mean,
            variance: args.variance,
            dim: args.dim,
            complex: args.complex,
        },
        ProcessArg::Poisson => ProcessKind::QuasiPoisson {
            lambda: args.lambda,
            dim: args.dim,
        },
    };
    let proc = ProcessSpec {
        kind,
        seed: args.seed,
    };
    let estimators = parse_experiment_estimators(&args.estimators)?;
    let mut w = RecordWriter::new(args.format);
    if !args.scan.is_empty() {
        if estimators.len() != 1 {
            return Err(CliError::Usage("--scan takes exactly one estimator".into()));
        }
        let scan = consistency_scan(&proc, &estimators[0], &args.scan, args.repeats)?;
        for (m, scaled) in scan {
            w.record(&[
                ("record".into(), "scan".into()),
                ("estimator".into(), estimators[0].name.clone()),
                ("m".into(), m.to_string()),
                ("scaled_variance".into(), fmt_f64(scaled)),
                ("variance".into(), fmt_f64(scaled / m as f64)),
            ]);
        }
        w.finish();
        return Ok(());
    }
    let report = run_experiment(&proc, &estimators, args.m, args.repeats)?;
    let theory = |name: &str| -> Option<f64> {
        if !args.theory {
            return None;
        }
        let cumulants = match args.process {
            ProcessArg::Poisson => quasi_poisson_cumulants(args.lambda),
            ProcessArg::Gaussian => {
                let mut map = BTreeMap::new();
                map.insert("C1".to_string(), args.mean);
                map.insert("C2".to_string(), args.variance);
                for k in 3..=8 {
                    map.insert(format!("C{k}"), 0.0);
                }
                map
            }
        };
        plug_in_variance(name, &cumulants, args.m as u64)
            .ok()
            .map(|(scaled, _)| scaled)
    };
    if args.emit_estimates {
        let limit = args.emit_count.unwrap_or(usize::MAX);
        for stat in &report.estimators {
            for (k, e) in stat.estimates.iter().take(limit).enumerate() {
                let mut fields = vec![
                    ("record".into(), "sample".into()),
                    ("estimator".into(), stat.name.clone()),
                    ("repeat".into(), k.to_string()),
                    ("value".into(), fmt_f64(e.re)),
                ];
                if e.im != 0.0 {
                    fields.push(("value_im".into(), fmt_f64(e.im)));
                }
                w.record(&fields);
            }
        }
    }
    for stat in &report.estimators {
        let mut fields = vec![
            ("record".into(), "summary".into()),
            ("estimator".into(), stat.name.clone()),
            ("m".into(), report.m.to_string()),
            ("repeats".into(), report.repeats.to_string()),
            ("seed".into(), report.seed.to_string()),
            ("mean".into(), fmt_f64(stat.mean.re)),
        ];
        if stat.mean.im != 0.0 {
            fields.push(("mean_im".into(), fmt_f64(stat.mean.im)));
        }
        fields.push(("stderr".into(), fmt_f64(stat.standard_error)));
        fields.push(("variance".into(), fmt_f64(stat.variance)));
        fields.push(("scaled_variance".into(), fmt_f64(stat.scaled_variance)));
        if let Some(t) = theory(&stat.name) {
            fields.push(("theory_scaled_variance".into(), fmt_f64(t)));
        }
        w.record(&fields);
    }
    w.finish();
    Ok(())
}

fn cmd_list(args: ListArgs) -> Result<(), CliError> {
    let mut w = RecordWriter::new(args.format);
    for entry in registry().entries() {
        let vars = &entry.spec.conditions.vars;
        let slots: Vec<&str> = entry
            .spec
            .conditions
            .slots
            .iter()
            .map(|&v| vars.name(v))
            .collect();
        w.record(&[
            ("record".into(), "estimator".into()),
            ("name".into(), entry.name.clone()),
            ("order".into(), entry.order.to_string()),
            ("row".into(), entry.table_row.clone()),
            ("slots".into(), slots.join(",")),
            ("conditions".into(), entry.describe_conditions()),
            ("min_m".into(), entry.spec.min_m.to_string()),
            ("gauss_optimal".into(), entry.gauss_optimal.to_string()),
        ]);
    }
    w.finish();
    Ok(())
}
