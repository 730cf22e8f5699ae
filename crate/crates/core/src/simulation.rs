//! Seedable random-process generators and the Monte Carlo harness.
//!
//! Every repeat draws from its own ChaCha stream derived from (seed,
//! repeat index), so experiments parallelize without losing bit
//! reproducibility: the report is a deterministic function of the
//! process spec, the sample count, and the repeat count.

use crate::error::{Error, Result};
use crate::estimators::{evaluate, registry, Column, RegistryEntry, SampleBatch};
use num::complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;

/// A random process to sample from.
#[derive(Clone, Debug)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub enum ProcessKind {
    /// Independent identically distributed Gaussian columns; complex
    /// columns have independent real and imaginary parts of variance/2
    /// each, so the total second moment <|a|^2> equals `variance`.
    Gaussian {
        mean: f64,
        variance: f64,
        dim: usize,
        complex: bool,
    },
    /// x = (h - lambda)/sqrt(lambda) with h Poisson(lambda): average-free
    /// with unit variance and skewness lambda^(-1/2).
    QuasiPoisson { lambda: f64, dim: usize },
    /// Independent concatenation of sub-processes.
    IndependentProduct(Vec<ProcessKind>),
    /// Finite-support sampling by inversion.
    Finite {
        support: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
}

impl ProcessKind {
    pub fn dim(&self) -> usize {
        match self {
            ProcessKind::Gaussian { dim, .. } | ProcessKind::QuasiPoisson { dim, .. } => *dim,
            ProcessKind::IndependentProduct(parts) => parts.iter().map(ProcessKind::dim).sum(),
            ProcessKind::Finite { support, .. } => support.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ProcessKind::Gaussian { variance, dim, .. } => {
                if *variance <= 0.0 || !variance.is_finite() {
                    return Err(Error::InvalidParameter(
                        "gaussian variance must be positive".into(),
                    ));
                }
                if *dim == 0 {
                    return Err(Error::InvalidParameter("dimension must be positive".into()));
                }
            }
            ProcessKind::QuasiPoisson { lambda, dim } => {
                if *lambda <= 0.0 || !lambda.is_finite() {
                    return Err(Error::InvalidParameter("lambda must be positive".into()));
                }
                if *dim == 0 {
                    return Err(Error::InvalidParameter("dimension must be positive".into()));
                }
            }
            ProcessKind::IndependentProduct(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidParameter("empty product process".into()));
                }
                for p in parts {
                    p.validate()?;
                }
            }
            ProcessKind::Finite { support, probs } => {
                if support.len() != probs.len() || support.is_empty() {
                    return Err(Error::InvalidParameter(
                        "support and probabilities must match and be nonempty".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if probs.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(
                        "probabilities must be nonnegative and sum to 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, m: usize, columns: &mut Vec<Column>) {
        match self {
            ProcessKind::Gaussian {
                mean,
                variance,
                dim,
                complex,
            } => {
                let sd = variance.sqrt();
                for _ in 0..*dim {
                    if *complex {
                        let part_sd = (variance / 2.0).sqrt();
                        let data: Vec<Complex64> = (0..m)
                            .map(|_| {
                                let re: f64 = rng.sample(StandardNormal);
                                let im: f64 = rng.sample(StandardNormal);
                                Complex64::new(mean + part_sd * re, part_sd * im)
                            })
                            .collect();
                        columns.push(Column::Complex(data));
                    } else {
                        let data: Vec<f64> = (0..m)
                            .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                            .collect();
                        columns.push(Column::Real(data));
                    }
                }
            }
            ProcessKind::QuasiPoisson { lambda, dim } => {
                let poisson = Poisson::new(*lambda).expect("validated lambda");
                let scale = lambda.sqrt().recip();
                for _ in 0..*dim {
                    let data: Vec<f64> = (0..m)
                        .map(|_| {
                            let h: f64 = rng.sample(poisson);
                            scale * (h - lambda)
                        })
                        .collect();
                    columns.push(Column::Real(data));
                }
            }
            ProcessKind::IndependentProduct(parts) => {
                for p in parts {
                    p.sample_into(rng, m, columns);
                }
            }
            ProcessKind::Finite { support, probs } => {
                let dim = support[0].len();
                let mut cumulative = Vec::with_capacity(probs.len());
                let mut acc = 0.0;
                for p in probs {
                    acc += p;
                    cumulative.push(acc);
                }
                let mut data: Vec<Vec<f64>> = vec![Vec::with_capacity(m); dim];
                for _ in 0..m {
                    let u: f64 = rng.gen();
                    let k = cumulative
                        .iter()
                        .position(|&c| u < c)
                        .unwrap_or(probs.len() - 1);
                    for (d, col) in data.iter_mut().enumerate() {
                        col.push(support[k][d]);
                    }
                }
                for col in data {
                    columns.push(Column::Real(col));
                }
            }
        }
    }
}

fn column_labels(dim: usize) -> Vec<String> {
    let canonical = ["x", "y", "z", "w"];
    (0..dim)
        .map(|i| {
            canonical
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("v{i}"))
        })
        .collect()
}

/// Draws a batch from the process; identical (spec, m) always produces
/// the identical batch.
pub fn sample(spec: &ProcessSpec, m: usize) -> Result<SampleBatch> {
    sample_stream(spec, m, 0)
}

/// Draws from the per-repeat stream `stream`.
pub fn sample_stream(spec: &ProcessSpec, m: usize, stream: u64) -> Result<SampleBatch> {
    spec.kind.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let mut columns = Vec::new();
    spec.kind.sample_into(&mut rng, m, &mut columns);
    SampleBatch::new(column_labels(columns.len()), columns)
}

/// An estimator to run in an experiment: a registry name plus the batch
/// columns bound to its variables.
#[derive(Clone, Debug)]
pub struct ExperimentEstimator {
    pub name: String,
    pub columns: Vec<usize>,
}

impl ExperimentEstimator {
    /// Binds the estimator's variables to the leading batch columns.
    pub fn named(name: &str) -> Self {
        ExperimentEstimator {
            name: name.to_string(),
            columns: Vec::new(),
        }
    }

    pub fn with_columns(name: &str, columns: Vec<usize>) -> Self {
        ExperimentEstimator {
            name: name.to_string(),
            columns,
        }
    }

    fn resolve(&self) -> Result<(&'static RegistryEntry, Vec<usize>)> {
        let entry = registry()
            .get(&self.name)
            .ok_or_else(|| Error::UnknownEstimator(self.name.clone()))?;
        let wanted = entry.binding_vars().len();
        let columns = if self.columns.is_empty() {
            (0..wanted).collect()
        } else {
            self.columns.clone()
        };
        if columns.len() != wanted {
            return Err(Error::BindingMismatch(format!(
                "{} expects {} column binding(s), got {}",
                self.name,
                wanted,
                columns.len()
            )));
        }
        Ok((entry, columns))
    }
}

/// Per-estimator scatter statistics over the repeats.
#[derive(Clone, Debug)]
pub struct EstimatorStats {
    pub name: String,
    pub estimates: Vec<Complex64>,
    pub mean: Complex64,
    /// Empirical variance of the estimates (Bessel corrected).
    pub variance: f64,
    /// m * variance, the scaled figure of merit.
    pub scaled_variance: f64,
    pub standard_error: f64,
    /// Theory overlay, when a plug-in value is supplied.
    pub theory_scaled_variance: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub m: usize,
    pub repeats: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorStats>,
}

/// Runs M independent repeats: each draws one batch from its own stream
/// and evaluates every estimator on that same batch. Repeats execute in
/// parallel; the report is assembled in repeat order.
pub fn run_experiment(
    proc: &ProcessSpec,
    estimators: &[ExperimentEstimator],
    m: usize,
    repeats: usize,
) -> Result<ExperimentReport> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be positive".into()));
    }
    let resolved: Vec<(&'static RegistryEntry, Vec<usize>)> = estimators
        .iter()
        .map(ExperimentEstimator::resolve)
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<Complex64>> = (0..repeats)
        .into_par_iter()
        .map(|k| -> Result<Vec<Complex64>> {
            let batch = sample_stream(proc, m, k as u64 + 1)?;
            let mut row = Vec::with_capacity(resolved.len());
            for (entry, columns) in &resolved {
                row.push(evaluate(&entry.spec, &batch, columns)?.as_complex());
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut stats = Vec::with_capacity(resolved.len());
    for (idx, est) in estimators.iter().enumerate() {
        let estimates: Vec<Complex64> = rows.iter().map(|r| r[idx]).collect();
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<Complex64>() / n;
        let variance = if estimates.len() > 1 {
            estimates.iter().map(|e| (e - mean).norm_sqr()).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        stats.push(EstimatorStats {
            name: est.name.clone(),
            mean,
            variance,
            scaled_variance: variance * m as f64,
            standard_error: (variance / n).sqrt(),
            theory_scaled_variance: None,
            estimates,
        });
    }
    Ok(ExperimentReport {
        m,
        repeats,
        seed: proc.seed,
        estimators: stats,
    })
}

/// Scaled variances across a sample-count grid; the raw variance must
/// decay like 1/m for a consistent estimator.
pub fn consistency_scan(
    proc: &ProcessSpec,
    estimator: &ExperimentEstimator,
    m_grid: &[usize],
    repeats: usize,
) -> Result<Vec<(usize, f64)>> {
    if m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "sample-count grid must be strictly ascending".into(),
        ));
    }
    let mut out = Vec::with_capacity(m_grid.len());
    for (i, &m) in m_grid.iter().enumerate() {
        // Separate seeds per grid point keep the scans independent.
        let proc_i = ProcessSpec {
            kind: proc.kind.clone(),
            seed: proc.seed.wrapping_add(i as u64),
        };
        let report = run_experiment(&proc_i, std::slice::from_ref(estimator), m, repeats)?;
        out.push((m, report.estimators[0].scaled_variance));
    }
    Ok(out)
}

/// Relative 1-sigma error of an empirical variance estimate from M
/// near-Gaussian samples.
pub fn variance_relative_error(repeats: usize) -> f64 {
    (2.0 / repeats as f64).sqrt()
}
