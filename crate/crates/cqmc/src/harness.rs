//! Experiment runner: assembles sampler, path construction, optional
//! conditioning and rotation, then runs replicated error studies and
//! fits convergence slopes.
//!
//! Determinism contract: every replicate derives its own seed from
//! `(master seed, replicate index)` before any work is distributed, and
//! replicate results are reduced in index order. Reports are therefore
//! byte-identical for a fixed config regardless of worker-thread count.

use thiserror::Error;

use crate::anova::{AnovaError, AnovaTermSet};
use crate::lds::{DigitalNet, LdsError, ScrambleSeed, ScrambledNet, COORD_MIN, MAX_LOG2_POINTS};
use crate::normal;
use crate::path::{Construction, GeneratingMatrix, MarketParams, PathError};
use crate::payoff::{Example, IntegrandSpec};
use crate::reduce::{self, TransformedIntegrand};
use crate::report::{ConvergenceReport, ConvergenceRow, ReportError};
use crate::rng::{derive, SplitMix64};
use crate::smooth::{Method, PreintegratedIntegrand, SmoothError};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("replicate produced a non-finite estimate at point index {index}")]
    NonFiniteEstimate { index: u64 },
    #[error("reference cross-check failed: cqmc {cqmc} vs quadrature {quadrature} (allowance {allowance})")]
    ReferenceCrossCheck {
        cqmc: f64,
        quadrature: f64,
        allowance: f64,
    },
    #[error(transparent)]
    Lds(#[from] LdsError),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("anova oracle: {0}")]
    Anova(String),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl From<AnovaError> for HarnessError {
    fn from(e: AnovaError) -> Self {
        HarnessError::Anova(e.to_string())
    }
}

/// Point source for a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// IID uniforms (the Monte Carlo baseline).
    Mc,
    /// Scrambled Sobol' nets.
    Rqmc,
}

impl std::str::FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mc" => Ok(SamplerKind::Mc),
            "rqmc" => Ok(SamplerKind::Rqmc),
            other => Err(format!("unknown sampler {other:?} (expected mc | rqmc)")),
        }
    }
}

/// Whether and where to condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    None,
    /// Condition on the given column (0-based).
    Conditioned(usize),
}

impl Smoothing {
    /// Parses the CLI vocabulary `none | cond:first | cond:last | cond:<j>`
    /// where `<j>` is 1-based.
    pub fn parse(s: &str, dim: usize) -> Result<Self, String> {
        match s {
            "none" => Ok(Smoothing::None),
            "cond:first" => Ok(Smoothing::Conditioned(0)),
            "cond:last" => Ok(Smoothing::Conditioned(dim - 1)),
            other => {
                let j: usize = other
                    .strip_prefix("cond:")
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| {
                        format!("unknown smoothing {other:?} (expected none | cond:<j> | cond:first | cond:last)")
                    })?;
                if j == 0 || j > dim {
                    return Err(format!("cond:{j} out of range for d = {dim} (columns are 1-based)"));
                }
                Ok(Smoothing::Conditioned(j - 1))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    None,
    Gpca,
}

impl std::str::FromStr for ReduceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ReduceKind::None),
            "gpca" => Ok(ReduceKind::Gpca),
            other => Err(format!("unknown reduction {other:?} (expected none | gpca)")),
        }
    }
}

/// Replicate scheduling. `Parallel` falls back to sequential execution
/// when the crate is built without the `parallel` feature; results are
/// identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

/// Where the study's reference value comes from.
#[derive(Debug, Clone)]
pub enum ReferenceSpec {
    /// Compute it: a high-n conditioned RQMC run, quadrature
    /// cross-checked when the dimension permits.
    Auto,
    /// Use a precomputed value (shared across method comparisons, or an
    /// external closed form).
    Fixed { value: f64, provenance: String },
}

/// Full description of one convergence study.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub example: Example,
    pub params: MarketParams,
    pub construction: Construction,
    pub smoothing: Smoothing,
    pub reduce: ReduceKind,
    pub sampler: SamplerKind,
    /// log2 sample sizes, ascending.
    pub n_exponents: Vec<u32>,
    pub replicates: usize,
    pub master_seed: u64,
    pub execution: Execution,
    pub reference: ReferenceSpec,
}

impl ExperimentConfig {
    /// The full benchmark profile: n = 2^8..2^18, 200 replicates,
    /// conditioned RQMC on the standard construction.
    pub fn full_profile(example: Example, dates: usize) -> Self {
        Self {
            example,
            params: MarketParams::benchmark(dates),
            construction: Construction::Standard,
            smoothing: Smoothing::Conditioned(0),
            reduce: ReduceKind::None,
            sampler: SamplerKind::Rqmc,
            n_exponents: (8..=18).collect(),
            replicates: 200,
            master_seed: 20_240_601,
            execution: Execution::Parallel,
            reference: ReferenceSpec::Auto,
        }
    }

    /// Desk-scale profile for CI and quick experiments: n up to 2^14,
    /// 50 replicates.
    pub fn desk(example: Example, dates: usize) -> Self {
        Self {
            n_exponents: (8..=14).collect(),
            replicates: 50,
            ..Self::full_profile(example, dates)
        }
    }

    pub fn dim(&self) -> usize {
        self.params.dates
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.n_exponents.is_empty() {
            return Err(HarnessError::InvalidConfig("empty n-exponent list".into()));
        }
        if let Some(&m) = self.n_exponents.iter().find(|&&m| m > MAX_LOG2_POINTS) {
            return Err(HarnessError::InvalidConfig(format!(
                "n exponent {m} exceeds the supported maximum {MAX_LOG2_POINTS}"
            )));
        }
        if self.replicates < 2 {
            return Err(HarnessError::InvalidConfig(
                "need at least 2 replicates".into(),
            ));
        }
        if self.reduce == ReduceKind::Gpca && self.smoothing == Smoothing::None {
            return Err(HarnessError::InvalidConfig(
                "gpca reduction applies to the conditioned integrand; use a cond:* smoothing".into(),
            ));
        }
        if let Smoothing::Conditioned(j) = self.smoothing {
            if j >= self.dim() {
                return Err(HarnessError::InvalidConfig(format!(
                    "conditioning column {j} out of range for d = {}",
                    self.dim()
                )));
            }
        }
        Ok(())
    }
}

/// An integrand over x-space (already mapped through the inverse CDF).
pub trait Integrand: Sync {
    /// Sampling dimension (may be zero for fully conditioned cases).
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<f64, HarnessError>;
}

struct RawIntegrand {
    spec: IntegrandSpec,
}

impl Integrand for RawIntegrand {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, HarnessError> {
        Ok(self.spec.f(x))
    }
}

struct ConditionedIntegrand {
    pint: PreintegratedIntegrand,
}

impl Integrand for ConditionedIntegrand {
    fn dim(&self) -> usize {
        self.pint.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, HarnessError> {
        Ok(self.pint.eval(x)?)
    }
}

struct RotatedIntegrand {
    inner: TransformedIntegrand,
}

impl Integrand for RotatedIntegrand {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, HarnessError> {
        Ok(self.inner.eval(x)?)
    }
}

/// Seed-stream tags, mixed into the master seed so that the point sets
/// used for different purposes never collide.
const STREAM_REFERENCE: u64 = 0x5245_4631; // "REF1"
const STREAM_GPCA: u64 = 0x4750_4341; // "GPCA"
/// Gradient sample budget for the GPCA transform.
const GPCA_SAMPLES: usize = 256;

/// Builds the integrand pipeline for a config: payoff spec, optional
/// conditioning, optional rotation.
pub fn build_integrand(cfg: &ExperimentConfig) -> Result<Box<dyn Integrand>, HarnessError> {
    cfg.validate()?;
    let matrix = GeneratingMatrix::build(cfg.construction, &cfg.params);
    let spec = IntegrandSpec::new(cfg.example, cfg.params, matrix);
    match cfg.smoothing {
        Smoothing::None => Ok(Box::new(RawIntegrand { spec })),
        Smoothing::Conditioned(j) => {
            let pint = PreintegratedIntegrand::new(spec, j, Method::Analytic)?;
            match cfg.reduce {
                ReduceKind::None => Ok(Box::new(ConditionedIntegrand { pint })),
                ReduceKind::Gpca => {
                    let seed = ScrambleSeed::new(cfg.master_seed, 0).substream(STREAM_GPCA);
                    let transform = reduce::gpca_transform(&pint, GPCA_SAMPLES.max(cfg.dim()), seed)?;
                    Ok(Box::new(RotatedIntegrand {
                        inner: reduce::apply(pint, transform),
                    }))
                }
            }
        }
    }
}

/// Mean of the integrand over 2^m sampler points mapped through the
/// inverse normal CDF.
pub fn estimate(
    integrand: &dyn Integrand,
    sampler: SamplerKind,
    m: u32,
    seed: ScrambleSeed,
) -> Result<f64, HarnessError> {
    if m > MAX_LOG2_POINTS {
        return Err(HarnessError::InvalidConfig(format!(
            "n exponent {m} exceeds the supported maximum {MAX_LOG2_POINTS}"
        )));
    }
    let s = integrand.dim();
    if s == 0 {
        // Fully conditioned: the estimator is a constant.
        return integrand.eval(&[]);
    }
    let n = 1u64 << m;
    let mut u = vec![0.0; s];
    let mut x = vec![0.0; s];

    // Neumaier-compensated accumulation keeps the sum independent of
    // rounding order concerns at large n.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let add = |v: f64, sum: &mut f64, comp: &mut f64| {
        let t = *sum + v;
        if sum.abs() >= v.abs() {
            *comp += (*sum - t) + v;
        } else {
            *comp += (v - t) + *sum;
        }
        *sum = t;
    };

    match sampler {
        SamplerKind::Rqmc => {
            let net = base_net(s)?;
            let scrambled = ScrambledNet::new(&net, seed);
            let mut stream = scrambled.stream();
            for i in 0..n {
                stream.next_into(&mut u);
                for (xk, uk) in x.iter_mut().zip(&u) {
                    *xk = normal::inv_cdf(*uk);
                }
                let v = integrand.eval(&x)?;
                if !v.is_finite() {
                    return Err(HarnessError::NonFiniteEstimate { index: i });
                }
                add(v, &mut sum, &mut comp);
            }
        }
        SamplerKind::Mc => {
            let mut rng = SplitMix64::new(derive(seed.master, seed.replicate));
            for i in 0..n {
                for xk in x.iter_mut() {
                    let uk = rng.next_f64().clamp(COORD_MIN, 1.0 - COORD_MIN);
                    *xk = normal::inv_cdf(uk);
                }
                let v = integrand.eval(&x)?;
                if !v.is_finite() {
                    return Err(HarnessError::NonFiniteEstimate { index: i });
                }
                add(v, &mut sum, &mut comp);
            }
        }
    }
    Ok((sum + comp) / n as f64)
}

fn base_net(dim: usize) -> Result<DigitalNet, LdsError> {
    use std::sync::OnceLock;
    static FULL: OnceLock<DigitalNet> = OnceLock::new();
    FULL.get_or_init(|| DigitalNet::new(crate::lds::MAX_DIMENSION).expect("bundled table parses"))
        .prefix(dim)
}

/// Runs `count` jobs, optionally in parallel, collecting results in
/// index order.
fn map_indexed<T, F>(count: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution == Execution::Parallel {
        return (0..count).into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = execution;
    (0..count).map(f).collect()
}

/// Replicated error rows against a fixed reference, one row per sample
/// size. Shared by the main convergence studies and the ANOVA term-rate
/// studies.
pub fn error_study(
    integrand: &dyn Integrand,
    sampler: SamplerKind,
    n_exponents: &[u32],
    replicates: usize,
    master_seed: u64,
    reference: f64,
    execution: Execution,
) -> Result<Vec<ConvergenceRow>, HarnessError> {
    let mut rows = Vec::with_capacity(n_exponents.len());
    for &m in n_exponents {
        let estimates: Vec<Result<f64, HarnessError>> = map_indexed(replicates, execution, |r| {
            let seed = ScrambleSeed::new(master_seed, r as u64).substream(m as u64);
            estimate(integrand, sampler, m, seed)
        });
        let mut errors = Vec::with_capacity(replicates);
        for e in estimates {
            errors.push((e? - reference).abs());
        }
        rows.push(summarize(1u64 << m, &errors));
    }
    Ok(rows)
}

fn summarize(n: u64, errors: &[f64]) -> ConvergenceRow {
    let r = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / r;
    let msq = errors.iter().map(|e| e * e).sum::<f64>() / r;
    let var = (msq - mean * mean).max(0.0);
    ConvergenceRow {
        n,
        mean_abs_error: mean,
        rmse: msq.sqrt(),
        std_err: (var / r).sqrt(),
    }
}

/// A study's ground truth and how it was obtained.
#[derive(Debug, Clone)]
pub struct Reference {
    pub value: f64,
    pub std_err: f64,
    pub provenance: String,
}

/// Sample size exponent and replicate count for reference runs.
const REFERENCE_EXPONENT: u32 = 20;
const REFERENCE_REPLICATES: usize = 32;

/// High-accuracy reference for a config: conditioned RQMC with a GPCA
/// rotation on the standard construction at n = 2^20 over 32
/// replicates, cross-checked against the tensor-quadrature oracle when
/// d <= 3. The rotation costs little and pushes the reference noise two
/// orders of magnitude below the plain conditioned run at larger d,
/// keeping the reference floor out of every method's error curve.
pub fn reference_value(cfg: &ExperimentConfig) -> Result<Reference, HarnessError> {
    let matrix = GeneratingMatrix::standard(&cfg.params);
    let spec = IntegrandSpec::new(cfg.example, cfg.params, matrix);
    let pint = PreintegratedIntegrand::new(spec.clone(), 0, Method::Analytic)?;
    let integrand: Box<dyn Integrand> = if pint.dim() >= 2 {
        let seed = ScrambleSeed::new(cfg.master_seed, 0)
            .substream(STREAM_REFERENCE)
            .substream(STREAM_GPCA);
        let transform = reduce::gpca_transform(&pint, GPCA_SAMPLES, seed)?;
        Box::new(RotatedIntegrand {
            inner: reduce::apply(pint, transform),
        })
    } else {
        Box::new(ConditionedIntegrand { pint })
    };
    let integrand = integrand.as_ref();

    let estimates: Vec<Result<f64, HarnessError>> =
        map_indexed(REFERENCE_REPLICATES, cfg.execution, |r| {
            let seed = ScrambleSeed::new(cfg.master_seed, r as u64).substream(STREAM_REFERENCE);
            estimate(integrand, SamplerKind::Rqmc, REFERENCE_EXPONENT, seed)
        });
    let mut values = Vec::with_capacity(REFERENCE_REPLICATES);
    for e in estimates {
        values.push(e?);
    }
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let std_err = (var / r).sqrt();

    let mut provenance = format!(
        "cqmc+gpca standard cond:first, n=2^{REFERENCE_EXPONENT}, {REFERENCE_REPLICATES} replicates"
    );
    if cfg.dim() <= 3 {
        let oracle = AnovaTermSet::new(spec)?;
        let quadrature = oracle.integral()?;
        // The fully conditioned d = 1 estimator is deterministic
        // (std_err = 0); the floor covers the oracle's own error.
        let allowance = 5.0 * std_err + 1e-7 * (1.0 + mean.abs());
        if (mean - quadrature).abs() > allowance {
            return Err(HarnessError::ReferenceCrossCheck {
                cqmc: mean,
                quadrature,
                allowance,
            });
        }
        provenance.push_str(", quadrature cross-checked");
    }
    Ok(Reference {
        value: mean,
        std_err,
        provenance,
    })
}

/// Runs the full replicated study described by `cfg`.
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    cfg.validate()?;
    let reference = match &cfg.reference {
        ReferenceSpec::Auto => reference_value(cfg)?,
        ReferenceSpec::Fixed { value, provenance } => Reference {
            value: *value,
            std_err: 0.0,
            provenance: provenance.clone(),
        },
    };
    let integrand = build_integrand(cfg)?;
    let rows = error_study(
        integrand.as_ref(),
        cfg.sampler,
        &cfg.n_exponents,
        cfg.replicates,
        cfg.master_seed,
        reference.value,
        cfg.execution,
    )?;
    Ok(ConvergenceReport::from_rows(
        rows,
        reference.value,
        reference.provenance,
    ))
}
