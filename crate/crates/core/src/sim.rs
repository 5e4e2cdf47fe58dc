//! Simulation study comparing CIBP and IBP factor-count estimates as the
//! dimension grows.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta_math::CibpParams;
use crate::error::{Error, Result};
use crate::factor::{run_chain, AllocationPrior, Dataset, FactorPrior};
use crate::ibp::IbpParams;
use crate::rng::{label_id, RngStream};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub iters: usize,
    pub burn_in: usize,
}

/// JSON schema (all fields required):
///
/// ```json
/// {
///   "version": 1,
///   "p_grid": [50, 100, 200],
///   "n": 50, "k_true": 4, "nonzero_rows": 10, "replications": 5,
///   "prior_cibp": {"allocation": {"kind": "cibp", "gamma": 1, "alpha": 10, "kappa": 10}, "tau": 4, "a": 1, "b": 1},
///   "prior_ibp":  {"allocation": {"kind": "ibp", "omega": 1, "kappa": 10}, "tau": 4, "a": 1, "b": 1},
///   "mcmc": {"iters": 2000, "burn_in": 500},
///   "seed": 20240601
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub p_grid: Vec<usize>,
    pub n: usize,
    pub k_true: usize,
    pub nonzero_rows: usize,
    pub replications: usize,
    pub prior_cibp: FactorPrior,
    pub prior_ibp: FactorPrior,
    pub mcmc: McmcSettings,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Grid {50, 100, 200}, 5 replications, 2000 sweeps with 500 burn-in.
    pub fn desk() -> Self {
        let (tau, a, b) = (4.0, 1.0, 1.0);
        Self {
            version: CONFIG_VERSION,
            p_grid: vec![50, 100, 200],
            n: 50,
            k_true: 4,
            nonzero_rows: 10,
            replications: 5,
            prior_cibp: FactorPrior {
                allocation: AllocationPrior::Cibp(CibpParams { gamma: 1.0, alpha: 10.0, kappa: 10.0 }),
                tau,
                a,
                b,
            },
            prior_ibp: FactorPrior { allocation: AllocationPrior::Ibp(IbpParams { omega: 1.0, kappa: 10.0 }), tau, a, b },
            mcmc: McmcSettings { iters: 2000, burn_in: 500 },
            seed: 20240601,
        }
    }

    /// Grid {50, 100, …, 300} with 100 replications.
    pub fn full_scale() -> Self {
        Self { p_grid: (1..=6).map(|i| 50 * i).collect(), replications: 100, ..Self::desk() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version)));
        }
        if self.p_grid.is_empty() || self.p_grid.contains(&0) {
            return Err(Error::Config("p_grid must be a nonempty list of positive dimensions".into()));
        }
        for (name, v) in [("n", self.n), ("k_true", self.k_true), ("replications", self.replications)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let min_p = *self.p_grid.iter().min().unwrap();
        if self.nonzero_rows > min_p {
            return Err(Error::Config(format!("nonzero_rows {} exceeds smallest p {min_p}", self.nonzero_rows)));
        }
        if !matches!(self.prior_cibp.allocation, AllocationPrior::Cibp(_)) {
            return Err(Error::Config("prior_cibp.allocation must have kind \"cibp\"".into()));
        }
        if !matches!(self.prior_ibp.allocation, AllocationPrior::Ibp(_)) {
            return Err(Error::Config("prior_ibp.allocation must have kind \"ibp\"".into()));
        }
        self.prior_cibp.validate().map_err(|e| Error::Config(format!("prior_cibp: {e}")))?;
        self.prior_ibp.validate().map_err(|e| Error::Config(format!("prior_ibp: {e}")))?;
        if self.mcmc.iters == 0 || self.mcmc.burn_in >= self.mcmc.iters {
            return Err(Error::Config(format!(
                "need 0 <= burn_in < iters, got burn_in={}, iters={}",
                self.mcmc.burn_in, self.mcmc.iters
            )));
        }
        Ok(())
    }
}

/// Synthetic data set and the loadings that generated it.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub data: Dataset,
    pub loadings: DMatrix<f64>,
}

/// `nonzero_rows` distinct rows of a `p × k_true` loading matrix get iid
/// entries from Uniform((−3,−2) ∪ (2,3)); then `n` observations
/// `Y_i = B₀ z_i + ε_i` with `z_i ~ N(0, I)`, `ε_i ~ N(0, I)`, i.e.
/// `Y_i ~ N(0, B₀B₀ᵀ + I)`.
pub fn generate_synthetic<R: Rng + ?Sized>(
    p: usize,
    n: usize,
    k_true: usize,
    nonzero_rows: usize,
    rng: &mut R,
) -> Result<Synthetic> {
    if nonzero_rows > p {
        return Err(Error::Config(format!("nonzero_rows {nonzero_rows} exceeds p {p}")));
    }
    if n == 0 || p == 0 {
        return Err(Error::Config("n and p must be positive".into()));
    }
    let mut rows: Vec<usize> = sample_indices(rng, p, nonzero_rows).into_vec();
    rows.sort_unstable();
    let mut b0 = DMatrix::zeros(p, k_true);
    for &j in &rows {
        for k in 0..k_true {
            let magnitude = 2.0 + rng.random::<f64>();
            b0[(j, k)] = if rng.random::<bool>() { magnitude } else { -magnitude };
        }
    }
    let z: DMatrix<f64> = DMatrix::from_fn(n, k_true, |_, _| StandardNormal.sample(rng));
    let noise: DMatrix<f64> = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng));
    let y = z * b0.transpose() + noise;
    Ok(Synthetic { data: Dataset::new(y)?, loadings: b0 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub p: usize,
    pub replication: usize,
    pub prior: String,
    pub mean_kplus: f64,
    pub mean_sigma2: f64,
    /// Seconds; kept out of `records.csv` so that file is reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbortedCell {
    pub p: usize,
    pub replication: usize,
    pub prior: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub p: usize,
    pub prior: String,
    pub mean_kplus: f64,
    /// Standard error of the mean across cells; 0 with a single cell.
    pub se: f64,
    pub cells: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub aborted: Vec<AbortedCell>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentResult {
    /// `p,replication,prior,mean_kplus,mean_sigma2`.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("p,replication,prior,mean_kplus,mean_sigma2\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{},{}", r.p, r.replication, r.prior, r.mean_kplus, r.mean_sigma2).unwrap();
        }
        out
    }

    /// `p,prior,mean_kplus,se,cells`.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("p,prior,mean_kplus,se,cells\n");
        for a in &self.aggregates {
            writeln!(out, "{},{},{},{},{}", a.p, a.prior, a.mean_kplus, a.se, a.cells).unwrap();
        }
        out
    }

    pub fn aggregate(&self, p: usize, prior: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.p == p && a.prior == prior)
    }
}

/// Stream for the data of cell `(p, replication)`; shared by both priors so
/// they see the same data set.
pub fn data_stream(seed: u64, p: usize, replication: usize) -> RngStream {
    RngStream::new(seed, 0).substream(&[label_id("data"), p as u64, replication as u64])
}

/// Stream for the chain of cell `(p, replication, prior)`.
pub fn chain_stream(seed: u64, p: usize, replication: usize, prior: &str) -> RngStream {
    RngStream::new(seed, 0).substream(&[label_id("chain"), p as u64, replication as u64, label_id(prior)])
}

/// Runs one cell: generates its data set and the chain for one prior.
pub fn run_cell(config: &ExperimentConfig, p: usize, replication: usize, prior: &FactorPrior) -> Result<RunRecord> {
    let start = Instant::now();
    let label = prior.allocation.label();
    let mut data_rng = data_stream(config.seed, p, replication).rng();
    let synth = generate_synthetic(p, config.n, config.k_true, config.nonzero_rows, &mut data_rng)?;
    let trace = run_chain(
        &synth.data,
        prior,
        config.mcmc.iters,
        config.mcmc.burn_in,
        chain_stream(config.seed, p, replication, label),
    )?;
    Ok(RunRecord {
        p,
        replication,
        prior: label.to_string(),
        mean_kplus: trace.mean_kplus(),
        mean_sigma2: trace.mean_sigma2(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Runs every `(p, replication, prior)` cell on up to `jobs` threads
/// (`None` = all logical cores). Output depends only on `config`.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResult> {
    config.validate()?;
    let mut grid = config.p_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let priors = [config.prior_cibp, config.prior_ibp];
    let mut cells: Vec<(usize, usize, FactorPrior)> = Vec::new();
    for &p in &grid {
        for r in 0..config.replications {
            cells.extend(priors.iter().map(|pr| (p, r, *pr)));
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<RunRecord>> =
        pool.install(|| cells.par_iter().map(|(p, r, prior)| run_cell(config, *p, *r, prior)).collect());

    let mut records = Vec::new();
    let mut aborted = Vec::new();
    for ((p, r, prior), outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => aborted.push(AbortedCell {
                p: *p,
                replication: *r,
                prior: prior.allocation.label().to_string(),
                reason: e.to_string(),
            }),
        }
    }

    let mut aggregates = Vec::new();
    for &p in &grid {
        for prior in &priors {
            let label = prior.allocation.label();
            let vals: Vec<f64> =
                records.iter().filter(|r| r.p == p && r.prior == label).map(|r| r.mean_kplus).collect();
            if vals.is_empty() {
                continue;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let se = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            aggregates.push(AggregateRow { p, prior: label.to_string(), mean_kplus: mean, se, cells: vals.len() });
        }
    }
    Ok(ExperimentResult { records, aborted, aggregates })
}
