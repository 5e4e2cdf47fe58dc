//! Spike-and-slab sparse factor model with a CIBP (or IBP) prior on the
//! loading sparsity pattern.
//!
//! ```text
//! Y_i | Z_i ~ N_p(B Z_i, σ² I),   Z_i ~ N_K(0, I)
//! β_jk | ξ_jk ~ (1 − ξ_jk) δ₀ + ξ_jk N(0, τ)
//! Ξ ~ CIBP(γ, α, κ),   σ² ~ IG(a, b)
//! ```

mod chain;
mod kernels;

use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::beta_math::CibpParams;
use crate::error::{Error, Result};
use crate::ibp::IbpParams;
use crate::matrix::FeatureMatrix;

pub use chain::{run_chain, run_chain_from, ChainTrace, TraceRecord};
pub use kernels::{
    gibbs_beta, gibbs_sigma2, gibbs_xi_existing, gibbs_xi_prior_only, gibbs_z, mh_log_acceptance, mh_new_features,
    mh_new_features_row, prune_zero_columns, slab_conditional, xi_inclusion_probability, MhOutcome,
};

/// Prior on the binary sparsity pattern.
///
/// The IBP variant plugs the `alpha → 0` limits into the same kernels:
/// existing-feature odds `m/(kappa + p − m)` and new-feature rate
/// `omega·kappa/(p + kappa)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AllocationPrior {
    Cibp(CibpParams),
    Ibp(IbpParams),
}

impl AllocationPrior {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Cibp(c) => c.validate(),
            Self::Ibp(i) => i.validate(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Cibp(_) => "CIBP",
            Self::Ibp(_) => "IBP",
        }
    }

    /// Prior log-odds that row `j` holds an existing feature that `m` of the
    /// other `p − 1` rows hold, treating `j` as the last customer.
    pub fn existing_log_odds(&self, m: usize, p: usize) -> f64 {
        let (m, p) = (m as f64, p as f64);
        match self {
            Self::Cibp(c) => (m + c.alpha).ln() - (c.kappa + p - m).ln(),
            Self::Ibp(i) => m.ln() - (i.kappa + p - m).ln(),
        }
    }

    /// Log Poisson rate of features new to the last of `p` customers.
    pub fn log_new_feature_rate(&self, p: usize) -> f64 {
        match self {
            Self::Cibp(c) => c.gamma.ln() + c.log_bbar(1.0, (p - 1) as f64),
            Self::Ibp(i) => (i.omega * i.kappa / (p as f64 + i.kappa)).ln(),
        }
    }
}

/// Full prior: pattern prior, slab variance `tau`, and IG(`a`, `b`) on σ²
/// (density ∝ x^{−a−1} e^{−b/x}).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorPrior {
    pub allocation: AllocationPrior,
    pub tau: f64,
    pub a: f64,
    pub b: f64,
}

impl FactorPrior {
    pub fn new(allocation: AllocationPrior, tau: f64, a: f64, b: f64) -> Result<Self> {
        let prior = Self { allocation, tau, a, b };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        self.allocation.validate()?;
        for (name, v) in [("tau", self.tau), ("a", self.a), ("b", self.b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Observations, one sample per row (`n × p`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::Structure(format!("dataset must be nonempty, got {}×{}", y.nrows(), y.ncols())));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite observation at flat index {pos}")));
        }
        Ok(Self { y })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    /// Reads comma-separated numbers, one sample per line. With `header`
    /// the first line is skipped.
    pub fn from_csv<R: Read>(reader: R, header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(header).trim(csv::Trim::All).from_reader(reader);
        let mut values = Vec::new();
        let mut width = None;
        let mut rows = 0;
        for (idx, record) in rdr.records().enumerate() {
            let line = idx + 1 + header as usize;
            let record = record.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if width.is_some_and(|w| w != record.len()) {
                return Err(Error::Parse { line, message: format!("expected {} fields, found {}", width.unwrap(), record.len()) });
            }
            width = Some(record.len());
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse { line, message: format!("not a number: {field:?}") })?;
                values.push(v);
            }
            rows += 1;
        }
        let cols = width.unwrap_or(0);
        Self::new(DMatrix::from_row_slice(rows, cols, &values))
    }
}

/// MCMC state: loadings `B` (p × K⁺) with sparsity pattern `Ξ`, latent
/// factors `Z` (n × K⁺), and noise variance σ².
#[derive(Clone, Debug, PartialEq)]
pub struct FactorState {
    pub loadings: DMatrix<f64>,
    pub pattern: FeatureMatrix,
    pub factors: DMatrix<f64>,
    pub sigma2: f64,
}

impl FactorState {
    /// No features and σ² at the mean squared observation.
    pub fn initial(data: &Dataset) -> Self {
        let sigma2 = (data.y.iter().map(|v| v * v).sum::<f64>() / data.y.len() as f64).max(1e-6);
        Self::empty(data.n(), data.p(), sigma2)
    }

    pub fn empty(n: usize, p: usize, sigma2: f64) -> Self {
        Self {
            loadings: DMatrix::zeros(p, 0),
            pattern: FeatureMatrix::zeros(p, 0),
            factors: DMatrix::zeros(n, 0),
            sigma2,
        }
    }

    pub fn k_plus(&self) -> usize {
        self.pattern.ncols()
    }

    /// Checks shapes, the spike constraint `ξ = 0 ⇔ β = 0`, and σ² > 0.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        let k = self.pattern.ncols();
        if self.loadings.shape() != (data.p(), k)
            || self.factors.shape() != (data.n(), k)
            || self.pattern.rows() != data.p()
        {
            return Err(Error::Structure(format!(
                "inconsistent shapes: B {:?}, Z {:?}, Xi {}×{}, data {}×{}",
                self.loadings.shape(),
                self.factors.shape(),
                self.pattern.rows(),
                k,
                data.n(),
                data.p()
            )));
        }
        for kk in 0..k {
            for j in 0..data.p() {
                if self.pattern.get(j, kk) != (self.loadings[(j, kk)] != 0.0) {
                    return Err(Error::Structure(format!("spike constraint violated at ({j}, {kk})")));
                }
            }
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Numerical(format!("sigma2 = {}", self.sigma2)));
        }
        Ok(())
    }

    /// `Y − Z Bᵀ` (n × p).
    pub fn residuals(&self, data: &Dataset) -> DMatrix<f64> {
        let mut r = data.y.clone();
        if self.k_plus() > 0 {
            r.gemm(-1.0, &self.factors, &self.loadings.transpose(), 1.0);
        }
        r
    }

    /// Gaussian log-likelihood of the data given `B`, `Z`, σ².
    pub fn log_likelihood(&self, data: &Dataset) -> f64 {
        let r = self.residuals(data);
        let count = r.len() as f64;
        -0.5 * count * (2.0 * std::f64::consts::PI * self.sigma2).ln() - 0.5 * r.norm_squared() / self.sigma2
    }
}
