//! Two-parameter Indian buffet process, the baseline the convergent process
//! is compared against and converges to as `alpha → 0` with
//! `gamma·alpha/kappa → omega`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beta_math::{new_dish_rate, CibpParams};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::sample_poisson;

/// Mass `omega > 0` and concentration `kappa ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpParams {
    pub omega: f64,
    pub kappa: f64,
}

impl IbpParams {
    pub fn new(omega: f64, kappa: f64) -> Result<Self> {
        let params = Self { omega, kappa };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Rate of new dishes for customer `j` (1-based): `omega` for the first,
    /// `omega·kappa/(j + kappa)` afterwards.
    pub fn new_dish_rate(&self, j: usize) -> f64 {
        if j <= 1 {
            self.omega
        } else {
            self.omega * self.kappa / (j as f64 + self.kappa)
        }
    }

    /// `m/(j + kappa)`.
    pub fn inclusion_probability(&self, m: usize, j: usize) -> f64 {
        m as f64 / (j as f64 + self.kappa)
    }

    /// `E[K⁺] = omega (1 + Σ_{j=2..p} kappa/(j + kappa))`; unbounded in `p`
    /// for `kappa > 0`.
    pub fn expected_kplus(&self, p: usize) -> f64 {
        (1..=p).map(|j| self.new_dish_rate(j)).sum()
    }
}

/// Restaurant-analogy draw from IBP(`omega`, `kappa`) with `p` customers.
pub fn sample_ibp<R: Rng + ?Sized>(params: &IbpParams, p: usize, rng: &mut R) -> Result<FeatureMatrix> {
    params.validate()?;
    let words = p.div_ceil(64);
    let mut columns: Vec<Vec<u64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for j in 1..=p {
        let (word, bit) = ((j - 1) / 64, 1u64 << ((j - 1) % 64));
        if j > 1 {
            for (col, m) in columns.iter_mut().zip(counts.iter_mut()) {
                if rng.random::<f64>() < params.inclusion_probability(*m, j) {
                    col[word] |= bit;
                    *m += 1;
                }
            }
        }
        for _ in 0..sample_poisson(rng, params.new_dish_rate(j)) {
            let mut col = vec![0u64; words];
            col[word] |= bit;
            columns.push(col);
            counts.push(1);
        }
    }
    let mut out = FeatureMatrix::new(p);
    for col in &columns {
        out.push_column(col)?;
    }
    Ok(out)
}

/// New-dish rates of customer `j` under CIBP(`omega·kappa/alpha`, `alpha`,
/// `kappa`) and under IBP(`omega`, `kappa`), as `(cibp, ibp)`.
///
/// For `j ≥ 2` the IBP rate is `omega·kappa/(j + kappa)`. The first
/// customer is compared against the same expression at `j = 1`, which is the
/// limit of the CIBP first-customer rate.
pub fn ibp_limit_rates(alpha: f64, omega: f64, kappa: f64, j: usize) -> Result<(f64, f64)> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("limit rates need kappa > 0, got {kappa}")));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let cibp = CibpParams::new(omega * kappa / alpha, alpha, kappa)?;
    Ok((new_dish_rate(&cibp, j)?, omega * kappa / (j as f64 + kappa)))
}
