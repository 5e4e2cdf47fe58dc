use std::fmt::Write as _;

use super::kernels::{gibbs_beta, gibbs_sigma2, gibbs_xi_existing, gibbs_z, mh_new_features, prune_zero_columns};
use super::{Dataset, FactorPrior, FactorState};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// State summary after one sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    /// 1-based sweep index.
    pub iter: usize,
    pub k_plus: usize,
    pub sigma2: f64,
    pub loglik: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainTrace {
    pub records: Vec<TraceRecord>,
    pub burn_in: usize,
    pub final_state: FactorState,
}

impl ChainTrace {
    fn kept(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.iter > self.burn_in)
    }

    /// Mean of `k_plus` over the sweeps after burn-in.
    pub fn mean_kplus(&self) -> f64 {
        let (sum, n) = self.kept().fold((0.0, 0usize), |(s, n), r| (s + r.k_plus as f64, n + 1));
        sum / n as f64
    }

    pub fn mean_sigma2(&self) -> f64 {
        let (sum, n) = self.kept().fold((0.0, 0usize), |(s, n), r| (s + r.sigma2, n + 1));
        sum / n as f64
    }

    /// `iter,k_plus,sigma2,loglik` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,k_plus,sigma2,loglik\n");
        for r in &self.records {
            writeln!(out, "{},{},{:e},{:e}", r.iter, r.k_plus, r.sigma2, r.loglik).unwrap();
        }
        out
    }
}

/// Runs `iters` sweeps from [`FactorState::initial`].
pub fn run_chain(data: &Dataset, prior: &FactorPrior, iters: usize, burn_in: usize, stream: RngStream) -> Result<ChainTrace> {
    run_chain_from(FactorState::initial(data), data, prior, iters, burn_in, stream)
}

/// Runs `iters` sweeps of
/// β → ξ (existing) → birth per row → prune → Z → σ²
/// and records the state after each. Any kernel failure aborts the chain
/// with the 1-based sweep index.
pub fn run_chain_from(
    mut state: FactorState,
    data: &Dataset,
    prior: &FactorPrior,
    iters: usize,
    burn_in: usize,
    stream: RngStream,
) -> Result<ChainTrace> {
    prior.validate()?;
    if iters == 0 || burn_in >= iters {
        return Err(Error::InvalidParameter(format!("need 0 <= burn_in < iters, got burn_in={burn_in}, iters={iters}")));
    }
    state.check(data)?;
    let mut rng = stream.rng();
    let mut records = Vec::with_capacity(iters);
    for iter in 1..=iters {
        let sweep = (|| -> Result<()> {
            gibbs_beta(&mut state, data, prior, &mut rng)?;
            gibbs_xi_existing(&mut state, data, prior, &mut rng)?;
            mh_new_features(&mut state, data, prior, &mut rng)?;
            prune_zero_columns(&mut state);
            gibbs_z(&mut state, data, &mut rng)?;
            gibbs_sigma2(&mut state, data, prior, &mut rng)
        })();
        let loglik = state.log_likelihood(data);
        let reason = match sweep {
            Err(e) => Some(e.to_string()),
            Ok(()) if !loglik.is_finite() => Some(format!("log-likelihood {loglik}")),
            Ok(()) => None,
        };
        if let Some(reason) = reason {
            return Err(Error::ChainAborted { iteration: iter, reason });
        }
        records.push(TraceRecord { iter, k_plus: state.k_plus(), sigma2: state.sigma2, loglik });
    }
    Ok(ChainTrace { records, burn_in, final_state: state })
}
