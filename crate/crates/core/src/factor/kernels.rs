//! Individual MCMC kernels. Each updates the state in place and leaves the
//! spike constraint `ξ_jk = 0 ⇔ β_jk = 0` intact.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{AllocationPrior, Dataset, FactorPrior, FactorState};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::sample_poisson;

fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

/// Slab posterior `(β̂, τ̂)` for a loading whose factor column is `z` and
/// whose partial residual (all other features removed) is `r`:
/// `τ̂ = (σ⁻² Σ z² + τ⁻¹)⁻¹`, `β̂ = τ̂ σ⁻² Σ z r`.
pub fn slab_conditional(z: &[f64], r: &[f64], sigma2: f64, tau: f64) -> (f64, f64) {
    let zz: f64 = z.iter().map(|v| v * v).sum();
    let zr: f64 = z.iter().zip(r).map(|(a, b)| a * b).sum();
    let tau_hat = 1.0 / (zz / sigma2 + 1.0 / tau);
    (tau_hat * zr / sigma2, tau_hat)
}

/// Draws every active loading from its slab conditional given the others;
/// inactive loadings stay at zero.
pub fn gibbs_beta<R: Rng + ?Sized>(
    state: &mut FactorState,
    data: &Dataset,
    prior: &FactorPrior,
    rng: &mut R,
) -> Result<()> {
    let k_plus = state.k_plus();
    if k_plus == 0 {
        return Ok(());
    }
    let mut resid = state.residuals(data);
    let mut partial = vec![0.0; data.n()];
    for j in 0..data.p() {
        for k in 0..k_plus {
            if !state.pattern.get(j, k) {
                state.loadings[(j, k)] = 0.0;
                continue;
            }
            let z = state.factors.column(k);
            let old = state.loadings[(j, k)];
            for (i, pr) in partial.iter_mut().enumerate() {
                *pr = resid[(i, j)] + z[i] * old;
            }
            let (beta_hat, tau_hat) = slab_conditional(z.as_slice(), &partial, state.sigma2, prior.tau);
            if !beta_hat.is_finite() {
                return Err(Error::Numerical(format!("non-finite slab mean at ({j}, {k})")));
            }
            let new = normal(rng, beta_hat, tau_hat);
            state.loadings[(j, k)] = new;
            for (i, pr) in partial.iter().enumerate() {
                resid[(i, j)] = pr - z[i] * new;
            }
        }
    }
    Ok(())
}

/// Full-conditional probability that `ξ_jk = 1`, given the prior log-odds
/// inputs `(m, p)` and the log likelihood ratio of the slab against the
/// spike.
pub fn xi_inclusion_probability(allocation: &AllocationPrior, m: usize, p: usize, log_lik_ratio: f64) -> f64 {
    let log_odds = allocation.existing_log_odds(m, p) + log_lik_ratio;
    if log_odds == f64::NEG_INFINITY {
        0.0
    } else {
        1.0 / (1.0 + (-log_odds).exp())
    }
}

/// Resamples `ξ_jk` for every row and every existing column with `β_jk`
/// integrated out, treating row `j` as the last customer:
///
/// ```text
/// odds = prior_odds(m_{j,k}, p) · sqrt(τ̂_k/τ) · exp(β̂_jk² / (2 τ̂_k))
/// ```
///
/// When `ξ_jk` comes out 1 the loading is redrawn from its slab conditional,
/// otherwise it is set to zero.
pub fn gibbs_xi_existing<R: Rng + ?Sized>(
    state: &mut FactorState,
    data: &Dataset,
    prior: &FactorPrior,
    rng: &mut R,
) -> Result<()> {
    let k_plus = state.k_plus();
    if k_plus == 0 {
        return Ok(());
    }
    let p = data.p();
    let mut resid = state.residuals(data);
    let mut sums = state.pattern.column_sums();
    let mut partial = vec![0.0; data.n()];
    for j in 0..p {
        for k in 0..k_plus {
            let z = state.factors.column(k);
            let was_on = state.pattern.get(j, k);
            let old = state.loadings[(j, k)];
            for (i, pr) in partial.iter_mut().enumerate() {
                *pr = resid[(i, j)] + z[i] * old;
            }
            let (beta_hat, tau_hat) = slab_conditional(z.as_slice(), &partial, state.sigma2, prior.tau);
            if !beta_hat.is_finite() {
                return Err(Error::Numerical(format!("non-finite slab mean at ({j}, {k})")));
            }
            let m_others = sums[k] - was_on as usize;
            let log_lik_ratio = 0.5 * (tau_hat / prior.tau).ln() + beta_hat * beta_hat / (2.0 * tau_hat);
            let prob = xi_inclusion_probability(&prior.allocation, m_others, p, log_lik_ratio);
            let on = rng.random::<f64>() < prob;
            let new = if on { normal(rng, beta_hat, tau_hat) } else { 0.0 };
            state.pattern.set(j, k, on);
            state.loadings[(j, k)] = new;
            sums[k] = m_others + on as usize;
            for (i, pr) in partial.iter().enumerate() {
                resid[(i, j)] = pr - z[i] * new;
            }
        }
    }
    Ok(())
}

/// Prior-only version of [`gibbs_xi_existing`]: one sweep over all entries
/// of `pattern` with the likelihood ratio fixed at 1.
pub fn gibbs_xi_prior_only<R: Rng + ?Sized>(pattern: &mut FeatureMatrix, allocation: &AllocationPrior, rng: &mut R) {
    let p = pattern.rows();
    let mut sums = pattern.column_sums();
    for j in 0..p {
        for (k, sum) in sums.iter_mut().enumerate() {
            let was_on = pattern.get(j, k);
            let m_others = *sum - was_on as usize;
            let on = rng.random::<f64>() < xi_inclusion_probability(allocation, m_others, p, 0.0);
            pattern.set(j, k, on);
            *sum = m_others + on as usize;
        }
    }
}

/// Log acceptance probability (before capping at 0) of adding the proposed
/// loadings `beta_star` as new features owned by one row:
///
/// ```text
/// −(n/2) log|M| + ½ β*ᵀ M⁻¹ β* Σ_i E_i² + K* log(rate),
/// M = σ⁻² β* β*ᵀ + I,   E_i = σ⁻² r_i
/// ```
///
/// `residual_sq_sum` is `Σ_i r_i²` for the row's current residuals.
pub fn mh_log_acceptance(residual_sq_sum: f64, n: usize, sigma2: f64, beta_star: &[f64], log_rate: f64) -> Result<f64> {
    let k = beta_star.len();
    if k == 0 {
        return Ok(0.0);
    }
    let b = DVector::from_column_slice(beta_star);
    let m = &b * b.transpose() / sigma2 + DMatrix::identity(k, k);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("proposal matrix is not positive definite".into()))?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = b.dot(&chol.solve(&b));
    let e_sq = residual_sq_sum / (sigma2 * sigma2);
    let log_acc = -0.5 * n as f64 * log_det + 0.5 * quad * e_sq + k as f64 * log_rate;
    if log_acc.is_nan() {
        return Err(Error::Numerical("NaN acceptance ratio".into()));
    }
    Ok(log_acc)
}

/// What one birth proposal did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhOutcome {
    pub proposed: usize,
    pub accepted: bool,
    pub log_acceptance: f64,
}

/// Birth move for row `j`: proposes `K* ~ Poisson(1)` features with
/// loadings `N(0, τ)` held only by row `j` and accepts with the capped
/// probability of [`mh_log_acceptance`]. On acceptance the new factor
/// columns are drawn from their N(0, 1) prior.
pub fn mh_new_features_row<R: Rng + ?Sized>(
    state: &mut FactorState,
    data: &Dataset,
    prior: &FactorPrior,
    j: usize,
    rng: &mut R,
) -> Result<MhOutcome> {
    let proposed = sample_poisson(rng, 1.0) as usize;
    if proposed == 0 {
        return Ok(MhOutcome { proposed, accepted: true, log_acceptance: 0.0 });
    }
    let beta_star: Vec<f64> = (0..proposed).map(|_| normal(rng, 0.0, prior.tau)).collect();
    let n = data.n();
    let row_b = state.loadings.row(j);
    let residual_sq_sum: f64 = (0..n)
        .map(|i| {
            let fit: f64 = state.factors.row(i).dot(&row_b);
            let r = data.y()[(i, j)] - fit;
            r * r
        })
        .sum();
    let log_rate = prior.allocation.log_new_feature_rate(data.p());
    // capped at 0: the acceptance probability is min{1, ·}
    let log_acceptance = mh_log_acceptance(residual_sq_sum, n, state.sigma2, &beta_star, log_rate)?.min(0.0);
    let accepted = rng.random::<f64>().ln() < log_acceptance;
    if accepted {
        append_features(state, j, &beta_star, rng);
    }
    Ok(MhOutcome { proposed, accepted, log_acceptance })
}

fn append_features<R: Rng + ?Sized>(state: &mut FactorState, j: usize, beta_star: &[f64], rng: &mut R) {
    let k0 = state.k_plus();
    let count = beta_star.len();
    let (p, n) = (state.loadings.nrows(), state.factors.nrows());
    let loadings = std::mem::replace(&mut state.loadings, DMatrix::zeros(0, 0));
    state.loadings = loadings.resize_horizontally(k0 + count, 0.0);
    let factors = std::mem::replace(&mut state.factors, DMatrix::zeros(0, 0));
    state.factors = factors.resize_horizontally(k0 + count, 0.0);
    debug_assert_eq!(state.loadings.nrows(), p);
    for (offset, &b) in beta_star.iter().enumerate() {
        let k = k0 + offset;
        state.loadings[(j, k)] = b;
        let col = state.pattern.push_zero_column();
        state.pattern.set(j, col, true);
        for i in 0..n {
            state.factors[(i, k)] = StandardNormal.sample(rng);
        }
    }
}

/// Runs [`mh_new_features_row`] for every row in order; returns the number
/// of features added.
pub fn mh_new_features<R: Rng + ?Sized>(
    state: &mut FactorState,
    data: &Dataset,
    prior: &FactorPrior,
    rng: &mut R,
) -> Result<usize> {
    let mut added = 0;
    for j in 0..data.p() {
        let out = mh_new_features_row(state, data, prior, j, rng)?;
        if out.accepted {
            added += out.proposed;
        }
    }
    Ok(added)
}

/// Removes columns that no row holds, preserving the order of the rest.
pub fn prune_zero_columns(state: &mut FactorState) {
    let keep: Vec<usize> = (0..state.k_plus()).filter(|&k| !state.pattern.is_zero_column(k)).collect();
    if keep.len() == state.k_plus() {
        return;
    }
    state.loadings = state.loadings.select_columns(keep.iter());
    state.factors = state.factors.select_columns(keep.iter());
    let keep_set: Vec<bool> = (0..state.k_plus()).map(|k| keep.binary_search(&k).is_ok()).collect();
    state.pattern.retain_columns(|k| keep_set[k]);
}

/// Draws each `Z_i ~ N(σ⁻² Σ̂ Bᵀ Y_i, Σ̂)` with `Σ̂ = (σ⁻² BᵀB + I)⁻¹`,
/// through the Cholesky factor `L Lᵀ = Σ̂⁻¹`: mean by two triangular solves
/// and noise as `L⁻ᵀ ε`.
pub fn gibbs_z<R: Rng + ?Sized>(state: &mut FactorState, data: &Dataset, rng: &mut R) -> Result<()> {
    let k = state.k_plus();
    if k == 0 {
        return Ok(());
    }
    let s_inv = 1.0 / state.sigma2;
    let bt = state.loadings.transpose();
    let precision = &bt * &state.loadings * s_inv + DMatrix::identity(k, k);
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Numerical("factor precision matrix is not positive definite".into()))?;
    let rhs = &bt * data.y().transpose() * s_inv;
    let mean = chol.solve(&rhs);
    let eps = DMatrix::from_fn(k, data.n(), |_, _| StandardNormal.sample(rng));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&eps)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let draw = mean + noise;
    if draw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite factor draw".into()));
    }
    state.factors = draw.transpose();
    Ok(())
}

/// Draws `σ² ~ IG(a + np/2, b + ½ Σ_ij r_ij²)`.
pub fn gibbs_sigma2<R: Rng + ?Sized>(
    state: &mut FactorState,
    data: &Dataset,
    prior: &FactorPrior,
    rng: &mut R,
) -> Result<()> {
    let rss = state.residuals(data).norm_squared();
    let shape = prior.a + 0.5 * (data.n() * data.p()) as f64;
    let scale = prior.b + 0.5 * rss;
    let precision = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::Numerical(format!("inverse-gamma parameters ({shape}, {scale}): {e}")))?
        .sample(rng);
    let sigma2 = 1.0 / precision;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Numerical(format!("sigma2 draw {sigma2}")));
    }
    state.sigma2 = sigma2;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta_math::CibpParams;
    use crate::ibp::IbpParams;
    use crate::rng::RngStream;

    fn cibp_prior(tau: f64) -> FactorPrior {
        FactorPrior::new(AllocationPrior::Cibp(CibpParams::new(1.0, 1.0, 0.0).unwrap()), tau, 1.0, 1.0).unwrap()
    }

    fn tiny() -> (Dataset, FactorState) {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, -0.5, 2.0, 0.3, -1.0, 0.8]);
        let data = Dataset::new(y).unwrap();
        let mut state = FactorState::empty(3, 2, 1.0);
        state.loadings = DMatrix::from_row_slice(2, 1, &[0.7, 0.0]);
        state.pattern = FeatureMatrix::from_rows(&[vec![1], vec![0]]).unwrap();
        state.factors = DMatrix::from_column_slice(3, 1, &[0.5, 1.0, -1.5]);
        (data, state)
    }

    #[test]
    fn spike_entries_stay_zero() {
        let (data, mut state) = tiny();
        let mut rng = RngStream::new(1, 0).rng();
        for _ in 0..50 {
            gibbs_beta(&mut state, &data, &cibp_prior(1.0), &mut rng).unwrap();
            assert_eq!(state.loadings[(1, 0)], 0.0);
            assert_ne!(state.loadings[(0, 0)], 0.0);
        }
    }

    #[test]
    fn zero_factor_column_gives_prior() {
        let (beta_hat, tau_hat) = slab_conditional(&[0.0, 0.0], &[3.0, -1.0], 0.7, 2.5);
        assert_eq!(beta_hat, 0.0);
        assert!((tau_hat - 2.5).abs() < 1e-15);
    }

    #[test]
    fn prior_odds_all_others_hold() {
        let alloc = AllocationPrior::Cibp(CibpParams::new(1.0, 1.0, 0.0).unwrap());
        let p = 5;
        // flat likelihood: β̂ = 0, τ̂ = τ
        let prob = xi_inclusion_probability(&alloc, p - 1, p, 0.0);
        assert!((prob / (1.0 - prob) - p as f64).abs() < 1e-12);
        assert!(xi_inclusion_probability(&alloc, 1, p, 50.0) > 1.0 - 1e-15);
        let ibp = AllocationPrior::Ibp(IbpParams::new(1.0, 1.0).unwrap());
        assert_eq!(xi_inclusion_probability(&ibp, 0, p, 100.0), 0.0);
    }

    #[test]
    fn xi_kernel_keeps_spike_consistency() {
        let (data, mut state) = tiny();
        let mut rng = RngStream::new(2, 0).rng();
        for _ in 0..200 {
            gibbs_xi_existing(&mut state, &data, &cibp_prior(1.0), &mut rng).unwrap();
            state.check(&data).unwrap();
        }
    }

    #[test]
    fn mh_zero_proposal_accepts() {
        assert_eq!(mh_log_acceptance(12.0, 5, 1.3, &[], -3.0).unwrap(), 0.0);
    }

    #[test]
    fn mh_scalar_closed_form() {
        let (rss, n, sigma2, b, log_rate) = (7.5, 6usize, 0.8f64, 1.4f64, -2.0);
        let det = 1.0 + b * b / sigma2;
        let quad = b * b / det;
        let e_sq = rss / (sigma2 * sigma2);
        let want = -0.5 * n as f64 * det.ln() + 0.5 * quad * e_sq + log_rate;
        let got = mh_log_acceptance(rss, n, sigma2, &[b], log_rate).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn mh_matches_marginal_likelihood_ratio() {
        // the printed ratio equals N(r; 0, σ² + |β|²) / N(r; 0, σ²) over rows
        let r = [0.7, -1.2, 2.1, 0.4];
        let (sigma2, beta) = (0.9, [0.5, -1.1]);
        let b2: f64 = beta.iter().map(|b| b * b).sum();
        let rss: f64 = r.iter().map(|v| v * v).sum();
        let log_norm = |x: f64, v: f64| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - x * x / (2.0 * v);
        let want: f64 = r.iter().map(|&x| log_norm(x, sigma2 + b2) - log_norm(x, sigma2)).sum();
        let got = mh_log_acceptance(rss, r.len(), sigma2, &beta, 0.0).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn mh_monotone_in_gamma() {
        let small = CibpParams::new(0.5, 2.0, 1.0).unwrap();
        let large = CibpParams::new(5.0, 2.0, 1.0).unwrap();
        let a = mh_log_acceptance(3.0, 4, 1.0, &[0.3], AllocationPrior::Cibp(small).log_new_feature_rate(10)).unwrap();
        let b = mh_log_acceptance(3.0, 4, 1.0, &[0.3], AllocationPrior::Cibp(large).log_new_feature_rate(10)).unwrap();
        assert!(b > a);
    }

    #[test]
    fn accepted_birth_extends_state() {
        let (data, mut state) = tiny();
        // a huge rate makes acceptance near-certain
        let prior = FactorPrior::new(AllocationPrior::Cibp(CibpParams::new(1e12, 1.0, 0.0).unwrap()), 1.0, 1.0, 1.0).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        let mut grew = false;
        for _ in 0..20 {
            let k0 = state.k_plus();
            let out = mh_new_features_row(&mut state, &data, &prior, 1, &mut rng).unwrap();
            if out.accepted && out.proposed > 0 {
                assert_eq!(state.k_plus(), k0 + out.proposed);
                for k in k0..state.k_plus() {
                    assert_eq!(state.pattern.column_sum(k), 1);
                    assert!(state.pattern.get(1, k));
                    assert_eq!(state.loadings[(0, k)], 0.0);
                }
                grew = true;
            }
            state.check(&data).unwrap();
        }
        assert!(grew);
    }

    #[test]
    fn prune_cases() {
        let (data, mut state) = tiny();
        let before = state.clone();
        prune_zero_columns(&mut state);
        assert_eq!(state, before);

        let ll = state.log_likelihood(&data);
        state.pattern.set(0, 0, false);
        state.loadings[(0, 0)] = 0.0;
        let ll_zeroed = state.log_likelihood(&data);
        prune_zero_columns(&mut state);
        assert_eq!(state.k_plus(), 0);
        assert_eq!(state.loadings.shape(), (2, 0));
        assert_eq!(state.factors.shape(), (3, 0));
        assert!((state.log_likelihood(&data) - ll_zeroed).abs() < 1e-12);
        assert_ne!(ll, ll_zeroed);
    }

    #[test]
    fn prune_keeps_order() {
        let mut state = FactorState::empty(2, 2, 1.0);
        state.pattern = FeatureMatrix::from_rows(&[vec![1, 0, 0], vec![0, 0, 1]]).unwrap();
        state.loadings = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        state.factors = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        prune_zero_columns(&mut state);
        assert_eq!(state.k_plus(), 2);
        assert_eq!(state.loadings, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]));
        assert_eq!(state.factors, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 4.0, 6.0]));
    }

    #[test]
    fn z_prior_when_loadings_zero() {
        let data = Dataset::new(DMatrix::from_element(4, 2, 1.0)).unwrap();
        let mut state = FactorState::empty(4, 2, 1.0);
        state.loadings = DMatrix::zeros(2, 1);
        state.pattern = FeatureMatrix::zeros(2, 1);
        state.factors = DMatrix::zeros(4, 1);
        let mut rng = RngStream::new(4, 0).rng();
        let mut sum = 0.0;
        let mut sq = 0.0;
        let draws = 20_000;
        for _ in 0..draws {
            gibbs_z(&mut state, &data, &mut rng).unwrap();
            sum += state.factors[(0, 0)];
            sq += state.factors[(0, 0)].powi(2);
        }
        let mean = sum / draws as f64;
        let var = sq / draws as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (draws as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn sigma2_stays_positive() {
        let (data, mut state) = tiny();
        let mut rng = RngStream::new(5, 0).rng();
        for _ in 0..100 {
            gibbs_sigma2(&mut state, &data, &cibp_prior(1.0), &mut rng).unwrap();
            assert!(state.sigma2 > 0.0);
        }
    }
}
