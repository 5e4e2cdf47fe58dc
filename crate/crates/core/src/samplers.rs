//! Samplers for the convergent IBP: the sequential restaurant scheme, the
//! Poisson-Beta-Bernoulli hierarchy, and the one-row predictive step.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::beta_math::{new_dish_rate, CibpParams};
use crate::error::Result;
use crate::matrix::FeatureMatrix;
use crate::rng::sample_poisson;

/// Restaurant-analogy draw of a `p`-row matrix.
///
/// Customer `j` takes each existing dish `k` with probability
/// `(m_{j,k} + alpha)/(j + kappa + alpha)`, where `m_{j,k}` counts customers
/// `1..j−1` who took it, then opens Poisson(`new_dish_rate(j)`) new dishes.
/// Columns come out in creation order, not left-ordered.
pub fn sample_restaurant<R: Rng + ?Sized>(params: &CibpParams, p: usize, rng: &mut R) -> Result<FeatureMatrix> {
    params.validate()?;
    let words = p.div_ceil(64);
    let mut columns: Vec<Vec<u64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for j in 1..=p {
        let (word, bit) = ((j - 1) / 64, 1u64 << ((j - 1) % 64));
        let denom = j as f64 + params.kappa + params.alpha;
        for (col, m) in columns.iter_mut().zip(counts.iter_mut()) {
            if rng.random::<f64>() < (*m as f64 + params.alpha) / denom {
                col[word] |= bit;
                *m += 1;
            }
        }
        let fresh = sample_poisson(rng, new_dish_rate(params, j)?);
        for _ in 0..fresh {
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

/// A draw from the hierarchical representation: the full `K`-column matrix
/// (all-zero columns kept) and the feature weights `theta`.
#[derive(Clone, Debug)]
pub struct HierarchicalDraw {
    pub matrix: FeatureMatrix,
    pub weights: Vec<f64>,
}

/// `K ~ Poisson(gamma)`, `theta_k ~ Beta(alpha, kappa + 1)` iid, and
/// `xi_jk | theta_k ~ Bernoulli(theta_k)` independently.
pub fn sample_hierarchical<R: Rng + ?Sized>(params: &CibpParams, p: usize, rng: &mut R) -> Result<HierarchicalDraw> {
    params.validate()?;
    let k = sample_poisson(rng, params.gamma) as usize;
    let beta = Beta::new(params.alpha, params.kappa + 1.0).expect("validated shape parameters");
    let mut matrix = FeatureMatrix::zeros(p, k);
    let mut weights = Vec::with_capacity(k);
    for col in 0..k {
        let theta: f64 = beta.sample(rng);
        for j in 0..p {
            if rng.random::<f64>() < theta {
                matrix.set(j, col, true);
            }
        }
        weights.push(theta);
    }
    Ok(HierarchicalDraw { matrix, weights })
}

/// The next row given a history of `p − 1` rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictiveRow {
    /// Entry of the new row in each existing column.
    pub existing: Vec<bool>,
    /// Number of brand-new columns the row opens.
    pub new_columns: usize,
}

/// Draws row `p` conditional on rows `1..p−1` in `history`.
///
/// Each nonzero history column is included with probability
/// `(m + alpha)/(p + kappa + alpha)`; all-zero history columns stay zero.
/// The row then opens Poisson(`gamma B̄^{1,p−1}`) new columns.
pub fn predictive_row<R: Rng + ?Sized>(history: &FeatureMatrix, params: &CibpParams, rng: &mut R) -> Result<PredictiveRow> {
    params.validate()?;
    let p = history.rows() + 1;
    let existing = (0..history.ncols())
        .map(|k| {
            let m = history.column_sum(k);
            m > 0 && rng.random::<f64>() < params.inclusion_probability(m, p)
        })
        .collect();
    let new_columns = sample_poisson(rng, new_dish_rate(params, p)?) as usize;
    Ok(PredictiveRow { existing, new_columns })
}

/// Builds a `p`-row matrix by chaining [`predictive_row`].
pub fn sample_sequential<R: Rng + ?Sized>(params: &CibpParams, p: usize, rng: &mut R) -> Result<FeatureMatrix> {
    let mut matrix = FeatureMatrix::new(0);
    for _ in 0..p {
        let row = predictive_row(&matrix, params, rng)?;
        matrix = matrix.with_row(&row.existing, row.new_columns)?;
    }
    Ok(matrix)
}
