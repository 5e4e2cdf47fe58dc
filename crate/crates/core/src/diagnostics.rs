//! Goodness-of-fit and distance tools used to check samplers against their
//! closed-form laws.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::beta_math::ln_gamma;
use crate::error::{Error, Result};

/// Default minimum expected count per chi-square bin.
pub const MIN_EXPECTED: f64 = 5.0;

/// Significance level used by the acceptance checks.
pub const SIGNIFICANCE: f64 = 1e-3;

/// Poisson(`lambda`) mass at `k`.
pub fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let k = k as f64;
    (k * lambda.ln() - lambda - ln_gamma(k + 1.0)).exp()
}

/// Occurrence counts keyed by outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountTable<K: Ord> {
    counts: BTreeMap<K, u64>,
    total: u64,
}

impl<K: Ord> Default for CountTable<K> {
    fn default() -> Self {
        Self { counts: BTreeMap::new(), total: 0 }
    }
}

impl<K: Ord> CountTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: K) {
        self.add_n(key, 1);
    }

    pub fn add_n(&mut self, key: K, n: u64) {
        *self.counts.entry(key).or_insert(0) += n;
        self.total += n;
    }

    pub fn get(&self, key: &K) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, u64)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }
}

impl<K: Ord> FromIterator<K> for CountTable<K> {
    fn from_iter<I: IntoIterator<Item = K>>(iter: I) -> Self {
        let mut t = Self::new();
        for k in iter {
            t.add(k);
        }
        t
    }
}

/// Result of a Pearson chi-square test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Pearson chi-square goodness of fit of `observed` against the cell
/// probabilities in `cells`.
///
/// Cells with expected count below `min_expected` are pooled into one tail
/// bin, together with any observed key missing from `cells` and the
/// probability mass `cells` leaves unassigned. If the pooled bin is itself
/// below `min_expected` it is folded into the smallest regular bin.
pub fn chisq_gof<K: Ord>(observed: &CountTable<K>, cells: &[(K, f64)], min_expected: f64) -> Result<GofResult> {
    if observed.total == 0 {
        return Err(Error::Test("empty observation table".into()));
    }
    let n = observed.total as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut tail_obs, mut tail_exp) = (0.0, 0.0);
    let mut assigned_mass = 0.0;
    let mut assigned_obs = 0u64;
    for (key, prob) in cells {
        if !(*prob >= 0.0) {
            return Err(Error::Test(format!("negative or NaN cell probability {prob}")));
        }
        let obs = observed.get(key);
        assigned_mass += prob;
        assigned_obs += obs;
        let exp = prob * n;
        if exp >= min_expected {
            bins.push((obs as f64, exp));
        } else {
            tail_obs += obs as f64;
            tail_exp += exp;
        }
    }
    if assigned_mass > 1.0 + 1e-9 {
        return Err(Error::Test(format!("cell probabilities sum to {assigned_mass}")));
    }
    tail_obs += (observed.total - assigned_obs) as f64;
    tail_exp += (1.0 - assigned_mass).max(0.0) * n;

    if tail_exp >= min_expected {
        bins.push((tail_obs, tail_exp));
    } else if tail_exp > 0.0 || tail_obs > 0.0 {
        let smallest = bins
            .iter_mut()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::Test("no bin reaches the minimum expected count".into()))?;
        smallest.0 += tail_obs;
        smallest.1 += tail_exp;
    }
    if bins.len() < 2 {
        return Err(Error::Test(format!("only {} bin(s) after merging", bins.len())));
    }
    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let df = bins.len() - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Test(e.to_string()))?;
    Ok(GofResult { statistic, p_value: dist.sf(statistic), df })
}

/// Cells `(k, P(K = k))` of Poisson(`lambda`) for `k` up to the point where
/// the remaining upper tail is negligible.
pub fn poisson_cells(lambda: f64) -> Vec<(u64, f64)> {
    let mut cells = Vec::new();
    let mut mass = 0.0;
    let mut k = 0u64;
    loop {
        let p = poisson_pmf(lambda, k);
        cells.push((k, p));
        mass += p;
        if (k as f64 > lambda && 1.0 - mass < 1e-15) || k > 10_000 {
            break;
        }
        k += 1;
    }
    cells
}

/// Total variation distance `½ Σ |a_k/|a| − b_k/|b||` between two
/// empirical distributions.
pub fn tv_distance<K: Ord>(a: &CountTable<K>, b: &CountTable<K>) -> Result<f64> {
    if a.total == 0 || b.total == 0 {
        return Err(Error::Test("empty table in tv_distance".into()));
    }
    let (na, nb) = (a.total as f64, b.total as f64);
    let mut sum = 0.0;
    for (k, &ca) in &a.counts {
        sum += (ca as f64 / na - b.get(k) as f64 / nb).abs();
    }
    for (k, &cb) in &b.counts {
        if !a.counts.contains_key(k) {
            sum += cb as f64 / nb;
        }
    }
    Ok((0.5 * sum).min(1.0))
}
