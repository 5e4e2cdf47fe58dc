//! Left-ordered-form (lof) equivalence classes and their exact pmf.
//!
//! Two matrices are lof-equivalent when they differ only by a permutation of
//! columns. The canonical representative drops all-zero columns and sorts the
//! rest by descending score `s_k = Σ_j ξ_jk 2^{p − j}`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::beta_math::{kplus_mean, ln_gamma, CibpParams};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// A left-ordered matrix together with the multiplicities `K_u` of its
/// distinct column patterns.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LofClass {
    matrix: FeatureMatrix,
    /// Run lengths of identical adjacent columns, in column order.
    multiplicities: Vec<usize>,
}

impl LofClass {
    pub fn matrix(&self) -> &FeatureMatrix {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn k_plus(&self) -> usize {
        self.matrix.ncols()
    }

    /// `K_u` for each distinct pattern `u`, in left order.
    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Distinct patterns with their multiplicities.
    pub fn patterns(&self) -> impl Iterator<Item = (&[u64], usize)> + '_ {
        let mut start = 0;
        self.multiplicities.iter().map(move |&count| {
            let col = self.matrix.column(start);
            start += count;
            (col, count)
        })
    }

    /// 64-bit hash of the canonical bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.matrix.hash(&mut h);
        h.finish()
    }

    fn from_sorted(matrix: FeatureMatrix) -> Self {
        let mut multiplicities = Vec::new();
        let mut k = 0;
        while k < matrix.ncols() {
            let mut run = 1;
            while k + run < matrix.ncols() && matrix.column(k + run) == matrix.column(k) {
                run += 1;
            }
            multiplicities.push(run);
            k += run;
        }
        Self { matrix, multiplicities }
    }
}

/// Maps a matrix to its lof-equivalence class representative.
pub fn left_order(matrix: &FeatureMatrix) -> LofClass {
    let mut keep: Vec<usize> = (0..matrix.ncols()).filter(|&k| !matrix.is_zero_column(k)).collect();
    keep.sort_by(|&a, &b| matrix.cmp_column_scores(b, a));
    let sorted = matrix.permute_columns_subset(&keep);
    LofClass::from_sorted(sorted)
}

impl FeatureMatrix {
    fn permute_columns_subset(&self, order: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.rows());
        for &k in order {
            out.push_column(self.column(k)).expect("same row count");
        }
        out
    }
}

/// Log-probability of a lof-equivalence class:
///
/// ```text
/// K⁺ log γ − Σ_u log K_u! − γ (1 − B̄^{0,p}) + Σ_k log B̄^{m_k, p − m_k}
/// ```
///
/// with all `B̄` taken at `(alpha, kappa + 1)`. The exponent
/// `γ Σ_j B̄^{1,j−1}` is evaluated through its closed form `γ (1 − B̄^{0,p})`.
pub fn lof_log_pmf(cls: &LofClass, params: &CibpParams) -> Result<f64> {
    let p = cls.rows();
    if p == 0 && cls.k_plus() > 0 {
        return Err(Error::Structure("columns present in a zero-row class".into()));
    }
    let mut log_pmf = -kplus_mean(params, p);
    if cls.k_plus() == 0 {
        return Ok(log_pmf);
    }
    log_pmf += cls.k_plus() as f64 * params.gamma.ln();
    log_pmf -= cls.multiplicities.iter().map(|&c| ln_gamma(c as f64 + 1.0)).sum::<f64>();
    for (col, count) in cls.patterns() {
        let m: usize = col.iter().map(|w| w.count_ones() as usize).sum();
        if m == 0 || m > p {
            return Err(Error::Structure(format!("column with {m} ones in a {p}-row class")));
        }
        log_pmf += count as f64 * params.log_bbar(m as f64, (p - m) as f64);
    }
    Ok(log_pmf)
}

const MAX_ENUM_ROWS: usize = 4;
const MAX_ENUM_KPLUS: usize = 12;
const MAX_ENUM_CLASSES: u128 = 20_000_000;

/// Every lof-equivalence class on `p` rows with at most `max_kplus` nonzero
/// columns, each exactly once. Guarded to `p ≤ 4`, `max_kplus ≤ 12` and at
/// most 2·10⁷ classes.
pub fn enumerate_lof_classes(p: usize, max_kplus: usize) -> Result<LofEnumerator> {
    if p == 0 || p > MAX_ENUM_ROWS {
        return Err(Error::Capacity(format!("enumeration needs 1 ≤ p ≤ {MAX_ENUM_ROWS}, got {p}")));
    }
    if max_kplus > MAX_ENUM_KPLUS {
        return Err(Error::Capacity(format!("enumeration needs max_kplus ≤ {MAX_ENUM_KPLUS}, got {max_kplus}")));
    }
    let patterns = (1usize << p) - 1;
    let count = multiset_count_upto(patterns as u128, max_kplus as u128);
    if count > MAX_ENUM_CLASSES {
        return Err(Error::Capacity(format!("{count} classes exceeds the enumeration cap")));
    }
    Ok(LofEnumerator { rows: p, max_kplus, counts: vec![0; patterns], done: false })
}

/// Σ_{k=0..max} C(n + k − 1, k) = C(n + max, max).
fn multiset_count_upto(n: u128, max: u128) -> u128 {
    (1..=max).fold(1u128, |acc, i| acc * (n + i) / i)
}

/// Iterator over lof classes; see [`enumerate_lof_classes`].
#[derive(Debug, Clone)]
pub struct LofEnumerator {
    rows: usize,
    max_kplus: usize,
    /// `counts[i]` copies of the pattern with the i-th largest score.
    counts: Vec<usize>,
    done: bool,
}

impl LofEnumerator {
    fn current(&self) -> LofClass {
        let p = self.rows;
        let top = (1usize << p) - 1;
        let mut matrix = FeatureMatrix::new(p);
        for (i, &c) in self.counts.iter().enumerate() {
            let score = top - i;
            // row 0 carries the most significant score bit
            let word: u64 = (0..p).filter(|&j| (score >> (p - 1 - j)) & 1 == 1).map(|j| 1u64 << j).sum();
            for _ in 0..c {
                matrix.push_column(&[word]).expect("p ≤ 4 fits one word");
            }
        }
        LofClass::from_sorted(matrix)
    }

    fn advance(&mut self) -> bool {
        let mut sum: usize = self.counts.iter().sum();
        for i in (0..self.counts.len()).rev() {
            if sum < self.max_kplus {
                self.counts[i] += 1;
                return true;
            }
            sum -= self.counts[i];
            self.counts[i] = 0;
        }
        false
    }
}

impl Iterator for LofEnumerator {
    type Item = LofClass;

    fn next(&mut self) -> Option<LofClass> {
        if self.done {
            return None;
        }
        let out = self.current();
        self.done = !self.advance();
        Some(out)
    }
}
