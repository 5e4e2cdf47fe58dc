//! Bit-packed binary feature-allocation matrices.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// A `p × K` binary matrix stored column-major, 64 rows per word.
///
/// Row `j` (0-based) of a column lives in bit `j % 64` of word `j / 64`.
/// Bits past the last row are always zero, so word-wise equality is
/// column equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureMatrix {
    rows: usize,
    words: usize,
    cols: usize,
    data: Vec<u64>,
}

/// Per-column counts of ones and the number of nonzero columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnStats {
    pub m: Vec<usize>,
    pub k_plus: usize,
}

impl FeatureMatrix {
    /// An empty matrix with `rows` rows and no columns.
    pub fn new(rows: usize) -> Self {
        Self { rows, words: rows.div_ceil(WORD_BITS), cols: 0, data: Vec::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = rows.div_ceil(WORD_BITS);
        Self { rows, words, cols, data: vec![0; words * cols] }
    }

    /// Builds a matrix from row-major 0/1 entries.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut out = Self::zeros(rows.len(), cols);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Structure(format!("row {j} has {} entries, expected {cols}", row.len())));
            }
            for (k, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => out.set(j, k, true),
                    _ => return Err(Error::Structure(format!("entry ({j}, {k}) is {v}, not 0/1"))),
                }
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn words_per_column(&self) -> usize {
        self.words
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> bool {
        debug_assert!(j < self.rows && k < self.cols);
        (self.data[k * self.words + j / WORD_BITS] >> (j % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, value: bool) {
        debug_assert!(j < self.rows && k < self.cols);
        let word = &mut self.data[k * self.words + j / WORD_BITS];
        let mask = 1u64 << (j % WORD_BITS);
        if value {
            *word |= mask;
        } else {
            *word &= !mask;
        }
    }

    pub fn column(&self, k: usize) -> &[u64] {
        &self.data[k * self.words..(k + 1) * self.words]
    }

    /// Appends an all-zero column and returns its index.
    pub fn push_zero_column(&mut self) -> usize {
        self.data.extend(std::iter::repeat_n(0, self.words));
        self.cols += 1;
        self.cols - 1
    }

    /// Appends a column given as packed words.
    pub fn push_column(&mut self, words: &[u64]) -> Result<usize> {
        if words.len() != self.words {
            return Err(Error::Structure(format!(
                "column has {} words, matrix needs {}",
                words.len(),
                self.words
            )));
        }
        if let Some(&last) = words.last() {
            let used = self.rows - (self.words - 1) * WORD_BITS;
            if used < WORD_BITS && last >> used != 0 {
                return Err(Error::Structure("column has bits set beyond the last row".into()));
            }
        }
        self.data.extend_from_slice(words);
        self.cols += 1;
        Ok(self.cols - 1)
    }

    pub fn column_sum(&self, k: usize) -> usize {
        self.column(k).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.cols).map(|k| self.column_sum(k)).collect()
    }

    pub fn is_zero_column(&self, k: usize) -> bool {
        self.column(k).iter().all(|&w| w == 0)
    }

    pub fn column_stats(&self) -> ColumnStats {
        let m = self.column_sums();
        let k_plus = m.iter().filter(|&&c| c > 0).count();
        ColumnStats { m, k_plus }
    }

    /// Number of nonzero columns.
    pub fn k_plus(&self) -> usize {
        (0..self.cols).filter(|&k| !self.is_zero_column(k)).count()
    }

    pub fn row(&self, j: usize) -> Vec<bool> {
        (0..self.cols).map(|k| self.get(j, k)).collect()
    }

    /// Keeps the columns for which `keep(k)` is true, preserving order.
    pub fn retain_columns<F: FnMut(usize) -> bool>(&mut self, mut keep: F) {
        let mut out = Vec::with_capacity(self.data.len());
        let mut cols = 0;
        for k in 0..self.cols {
            if keep(k) {
                out.extend_from_slice(self.column(k));
                cols += 1;
            }
        }
        self.data = out;
        self.cols = cols;
    }

    /// Drops all-zero columns.
    pub fn without_zero_columns(&self) -> Self {
        let mut out = self.clone();
        let zero: Vec<bool> = (0..self.cols).map(|k| self.is_zero_column(k)).collect();
        out.retain_columns(|k| !zero[k]);
        out
    }

    /// Row `j` of the result is row `perm[j]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.rows)?;
        let mut out = Self::zeros(self.rows, self.cols);
        for k in 0..self.cols {
            for (j, &src) in perm.iter().enumerate() {
                if self.get(src, k) {
                    out.set(j, k, true);
                }
            }
        }
        Ok(out)
    }

    /// Column `k` of the result is column `perm[k]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.cols)?;
        let mut out = Self::new(self.rows);
        for &src in perm {
            out.data.extend_from_slice(self.column(src));
            out.cols += 1;
        }
        Ok(out)
    }

    /// Returns a copy with one more row appended. `existing[k]` is the new
    /// row's entry in column `k`; `new_columns` fresh columns are added that
    /// are one only in the new row.
    pub fn with_row(&self, existing: &[bool], new_columns: usize) -> Result<Self> {
        if existing.len() != self.cols {
            return Err(Error::Structure(format!(
                "row has {} entries, matrix has {} columns",
                existing.len(),
                self.cols
            )));
        }
        let j = self.rows;
        let mut out = Self::zeros(self.rows + 1, self.cols + new_columns);
        for k in 0..self.cols {
            let dst = k * out.words;
            out.data[dst..dst + self.words].copy_from_slice(self.column(k));
            if existing[k] {
                out.set(j, k, true);
            }
        }
        for k in self.cols..out.cols {
            out.set(j, k, true);
        }
        Ok(out)
    }

    /// Orders two columns by the left-ordering score
    /// `s = Σ_j ξ_j 2^{p − j}` (row 0 most significant).
    pub fn cmp_column_scores(&self, a: usize, b: usize) -> Ordering {
        for (&wa, &wb) in self.column(a).iter().zip(self.column(b)) {
            if wa != wb {
                return wa.reverse_bits().cmp(&wb.reverse_bits());
            }
        }
        Ordering::Equal
    }

    /// Serializes to the text format: a header line `p K` followed by `p`
    /// lines of `K` characters `0`/`1`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 + self.rows * (self.cols + 1));
        let _ = writeln!(out, "{} {}", self.rows, self.cols);
        for j in 0..self.rows {
            for k in 0..self.cols {
                out.push(if self.get(j, k) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format written by [`to_text`](Self::to_text).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse { line: 1, message: format!("invalid dimension {s:?}") })
        };
        if dims.len() != 2 {
            return Err(Error::Parse { line: 1, message: format!("expected \"p K\", got {header:?}") });
        }
        let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
        let mut out = Self::zeros(rows, cols);
        for j in 0..rows {
            let (idx, line) = lines.next().ok_or(Error::Parse {
                line: j + 2,
                message: format!("expected {rows} rows, found {j}"),
            })?;
            let line = line.trim_end_matches('\r');
            if line.len() != cols {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {cols} characters, found {}", line.len()),
                });
            }
            for (k, c) in line.chars().enumerate() {
                match c {
                    '0' => {}
                    '1' => out.set(j, k, true),
                    other => {
                        return Err(Error::Parse { line: idx + 1, message: format!("invalid character {other:?}") })
                    }
                }
            }
        }
        if let Some((idx, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::Parse { line: idx + 1, message: format!("unexpected trailing content {line:?}") });
        }
        Ok(out)
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Structure(format!("permutation of length {} for {n} items", perm.len())));
    }
    let mut seen = vec![false; n];
    for &i in perm {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Structure("not a permutation".into()));
        }
    }
    Ok(())
}
