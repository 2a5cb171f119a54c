//! Exact finite-alphabet probability arithmetic.
//!
//! All entropies and mutual informations are in bits (base-2 logs), with the
//! convention 0·log 0 = 0. Distributions are validated on construction: entries
//! must be nonnegative and sum to 1 within [`NORM_TOL`]. Nothing is renormalized
//! silently; use [`ProbVector::normalized`] when renormalization is wanted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Absolute tolerance on Σp = 1.
pub const NORM_TOL: f64 = 1e-9;

/// First violated invariant of a probability object, with index and magnitude.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("negative entry at {index}: {value}")]
    Negative { index: usize, value: f64 },
    #[error("sum = {sum}, expected 1 within {NORM_TOL}")]
    Sum { sum: f64 },
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Violation>,
    },
    #[error("row {row} has {len} entries, expected {expected}")]
    RowLength {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("table has {len} entries, expected {expected} for dims {dims:?}")]
    Shape {
        len: usize,
        expected: usize,
        dims: Vec<usize>,
    },
    #[error("empty distribution")]
    Empty,
}

/// Checks the pmf invariants and reports the first violation.
pub fn validate_pmf(probs: &[f64]) -> std::result::Result<(), Violation> {
    if probs.is_empty() {
        return Err(Violation::Empty);
    }
    for (index, &value) in probs.iter().enumerate() {
        if !(value >= 0.0) {
            return Err(Violation::Negative { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORM_TOL {
        return Err(Violation::Sum { sum });
    }
    Ok(())
}

#[inline]
pub(crate) fn xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Binary entropy h₂(p) in bits.
#[inline]
pub fn binary_entropy(p: f64) -> f64 {
    -xlog2x(p) - xlog2x(1.0 - p)
}

/// Shannon entropy of a raw weight slice, in bits.
#[inline]
pub(crate) fn entropy_slice(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| xlog2x(p)).sum::<f64>()
}

/// A validated probability distribution over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_pmf(&probs)?;
        Ok(ProbVector { probs })
    }

    /// Explicitly renormalizes nonnegative weights. This is the only place the
    /// library rescales anything.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Violation::Empty.into());
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(Violation::Negative { index, value }.into());
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Violation::Sum { sum }.into());
        }
        Ok(ProbVector {
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        ProbVector {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass on symbol `at`.
    pub fn delta(n: usize, at: usize) -> Self {
        assert!(at < n);
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        ProbVector { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Entropy −Σ pᵢ log₂ pᵢ in bits.
    pub fn entropy(&self) -> f64 {
        entropy_slice(&self.probs)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Violation;
    fn try_from(probs: Vec<f64>) -> std::result::Result<Self, Violation> {
        validate_pmf(&probs)?;
        Ok(ProbVector { probs })
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Vec<f64> {
        p.probs
    }
}

/// A conditional distribution: one validated pmf per input symbol, all rows
/// sharing one output alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Kernel {
    rows: Vec<f64>,
    out_size: usize,
}

impl Kernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::try_from(rows).map_err(Error::from)
    }

    pub fn from_prob_rows(rows: Vec<ProbVector>) -> Result<Self> {
        Self::new(rows.into_iter().map(Vec::from).collect())
    }

    pub fn validate_rows(rows: &[Vec<f64>]) -> std::result::Result<(), Violation> {
        if rows.is_empty() {
            return Err(Violation::Empty);
        }
        let out_size = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != out_size {
                return Err(Violation::RowLength {
                    row: i,
                    len: row.len(),
                    expected: out_size,
                });
            }
            validate_pmf(row).map_err(|v| Violation::Row {
                row: i,
                source: Box::new(v),
            })?;
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len() / self.out_size
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.out_size..(i + 1) * self.out_size]
    }

    pub fn prob(&self, row: usize, out: usize) -> f64 {
        self.rows[row * self.out_size + out]
    }

    /// Identity kernel on an alphabet of size n.
    pub fn identity(n: usize) -> Self {
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            rows[i * n + i] = 1.0;
        }
        Kernel { rows, out_size: n }
    }

    /// Every row equal to `p`.
    pub fn constant(num_rows: usize, p: &ProbVector) -> Self {
        let mut rows = Vec::with_capacity(num_rows * p.len());
        for _ in 0..num_rows {
            rows.extend_from_slice(p.as_slice());
        }
        Kernel {
            rows,
            out_size: p.len(),
        }
    }

    /// Row-by-row composition: (k ∘ other)(z|x) = Σ_y other(y|x) k(z|y).
    pub fn compose(&self, other: &Kernel) -> Result<Kernel> {
        if other.out_size() != self.num_rows() {
            return Err(Error::argument(format!(
                "cannot compose: inner alphabet {} vs {} rows",
                other.out_size(),
                self.num_rows()
            )));
        }
        let mut rows = vec![0.0; other.num_rows() * self.out_size];
        for x in 0..other.num_rows() {
            for y in 0..other.out_size() {
                let w = other.prob(x, y);
                if w == 0.0 {
                    continue;
                }
                for z in 0..self.out_size {
                    rows[x * self.out_size + z] += w * self.prob(y, z);
                }
            }
        }
        Ok(Kernel {
            rows,
            out_size: self.out_size,
        })
    }
}

impl TryFrom<Vec<Vec<f64>>> for Kernel {
    type Error = Violation;
    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, Violation> {
        Kernel::validate_rows(&rows)?;
        let out_size = rows[0].len();
        Ok(Kernel {
            rows: rows.into_iter().flatten().collect(),
            out_size,
        })
    }
}

impl From<Kernel> for Vec<Vec<f64>> {
    fn from(k: Kernel) -> Vec<Vec<f64>> {
        (0..k.num_rows()).map(|i| k.row(i).to_vec()).collect()
    }
}

/// A joint distribution over a tuple of finite alphabets, stored row-major
/// with one label per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDist {
    table: Vec<f64>,
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl JointDist {
    pub fn new(table: Vec<f64>, dims: Vec<usize>, labels: &[&str]) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if table.len() != expected || labels.len() != dims.len() {
            return Err(Violation::Shape {
                len: table.len(),
                expected,
                dims: dims.clone(),
            }
            .into());
        }
        for (index, &value) in table.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(Violation::Negative { index, value }.into());
            }
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Violation::Sum { sum }.into());
        }
        Ok(JointDist {
            table,
            dims,
            labels: labels.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Builds the table by evaluating `f` on every multi-index.
    pub fn from_fn(dims: Vec<usize>, labels: &[&str], f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let total: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut table = Vec::with_capacity(total);
        for _ in 0..total {
            table.push(f(&idx));
            // advance the multi-index, last axis fastest
            for ax in (0..dims.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < dims[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        JointDist::new(table, dims, labels)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn prob(&self, index: &[usize]) -> f64 {
        self.table[self.flat_index(index)]
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len());
        let mut flat = 0;
        for (ax, &i) in index.iter().enumerate() {
            assert!(i < self.dims[ax]);
            flat = flat * self.dims[ax] + i;
        }
        flat
    }

    fn check_axes(&self, axes: &[usize]) -> Result<()> {
        for &a in axes {
            if a >= self.dims.len() {
                return Err(Error::argument(format!(
                    "axis {} out of range for {} axes",
                    a,
                    self.dims.len()
                )));
            }
        }
        for (i, &a) in axes.iter().enumerate() {
            if axes[..i].contains(&a) {
                return Err(Error::argument(format!("axis {a} listed twice")));
            }
        }
        Ok(())
    }

    /// Marginal over the given axes, in the given order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointDist> {
        self.check_axes(keep)?;
        let out_dims: Vec<usize> = keep.iter().map(|&a| self.dims[a]).collect();
        let out_len: usize = out_dims.iter().product();
        let mut out = vec![0.0; out_len.max(1)];

        // per-axis stride in the source table
        let mut strides = vec![1usize; self.dims.len()];
        for ax in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[ax] = strides[ax + 1] * self.dims[ax + 1];
        }

        let mut idx = vec![0usize; self.dims.len()];
        for (flat, &p) in self.table.iter().enumerate() {
            let mut rem = flat;
            for ax in 0..self.dims.len() {
                idx[ax] = rem / strides[ax];
                rem %= strides[ax];
            }
            let mut out_flat = 0;
            for &a in keep {
                out_flat = out_flat * self.dims[a] + idx[a];
            }
            out[out_flat] += p;
        }
        let labels: Vec<&str> = keep.iter().map(|&a| self.labels[a].as_str()).collect();
        JointDist::new(out, out_dims, &labels)
    }

    /// Entropy of the marginal on `axes`, in bits. Empty `axes` gives 0.
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64> {
        self.check_axes(axes)?;
        if axes.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy_slice(&self.marginalize(axes)?.table))
    }

    /// I(A;B) = H(A) + H(B) − H(A,B), clamped at 0.
    pub fn mutual_information(&self, axes_a: &[usize], axes_b: &[usize]) -> Result<f64> {
        self.check_disjoint(&[axes_a, axes_b])?;
        let ha = self.entropy_of(axes_a)?;
        let hb = self.entropy_of(axes_b)?;
        let hab = self.entropy_of(&concat(&[axes_a, axes_b]))?;
        Ok((ha + hb - hab).max(0.0))
    }

    /// I(A;B|C) = H(A,C) + H(B,C) − H(A,B,C) − H(C), clamped at 0.
    /// Empty `axes_c` reduces to the unconditional mutual information.
    pub fn conditional_mi(
        &self,
        axes_a: &[usize],
        axes_b: &[usize],
        axes_c: &[usize],
    ) -> Result<f64> {
        self.check_disjoint(&[axes_a, axes_b, axes_c])?;
        let hac = self.entropy_of(&concat(&[axes_a, axes_c]))?;
        let hbc = self.entropy_of(&concat(&[axes_b, axes_c]))?;
        let habc = self.entropy_of(&concat(&[axes_a, axes_b, axes_c]))?;
        let hc = self.entropy_of(axes_c)?;
        Ok((hac + hbc - habc - hc).max(0.0))
    }

    fn check_disjoint(&self, sets: &[&[usize]]) -> Result<()> {
        for set in sets {
            self.check_axes(set)?;
        }
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                for &a in sets[i] {
                    if sets[j].contains(&a) {
                        return Err(Error::argument(format!("axis sets overlap at axis {a}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn concat(sets: &[&[usize]]) -> Vec<usize> {
    sets.iter().flat_map(|s| s.iter().copied()).collect()
}
