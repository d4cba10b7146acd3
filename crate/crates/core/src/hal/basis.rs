use crate::data::Sample;
use crate::error::{Error, Result};

/// Default hard cap on the nominal number of indicator columns.
pub const DEFAULT_COLUMN_CAP: usize = 2_000_000;

/// Indicator basis `x -> 1(X_{j,s} <= x_s)` over training knots `X_j` and
/// nonempty coordinate subsets `s` with `|s| <= max_interaction`.
///
/// Subsets are bitmasks over coordinates (bit `k` is coordinate `k + 1`).
/// Column `(s, j)` has index `subset_pos(s) * n + j`.
#[derive(Debug, Clone)]
pub struct HalBasis {
    d: usize,
    n: usize,
    knots: Vec<f64>,
    subsets: Vec<u32>,
    max_interaction: usize,
}

impl HalBasis {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_knots(&self) -> usize {
        self.n
    }

    pub fn max_interaction(&self) -> usize {
        self.max_interaction
    }

    pub fn subsets(&self) -> &[u32] {
        &self.subsets
    }

    pub fn knot(&self, j: usize) -> &[f64] {
        &self.knots[j * self.d..(j + 1) * self.d]
    }

    pub fn knots_flat(&self) -> &[f64] {
        &self.knots
    }

    pub fn column_count(&self) -> usize {
        self.n * self.subsets.len()
    }

    /// `(subset mask, knot index)` of column `col`.
    pub fn column(&self, col: usize) -> (u32, usize) {
        (self.subsets[col / self.n], col % self.n)
    }

    pub fn column_index(&self, subset: u32, knot: usize) -> Option<usize> {
        let pos = self.subsets.iter().position(|&s| s == subset)?;
        (knot < self.n).then_some(pos * self.n + knot)
    }

    pub fn eval_column(&self, col: usize, x: &[f64]) -> f64 {
        let (s, j) = self.column(col);
        if indicator(s, self.knot(j), x) {
            1.0
        } else {
            0.0
        }
    }

    /// Values of every column at `x`.
    pub fn eval_row(&self, x: &[f64]) -> Vec<f64> {
        (0..self.column_count()).map(|c| self.eval_column(c, x)).collect()
    }
}

/// `1(knot_s <= x_s)` entrywise over the coordinates in `subset`.
#[inline]
pub fn indicator(subset: u32, knot: &[f64], x: &[f64]) -> bool {
    let mut bits = subset;
    while bits != 0 {
        let k = bits.trailing_zeros() as usize;
        if knot[k] > x[k] {
            return false;
        }
        bits &= bits - 1;
    }
    true
}

pub fn default_max_interaction(d: usize) -> usize {
    d.min(3)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Nominal column count `n * sum_{m=1..max_interaction} C(d, m)`.
pub fn nominal_column_count(n: usize, d: usize, max_interaction: usize) -> usize {
    let subsets: usize = (1..=max_interaction).map(|m| binomial(d, m)).fold(0, usize::saturating_add);
    n.saturating_mul(subsets)
}

pub fn build_hal_basis(s: &Sample, max_interaction: usize) -> Result<HalBasis> {
    build_hal_basis_capped(s, max_interaction, DEFAULT_COLUMN_CAP)
}

pub fn build_hal_basis_capped(s: &Sample, max_interaction: usize, column_cap: usize) -> Result<HalBasis> {
    let d = s.d();
    if max_interaction == 0 || max_interaction > d {
        return Err(Error::config(format!(
            "max_interaction must lie in 1..={d}, got {max_interaction}"
        )));
    }
    if d > 31 {
        return Err(Error::config("HAL supports at most 31 covariates"));
    }
    let count = nominal_column_count(s.n(), d, max_interaction);
    if count > column_cap {
        return Err(Error::Resource(format!(
            "HAL basis would have {count} columns, above the column cap of {column_cap}; \
             lower max_interaction or raise the cap"
        )));
    }
    let mut subsets: Vec<u32> = (1u32..(1u32 << d))
        .filter(|m| m.count_ones() as usize <= max_interaction)
        .collect();
    subsets.sort_by_key(|m| (m.count_ones(), *m));
    Ok(HalBasis {
        d,
        n: s.n(),
        knots: s.x_flat().to_vec(),
        subsets,
        max_interaction,
    })
}
