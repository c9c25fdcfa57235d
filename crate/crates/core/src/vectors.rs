//! Portfolio and trading vectors over the cleaned stock universe.
//!
//! A portfolio vector holds the value-weighted proportion of an investor's
//! capital per stock at the first snapshot date, rounded to a fixed number of
//! decimals (two by default). Proportions are *not* renormalized after
//! rounding, so entries sum to 1 only up to the rounding error. A trading
//! vector holds the positive value changes between the two snapshots, priced
//! at the first date; sales are clamped to zero and values are not rounded.
//!
//! All similarity work downstream (class dedup, the reduced network, the
//! bootstrap cohort tests) runs on these two representations.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Sparse non-negative vector: entries sorted by coordinate, values > 0.
/// Coordinates are indices into the universe stock list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn empty() -> Self {
        SparseVector::default()
    }

    /// Build from entries that are already sorted by coordinate.
    /// Zero values are dropped; negative or non-finite values are a bug in
    /// the caller and rejected.
    pub fn from_sorted(entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut kept: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (idx, v) in entries {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "vector entry at coordinate {idx} is {v}; entries must be finite and >= 0"
                )));
            }
            if let Some(&(prev, _)) = kept.last() {
                if prev >= idx {
                    return Err(Error::InvalidInput(format!(
                        "vector coordinates not strictly increasing at {idx}"
                    )));
                }
            }
            if v > 0.0 {
                kept.push((idx, v));
            }
        }
        Ok(SparseVector { entries: kept })
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn support(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: u32) -> f64 {
        match self.entries.binary_search_by_key(&idx, |e| e.0) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Merge-walk dot product; accumulates in ascending coordinate order.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0usize, 0usize);
        let a = &self.entries;
        let b = &other.entries;
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn l1(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v).sum()
    }

    /// Scale so entries sum to 1. The zero vector stays the zero vector.
    pub fn l1_normalized(&self) -> SparseVector {
        let total = self.l1();
        if total <= 0.0 {
            return SparseVector::empty();
        }
        SparseVector {
            entries: self
                .entries
                .iter()
                .map(|&(idx, v)| (idx, v / total))
                .collect(),
        }
    }
}

/// Value-weighted portfolio proportions at the first snapshot, rounded.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PortfolioVector(pub SparseVector);

/// Positive value changes between the snapshots, priced at the first date.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TradingVector(pub SparseVector);

/// Round half away from zero to `places` decimals.
pub fn round_half_away(x: f64, places: u32) -> f64 {
    let f = 10f64.powi(places as i32);
    (x * f).round() / f
}

/// Portfolio vector from share counts and first-date prices.
///
/// `holdings` must be sorted by stock index. Proportions are rounded to
/// `places` decimals; entries that round to zero are dropped and the rest are
/// left as-is (no renormalization). Errors with [`Error::EmptyPortfolio`]
/// when the total position value is zero.
pub fn portfolio_vector(
    holdings: &[(u32, u64)],
    prices: &[f64],
    places: u32,
) -> Result<PortfolioVector> {
    let mut values: Vec<(u32, f64)> = Vec::with_capacity(holdings.len());
    for &(idx, shares) in holdings {
        let price = *prices.get(idx as usize).ok_or_else(|| {
            Error::InvalidInput(format!("stock index {idx} outside the price table"))
        })?;
        if shares > 0 {
            values.push((idx, shares as f64 * price));
        }
    }
    let total: f64 = values.iter().map(|&(_, v)| v).sum();
    if total <= 0.0 {
        return Err(Error::EmptyPortfolio);
    }
    let rounded = values
        .into_iter()
        .map(|(idx, v)| (idx, round_half_away(v / total, places)))
        .collect();
    Ok(PortfolioVector(SparseVector::from_sorted(rounded)?))
}

/// Trading vector: positive value differences between the snapshots at
/// first-date prices. Sales and unchanged positions drop out; the result may
/// be empty. Both holding lists must be sorted by stock index.
pub fn trading_vector(
    holdings_t1: &[(u32, u64)],
    holdings_t2: &[(u32, u64)],
    prices_t1: &[f64],
) -> Result<TradingVector> {
    let (mut i, mut j) = (0usize, 0usize);
    let mut out: Vec<(u32, f64)> = Vec::new();
    let mut push = |idx: u32, s1: u64, s2: u64| -> Result<()> {
        let price = *prices_t1.get(idx as usize).ok_or_else(|| {
            Error::InvalidInput(format!("stock index {idx} outside the price table"))
        })?;
        let diff = (s2 as i128 - s1 as i128) as f64 * price;
        if diff > 0.0 {
            out.push((idx, diff));
        }
        Ok(())
    };
    while i < holdings_t1.len() || j < holdings_t2.len() {
        let k1 = holdings_t1.get(i).map(|e| e.0);
        let k2 = holdings_t2.get(j).map(|e| e.0);
        match (k1, k2) {
            (Some(a), Some(b)) if a == b => {
                push(a, holdings_t1[i].1, holdings_t2[j].1)?;
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a < b => {
                push(a, holdings_t1[i].1, 0)?;
                i += 1;
            }
            (Some(_), Some(b)) => {
                push(b, 0, holdings_t2[j].1)?;
                j += 1;
            }
            (Some(a), None) => {
                push(a, holdings_t1[i].1, 0)?;
                i += 1;
            }
            (None, Some(b)) => {
                push(b, 0, holdings_t2[j].1)?;
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(TradingVector(SparseVector::from_sorted(out)?))
}

/// Restrict a trading vector to stocks absent from the investor's own
/// first-date portfolio: purchases of stocks they did not already hold.
pub fn new_stock_filter(trading: &TradingVector, portfolio_t1: &PortfolioVector) -> TradingVector {
    let kept = trading
        .0
        .entries()
        .iter()
        .filter(|&&(idx, _)| portfolio_t1.0.get(idx) == 0.0)
        .copied()
        .collect();
    TradingVector(SparseVector { entries: kept })
}

/// Cosine similarity. Non-negative vectors give a value in [0, 1] (up to a
/// final-operation rounding ulp). Zero vectors have no direction; that is an
/// error here, and callers recording population statistics map it to 0 via
/// [`cosine_or_zero`].
pub fn cosine(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(a.dot(b) / (a.norm() * b.norm()))
}

/// Cosine similarity with the population-statistics convention: pairs
/// involving a zero vector score 0.
pub fn cosine_or_zero(a: &SparseVector, b: &SparseVector) -> f64 {
    cosine(a, b).unwrap_or(0.0)
}

/// Element-wise mean of the members, each L1-normalized first. Zero vectors
/// contribute the zero vector but still count toward the mean. Errors on an
/// empty collection.
pub fn aggregate<'a, I>(members: I) -> Result<SparseVector>
where
    I: IntoIterator<Item = &'a SparseVector>,
{
    let mut count = 0usize;
    let mut dense: Vec<f64> = Vec::new();
    for v in members {
        count += 1;
        let total = v.l1();
        if total <= 0.0 {
            continue;
        }
        for &(idx, val) in v.entries() {
            let idx = idx as usize;
            if idx >= dense.len() {
                dense.resize(idx + 1, 0.0);
            }
            dense[idx] += val / total;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput(
            "aggregate of an empty collection".into(),
        ));
    }
    let n = count as f64;
    let entries = dense
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v > 0.0)
        .map(|(idx, &v)| (idx as u32, v / n))
        .collect();
    Ok(SparseVector { entries })
}

// --- vector dump files ----------------------------------------------------

/// Write vectors as `investor_id,stock_index,value` rows, one row per entry,
/// investors in the given order. Investors with empty vectors emit no rows.
pub fn write_vector_csv(path: &Path, ids: &[String], vectors: &[&SparseVector]) -> Result<()> {
    assert_eq!(ids.len(), vectors.len());
    let mut out = String::from("investor_id,stock_index,value\n");
    for (id, vec) in ids.iter().zip(vectors) {
        for &(idx, v) in vec.entries() {
            let _ = writeln!(out, "{id},{idx},{v}");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a vector dump back, aligned with `ids`. Investors without rows get
/// the empty vector; rows for unknown investors are an error.
pub fn read_vector_csv(path: &Path, ids: &[String]) -> Result<Vec<SparseVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut raw: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ids.len()];
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == "investor_id,stock_index,value" => {}
        _ => return Err(Error::parse(path, 1, "expected vector dump header")),
    }
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (id, idx, val) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(idx), Some(val), None) => (id, idx, val),
            _ => return Err(Error::parse(path, lineno, "expected 3 comma-separated fields")),
        };
        let slot = *index
            .get(id)
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown investor '{id}'")))?;
        let idx: u32 = idx
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad stock index '{idx}'")))?;
        let val: f64 = val
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad value '{val}'")))?;
        raw[slot].push((idx, val));
    }
    let mut out = Vec::with_capacity(ids.len());
    for mut entries in raw {
        entries.sort_by_key(|e| e.0);
        out.push(SparseVector::from_sorted(entries)?);
    }
    Ok(out)
}
