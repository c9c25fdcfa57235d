//! Bootstrap test of whether a group trades more alike inside than out,
//! plus per-group summary statistics.
//!
//! One bootstrap iteration draws three sets of `n` investors — `i1` and
//! `i2` disjointly from the group, `i3` from everyone else — aggregates
//! each set's trading vectors and scores δ = cos(agg i1, agg i2) −
//! cos(agg i1, agg i3). The group trades "significantly" alike at set
//! size `n` when the fraction of iterations with δ > 0 reaches `alpha`.
//! The significant set size is the smallest such `n` under a linear scan
//! (binary search would assume monotonicity the statistic doesn't owe us).
//!
//! Every iteration seeds its own generator from `seed ⊕ iteration`, so the
//! δ sequence is identical however rayon splits the work. The per-thread
//! scratch arrays are sampled with a partial Fisher–Yates prefix whose
//! swaps are recorded and undone, keeping each draw O(n) without letting
//! one iteration's shuffle leak into the next.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::vectors::{aggregate, cosine_or_zero, PortfolioVector, SparseVector, TradingVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub iterations: u32,
    /// Set size `n` drawn per iteration. The significant-set-size scan
    /// ignores this field and supplies its own.
    pub set_size: u32,
    /// Required fraction of iterations with δ > 0.
    pub alpha: f64,
    /// Upper bound of the significant-set-size scan.
    pub n_max: u32,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { iterations: 1000, set_size: 1, alpha: 0.95, n_max: 100, seed: 0 }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("bootstrap needs at least one iteration".into()));
        }
        if !(1 <= self.set_size && self.set_size <= self.n_max) {
            return Err(Error::Config(format!(
                "set size {} outside [1, n_max = {}]",
                self.set_size, self.n_max
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    /// δ per iteration, in iteration order; each in [−1, 1].
    pub deltas: Vec<f64>,
    /// Fraction of iterations with δ strictly positive.
    pub indicator_fraction: f64,
    pub mean_inside: f64,
    pub mean_outside: f64,
}

use crate::rng::{sample_prefix, unsample};

pub fn bootstrap_compare(
    group: &[u32],
    trading: &[TradingVector],
    cfg: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    cfg.validate()?;
    let n = cfg.set_size as usize;
    let mut member = vec![false; trading.len()];
    for &i in group {
        let slot = member
            .get_mut(i as usize)
            .ok_or_else(|| Error::InvalidInput(format!("investor index {i} outside population")))?;
        if std::mem::replace(slot, true) {
            return Err(Error::InvalidInput(format!("investor {i} listed twice in the group")));
        }
    }
    if group.len() < 2 * n {
        return Err(Error::InvalidInput(format!(
            "group has {} investors; two disjoint sets of {n} need at least {}",
            group.len(),
            2 * n
        )));
    }
    let complement: Vec<u32> = (0..trading.len() as u32)
        .filter(|&i| !member[i as usize])
        .collect();
    if complement.len() < n {
        return Err(Error::InvalidInput(format!(
            "population outside the group has {} investors, need at least {n}",
            complement.len()
        )));
    }

    let sims: Vec<(f64, f64)> = (0..cfg.iterations)
        .into_par_iter()
        .map_init(
            || (group.to_vec(), complement.clone(), Vec::new()),
            |(g, c, undo), it| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ it as u64);
                sample_prefix(g, 2 * n, &mut rng, undo);
                let agg = |ids: &[u32]| -> SparseVector {
                    aggregate(ids.iter().map(|&i| &trading[i as usize].0))
                        .expect("draws are non-empty")
                };
                let a1 = agg(&g[..n]);
                let inside = cosine_or_zero(&a1, &agg(&g[n..2 * n]));
                unsample(g, undo);
                sample_prefix(c, n, &mut rng, undo);
                let outside = cosine_or_zero(&a1, &agg(&c[..n]));
                unsample(c, undo);
                (inside, outside)
            },
        )
        .collect();

    let deltas: Vec<f64> = sims.iter().map(|(i, o)| i - o).collect();
    let nf = cfg.iterations as f64;
    Ok(BootstrapOutcome {
        indicator_fraction: deltas.iter().filter(|&&d| d > 0.0).count() as f64 / nf,
        mean_inside: sims.iter().map(|s| s.0).sum::<f64>() / nf,
        mean_outside: sims.iter().map(|s| s.1).sum::<f64>() / nf,
        deltas,
    })
}

/// Smallest set size whose bootstrap reaches `cfg.alpha`, scanning n = 1
/// upward to `cfg.n_max` (clipped to what the group and the rest of the
/// population can supply); `None` when the scan runs out.
pub fn significant_set_size(
    group: &[u32],
    trading: &[TradingVector],
    cfg: &BootstrapConfig,
) -> Result<Option<u32>> {
    let outside = trading.len().saturating_sub(group.len());
    let cap = (cfg.n_max as usize)
        .min(group.len() / 2)
        .min(outside)
        .max(1); // an infeasible n = 1 still runs, to surface the named error
    for n in 1..=cap as u32 {
        let step = BootstrapConfig { set_size: n, ..cfg.clone() };
        if bootstrap_compare(group, trading, &step)?.indicator_fraction >= cfg.alpha {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub group_id: u32,
    pub investors: u32,
    /// Mean portfolio support size over members.
    pub mean_stocks: f64,
    /// Up to three (stock, holder fraction) pairs, fraction descending,
    /// stock index breaking ties.
    pub top_stocks: Vec<(u32, f64)>,
    /// `None` = "not reached". Filled in by the caller via
    /// [`significant_set_size`]; [`group_stats`] leaves it `None`.
    pub significant_set_size: Option<u32>,
    pub mean_portfolio_sim: f64,
    pub mean_trading_sim: f64,
}

/// All-pairs similarity means are exact up to this group size; larger
/// groups fall back to `sample_pairs` uniform draws.
const EXACT_PAIR_LIMIT: usize = 2000;

pub fn group_stats(
    group_id: u32,
    group: &[u32],
    portfolios: &[PortfolioVector],
    trading: &[TradingVector],
    sample_pairs: u32,
    seed: u64,
) -> GroupReport {
    let m = group.len();
    assert!(m > 0, "group_stats needs a non-empty group");
    let mean_stocks = group
        .iter()
        .map(|&i| portfolios[i as usize].0.support() as f64)
        .sum::<f64>()
        / m as f64;

    let mut holders: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for &i in group {
        for &(stock, _) in portfolios[i as usize].0.entries() {
            *holders.entry(stock).or_insert(0) += 1;
        }
    }
    let mut top: Vec<(u32, f64)> = holders
        .into_iter()
        .map(|(stock, count)| (stock, count as f64 / m as f64))
        .collect();
    top.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    top.truncate(3);

    // Means over member pairs; a singleton group has no pairs and reports 0.
    let (mut p_sum, mut t_sum, mut pairs) = (0.0, 0.0, 0u64);
    let mut score = |a: u32, b: u32| {
        p_sum += cosine_or_zero(&portfolios[a as usize].0, &portfolios[b as usize].0);
        t_sum += cosine_or_zero(&trading[a as usize].0, &trading[b as usize].0);
        pairs += 1;
    };
    if m <= EXACT_PAIR_LIMIT {
        for x in 0..m {
            for y in x + 1..m {
                score(group[x], group[y]);
            }
        }
    } else {
        let mut rng = rng::plain_rng(seed);
        for _ in 0..sample_pairs {
            let x = rng.gen_range(0..m);
            let mut y = rng.gen_range(0..m - 1);
            if y >= x {
                y += 1;
            }
            score(group[x], group[y]);
        }
    }
    GroupReport {
        group_id,
        investors: m as u32,
        mean_stocks,
        top_stocks: top,
        significant_set_size: None,
        mean_portfolio_sim: if pairs > 0 { p_sum / pairs as f64 } else { 0.0 },
        mean_trading_sim: if pairs > 0 { t_sum / pairs as f64 } else { 0.0 },
    }
}

// --- group report CSV ---------------------------------------------------------

pub const GROUPS_CSV_HEADER: &str = "group_id,investors,mean_stocks,top1_stock,top1_frac,\
top2_stock,top2_frac,top3_stock,top3_frac,significant_set_size,mean_portfolio_sim,\
mean_trading_sim";

/// `stocks` maps stock indices to display names (ISINs). Missing top
/// stocks leave their two fields empty; an unreached significant set size
/// is written as `not reached`.
pub fn write_groups_csv(
    path: &std::path::Path,
    reports: &[GroupReport],
    stocks: &[String],
) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from(GROUPS_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{},{},{}", r.group_id, r.investors, r.mean_stocks);
        for k in 0..3 {
            match r.top_stocks.get(k) {
                Some(&(stock, frac)) => {
                    let _ = write!(out, ",{},{frac}", stocks[stock as usize]);
                }
                None => out.push_str(",,"),
            }
        }
        match r.significant_set_size {
            Some(n) => {
                let _ = write!(out, ",{n}");
            }
            None => out.push_str(",not reached"),
        }
        let _ = writeln!(out, ",{},{}", r.mean_portfolio_sim, r.mean_trading_sim);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A groups.csv row read back with stock names left as strings.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub group_id: u32,
    pub investors: u32,
    pub mean_stocks: f64,
    pub top_stocks: Vec<(String, f64)>,
    pub significant_set_size: Option<u32>,
    pub mean_portfolio_sim: f64,
    pub mean_trading_sim: f64,
}

pub fn read_groups_csv(path: &std::path::Path) -> Result<Vec<GroupRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == GROUPS_CSV_HEADER => {}
        _ => return Err(Error::parse(path, 1, "unexpected group report header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(Error::parse(path, i + 1, format!("expected 12 fields, got {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::parse(path, i + 1, format!("bad {what} '{s}'")))
        };
        let mut top_stocks = Vec::new();
        for k in 0..3 {
            let (name, frac) = (f[3 + 2 * k], f[4 + 2 * k]);
            if !name.is_empty() {
                top_stocks.push((name.to_string(), num(frac, "holder fraction")?));
            }
        }
        rows.push(GroupRow {
            group_id: num(f[0], "group id")? as u32,
            investors: num(f[1], "investor count")? as u32,
            mean_stocks: num(f[2], "mean stocks")?,
            top_stocks,
            significant_set_size: match f[9] {
                "not reached" => None,
                s => Some(num(s, "significant set size")? as u32),
            },
            mean_portfolio_sim: num(f[10], "portfolio similarity")?,
            mean_trading_sim: num(f[11], "trading similarity")?,
        });
    }
    Ok(rows)
}
