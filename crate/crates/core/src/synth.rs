//! Synthetic two-snapshot markets with planted investor groups.
//!
//! Each group is built around a preference-ordered stock pool. At the first
//! date a member draws a support size (rounded positive normal around the
//! group's `holdings_mean`), then picks stocks one at a time: with
//! probability `concentration` the next not-yet-held pool stock in pool
//! order, otherwise a uniformly random stock. Pool picks come first in a
//! member's value ordering, so group members share the same dominant
//! holdings; position values decay geometrically (ratio ~ U(0.15, 0.35)
//! with per-position jitter) from a log-uniform capital level, and share
//! counts are whatever integers (≥ 1) best realize those values at the
//! drawn prices. When the pool runs out, the pick is skipped — full
//! concentration with a one-stock pool yields exactly that one stock.
//!
//! Between the dates every investor buys something: a group member copies
//! the group's signature purchase (a fixed share-count vector over a pool
//! prefix, drawn once per group) with probability `trade_correlation`, and
//! otherwise buys a few uniformly random stocks. Copiers therefore have
//! *identical* purchase vectors — trading cosine exactly 1 — which is what
//! makes the correlation parameter directly testable.
//!
//! Prices and total share counts are drawn once and held fixed across both
//! dates so no stock trips the corporate-action filter. Everything is
//! keyed on `MarketSpec::seed` via per-group derived streams: same spec,
//! same bytes out.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::KvFile;
use crate::error::{Error, Result};
use crate::rng;

pub const T1_DATE: &str = "2019-06-30";
pub const T2_DATE: &str = "2019-09-30";

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub size: u32,
    /// Preference-ordered stock indices; earlier = more dominant.
    pub pool: Vec<u32>,
    pub concentration: f64,
    pub holdings_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub stocks: u32,
    pub groups: Vec<GroupSpec>,
    pub trade_correlation: f64,
    pub noise_investors: u32,
    pub price_range: (f64, f64),
    pub total_shares_range: (u64, u64),
    pub seed: u64,
}

impl Default for MarketSpec {
    /// Thirty planted groups of 16 over disjoint 3-stock pools spread
    /// across a 200-stock market, plus 120 unaffiliated investors. Holdings
    /// are sparse — a couple of stocks per investor, like a retail
    /// register — so single-investor similarities are mostly zero while
    /// large random aggregates always overlap.
    fn default() -> Self {
        MarketSpec {
            stocks: 200,
            groups: (0..30)
                .map(|g| GroupSpec {
                    size: 16,
                    pool: (g * 6..g * 6 + 3).collect(),
                    concentration: 0.9,
                    holdings_mean: 2.0,
                })
                .collect(),
            trade_correlation: 0.9,
            noise_investors: 120,
            price_range: (5.0, 500.0),
            total_shares_range: (1_000_000, 100_000_000),
            seed: 42,
        }
    }
}

impl MarketSpec {
    pub fn validate(&self) -> Result<()> {
        let config = |msg: String| Err(Error::Config(msg));
        if self.stocks == 0 {
            return config("market needs at least one stock".into());
        }
        if self.groups.is_empty() && self.noise_investors == 0 {
            return config("market has no investors".into());
        }
        for (g, group) in self.groups.iter().enumerate() {
            if group.size == 0 {
                return config(format!("group {g} has size 0"));
            }
            if group.pool.is_empty() {
                return config(format!("group {g} has an empty stock pool"));
            }
            if group.pool.len() > self.stocks as usize {
                return config(format!(
                    "group {g} pool has {} stocks but the market only {}",
                    group.pool.len(),
                    self.stocks
                ));
            }
            if let Some(&s) = group.pool.iter().find(|&&s| s >= self.stocks) {
                return config(format!("group {g} pool references stock {s} out of range"));
            }
            if !(0.0..=1.0).contains(&group.concentration) {
                return config(format!("group {g} concentration outside [0, 1]"));
            }
            if !(group.holdings_mean >= 1.0) {
                return config(format!("group {g} holdings_mean must be ≥ 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.trade_correlation) {
            return config("trade_correlation outside [0, 1]".into());
        }
        if !(self.price_range.0 > 0.0 && self.price_range.0 <= self.price_range.1) {
            return config("price_range must satisfy 0 < min ≤ max".into());
        }
        if !(self.total_shares_range.0 >= 1 && self.total_shares_range.0 <= self.total_shares_range.1)
        {
            return config("total_shares_range must satisfy 1 ≤ min ≤ max".into());
        }
        Ok(())
    }

    /// Parse the key-value spec format. Keys: `stocks`, `trade_correlation`,
    /// `noise_investors`, `price_range = LO..HI`, `total_shares_range = LO..HI`,
    /// `seed`, and one `group = size=N pool=A..B|A,B,C concentration=C
    /// holdings_mean=H` line per group.
    pub fn parse(text: &str) -> Result<MarketSpec> {
        let kv = KvFile::parse_str(text)?;
        kv.reject_unknown(&[
            "stocks",
            "group",
            "trade_correlation",
            "noise_investors",
            "price_range",
            "total_shares_range",
            "seed",
        ])?;
        let mut spec = MarketSpec::default();
        spec.groups.clear();
        spec.stocks = kv.parsed_or("stocks", spec.stocks)?;
        spec.trade_correlation = kv.parsed_or("trade_correlation", spec.trade_correlation)?;
        spec.noise_investors = kv.parsed_or("noise_investors", spec.noise_investors)?;
        spec.seed = kv.parsed_or("seed", spec.seed)?;
        if let Some(raw) = kv.get("price_range") {
            spec.price_range = parse_range::<f64>(raw).ok_or_else(|| {
                Error::Config(format!("price_range: expected LO..HI, got '{raw}'"))
            })?;
        }
        if let Some(raw) = kv.get("total_shares_range") {
            spec.total_shares_range = parse_range::<u64>(raw).ok_or_else(|| {
                Error::Config(format!("total_shares_range: expected LO..HI, got '{raw}'"))
            })?;
        }
        for entry in kv.get_all("group") {
            spec.groups.push(parse_group(entry)?);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<MarketSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn parse_range<T: std::str::FromStr + PartialOrd>(s: &str) -> Option<(T, T)> {
    let (lo, hi) = s.split_once("..")?;
    Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?))
}

fn parse_group(entry: &crate::config::KvEntry) -> Result<GroupSpec> {
    let bad = |msg: String| Error::Config(format!("line {}: {msg}", entry.line));
    let mut size = None;
    let mut pool = None;
    let mut concentration = None;
    let mut holdings_mean = None;
    for field in entry.value.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("group field '{field}' is not key=value")))?;
        match key {
            "size" => {
                size = Some(
                    value
                        .parse::<u32>()
                        .map_err(|_| bad(format!("bad group size '{value}'")))?,
                )
            }
            "pool" => {
                let parsed: Option<Vec<u32>> = if value.contains("..") {
                    parse_range::<u32>(value).map(|(a, b)| (a..b).collect())
                } else {
                    value.split(',').map(|t| t.trim().parse().ok()).collect()
                };
                pool = Some(parsed.ok_or_else(|| bad(format!("bad group pool '{value}'")))?);
            }
            "concentration" => {
                concentration = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| bad(format!("bad concentration '{value}'")))?,
                )
            }
            "holdings_mean" => {
                holdings_mean = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| bad(format!("bad holdings_mean '{value}'")))?,
                )
            }
            other => return Err(bad(format!("unknown group field '{other}'"))),
        }
    }
    Ok(GroupSpec {
        size: size.ok_or_else(|| bad("group is missing size=".into()))?,
        pool: pool.ok_or_else(|| bad("group is missing pool=".into()))?,
        concentration: concentration.ok_or_else(|| bad("group is missing concentration=".into()))?,
        holdings_mean: holdings_mean
            .ok_or_else(|| bad("group is missing holdings_mean=".into()))?,
    })
}

/// Ground truth carried out of the generator: every investor's planted
/// label (group members share one label; unaffiliated investors get unique
/// labels) and each group's signature purchase vector in share counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    pub labels: Vec<(String, String)>,
    pub signatures: Vec<Vec<(u32, u64)>>,
}

impl PlantedTruth {
    /// Dense 0-based labels aligned with `ids`; errors when the truth does
    /// not cover exactly this universe.
    pub fn dense_labels(&self, ids: &[String]) -> Result<Vec<u32>> {
        let by_id: HashMap<&str, &str> = self
            .labels
            .iter()
            .map(|(id, label)| (id.as_str(), label.as_str()))
            .collect();
        let mut dense: HashMap<&str, u32> = HashMap::new();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let label = by_id.get(id.as_str()).ok_or_else(|| {
                Error::InvalidInput(format!("investor '{id}' is missing from the planted truth"))
            })?;
            let next = dense.len() as u32;
            out.push(*dense.entry(label).or_insert(next));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub t1_date: NaiveDate,
    pub t2_date: NaiveDate,
    /// Index order defines the stock coordinates; ISINs sort the same way.
    pub isins: Vec<String>,
    /// Per stock: (close price, total shares), identical at both dates.
    pub prices: Vec<(f64, u64)>,
    /// Per investor, in generation order: (id, t1 holdings, t2 holdings),
    /// holdings sorted by stock index.
    pub investors: Vec<(String, Vec<(u32, u64)>, Vec<(u32, u64)>)>,
    pub truth: PlantedTruth,
}

fn isin(stock: u32) -> String {
    format!("SY{stock:010}")
}

/// Positive integer from one normal draw, rounded half away from zero and
/// clamped to [1, cap].
fn positive_count(rng: &mut ChaCha8Rng, mean: f64, cap: u64) -> u64 {
    let sigma = (mean / 3.0).max(1e-9);
    let x = Normal::new(mean, sigma).expect("finite parameters").sample(rng);
    (x.round() as i64).clamp(1, cap.max(1) as i64) as u64
}

fn log_uniform(rng: &mut ChaCha8Rng, lo_exp: f64, hi_exp: f64) -> f64 {
    10f64.powf(rng.gen_range(lo_exp..hi_exp))
}

struct Member {
    t1: Vec<(u32, u64)>,
    t2: Vec<(u32, u64)>,
}

/// Shared per-investor machinery: draw a t1 portfolio from ranked pool
/// picks and uniform strays, then buy at t2 (the signature when `copy`,
/// random stocks otherwise).
fn gen_member(
    rng: &mut ChaCha8Rng,
    stocks: u32,
    pool: &[u32],
    concentration: f64,
    holdings_mean: f64,
    prices: &[(f64, u64)],
    signature: Option<&[(u32, u64)]>,
    copy_prob: f64,
) -> Member {
    let support = positive_count(rng, holdings_mean, stocks as u64) as usize;
    let mut used = vec![false; stocks as usize];
    let mut pool_picks: Vec<u32> = Vec::new();
    let mut stray_picks: Vec<u32> = Vec::new();
    let mut pool_rank = 0usize;
    for _ in 0..support {
        if rng.gen_bool(concentration) {
            while pool_rank < pool.len() && used[pool[pool_rank] as usize] {
                pool_rank += 1;
            }
            if pool_rank < pool.len() {
                let s = pool[pool_rank];
                used[s as usize] = true;
                pool_picks.push(s);
            }
        } else {
            let mut pick = None;
            for _ in 0..64 {
                let s = rng.gen_range(0..stocks);
                if !used[s as usize] {
                    pick = Some(s);
                    break;
                }
            }
            let s = pick.unwrap_or_else(|| {
                let start = rng.gen_range(0..stocks);
                (0..stocks)
                    .map(|d| (start + d) % stocks)
                    .find(|&s| !used[s as usize])
                    .expect("support capped at the stock count")
            });
            used[s as usize] = true;
            stray_picks.push(s);
        }
    }
    let decay: f64 = rng.gen_range(0.15..0.35);
    let capital = log_uniform(rng, 3.5, 5.0);
    let mut t1: Vec<(u32, u64)> = pool_picks
        .iter()
        .chain(stray_picks.iter())
        .enumerate()
        .map(|(j, &s)| {
            let weight = decay.powi(j as i32) * rng.gen_range(0.8..1.25);
            let shares = ((capital * weight / prices[s as usize].0).round() as i64).max(1) as u64;
            (s, shares)
        })
        .collect();
    t1.sort_unstable_by_key(|e| e.0);

    let mut position: HashMap<u32, u64> = t1.iter().copied().collect();
    let copies = signature.is_some() && rng.gen_bool(copy_prob);
    if copies {
        for &(s, count) in signature.unwrap() {
            *position.entry(s).or_insert(0) += count;
        }
    } else {
        let buys = positive_count(rng, 2.0, stocks as u64);
        let capital = log_uniform(rng, 3.0, 4.5);
        for _ in 0..buys {
            let s = rng.gen_range(0..stocks);
            let value = capital * rng.gen_range(0.5..1.5);
            let count = ((value / prices[s as usize].0).round() as i64).max(1) as u64;
            *position.entry(s).or_insert(0) += count;
        }
    }
    let mut t2: Vec<(u32, u64)> = position.into_iter().collect();
    t2.sort_unstable_by_key(|e| e.0);
    Member { t1, t2 }
}

pub fn generate(spec: &MarketSpec) -> Result<SyntheticMarket> {
    spec.validate()?;
    let stocks = spec.stocks;
    let mut market_rng = rng::task_rng(spec.seed, u64::MAX);
    let prices: Vec<(f64, u64)> = (0..stocks)
        .map(|_| {
            let price = market_rng.gen_range(spec.price_range.0..=spec.price_range.1);
            let total =
                market_rng.gen_range(spec.total_shares_range.0..=spec.total_shares_range.1);
            (price, total)
        })
        .collect();

    let per_group: Vec<(Vec<(u32, u64)>, Vec<Member>)> = spec
        .groups
        .par_iter()
        .enumerate()
        .map(|(g, group)| {
            let mut grng = rng::task_rng(spec.seed, g as u64);
            let sig_len = positive_count(&mut grng, group.holdings_mean, group.pool.len() as u64);
            let sig_capital = log_uniform(&mut grng, 3.5, 4.5);
            let sig_decay: f64 = grng.gen_range(0.15..0.35);
            let signature: Vec<(u32, u64)> = group.pool[..sig_len as usize]
                .iter()
                .enumerate()
                .map(|(j, &s)| {
                    let value = sig_capital * sig_decay.powi(j as i32);
                    let count = ((value / prices[s as usize].0).round() as i64).max(1) as u64;
                    (s, count)
                })
                .collect();
            let members = (0..group.size)
                .map(|_| {
                    gen_member(
                        &mut grng,
                        stocks,
                        &group.pool,
                        group.concentration,
                        group.holdings_mean,
                        &prices,
                        Some(&signature),
                        spec.trade_correlation,
                    )
                })
                .collect();
            (signature, members)
        })
        .collect();

    let noise_mean = if spec.groups.is_empty() {
        2.0
    } else {
        spec.groups.iter().map(|g| g.holdings_mean).sum::<f64>() / spec.groups.len() as f64
    };
    let mut noise_rng = rng::task_rng(spec.seed, u64::MAX - 1);
    let noise: Vec<Member> = (0..spec.noise_investors)
        .map(|_| gen_member(&mut noise_rng, stocks, &[], 0.0, noise_mean, &prices, None, 0.0))
        .collect();

    let mut investors = Vec::new();
    let mut labels = Vec::new();
    let mut signatures = Vec::new();
    for (g, (signature, members)) in per_group.into_iter().enumerate() {
        signatures.push(signature);
        for (j, m) in members.into_iter().enumerate() {
            let id = format!("G{g:03}M{j:06}");
            labels.push((id.clone(), format!("g{g}")));
            investors.push((id, m.t1, m.t2));
        }
    }
    for (j, m) in noise.into_iter().enumerate() {
        let id = format!("NOISE{j:06}");
        labels.push((id.clone(), format!("n{j}")));
        investors.push((id, m.t1, m.t2));
    }

    Ok(SyntheticMarket {
        t1_date: T1_DATE.parse().expect("valid constant date"),
        t2_date: T2_DATE.parse().expect("valid constant date"),
        isins: (0..stocks).map(isin).collect(),
        prices,
        investors,
        truth: PlantedTruth { labels, signatures },
    })
}

// --- serialization -----------------------------------------------------------

/// Write `t1.tsv`, `t2.tsv`, `prices_t1.csv`, `prices_t2.csv` (identical
/// price tables) and `truth.csv` into `dir`.
pub fn write_market(dir: &Path, market: &SyntheticMarket) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, pick) in [("t1.tsv", 0usize), ("t2.tsv", 1)] {
        let mut out =
            String::from("investor_id\tinvestor_kind\ttraceable\tregistration\tisin\tshares\n");
        for (id, t1, t2) in &market.investors {
            let holdings = if pick == 0 { t1 } else { t2 };
            for &(s, shares) in holdings {
                let _ = writeln!(out, "{id}\tN\t1\tdirect\t{}\t{shares}", market.isins[s as usize]);
            }
        }
        let path = dir.join(name);
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    }
    let mut prices = String::from("isin,close,bid,ask,listed,total_shares\n");
    for (s, &(price, total)) in market.prices.iter().enumerate() {
        let _ = writeln!(prices, "{},{price},,,1,{total}", market.isins[s]);
    }
    for name in ["prices_t1.csv", "prices_t2.csv"] {
        let path = dir.join(name);
        std::fs::write(&path, &prices).map_err(|e| Error::io(&path, e))?;
    }
    let mut truth = String::from("investor_id,group\n");
    for (id, label) in &market.truth.labels {
        let _ = writeln!(truth, "{id},{label}");
    }
    let path = dir.join("truth.csv");
    std::fs::write(&path, truth).map_err(|e| Error::io(&path, e))
}

pub fn read_truth_csv(path: &Path) -> Result<PlantedTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "investor_id,group")) => {}
        _ => return Err(Error::parse(path, 1, "expected truth header")),
    }
    let mut labels = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, i + 1, "expected 'investor_id,group'"))?;
        labels.push((id.to_string(), label.to_string()));
    }
    Ok(PlantedTruth { labels, signatures: Vec::new() })
}

// --- recovery scoring --------------------------------------------------------

/// Normalized mutual information (2·I / (H_found + H_truth), base 2)
/// between the found grouping and the planted labels. `found` must
/// partition `0..truth.len()`; 1.0 means identical partitions up to
/// relabeling, and two trivial (single-cluster) partitions count as
/// identical.
pub fn recovery_score(found: &[Vec<u32>], truth: &[u32]) -> Result<f64> {
    let n = truth.len();
    let mut found_label = vec![u32::MAX; n];
    for (g, group) in found.iter().enumerate() {
        for &inv in group {
            if inv as usize >= n || found_label[inv as usize] != u32::MAX {
                return Err(Error::InvalidInput(
                    "found groups do not partition the planted universe".into(),
                ));
            }
            found_label[inv as usize] = g as u32;
        }
    }
    if found_label.iter().any(|&l| l == u32::MAX) {
        return Err(Error::InvalidInput(
            "found groups do not cover the planted universe".into(),
        ));
    }
    let n_truth = truth.iter().map(|&t| t as usize + 1).max().unwrap_or(0);
    let mut truth_count = vec![0u64; n_truth];
    let mut found_count = vec![0u64; found.len()];
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    for i in 0..n {
        truth_count[truth[i] as usize] += 1;
        found_count[found_label[i] as usize] += 1;
        *joint.entry((found_label[i], truth[i])).or_insert(0) += 1;
    }
    let nf = n as f64;
    let entropy = |counts: &[u64]| -> f64 {
        -counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| (c as f64 / nf) * (c as f64 / nf).log2())
            .sum::<f64>()
    };
    let h_found = entropy(&found_count);
    let h_truth = entropy(&truth_count);
    if h_found == 0.0 && h_truth == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (&(f, t), &c) in &joint {
        let p = c as f64 / nf;
        mi += p * (p * nf * nf / (found_count[f as usize] as f64 * truth_count[t as usize] as f64))
            .log2();
    }
    Ok((2.0 * mi / (h_found + h_truth)).clamp(0.0, 1.0))
}
