//! Figure-style data products: the portfolio-vs-trading similarity curve,
//! random-group similarity distributions, and the per-group scatter.
//!
//! The curve bins sampled investor pairs by portfolio similarity and
//! reports each bin's mean trading similarity relative to the global mean
//! over the whole sample (so "1.0" always means "average pair"). Confidence
//! intervals are percentile bootstrap: resample the bin, divide by the
//! *fixed* global mean, take the 2.5th/97.5th nearest-rank percentiles.
//!
//! All randomness is derived per (bin, resample) or per (size, draw) task,
//! so outputs are identical at any thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::vectors::{
    aggregate, cosine_or_zero, new_stock_filter, PortfolioVector, TradingVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveVariant {
    /// Trading vectors as computed.
    All,
    /// Both trading vectors restricted to stocks absent from the investor's
    /// first-date portfolio.
    NewStocks,
}

impl CurveVariant {
    pub fn parse(s: &str) -> Result<CurveVariant> {
        match s {
            "all" => Ok(CurveVariant::All),
            "new" => Ok(CurveVariant::NewStocks),
            other => Err(Error::Config(format!("unknown curve variant '{other}' (all|new)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveBin {
    pub center: f64,
    /// Mean trading similarity in the bin divided by the global mean.
    pub relative: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pairs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityCurve {
    pub variant: CurveVariant,
    pub bin_width: f64,
    /// Non-empty bins only, centers ascending.
    pub bins: Vec<CurveBin>,
}

/// Portfolio and trading cosine per pair, in pair order. The trading side
/// honors the variant's new-stock filtering.
pub fn pair_similarities(
    pairs: &[(u32, u32)],
    portfolios: &[PortfolioVector],
    trading: &[TradingVector],
    variant: CurveVariant,
) -> (Vec<f64>, Vec<f64>) {
    let sims: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (a, b) = (a as usize, b as usize);
            let p = cosine_or_zero(&portfolios[a].0, &portfolios[b].0);
            let t = match variant {
                CurveVariant::All => cosine_or_zero(&trading[a].0, &trading[b].0),
                CurveVariant::NewStocks => {
                    let ta = new_stock_filter(&trading[a], &portfolios[a]);
                    let tb = new_stock_filter(&trading[b], &portfolios[b]);
                    cosine_or_zero(&ta.0, &tb.0)
                }
            };
            (p, t)
        })
        .collect();
    sims.into_iter().unzip()
}

pub fn similarity_curve(
    pairs: &[(u32, u32)],
    portfolios: &[PortfolioVector],
    trading: &[TradingVector],
    bin_width: f64,
    boot_reps: u32,
    variant: CurveVariant,
    seed: u64,
) -> Result<SimilarityCurve> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::Config(format!("bin width must be in (0, 1], got {bin_width}")));
    }
    if boot_reps == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    if pairs.is_empty() {
        return Err(Error::DegenerateSample("no investor pairs to bin".into()));
    }
    let (p_sims, t_sims) = pair_similarities(pairs, portfolios, trading, variant);
    let global_mean = t_sims.iter().sum::<f64>() / t_sims.len() as f64;
    if global_mean <= 0.0 {
        return Err(Error::DegenerateSample(
            "mean trading similarity over the pair sample is zero".into(),
        ));
    }

    // Bins [k·w, (k+1)·w), the last one closed at 1.0.
    let n_bins = (1.0 / bin_width).ceil() as usize;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (&p, &t) in p_sims.iter().zip(&t_sims) {
        let k = ((p / bin_width) as usize).min(n_bins - 1);
        members[k].push(t);
    }

    let bins: Vec<CurveBin> = members
        .par_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(k, m)| {
            let relative = m.iter().sum::<f64>() / m.len() as f64 / global_mean;
            let mut means: Vec<f64> = (0..boot_reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = rng::task_rng(seed, rng::mix(k as u64, rep as u64));
                    let sum: f64 = (0..m.len()).map(|_| m[rng.gen_range(0..m.len())]).sum();
                    sum / m.len() as f64 / global_mean
                })
                .collect();
            means.sort_unstable_by(f64::total_cmp);
            let rank = |q: f64| ((boot_reps - 1) as f64 * q).round() as usize;
            CurveBin {
                center: ((k as f64 + 0.5) * bin_width).min(1.0),
                relative,
                ci_low: means[rank(0.025)].min(relative),
                ci_high: means[rank(0.975)].max(relative),
                pairs: m.len() as u64,
            }
        })
        .collect();
    Ok(SimilarityCurve { variant, bin_width, bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimKind {
    Portfolio,
    Trading,
}

impl SimKind {
    fn name(self) -> &'static str {
        match self {
            SimKind::Portfolio => "portfolio",
            SimKind::Trading => "trading",
        }
    }
}

/// Similarity grid for the distribution tables: 0.00, 0.01, …, 1.00.
pub const CDF_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    pub group_size: u32,
    pub kind: SimKind,
    /// CDF evaluated at grid point i/100.
    pub cdf: Vec<f64>,
}

/// For each size draw two disjoint uniform groups `samples` times,
/// aggregate each side, and record both similarity kinds as empirical CDFs.
pub fn random_group_distributions(
    portfolios: &[PortfolioVector],
    trading: &[TradingVector],
    sizes: &[u32],
    samples: u32,
    seed: u64,
) -> Result<Vec<DistributionTable>> {
    let population = portfolios.len();
    assert_eq!(population, trading.len());
    let max_size = sizes.iter().copied().max().unwrap_or(0) as usize;
    if max_size == 0 || samples == 0 {
        return Err(Error::Config("need at least one size and one sample".into()));
    }
    if population < 2 * max_size {
        return Err(Error::InvalidInput(format!(
            "population of {population} cannot supply two disjoint groups of {max_size}"
        )));
    }
    let everyone: Vec<u32> = (0..population as u32).collect();
    let mut tables = Vec::new();
    for &size in sizes {
        let s = size as usize;
        let sims: Vec<(f64, f64)> = (0..samples)
            .into_par_iter()
            .map_init(
                || (everyone.clone(), Vec::new()),
                |(pool, undo), draw| {
                    let mut rng = rng::task_rng(seed, rng::mix(size as u64, draw as u64));
                    rng::sample_prefix(pool, 2 * s, &mut rng, undo);
                    let (g1, g2) = pool[..2 * s].split_at(s);
                    let p = cosine_or_zero(
                        &aggregate(g1.iter().map(|&i| &portfolios[i as usize].0)).unwrap(),
                        &aggregate(g2.iter().map(|&i| &portfolios[i as usize].0)).unwrap(),
                    );
                    let t = cosine_or_zero(
                        &aggregate(g1.iter().map(|&i| &trading[i as usize].0)).unwrap(),
                        &aggregate(g2.iter().map(|&i| &trading[i as usize].0)).unwrap(),
                    );
                    rng::unsample(pool, undo);
                    (p, t)
                },
            )
            .collect();
        for (kind, pick) in [(SimKind::Portfolio, 0usize), (SimKind::Trading, 1)] {
            let mut values: Vec<f64> = sims
                .iter()
                .map(|s| (if pick == 0 { s.0 } else { s.1 }).clamp(0.0, 1.0))
                .collect();
            values.sort_unstable_by(f64::total_cmp);
            let cdf = (0..CDF_GRID_POINTS)
                .map(|i| {
                    let x = i as f64 / 100.0;
                    values.partition_point(|&v| v <= x) as f64 / values.len() as f64
                })
                .collect();
            tables.push(DistributionTable { group_size: size, kind, cdf });
        }
    }
    Ok(tables)
}

// --- CSV ----------------------------------------------------------------------

pub const CURVE_CSV_HEADER: &str = "bin_center,relative_trading_sim,ci_low,ci_high,pairs";

pub fn write_curve_csv(path: &std::path::Path, curve: &SimilarityCurve) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for b in &curve.bins {
        let _ = writeln!(out, "{},{},{},{},{}", b.center, b.relative, b.ci_low, b.ci_high, b.pairs);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &std::path::Path) -> Result<Vec<CurveBin>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVE_CSV_HEADER => {}
        _ => return Err(Error::parse(path, 1, "unexpected curve header")),
    }
    let mut bins = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(path, i + 1, format!("expected 5 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::parse(path, i + 1, format!("bad number '{s}'")))
        };
        bins.push(CurveBin {
            center: num(f[0])?,
            relative: num(f[1])?,
            ci_low: num(f[2])?,
            ci_high: num(f[3])?,
            pairs: num(f[4])? as u64,
        });
    }
    Ok(bins)
}

pub const DIST_CSV_HEADER: &str = "group_size,kind,similarity,cdf";

pub fn write_dist_csv(path: &std::path::Path, tables: &[DistributionTable]) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from(DIST_CSV_HEADER);
    out.push('\n');
    for t in tables {
        for (i, &c) in t.cdf.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{c}", t.group_size, t.kind.name(), i as f64 / 100.0);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_dist_csv(path: &std::path::Path) -> Result<Vec<DistributionTable>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == DIST_CSV_HEADER => {}
        _ => return Err(Error::parse(path, 1, "unexpected distribution header")),
    }
    let mut tables: Vec<DistributionTable> = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(path, i + 1, format!("expected 4 fields, got {}", f.len())));
        }
        let size: u32 = f[0]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad group size '{}'", f[0])))?;
        let kind = match f[1] {
            "portfolio" => SimKind::Portfolio,
            "trading" => SimKind::Trading,
            other => return Err(Error::parse(path, i + 1, format!("bad kind '{other}'"))),
        };
        let cdf: f64 = f[3]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad cdf value '{}'", f[3])))?;
        match tables.last_mut() {
            Some(t) if t.group_size == size && t.kind == kind => t.cdf.push(cdf),
            _ => tables.push(DistributionTable { group_size: size, kind, cdf: vec![cdf] }),
        }
    }
    for t in &tables {
        if t.cdf.len() != CDF_GRID_POINTS {
            return Err(Error::parse(
                path,
                0,
                format!("table {}/{} has {} grid points", t.group_size, t.kind.name(), t.cdf.len()),
            ));
        }
    }
    Ok(tables)
}

pub const SCATTER_CSV_HEADER: &str = "group_id,mean_portfolio_sim,mean_trading_sim,investors";

/// One scatter point per group, ordered by group id.
pub fn write_scatter_rows(
    path: &std::path::Path,
    rows: &[(u32, f64, f64, u32)],
) -> Result<()> {
    use std::fmt::Write as _;
    if rows.is_empty() {
        return Err(Error::InvalidInput("no groups to plot".into()));
    }
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.0);
    let mut out = String::from(SCATTER_CSV_HEADER);
    out.push('\n');
    for (id, p, t, investors) in rows {
        let _ = writeln!(out, "{id},{p},{t},{investors}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_scatter_csv(
    path: &std::path::Path,
    reports: &[crate::cohort::GroupReport],
) -> Result<()> {
    let rows: Vec<(u32, f64, f64, u32)> = reports
        .iter()
        .map(|r| (r.group_id, r.mean_portfolio_sim, r.mean_trading_sim, r.investors))
        .collect();
    write_scatter_rows(path, &rows)
}

pub const PAIR_SAMPLE_CSV_HEADER: &str = "inv_a,inv_b,portfolio_sim,trading_sim";

/// The raw pair sample behind the curve, so the normalization is auditable:
/// the mean of `trading_sim` here is the curve's global mean.
pub fn write_pair_sample_csv(
    path: &std::path::Path,
    pairs: &[(u32, u32)],
    portfolio_sims: &[f64],
    trading_sims: &[f64],
) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from(PAIR_SAMPLE_CSV_HEADER);
    out.push('\n');
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let _ = writeln!(out, "{a},{b},{},{}", portfolio_sims[i], trading_sims[i]);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_pair_sample_csv(path: &std::path::Path) -> Result<Vec<(u32, u32, f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == PAIR_SAMPLE_CSV_HEADER => {}
        _ => return Err(Error::parse(path, 1, "unexpected pair sample header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(path, i + 1, format!("expected 4 fields, got {}", f.len())));
        }
        let bad = |s: &str| Error::parse(path, i + 1, format!("bad field '{s}'"));
        rows.push((
            f[0].parse().map_err(|_| bad(f[0]))?,
            f[1].parse().map_err(|_| bad(f[1]))?,
            f[2].parse().map_err(|_| bad(f[2]))?,
            f[3].parse().map_err(|_| bad(f[3]))?,
        ));
    }
    Ok(rows)
}

/// All unordered pairs when the population is small enough, else `max_pairs`
/// uniform draws (pairs may repeat across draws).
pub const ALL_PAIRS_LIMIT: usize = 2000;

pub fn sample_pairs(n_investors: usize, max_pairs: u64, seed: u64) -> Vec<(u32, u32)> {
    if n_investors < 2 {
        return Vec::new();
    }
    if n_investors <= ALL_PAIRS_LIMIT {
        let mut pairs = Vec::with_capacity(n_investors * (n_investors - 1) / 2);
        for a in 0..n_investors as u32 {
            for b in a + 1..n_investors as u32 {
                pairs.push((a, b));
            }
        }
        return pairs;
    }
    let mut rng = rng::plain_rng(seed);
    (0..max_pairs)
        .map(|_| {
            let a = rng.gen_range(0..n_investors as u32);
            let mut b = rng.gen_range(0..n_investors as u32 - 1);
            if b >= a {
                b += 1;
            }
            (a.min(b), a.max(b))
        })
        .collect()
}
