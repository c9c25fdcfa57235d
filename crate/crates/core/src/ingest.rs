//! Register snapshots, price tables, and universe cleaning.
//!
//! Raw inputs are two shareholder register snapshots (TSV) plus a price
//! table per snapshot date (CSV). Cleaning reduces them to a
//! [`CleanUniverse`]: the retained stocks with resolved first-date prices and
//! the retained investors with their sparse holdings at both dates. All
//! downstream vector work indexes stocks by their position in the sorted
//! retained-stock list.
//!
//! Filtering rules:
//! - stocks must appear in both price tables, be listed at the first date,
//!   have a resolvable first-date price, and change their total share count
//!   by at most `max_share_change` (relative to the first date) — large
//!   changes mean splits or new issues that make share counts incomparable;
//! - investors must be natural persons, traceable, hold at least one direct
//!   position in a retained stock at either date, and change at least one
//!   such position between the dates. Nominee-registered rows are dropped
//!   before any of this is evaluated.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Read as _;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const ISIN_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvestorKind {
    Natural,
    Legal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Registration {
    Direct,
    Nominee,
}

/// One register row: an investor's position in one stock.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldingRecord {
    pub investor_id: String,
    pub kind: InvestorKind,
    pub traceable: bool,
    pub registration: Registration,
    pub isin: String,
    pub shares: u64,
}

/// Price-table row for one stock at one date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRecord {
    pub isin: String,
    pub close: Option<f64>,
    pub bid: Option<f64>,
    pub ask: Option<f64>,
    pub listed: bool,
    pub total_shares: Option<u64>,
}

/// A row that failed to parse, with its 1-based line number. Parsing keeps
/// going; the caller decides whether any rejects are acceptable.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ParsedSnapshot {
    pub date: NaiveDate,
    pub records: Vec<HoldingRecord>,
    pub rejected: Vec<RejectedRow>,
}

/// Both snapshots plus their price tables. `t1` is strictly before `t2`.
#[derive(Debug, Clone)]
pub struct SnapshotPair {
    pub t1_date: NaiveDate,
    pub t2_date: NaiveDate,
    pub t1: Vec<HoldingRecord>,
    pub t2: Vec<HoldingRecord>,
    pub prices_t1: Vec<PriceRecord>,
    pub prices_t2: Vec<PriceRecord>,
}

impl SnapshotPair {
    pub fn new(
        t1_date: NaiveDate,
        t2_date: NaiveDate,
        t1: Vec<HoldingRecord>,
        t2: Vec<HoldingRecord>,
        prices_t1: Vec<PriceRecord>,
        prices_t2: Vec<PriceRecord>,
    ) -> Result<Self> {
        if t1_date >= t2_date {
            return Err(Error::InvalidInput(format!(
                "snapshot dates out of order: {t1_date} is not before {t2_date}"
            )));
        }
        Ok(SnapshotPair {
            t1_date,
            t2_date,
            t1,
            t2,
            prices_t1,
            prices_t2,
        })
    }
}

/// The cleaned universe. Stocks and investors are sorted, so indices are
/// stable across runs regardless of input row order.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanUniverse {
    pub t1_date: NaiveDate,
    pub t2_date: NaiveDate,
    /// Sorted ISINs; a stock's position here is its vector coordinate.
    pub stocks: Vec<String>,
    /// Resolved first-date price per stock, aligned with `stocks`.
    pub prices_t1: Vec<f64>,
    /// Sorted investor ids.
    pub investors: Vec<String>,
    /// Per investor: (stock index, shares) sorted by index, shares > 0.
    pub holdings_t1: Vec<Vec<(u32, u64)>>,
    pub holdings_t2: Vec<Vec<(u32, u64)>>,
}

/// Individual cleaning filters. Production code uses the defaults; tests
/// toggle filters off to check that every filter only ever shrinks the
/// universe.
#[derive(Debug, Clone)]
pub struct CleanOptions {
    pub max_share_change: Option<f64>,
    pub require_in_both_price_tables: bool,
    pub require_listed: bool,
    pub require_price: bool,
    pub require_natural: bool,
    pub require_traceable: bool,
    pub require_activity: bool,
}

impl Default for CleanOptions {
    fn default() -> Self {
        CleanOptions {
            max_share_change: Some(0.05),
            require_in_both_price_tables: true,
            require_listed: true,
            require_price: true,
            require_natural: true,
            require_traceable: true,
            require_activity: true,
        }
    }
}

// --- parsing ----------------------------------------------------------------

const SNAPSHOT_COLUMNS: [&str; 6] = [
    "investor_id",
    "investor_kind",
    "traceable",
    "registration",
    "isin",
    "shares",
];

/// Parse one register snapshot (TSV with a header row). Malformed rows are
/// collected as [`RejectedRow`]s; structural problems (missing columns,
/// duplicate keys) abort with a hard error.
pub fn parse_snapshot(path: &Path, date: NaiveDate) -> Result<ParsedSnapshot> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h,
        None => return Err(Error::parse(path, 1, "empty file")),
    };
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut col_at = [0usize; 6];
    for (slot, name) in SNAPSHOT_COLUMNS.iter().enumerate() {
        col_at[slot] = cols
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column '{name}'")))?;
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen: HashSet<(String, String, Registration)> = HashSet::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            rejected.push(RejectedRow {
                line: lineno,
                reason: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
            continue;
        }
        let get = |slot: usize| fields[col_at[slot]].trim();
        match parse_row(get(0), get(1), get(2), get(3), get(4), get(5)) {
            Ok(rec) => {
                let key = (rec.investor_id.clone(), rec.isin.clone(), rec.registration);
                if !seen.insert(key) {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!(
                            "duplicate (investor, stock, registration) row: {} {}",
                            rec.investor_id, rec.isin
                        ),
                    ));
                }
                records.push(rec);
            }
            Err(reason) => rejected.push(RejectedRow {
                line: lineno,
                reason,
            }),
        }
    }
    Ok(ParsedSnapshot {
        date,
        records,
        rejected,
    })
}

fn parse_row(
    investor_id: &str,
    kind: &str,
    traceable: &str,
    registration: &str,
    isin: &str,
    shares: &str,
) -> std::result::Result<HoldingRecord, String> {
    if investor_id.is_empty() {
        return Err("empty investor_id".into());
    }
    let kind = match kind {
        "N" => InvestorKind::Natural,
        "L" => InvestorKind::Legal,
        other => return Err(format!("investor_kind must be N or L, got '{other}'")),
    };
    let traceable = match traceable {
        "0" => false,
        "1" => true,
        other => return Err(format!("traceable must be 0 or 1, got '{other}'")),
    };
    let registration = match registration {
        "direct" => Registration::Direct,
        "nominee" => Registration::Nominee,
        other => return Err(format!("registration must be direct or nominee, got '{other}'")),
    };
    if isin.len() != ISIN_LEN {
        return Err(format!("isin '{isin}' is not {ISIN_LEN} characters"));
    }
    let shares = match shares.parse::<i128>() {
        Ok(v) if v < 0 => return Err(format!("negative share count {v}")),
        Ok(v) => v as u64,
        Err(_) => return Err(format!("bad share count '{shares}'")),
    };
    Ok(HoldingRecord {
        investor_id: investor_id.to_string(),
        kind,
        traceable,
        registration,
        isin: isin.to_string(),
        shares,
    })
}

/// Parse a price table (CSV with a header row). Unlike register rows, price
/// rows are reference data: any malformed row is a hard error.
pub fn parse_prices(path: &Path) -> Result<Vec<PriceRecord>> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == "isin,close,bid,ask,listed,total_shares" => {}
        Some((_, h)) => {
            return Err(Error::parse(path, 1, format!("unexpected header '{h}'")));
        }
        None => return Err(Error::parse(path, 1, "empty file")),
    }
    let mut out = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(Error::parse(path, lineno, "expected 6 fields"));
        }
        if f[0].len() != ISIN_LEN {
            return Err(Error::parse(
                path,
                lineno,
                format!("isin '{}' is not {ISIN_LEN} characters", f[0]),
            ));
        }
        let price_field = |raw: &str, name: &str| -> Result<Option<f64>> {
            if raw.is_empty() {
                return Ok(None);
            }
            let v: f64 = raw.parse().map_err(|_| {
                Error::parse(path, lineno, format!("bad {name} price '{raw}'"))
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::parse(path, lineno, format!("bad {name} price {v}")));
            }
            Ok(Some(v))
        };
        let listed = match f[4] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("listed must be 0 or 1, got '{other}'"),
                ))
            }
        };
        let total_shares = if f[5].is_empty() {
            None
        } else {
            Some(f[5].parse::<u64>().map_err(|_| {
                Error::parse(path, lineno, format!("bad total_shares '{}'", f[5]))
            })?)
        };
        if !seen.insert(f[0].to_string()) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate price row for '{}'", f[0]),
            ));
        }
        out.push(PriceRecord {
            isin: f[0].to_string(),
            close: price_field(f[1], "close")?,
            bid: price_field(f[2], "bid")?,
            ask: price_field(f[3], "ask")?,
            listed,
            total_shares,
        });
    }
    Ok(out)
}

/// Price fallback chain: close, then bid, then ask. Non-positive quotes are
/// treated as absent.
pub fn resolve_price(record: &PriceRecord) -> Option<f64> {
    [record.close, record.bid, record.ask]
        .into_iter()
        .flatten()
        .find(|&p| p > 0.0)
}

// --- cleaning ---------------------------------------------------------------

pub fn clean_universe(pair: &SnapshotPair, max_share_change: f64) -> Result<CleanUniverse> {
    clean_universe_with(
        pair,
        &CleanOptions {
            max_share_change: Some(max_share_change),
            ..CleanOptions::default()
        },
    )
}

pub fn clean_universe_with(pair: &SnapshotPair, opts: &CleanOptions) -> Result<CleanUniverse> {
    if let Some(m) = opts.max_share_change {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::Config(format!(
                "max_share_change must be in [0, 1], got {m}"
            )));
        }
    }
    let by_isin_t1: HashMap<&str, &PriceRecord> =
        pair.prices_t1.iter().map(|p| (p.isin.as_str(), p)).collect();
    let by_isin_t2: HashMap<&str, &PriceRecord> =
        pair.prices_t2.iter().map(|p| (p.isin.as_str(), p)).collect();

    let mut stocks: Vec<String> = Vec::new();
    let mut candidates: Vec<&str> = by_isin_t1.keys().copied().collect();
    if !opts.require_in_both_price_tables {
        candidates.extend(by_isin_t2.keys().copied().filter(|k| !by_isin_t1.contains_key(*k)));
    }
    candidates.sort_unstable();
    for isin in candidates {
        let p1 = by_isin_t1.get(isin);
        let p2 = by_isin_t2.get(isin);
        if opts.require_in_both_price_tables && (p1.is_none() || p2.is_none()) {
            continue;
        }
        if opts.require_listed && !p1.map_or(false, |p| p.listed) {
            continue;
        }
        if let Some(max_change) = opts.max_share_change {
            // No comparable share counts means the rule cannot be verified:
            // the stock is dropped rather than waved through.
            let ok = match (
                p1.and_then(|p| p.total_shares),
                p2.and_then(|p| p.total_shares),
            ) {
                (Some(s1), Some(s2)) if s1 > 0 => {
                    let change = (s2 as f64 - s1 as f64).abs() / s1 as f64;
                    change <= max_change
                }
                _ => false,
            };
            if !ok {
                continue;
            }
        }
        if opts.require_price && p1.map_or(true, |p| resolve_price(p).is_none()) {
            continue;
        }
        stocks.push(isin.to_string());
    }
    if stocks.is_empty() {
        return Err(Error::EmptyUniverse("no stocks survived filtering".into()));
    }
    let stock_index: HashMap<&str, u32> = stocks
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    let prices_t1: Vec<f64> = stocks
        .iter()
        .map(|isin| {
            by_isin_t1
                .get(isin.as_str())
                .and_then(|p| resolve_price(p))
                .unwrap_or(0.0)
        })
        .collect();

    // Direct positions per investor, both snapshots. A row counts only if it
    // passes the row-level filters and refers to a retained stock.
    let mut positions: HashMap<&str, [HashMap<u32, u64>; 2]> = HashMap::new();
    for (slot, records) in [(0usize, &pair.t1), (1usize, &pair.t2)] {
        for rec in records {
            if rec.registration != Registration::Direct
                || (opts.require_natural && rec.kind != InvestorKind::Natural)
                || (opts.require_traceable && !rec.traceable)
                || rec.shares == 0
            {
                continue;
            }
            let Some(&idx) = stock_index.get(rec.isin.as_str()) else {
                continue;
            };
            positions.entry(rec.investor_id.as_str()).or_default()[slot].insert(idx, rec.shares);
        }
    }

    let mut investors: Vec<&str> = positions
        .iter()
        .filter(|(_, held)| {
            let changed = held[0] != held[1];
            let any = !held[0].is_empty() || !held[1].is_empty();
            any && (!opts.require_activity || changed)
        })
        .map(|(id, _)| *id)
        .collect();
    investors.sort_unstable();
    if investors.is_empty() {
        return Err(Error::EmptyUniverse("no investors survived filtering".into()));
    }

    let mut holdings_t1 = Vec::with_capacity(investors.len());
    let mut holdings_t2 = Vec::with_capacity(investors.len());
    for id in &investors {
        let held = &positions[id];
        for (slot, out) in [(&held[0], &mut holdings_t1), (&held[1], &mut holdings_t2)] {
            let mut h: Vec<(u32, u64)> = slot.iter().map(|(&k, &v)| (k, v)).collect();
            h.sort_unstable_by_key(|e| e.0);
            out.push(h);
        }
    }

    Ok(CleanUniverse {
        t1_date: pair.t1_date,
        t2_date: pair.t2_date,
        stocks,
        prices_t1,
        investors: investors.into_iter().map(str::to_string).collect(),
        holdings_t1,
        holdings_t2,
    })
}

// --- universe persistence ----------------------------------------------------

const UNIVERSE_MAGIC: &[u8; 8] = b"FNUNIV01";

impl CleanUniverse {
    /// Serialize to the compact binary artifact format. Byte-deterministic.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(UNIVERSE_MAGIC);
        buf.extend_from_slice(&date_to_days(self.t1_date).to_le_bytes());
        buf.extend_from_slice(&date_to_days(self.t2_date).to_le_bytes());
        buf.extend_from_slice(&(self.stocks.len() as u32).to_le_bytes());
        for isin in &self.stocks {
            debug_assert_eq!(isin.len(), ISIN_LEN);
            buf.extend_from_slice(isin.as_bytes());
        }
        for &p in &self.prices_t1 {
            buf.extend_from_slice(&p.to_bits().to_le_bytes());
        }
        buf.extend_from_slice(&(self.investors.len() as u32).to_le_bytes());
        for (i, id) in self.investors.iter().enumerate() {
            buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            for holdings in [&self.holdings_t1[i], &self.holdings_t2[i]] {
                buf.extend_from_slice(&(holdings.len() as u32).to_le_bytes());
                for &(idx, shares) in holdings {
                    buf.extend_from_slice(&idx.to_le_bytes());
                    buf.extend_from_slice(&shares.to_le_bytes());
                }
            }
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<CleanUniverse> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
            path,
        };
        let magic = r.take(8)?;
        if magic != UNIVERSE_MAGIC {
            return Err(Error::parse(path, 0, "not a universe file (bad magic)"));
        }
        let t1_date = days_to_date(r.i32()?)
            .ok_or_else(|| Error::parse(path, 0, "bad t1 date"))?;
        let t2_date = days_to_date(r.i32()?)
            .ok_or_else(|| Error::parse(path, 0, "bad t2 date"))?;
        let n_stocks = r.u32()? as usize;
        let mut stocks = Vec::with_capacity(n_stocks);
        for _ in 0..n_stocks {
            stocks.push(r.str(ISIN_LEN)?);
        }
        let mut prices_t1 = Vec::with_capacity(n_stocks);
        for _ in 0..n_stocks {
            prices_t1.push(f64::from_bits(r.u64()?));
        }
        let n_inv = r.u32()? as usize;
        let mut investors = Vec::with_capacity(n_inv);
        let mut holdings_t1 = Vec::with_capacity(n_inv);
        let mut holdings_t2 = Vec::with_capacity(n_inv);
        for _ in 0..n_inv {
            let len = r.u16()? as usize;
            investors.push(r.str(len)?);
            for out in [&mut holdings_t1, &mut holdings_t2] {
                let n = r.u32()? as usize;
                let mut h = Vec::with_capacity(n);
                for _ in 0..n {
                    let idx = r.u32()?;
                    let shares = r.u64()?;
                    h.push((idx, shares));
                }
                out.push(h);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::parse(path, 0, "trailing bytes in universe file"));
        }
        Ok(CleanUniverse {
            t1_date,
            t2_date,
            stocks,
            prices_t1,
            investors,
            holdings_t1,
            holdings_t2,
        })
    }

    /// Render as a human-readable table; handy for debugging small universes.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "universe: {} stocks, {} investors, {} -> {}",
            self.stocks.len(),
            self.investors.len(),
            self.t1_date,
            self.t2_date
        );
        s
    }
}

fn date_to_days(d: NaiveDate) -> i32 {
    d.signed_duration_since(NaiveDate::from_ymd_opt(1970, 1, 1).unwrap())
        .num_days() as i32
}

fn days_to_date(days: i32) -> Option<NaiveDate> {
    NaiveDate::from_ymd_opt(1970, 1, 1)
        .unwrap()
        .checked_add_signed(chrono::Duration::days(days as i64))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.path, 0, "truncated universe file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self, len: usize) -> Result<String> {
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::parse(self.path, 0, "non-utf8 string in universe file"))
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
