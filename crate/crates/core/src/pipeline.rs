//! Stage orchestration: synth → ingest → vectors → network → cluster →
//! cohort → report, every stage reading its inputs from disk and writing
//! one artifact into the output directory. Any stage can therefore be
//! rerun alone, and `run` is nothing more than the stages in order plus a
//! manifest of content hashes.
//!
//! Seeding: the synth stage honors the seed inside the market spec (so a
//! spec file is self-contained); every later stage derives its seed from
//! the pipeline `seed` key and a fixed stage tag. Reruns with the same
//! config are byte-identical, whatever the thread count.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use crate::cohort::{self, BootstrapConfig};
use crate::config::KvFile;
use crate::error::{Error, Result};
use crate::ingest::{clean_universe, parse_prices, parse_snapshot, CleanUniverse, SnapshotPair};
use crate::mapeq;
use crate::report::{self, CurveVariant};
use crate::rng;
use crate::simnet;
use crate::synth::{self, MarketSpec};
use crate::vectors::{
    portfolio_vector, read_vector_csv, trading_vector, write_vector_csv, PortfolioVector,
    SparseVector, TradingVector,
};

const STAGE_CLUSTER: u64 = 2;
const STAGE_COHORT: u64 = 3;
const STAGE_REPORT: u64 = 4;

/// Group sizes for the random-group distribution tables; sizes the
/// population cannot supply two disjoint groups of are skipped.
const DIST_SIZES: [u32; 3] = [1, 10, 100];

#[derive(Debug, Clone, PartialEq)]
pub enum InputConfig {
    /// Generate the market (`None` = default spec).
    Synth { spec: Option<PathBuf> },
    /// Existing register snapshots and price tables.
    Files {
        t1: PathBuf,
        t2: PathBuf,
        prices_t1: PathBuf,
        prices_t2: PathBuf,
        t1_date: NaiveDate,
        t2_date: NaiveDate,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub input: InputConfig,
    pub max_share_change: f64,
    pub threshold: f64,
    pub rounding_places: u32,
    pub trials: u32,
    pub seed: u64,
    pub bootstrap_iterations: u32,
    pub alpha: f64,
    pub n_max: u32,
    /// How many of the largest groups get a full cohort work-up.
    pub top_groups: u32,
    pub cohort_sample_pairs: u32,
    pub bin_width: f64,
    pub boot_reps: u32,
    pub report_pair_sample: u64,
    pub dist_samples: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            input: InputConfig::Synth { spec: None },
            max_share_change: 0.05,
            threshold: 0.9,
            rounding_places: 2,
            trials: 10,
            seed: 42,
            bootstrap_iterations: 1000,
            alpha: 0.95,
            n_max: 100,
            top_groups: 10,
            cohort_sample_pairs: 20_000,
            bin_width: 0.05,
            boot_reps: 1000,
            report_pair_sample: 200_000,
            dist_samples: 2000,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let kv = KvFile::parse_str(text)?;
        kv.reject_unknown(&[
            "out_dir",
            "synth_spec",
            "t1",
            "t2",
            "prices_t1",
            "prices_t2",
            "t1_date",
            "t2_date",
            "max_share_change",
            "threshold",
            "rounding_places",
            "trials",
            "seed",
            "bootstrap_iterations",
            "alpha",
            "n_max",
            "top_groups",
            "cohort_sample_pairs",
            "bin_width",
            "boot_reps",
            "report_pair_sample",
            "dist_samples",
        ])?;
        let mut cfg = PipelineConfig::default();
        if let Some(dir) = kv.get("out_dir") {
            cfg.out_dir = PathBuf::from(dir);
        }
        let synth_key = kv.get("synth_spec");
        let files_mode = kv.get("t1").is_some();
        if files_mode && synth_key.is_some() {
            return Err(Error::Config(
                "choose one input: synth_spec or t1/t2 snapshot files".into(),
            ));
        }
        if files_mode {
            let path = |key: &str| -> Result<PathBuf> {
                kv.get(key)
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config(format!("snapshot input needs key '{key}'")))
            };
            let date = |key: &str| -> Result<NaiveDate> {
                let raw = kv
                    .get(key)
                    .ok_or_else(|| Error::Config(format!("snapshot input needs key '{key}'")))?;
                raw.parse()
                    .map_err(|_| Error::Config(format!("key '{key}': bad date '{raw}'")))
            };
            cfg.input = InputConfig::Files {
                t1: path("t1")?,
                t2: path("t2")?,
                prices_t1: path("prices_t1")?,
                prices_t2: path("prices_t2")?,
                t1_date: date("t1_date")?,
                t2_date: date("t2_date")?,
            };
        } else {
            cfg.input = InputConfig::Synth {
                spec: match synth_key {
                    None | Some("default") => None,
                    Some(path) => Some(PathBuf::from(path)),
                },
            };
        }
        cfg.max_share_change = kv.parsed_or("max_share_change", cfg.max_share_change)?;
        cfg.threshold = kv.parsed_or("threshold", cfg.threshold)?;
        cfg.rounding_places = kv.parsed_or("rounding_places", cfg.rounding_places)?;
        cfg.trials = kv.parsed_or("trials", cfg.trials)?;
        cfg.seed = kv.parsed_or("seed", cfg.seed)?;
        cfg.bootstrap_iterations = kv.parsed_or("bootstrap_iterations", cfg.bootstrap_iterations)?;
        cfg.alpha = kv.parsed_or("alpha", cfg.alpha)?;
        cfg.n_max = kv.parsed_or("n_max", cfg.n_max)?;
        cfg.top_groups = kv.parsed_or("top_groups", cfg.top_groups)?;
        cfg.cohort_sample_pairs = kv.parsed_or("cohort_sample_pairs", cfg.cohort_sample_pairs)?;
        cfg.bin_width = kv.parsed_or("bin_width", cfg.bin_width)?;
        cfg.boot_reps = kv.parsed_or("boot_reps", cfg.boot_reps)?;
        cfg.report_pair_sample = kv.parsed_or("report_pair_sample", cfg.report_pair_sample)?;
        cfg.dist_samples = kv.parsed_or("dist_samples", cfg.dist_samples)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("need at least one optimizer trial".into()));
        }
        if self.top_groups == 0 {
            return Err(Error::Config("top_groups must be at least 1".into()));
        }
        Ok(())
    }

    // Artifact locations, all inside `out_dir`.
    pub fn market_dir(&self) -> PathBuf {
        self.out_dir.join("market")
    }
    pub fn universe_path(&self) -> PathBuf {
        self.out_dir.join("universe.bin")
    }
    pub fn vectors_dir(&self) -> PathBuf {
        self.out_dir.join("vectors")
    }
    pub fn network_dir(&self) -> PathBuf {
        self.out_dir.join("network")
    }
    pub fn tree_path(&self) -> PathBuf {
        self.out_dir.join("tree.txt")
    }
    pub fn groups_path(&self) -> PathBuf {
        self.out_dir.join("groups.csv")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join("report")
    }
    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.txt")
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

// --- stages -------------------------------------------------------------------

pub fn stage_synth(cfg: &PipelineConfig) -> Result<()> {
    let spec = match &cfg.input {
        InputConfig::Synth { spec: None } => MarketSpec::default(),
        InputConfig::Synth { spec: Some(path) } => MarketSpec::load(path)?,
        InputConfig::Files { .. } => {
            return Err(Error::Config(
                "pipeline input is snapshot files; nothing to synthesize".into(),
            ))
        }
    };
    let market = synth::generate(&spec)?;
    ensure_dir(&cfg.out_dir)?;
    synth::write_market(&cfg.market_dir(), &market)
}

/// Parse, pair and clean the configured snapshots (the generated market
/// when the input is synthetic).
pub fn build_universe(cfg: &PipelineConfig) -> Result<CleanUniverse> {
    let market = cfg.market_dir();
    let (t1, t2, p1, p2, d1, d2) = match &cfg.input {
        InputConfig::Synth { .. } => (
            market.join("t1.tsv"),
            market.join("t2.tsv"),
            market.join("prices_t1.csv"),
            market.join("prices_t2.csv"),
            synth::T1_DATE.parse().expect("valid constant date"),
            synth::T2_DATE.parse().expect("valid constant date"),
        ),
        InputConfig::Files { t1, t2, prices_t1, prices_t2, t1_date, t2_date } => (
            t1.clone(),
            t2.clone(),
            prices_t1.clone(),
            prices_t2.clone(),
            *t1_date,
            *t2_date,
        ),
    };
    let s1 = parse_snapshot(&t1, d1)?;
    let s2 = parse_snapshot(&t2, d2)?;
    for (snap, path) in [(&s1, &t1), (&s2, &t2)] {
        if !snap.rejected.is_empty() {
            log::warn!("{}: {} rows rejected", path.display(), snap.rejected.len());
        }
    }
    let pair = SnapshotPair::new(d1, d2, s1.records, s2.records, parse_prices(&p1)?, parse_prices(&p2)?)?;
    let universe = clean_universe(&pair, cfg.max_share_change)?;
    log::info!(
        "universe: {} investors over {} stocks",
        universe.investors.len(),
        universe.stocks.len()
    );
    Ok(universe)
}

pub fn stage_ingest(cfg: &PipelineConfig) -> Result<()> {
    let universe = build_universe(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    universe.write(&cfg.universe_path())
}

/// Portfolio and trading vectors for every investor in the universe. An
/// investor with no priced first-date holdings keeps an empty portfolio
/// vector: they dedupe into a shared zero class and stay isolated in the
/// network rather than aborting the run.
fn universe_vectors(
    cfg: &PipelineConfig,
    universe: &CleanUniverse,
) -> Result<(Vec<PortfolioVector>, Vec<TradingVector>)> {
    let mut portfolios = Vec::with_capacity(universe.investors.len());
    let mut trading = Vec::with_capacity(universe.investors.len());
    for i in 0..universe.investors.len() {
        let h1 = &universe.holdings_t1[i];
        portfolios.push(if h1.is_empty() {
            PortfolioVector(SparseVector::from_sorted(Vec::new())?)
        } else {
            portfolio_vector(h1, &universe.prices_t1, cfg.rounding_places)?
        });
        trading.push(trading_vector(h1, &universe.holdings_t2[i], &universe.prices_t1)?);
    }
    Ok((portfolios, trading))
}

pub fn stage_vectors(cfg: &PipelineConfig) -> Result<()> {
    let universe = CleanUniverse::read(&cfg.universe_path())?;
    let (portfolios, trading) = universe_vectors(cfg, &universe)?;
    let dir = cfg.vectors_dir();
    ensure_dir(&dir)?;
    let p: Vec<&SparseVector> = portfolios.iter().map(|v| &v.0).collect();
    let t: Vec<&SparseVector> = trading.iter().map(|v| &v.0).collect();
    write_vector_csv(&dir.join("portfolio.csv"), &universe.investors, &p)?;
    write_vector_csv(&dir.join("trading.csv"), &universe.investors, &t)
}

fn read_portfolios(cfg: &PipelineConfig, ids: &[String]) -> Result<Vec<PortfolioVector>> {
    let raw = read_vector_csv(&cfg.vectors_dir().join("portfolio.csv"), ids)?;
    Ok(raw.into_iter().map(PortfolioVector).collect())
}

fn read_trading(cfg: &PipelineConfig, ids: &[String]) -> Result<Vec<TradingVector>> {
    let raw = read_vector_csv(&cfg.vectors_dir().join("trading.csv"), ids)?;
    Ok(raw.into_iter().map(TradingVector).collect())
}

pub fn stage_network(cfg: &PipelineConfig) -> Result<()> {
    let universe = CleanUniverse::read(&cfg.universe_path())?;
    let portfolios = read_portfolios(cfg, &universe.investors)?;
    let classes = simnet::dedupe(&portfolios);
    let graph = simnet::build_graph(&classes, cfg.threshold)?;
    log::info!(
        "network: {} classes from {} investors, {} edges",
        classes.len(),
        universe.investors.len(),
        graph.edges.len()
    );
    let dir = cfg.network_dir();
    ensure_dir(&dir)?;
    simnet::write_graph_file(&dir.join("graph.txt"), &graph)?;
    simnet::write_members_csv(&dir.join("members.csv"), &classes, &universe.investors)
}

pub fn stage_cluster(cfg: &PipelineConfig) -> Result<()> {
    let graph = simnet::read_graph_file(&cfg.network_dir().join("graph.txt"))?;
    let fl = mapeq::flows(&graph)?;
    let tree = mapeq::optimize_hierarchical(&graph, &fl, cfg.trials, rng::mix(cfg.seed, STAGE_CLUSTER));
    log::info!("cluster: codelength {} bits over {} classes", tree.codelength, graph.n_nodes);
    mapeq::write_tree_file(&cfg.tree_path(), &tree, &fl.visit)
}

pub fn stage_cohort(cfg: &PipelineConfig) -> Result<()> {
    let universe = CleanUniverse::read(&cfg.universe_path())?;
    let members = simnet::read_members_csv(&cfg.network_dir().join("members.csv"), &universe.investors)?;
    let (tree, _) = mapeq::read_tree_file(&cfg.tree_path(), members.len())?;
    let portfolios = read_portfolios(cfg, &universe.investors)?;
    let trading = read_trading(cfg, &universe.investors)?;

    let groups = mapeq::project(&tree, &members);
    let base = rng::mix(cfg.seed, STAGE_COHORT);
    let mut reports = Vec::new();
    for (rank, group) in groups.iter().take(cfg.top_groups as usize).enumerate() {
        let gid = rank as u32 + 1;
        let mut report = cohort::group_stats(
            gid,
            group,
            &portfolios,
            &trading,
            cfg.cohort_sample_pairs,
            rng::mix(base, 0x1_0000_0000 + gid as u64),
        );
        // Groups the bootstrap cannot draw from (fewer than two members, or
        // nobody left outside) skip the scan and stay at "not reached".
        if group.len() >= 2 && group.len() < trading.len() {
            let boot = BootstrapConfig {
                iterations: cfg.bootstrap_iterations,
                set_size: 1,
                alpha: cfg.alpha,
                n_max: cfg.n_max,
                seed: rng::mix(base, gid as u64),
            };
            report.significant_set_size = cohort::significant_set_size(group, &trading, &boot)?;
        }
        reports.push(report);
    }
    cohort::write_groups_csv(&cfg.groups_path(), &reports, &universe.stocks)
}

struct ReportInputs {
    universe: CleanUniverse,
    portfolios: Vec<PortfolioVector>,
    trading: Vec<TradingVector>,
}

fn report_inputs(cfg: &PipelineConfig) -> Result<ReportInputs> {
    let universe = CleanUniverse::read(&cfg.universe_path())?;
    let portfolios = read_portfolios(cfg, &universe.investors)?;
    let trading = read_trading(cfg, &universe.investors)?;
    Ok(ReportInputs { universe, portfolios, trading })
}

/// The curve's pair sample: identical for every report product of one
/// configuration, so the emitted pair_sample.csv audits both curves.
fn report_pairs(cfg: &PipelineConfig, population: usize) -> Vec<(u32, u32)> {
    let base = rng::mix(cfg.seed, STAGE_REPORT);
    report::sample_pairs(population, cfg.report_pair_sample, rng::mix(base, 0))
}

pub fn report_curve_file(cfg: &PipelineConfig, variant: CurveVariant, out: &Path) -> Result<()> {
    let inputs = report_inputs(cfg)?;
    let pairs = report_pairs(cfg, inputs.universe.investors.len());
    let salt = match variant {
        CurveVariant::All => 1,
        CurveVariant::NewStocks => 2,
    };
    let curve = report::similarity_curve(
        &pairs,
        &inputs.portfolios,
        &inputs.trading,
        cfg.bin_width,
        cfg.boot_reps,
        variant,
        rng::mix(rng::mix(cfg.seed, STAGE_REPORT), salt),
    )?;
    report::write_curve_csv(out, &curve)
}

pub fn report_dist_file(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let inputs = report_inputs(cfg)?;
    let population = inputs.universe.investors.len();
    let feasible: Vec<u32> =
        DIST_SIZES.iter().copied().filter(|&s| 2 * s as usize <= population).collect();
    if feasible.is_empty() {
        return Err(Error::InvalidInput(format!(
            "population of {population} is too small for any distribution group size"
        )));
    }
    let tables = report::random_group_distributions(
        &inputs.portfolios,
        &inputs.trading,
        &feasible,
        cfg.dist_samples,
        rng::mix(rng::mix(cfg.seed, STAGE_REPORT), 3),
    )?;
    report::write_dist_csv(out, &tables)
}

pub fn report_scatter_file(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let rows = cohort::read_groups_csv(&cfg.groups_path())?;
    let scatter: Vec<(u32, f64, f64, u32)> = rows
        .iter()
        .map(|r| (r.group_id, r.mean_portfolio_sim, r.mean_trading_sim, r.investors))
        .collect();
    report::write_scatter_rows(out, &scatter)
}

pub fn stage_report(cfg: &PipelineConfig) -> Result<()> {
    let dir = cfg.report_dir();
    ensure_dir(&dir)?;
    let inputs = report_inputs(cfg)?;
    let pairs = report_pairs(cfg, inputs.universe.investors.len());
    let (p_sims, t_sims) =
        report::pair_similarities(&pairs, &inputs.portfolios, &inputs.trading, CurveVariant::All);
    report::write_pair_sample_csv(&dir.join("pair_sample.csv"), &pairs, &p_sims, &t_sims)?;
    report_curve_file(cfg, CurveVariant::All, &dir.join("curve_all.csv"))?;
    report_curve_file(cfg, CurveVariant::NewStocks, &dir.join("curve_new.csv"))?;
    report_dist_file(cfg, &dir.join("dist.csv"))?;
    report_scatter_file(cfg, &dir.join("scatter.csv"))
}

// --- manifest -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    bytes.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn walk_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            walk_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under its root")
                .to_string_lossy()
                .replace('\\', "/");
            out.push(format!("{rel}\t{}", file_hash(&path)?));
        }
    }
    Ok(())
}

/// Content hash of a file, or of a directory as the hash of its sorted
/// `relative-path TAB file-hash` lines.
pub fn hash_artifact(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut lines = Vec::new();
        walk_files(path, path, &mut lines)?;
        lines.sort_unstable();
        let mut joined = String::new();
        for l in &lines {
            joined.push_str(l);
            joined.push('\n');
        }
        Ok(hex(&Sha256::digest(joined.as_bytes())))
    } else {
        file_hash(path)
    }
}

/// Run every stage in order and write `manifest.txt`. Stage errors come
/// back wrapped with the stage name.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    let synthetic = matches!(cfg.input, InputConfig::Synth { .. });
    let stages: Vec<(&str, fn(&PipelineConfig) -> Result<()>)> = vec![
        ("synth", stage_synth as fn(&PipelineConfig) -> Result<()>),
        ("ingest", stage_ingest),
        ("vectors", stage_vectors),
        ("network", stage_network),
        ("cluster", stage_cluster),
        ("cohort", stage_cohort),
        ("report", stage_report),
    ];
    for (name, stage) in stages {
        if name == "synth" && !synthetic {
            continue;
        }
        let started = std::time::Instant::now();
        stage(cfg).map_err(|e| e.in_stage(name))?;
        log::info!("stage {name} finished in {:.2?}", started.elapsed());
    }

    let mut artifacts: Vec<(&str, PathBuf)> = Vec::new();
    if synthetic {
        artifacts.push(("market", cfg.market_dir()));
    }
    artifacts.push(("universe", cfg.universe_path()));
    artifacts.push(("vectors", cfg.vectors_dir()));
    artifacts.push(("network", cfg.network_dir()));
    artifacts.push(("tree", cfg.tree_path()));
    artifacts.push(("groups", cfg.groups_path()));
    artifacts.push(("report", cfg.report_dir()));

    let mut entries = Vec::new();
    let mut text = String::new();
    for (name, path) in artifacts {
        let rel = path
            .strip_prefix(&cfg.out_dir)
            .expect("artifacts live in out_dir")
            .to_string_lossy()
            .replace('\\', "/");
        let hash = hash_artifact(&path)?;
        text.push_str(&format!("{name}\t{rel}\t{hash}\n"));
        entries.push(ManifestEntry { name: name.to_string(), path: rel, sha256: hash });
    }
    let manifest = cfg.manifest_path();
    std::fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(name), Some(rel), Some(hash), None) => entries.push(ManifestEntry {
                name: name.to_string(),
                path: rel.to_string(),
                sha256: hash.to_string(),
            }),
            _ => return Err(Error::parse(path, i + 1, "expected 'name TAB path TAB hash'")),
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> PipelineConfig {
        let text = format!(
            "\
out_dir = {}
synth_spec = default
trials = 4
bootstrap_iterations = 60
top_groups = 6
dist_samples = 120
boot_reps = 80
",
            dir.display()
        );
        PipelineConfig::parse(&text).unwrap()
    }

    #[test]
    fn config_parses_and_rejects_conflicting_inputs() {
        let cfg = PipelineConfig::parse("seed = 7\nthreshold = 0.8\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.threshold, 0.8);
        assert!(matches!(cfg.input, InputConfig::Synth { spec: None }));

        let err = PipelineConfig::parse("synth_spec = default\nt1 = a.tsv\n").unwrap_err();
        assert!(err.is_config());
        let err = PipelineConfig::parse("t1 = a.tsv\n").unwrap_err();
        assert!(err.is_config(), "files mode needs every path and date: {err}");
        assert!(PipelineConfig::parse("threshold = 1.5\n").unwrap_err().is_config());
        assert!(PipelineConfig::parse("mystery = 1\n").unwrap_err().is_config());
    }

    #[test]
    fn full_run_emits_seven_artifacts_with_stable_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let first = run_pipeline(&cfg).unwrap();
        assert_eq!(first.len(), 7);
        let names: Vec<&str> = first.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["market", "universe", "vectors", "network", "tree", "groups", "report"]);
        let reread = read_manifest(&cfg.manifest_path()).unwrap();
        assert_eq!(reread, first);

        // Second run over the same directory reproduces every hash.
        let second = run_pipeline(&cfg).unwrap();
        assert_eq!(second, first);
    }

    #[test]
    fn staged_rerun_matches_the_one_shot_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        run_pipeline(&cfg).unwrap();
        let tree_hash = hash_artifact(&cfg.tree_path()).unwrap();
        let groups_hash = hash_artifact(&cfg.groups_path()).unwrap();
        // Replaying individual stages over the persisted artifacts changes
        // nothing: each stage is a pure function of its input files.
        stage_cluster(&cfg).unwrap();
        stage_cohort(&cfg).unwrap();
        assert_eq!(hash_artifact(&cfg.tree_path()).unwrap(), tree_hash);
        assert_eq!(hash_artifact(&cfg.groups_path()).unwrap(), groups_hash);
    }

    #[test]
    fn missing_price_file_fails_in_the_ingest_stage() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        stage_synth(&cfg).unwrap();
        let market = cfg.market_dir();
        std::fs::remove_file(market.join("prices_t1.csv")).unwrap();
        // Feed the market files back in as external snapshots so the synth
        // stage cannot regenerate the deleted price table.
        let text = format!(
            "\
out_dir = {}
t1 = {}
t2 = {}
prices_t1 = {}
prices_t2 = {}
t1_date = {}
t2_date = {}
",
            dir.path().join("run2").display(),
            market.join("t1.tsv").display(),
            market.join("t2.tsv").display(),
            market.join("prices_t1.csv").display(),
            market.join("prices_t2.csv").display(),
            synth::T1_DATE,
            synth::T2_DATE,
        );
        let cfg = PipelineConfig::parse(&text).unwrap();
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(
            matches!(&err, Error::Stage { stage, .. } if stage == "ingest"),
            "expected an ingest stage failure, got: {err}"
        );
    }
}
