//! Drives the compiled binary: full runs, stage-by-stage reruns, and the
//! exit-code contract (0 ok, 2 config error, 3 stage failure).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use folionet_core::pipeline::{self, read_manifest};

// Small enough to keep each full run around a second.
const TINY_CFG: &str = "\
synth_spec = default
trials = 4
bootstrap_iterations = 60
top_groups = 6
dist_samples = 120
boot_reps = 80
";

fn folionet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_folionet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_cfg(path: &Path, out_dir: &Path) {
    std::fs::write(path, format!("out_dir = {}\n{TINY_CFG}", out_dir.display())).unwrap();
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_run_emits_manifest_and_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("pipeline.cfg");
    write_cfg(&cfg, &out_dir);

    let res = folionet(&["--config", cfg.to_str().unwrap(), "run"]);
    assert_ok(&res, "run");

    let manifest = read_manifest(&out_dir.join("manifest.txt")).unwrap();
    let names: Vec<&str> = manifest.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(
        names,
        ["market", "universe", "vectors", "network", "tree", "groups", "report"]
    );
    for entry in &manifest {
        let on_disk = pipeline::hash_artifact(&out_dir.join(&entry.path)).unwrap();
        assert_eq!(on_disk, entry.sha256, "hash drift in {}", entry.name);
    }
}

#[test]
fn staged_subcommands_match_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let cfg_a = tmp.path().join("a.cfg");
    let cfg_b = tmp.path().join("b.cfg");
    write_cfg(&cfg_a, &out_a);
    write_cfg(&cfg_b, &out_b);

    assert_ok(&folionet(&["--config", cfg_a.to_str().unwrap(), "run"]), "run");
    for stage in ["synth", "ingest", "vectors", "network", "cluster", "cohort", "report"] {
        let res = folionet(&["--config", cfg_b.to_str().unwrap(), stage]);
        assert_ok(&res, stage);
    }

    // Same artifacts whether produced by `run` or stage by stage.
    for entry in read_manifest(&out_a.join("manifest.txt")).unwrap() {
        let b = pipeline::hash_artifact(&out_b.join(&entry.path)).unwrap();
        assert_eq!(b, entry.sha256, "stage output differs for {}", entry.name);
    }

    // Single-file report commands reproduce the stage outputs byte for byte
    // (same config, same seed), and the --seed override takes effect.
    let a = out_a.to_str().unwrap();
    let curve = tmp.path().join("curve.csv");
    let res = folionet(&[
        "--config",
        cfg_a.to_str().unwrap(),
        "report",
        "curve",
        "--in",
        a,
        "--out",
        curve.to_str().unwrap(),
    ]);
    assert_ok(&res, "report curve");
    assert_eq!(
        std::fs::read(&curve).unwrap(),
        std::fs::read(out_a.join("report/curve_all.csv")).unwrap()
    );

    let dist = |out: &PathBuf, extra: &[&str]| {
        let mut args = vec![
            "--config",
            cfg_a.to_str().unwrap(),
            "report",
            "dist",
            "--in",
            a,
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        assert_ok(&folionet(&args), "report dist");
    };
    let dist_default = tmp.path().join("dist_default.csv");
    let dist_reseeded = tmp.path().join("dist_reseeded.csv");
    dist(&dist_default, &[]);
    dist(&dist_reseeded, &["--seed", "7"]);
    assert_eq!(
        std::fs::read(&dist_default).unwrap(),
        std::fs::read(out_a.join("report/dist.csv")).unwrap()
    );
    assert_ne!(
        std::fs::read(&dist_default).unwrap(),
        std::fs::read(&dist_reseeded).unwrap()
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();

    let bad = tmp.path().join("bad.cfg");
    std::fs::write(&bad, "threshold = 1.5\n").unwrap();
    let res = folionet(&["--config", bad.to_str().unwrap(), "run"]);
    assert_eq!(res.status.code(), Some(2));

    let missing = tmp.path().join("nope.cfg");
    let res = folionet(&["--config", missing.to_str().unwrap(), "run"]);
    assert_eq!(res.status.code(), Some(2));

    // clap's own usage errors share the config exit code.
    let res = folionet(&["--frobnicate"]);
    assert_eq!(res.status.code(), Some(2));

    // Missing input data is a stage failure that names the stage.
    let files = tmp.path().join("files.cfg");
    std::fs::write(
        &files,
        format!(
            "out_dir = {}\nt1 = {d}/t1.tsv\nt2 = {d}/t2.tsv\n\
             prices_t1 = {d}/p1.csv\nprices_t2 = {d}/p2.csv\n\
             t1_date = 2019-06-30\nt2_date = 2019-09-30\n",
            tmp.path().join("out").display(),
            d = tmp.path().join("absent").display()
        ),
    )
    .unwrap();
    let res = folionet(&["--config", files.to_str().unwrap(), "run"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("ingest"));
}
