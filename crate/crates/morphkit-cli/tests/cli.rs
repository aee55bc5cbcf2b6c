//! End-to-end checks of the command-line interface: exit codes,
//! re-runnability, and the analyze/evaluate loop.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_morphkit"))
}

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../morphkit/data")
        .join(file)
}

fn write_cfg(dir: &Path) -> PathBuf {
    let p = dir.join("toy.cfg");
    std::fs::write(
        &p,
        "[corpus]\ncw = 1\nlen_max = 8\n\n[model]\nembed_dim = 16\nconv_maps = 8\n\
         gru_hidden = 24\ndense1 = 32\ndense2 = 48\ndecoder_hidden = 24\nnoise_sigma = 0.0\n\
         dropout = 0.0\nhead_dropout = 0.0\n\n[train]\nbatch_size = 16\nmax_epochs = 4\n\
         freeze = false\n\n[ga]\ngenerations = 4\npopulation = 10\n",
    )
    .unwrap();
    p
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_and_rerunnability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let cache = dir.path().join("toy.mkc");

    // ingest twice: identical bytes (re-runnable with same seed).
    for _ in 0..2 {
        let out = bin()
            .args([
                "ingest",
                "--corpus",
                data("toy.tsv").to_str().unwrap(),
                "--manifest",
                data("toy.manifest").to_str().unwrap(),
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "7",
                "--out",
                cache.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        ok(&out);
    }
    let cache_bytes_1 = std::fs::read(&cache).unwrap();
    let out = bin()
        .args([
            "ingest",
            "--corpus",
            data("toy.tsv").to_str().unwrap(),
            "--manifest",
            data("toy.manifest").to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            cache.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    ok(&out);
    assert_eq!(cache_bytes_1, std::fs::read(&cache).unwrap());

    // train twice with the same seed: byte-identical training logs.
    let model = dir.path().join("model.ckpt");
    let log1 = dir.path().join("log1.csv");
    let log2 = dir.path().join("log2.csv");
    for log in [&log1, &log2] {
        let out = bin()
            .args([
                "train",
                "--cache",
                cache.to_str().unwrap(),
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "7",
                "--out",
                model.to_str().unwrap(),
                "--log",
                log.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        ok(&out);
    }
    assert_eq!(
        std::fs::read(&log1).unwrap(),
        std::fs::read(&log2).unwrap(),
        "same seed must give byte-identical training logs"
    );

    // analyze writes one line per token.
    let input = dir.path().join("input.txt");
    std::fs::write(&input, "bado kapeta gesu\npilu mage\n").unwrap();
    let analyses = dir.path().join("analyses.tsv");
    let out = bin()
        .args([
            "analyze",
            "--model",
            model.to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
            "--out",
            analyses.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    ok(&out);
    let text = std::fs::read_to_string(&analyses).unwrap();
    let token_lines = text.lines().filter(|l| !l.is_empty()).count();
    assert_eq!(token_lines, 5, "one analysis line per input token");
    for line in text.lines().filter(|l| !l.is_empty()) {
        assert_eq!(line.split('\t').count(), 8, "treebank layout");
    }

    // evaluate against itself: every accuracy 1.0, BLEU 100.
    let report_csv = dir.path().join("report.csv");
    let out = bin()
        .args([
            "evaluate",
            "--pred",
            analyses.to_str().unwrap(),
            "--gold",
            analyses.to_str().unwrap(),
            "--csv",
            report_csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    ok(&out);
    let csv = std::fs::read_to_string(&report_csv).unwrap();
    assert!(csv.contains("\"L + POS + G + N + P + C + TAM\",1\n"));
    assert!(csv.contains("char_bleu_corpus,100\n"));

    // select-features emits a mask file the trainer can consume.
    let masks = dir.path().join("masks");
    std::fs::create_dir(&masks).unwrap();
    let out = bin()
        .args([
            "select-features",
            "--cache",
            cache.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "3",
            "--tag",
            "POS",
            "--out-dir",
            masks.to_str().unwrap(),
            "--jobs",
            "2",
        ])
        .output()
        .unwrap();
    ok(&out);
    let mask_text = std::fs::read_to_string(masks.join("features.POS.mask")).unwrap();
    assert!(mask_text.contains("tag POS"));
    assert!(mask_text.contains("bits "));
    assert!(masks.join("ga_trace.POS.csv").exists());
    assert!(masks.join("pareto.POS.csv").exists());
}

#[test]
fn exit_codes() {
    // Unknown subcommand: usage error, exit 2.
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag: usage error, exit 2.
    let out = bin().args(["ingest", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing input file: runtime error, exit 1.
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "ingest",
            "--corpus",
            "/nonexistent/corpus.tsv",
            "--out",
            dir.path().join("x.mkc").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn help_documents_reference_defaults() {
    let out = bin().args(["--help"]).output().unwrap();
    ok(&out);
    for sub in [
        "ingest",
        "select-features",
        "train",
        "calibrate",
        "analyze",
        "evaluate",
        "compare-mt",
    ] {
        assert!(
            String::from_utf8_lossy(&out.stdout).contains(sub),
            "--help must list {sub}"
        );
    }

    // Subcommand help documents the config keys with their defaults.
    for sub in ["train", "ingest", "select-features", "calibrate", "compare-mt"] {
        let out = bin().args([sub, "--help"]).output().unwrap();
        ok(&out);
        let text = String::from_utf8_lossy(&out.stdout).to_string();
        for key in [
            "cw = 4",
            "beam_width = 4",
            "dropout = 0.5",
            "lr = 1.0",
            "generations = 30",
            "trees = 15",
            "lambda_c = 0.95",
        ] {
            assert!(text.contains(key), "{sub} --help must document {key}");
        }
    }
}

#[test]
fn seed_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let cache = dir.path().join("toy.mkc");
    let run = |env_seed: Option<&str>, out_path: &Path| {
        let mut cmd = bin();
        cmd.args([
            "ingest",
            "--corpus",
            data("toy.tsv").to_str().unwrap(),
            "--manifest",
            data("toy.manifest").to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        cmd.env_remove("MORPHKIT_SEED");
        if let Some(s) = env_seed {
            cmd.env("MORPHKIT_SEED", s);
        }
        let out = cmd.output().unwrap();
        ok(&out);
        std::fs::read(out_path).unwrap()
    };
    let with_env = run(Some("123"), &cache);
    let with_env_again = run(Some("123"), &cache);
    assert_eq!(with_env, with_env_again);
    let other_seed = run(Some("124"), &cache);
    assert_ne!(with_env, other_seed, "the env seed must steer the split");
}
