//! Command-line front end: ingest, select-features, train, calibrate,
//! analyze, evaluate, and the individual-vs-multi-task harness.
//!
//! Exit codes: 0 success, 1 runtime/data error, 2 usage error.

use clap::{Args, Parser, Subcommand};
use morphkit::config::RunConfig;
use morphkit::corpus::{
    ambiguous_surfaces, bind, build_domains, build_vocab, fit_len_max, parse_labeled,
    split_corpus, ColumnManifest, Sentence, SplitCorpus, Tag, TagDomains,
};
use morphkit::dataset::{
    build_encoded_corpus, read_cache, selection_dataset, write_cache, EncodedCorpus,
};
use morphkit::error::{Error, Result};
use morphkit::eval::{evaluate, AnalysisRow};
use morphkit::fsutil::write_atomic;
use morphkit::lingfeat::{FeatureMask, FeaturePool, PhonoTable};
use morphkit::model::{analyze, load_checkpoint, save_checkpoint, Model};
use morphkit::select::{ga_run, mask_file_string, parse_mask_file};
use morphkit::train::{calibrate_lambdas, run_individual_vs_mt, train_joint, CalibrationConfig};
use std::path::{Path, PathBuf};

/// Config keys with their reference defaults, shown on every subcommand
/// that takes --config.
const CONFIG_HELP: &str = "Config keys (key = default):
  [corpus] cw = 4, len_max = 18, truncate_long = false, fit_lenmax = false,
           split_train/split_dev/split_test = 0.8/0.1/0.1
  [model]  embed_dim = 64, conv_maps = 64, conv_widths = 4,5, gru_hidden = 64,
           dense1 = 64, dense2 = 128, decoder_hidden = 64, noise_sigma = 0.1,
           dropout = 0.5, head_dropout = 0.5, attention = luong,
           pooling = max+avg, beam_width = 4, beam_length_norm = false,
           tie_conv_slots = false
  [train]  optimizer = adadelta, lr = 1.0, rho = 0.95, epsilon = 1e-6,
           batch_size = 32, max_epochs = 200, patience = 5, min_delta = 1e-4,
           grad_clip = 0 (off), freeze = true, target_train_loss = 0 (off), seed = 0
  [loss]   lambda_pos = 0.7, lambda_g = 0.9, lambda_n = 0.7, lambda_p = 0.9,
           lambda_c = 0.95, lambda_tam = 0.7, lambda_l = 0.3
           (or lambda = x to set all six tag weights at once)
  [ga]     generations = 30, population = 60, crossover = 0.7, mutation = 0.03,
           alpha = 0.05, folds = 3, metric = micro_f1
  [rf]     trees = 15, min_samples_split = 2, min_samples_leaf = 1";

#[derive(Parser)]
#[command(
    name = "morphkit",
    about = "Context-aware joint morphological analysis: tagging, lemmatization, \
             GA feature selection, and evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file (key = value with [section] headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, e.g. --set train.batch_size=8 (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Seed for all randomness (falls back to MORPHKIT_SEED, then the
    /// config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread cap for parallel stages.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Clone)]
struct CorpusOpts {
    /// Unsplit treebank; split by the configured ratios and seed.
    #[arg(long, conflicts_with_all = ["train_file", "cache"])]
    corpus: Option<PathBuf>,
    /// Pre-split treebank files.
    #[arg(long = "train", requires = "dev_file", requires = "test_file")]
    train_file: Option<PathBuf>,
    #[arg(long = "dev")]
    dev_file: Option<PathBuf>,
    #[arg(long = "test")]
    test_file: Option<PathBuf>,
    /// Column manifest for the treebank files.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Encoded corpus cache produced by `ingest`.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Phonological attribute table (defaults to the bundled one).
    #[arg(long)]
    phono: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a treebank, build vocabulary and domains, encode examples,
    /// and write the corpus cache.
    #[command(after_help = CONFIG_HELP)]
    Ingest {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        corpus: CorpusOpts,
        /// Output cache path.
        #[arg(long)]
        out: PathBuf,
        /// Recompute len_max from the corpus instead of the configured value.
        #[arg(long)]
        fit_lenmax: bool,
        /// Truncate overlong tokens instead of rejecting them.
        #[arg(long)]
        truncate: bool,
    },
    /// Run GA feature selection for one tag (or all six).
    #[command(after_help = CONFIG_HELP)]
    SelectFeatures {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        corpus: CorpusOpts,
        /// Tag to optimize: POS, G, N, P, C, TAM, or `all`.
        #[arg(long)]
        tag: String,
        /// Directory for `features.<TAG>.mask` and trace CSVs.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the joint model and write a checkpoint.
    #[command(after_help = CONFIG_HELP)]
    Train {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        corpus: CorpusOpts,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory holding `features.<TAG>.mask` files from
        /// select-features; all-ones masks when absent.
        #[arg(long)]
        masks_dir: Option<PathBuf>,
    },
    /// Sweep the shared tag weight and fine-tune per-tag weights.
    #[command(after_help = CONFIG_HELP)]
    Calibrate {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        corpus: CorpusOpts,
        /// Directory for the grid CSV and chosen-weights manifest.
        #[arg(long)]
        out_dir: PathBuf,
        /// Epochs per short run.
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Skip the per-tag fine-tuning phase.
        #[arg(long)]
        no_phase2: bool,
    },
    /// Analyze pre-tokenized sentences (one sentence per line, tokens
    /// whitespace-separated) with a trained model.
    Analyze {
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Input sentences.
        #[arg(long)]
        input: PathBuf,
        /// Output analyses (treebank-layout TSV).
        #[arg(long)]
        out: PathBuf,
        /// Phonological attribute table (defaults to the bundled one).
        #[arg(long)]
        phono: Option<PathBuf>,
    },
    /// Score predicted analyses against gold.
    Evaluate {
        /// Predicted analyses (treebank layout).
        #[arg(long)]
        pred: PathBuf,
        /// Gold analyses (treebank layout).
        #[arg(long)]
        gold: PathBuf,
        /// Column manifest for both files (standard layout by default).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Human-readable report path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Machine-readable CSV report path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Per-tag per-class precision/recall/F1 CSV path.
        #[arg(long)]
        per_class: Option<PathBuf>,
        /// Checkpoint whose vocabulary feeds the OOV error bucket.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train seven single-task models and one joint model; tabulate.
    #[command(after_help = CONFIG_HELP)]
    CompareMt {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        corpus: CorpusOpts,
        /// Comparison table output (CSV).
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for assignment in &common.set {
        let (key_path, value) = assignment.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects section.key=value, got {assignment:?}"))
        })?;
        let (section, key) = key_path.trim().split_once('.').ok_or_else(|| {
            Error::Config(format!("--set expects section.key=value, got {assignment:?}"))
        })?;
        cfg.apply(section.trim(), key.trim(), value.trim())?;
    }
    let seed = common.seed.or_else(|| {
        std::env::var("MORPHKIT_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(seed) = seed {
        cfg.train.seed = seed;
        cfg.ga.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_phono(path: &Option<PathBuf>) -> Result<PhonoTable> {
    match path {
        Some(p) => PhonoTable::load(p),
        None => Ok(PhonoTable::bundled().clone()),
    }
}

fn load_manifest(path: &Option<PathBuf>) -> Result<ColumnManifest> {
    match path {
        Some(p) => ColumnManifest::load(p),
        None => Ok(ColumnManifest::standard()),
    }
}

struct ParsedCorpus {
    split: SplitCorpus,
    domains: TagDomains,
    ambiguous: usize,
}

fn parse_split_corpus(opts: &CorpusOpts, cfg: &RunConfig) -> Result<ParsedCorpus> {
    let manifest = load_manifest(&opts.manifest)?;
    let read = |p: &Path| -> Result<String> {
        std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))
    };
    if let Some(corpus_path) = &opts.corpus {
        let text = read(corpus_path)?;
        let labeled = parse_labeled(&corpus_path.display().to_string(), &text, &manifest)?;
        let ambiguous = ambiguous_surfaces(&labeled).len();
        let domains = build_domains(&labeled);
        let sentences = bind(&corpus_path.display().to_string(), labeled, &domains)?;
        let split = split_corpus(&sentences, cfg.split_ratios, cfg.train.seed)?;
        return Ok(ParsedCorpus {
            split,
            domains,
            ambiguous,
        });
    }
    let (Some(train), Some(dev), Some(test)) =
        (&opts.train_file, &opts.dev_file, &opts.test_file)
    else {
        return Err(Error::Config(
            "provide either --corpus or all of --train/--dev/--test (or --cache)".into(),
        ));
    };
    let mut all_labeled = Vec::new();
    let mut counts = Vec::new();
    for path in [train, dev, test] {
        let text = read(path)?;
        let labeled = parse_labeled(&path.display().to_string(), &text, &manifest)?;
        counts.push(labeled.len());
        all_labeled.extend(labeled);
    }
    let ambiguous = ambiguous_surfaces(&all_labeled).len();
    let domains = build_domains(&all_labeled);
    let sentences: Vec<Sentence> = bind("corpus", all_labeled, &domains)?;
    let mut iter = sentences.into_iter();
    let take = |it: &mut std::vec::IntoIter<Sentence>, n: usize| it.by_ref().take(n).collect();
    let split = SplitCorpus {
        train: take(&mut iter, counts[0]),
        dev: take(&mut iter, counts[1]),
        test: take(&mut iter, counts[2]),
    };
    Ok(ParsedCorpus {
        split,
        domains,
        ambiguous,
    })
}

/// Load the encoded corpus from a cache or by parsing treebank files.
fn load_encoded(opts: &CorpusOpts, cfg: &RunConfig) -> Result<EncodedCorpus> {
    if let Some(cache) = &opts.cache {
        let enc = read_cache(cache)?;
        if enc.cw != cfg.model.cw || enc.len_max != cfg.model.len_max {
            return Err(Error::Config(format!(
                "cache was encoded with cw={} len_max={}, config says cw={} len_max={}",
                enc.cw, enc.len_max, cfg.model.cw, cfg.model.len_max
            )));
        }
        return Ok(enc);
    }
    let parsed = parse_split_corpus(opts, cfg)?;
    let table = load_phono(&opts.phono)?;
    let all: Vec<Sentence> = parsed
        .split
        .train
        .iter()
        .chain(&parsed.split.dev)
        .chain(&parsed.split.test)
        .cloned()
        .collect();
    let vocab = build_vocab(&all);
    build_encoded_corpus(
        &parsed.split,
        vocab,
        parsed.domains,
        cfg.model.cw,
        cfg.model.len_max,
        cfg.truncate_long,
        &table,
    )
}

fn load_masks(dir: &Option<PathBuf>) -> Result<[FeatureMask; 6]> {
    let pool = FeaturePool::standard();
    let mut masks: [FeatureMask; 6] = std::array::from_fn(|_| FeatureMask::all_ones(pool.len()));
    let Some(dir) = dir else {
        return Ok(masks);
    };
    for tag in Tag::ALL {
        let path = dir.join(format!("features.{}.mask", tag.name()));
        if !path.exists() {
            return Err(Error::Config(format!(
                "missing mask file {}; run select-features or drop --masks-dir",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let (tag_name, mask) = parse_mask_file(pool, &text)?;
        if tag_name != tag.name() {
            return Err(Error::Config(format!(
                "{} declares tag {tag_name}, expected {}",
                path.display(),
                tag.name()
            )));
        }
        masks[tag.index()] = mask;
    }
    Ok(masks)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest {
            common,
            corpus,
            out,
            fit_lenmax,
            truncate,
        } => {
            let mut cfg = build_config(&common)?;
            if truncate {
                cfg.truncate_long = true;
            }
            let parsed = parse_split_corpus(&corpus, &cfg)?;
            if fit_lenmax || cfg.fit_lenmax {
                let all: Vec<Sentence> = parsed
                    .split
                    .train
                    .iter()
                    .chain(&parsed.split.dev)
                    .chain(&parsed.split.test)
                    .cloned()
                    .collect();
                cfg.model.len_max = fit_len_max(&all).max(cfg.model.conv_widths.iter().copied().max().unwrap_or(1));
                if cfg.model.len_max % 2 != 0 {
                    cfg.model.len_max += 1; // keep pooled widths aligned across filter widths
                }
                eprintln!("fit len_max = {}", cfg.model.len_max);
            }
            let table = load_phono(&corpus.phono)?;
            let all: Vec<Sentence> = parsed
                .split
                .train
                .iter()
                .chain(&parsed.split.dev)
                .chain(&parsed.split.test)
                .cloned()
                .collect();
            let vocab = build_vocab(&all);
            let enc = build_encoded_corpus(
                &parsed.split,
                vocab,
                parsed.domains,
                cfg.model.cw,
                cfg.model.len_max,
                cfg.truncate_long,
                &table,
            )?;
            write_cache(&enc, &out)?;
            let (tr, dv, te) = enc.n_items();
            eprintln!(
                "ingested: {} train / {} dev / {} test tokens, vocab {}, \
                 {} ambiguous surface forms",
                tr,
                dv,
                te,
                enc.vocab.size(),
                parsed.ambiguous
            );
            println!("{}", out.display());
        }

        Command::SelectFeatures {
            common,
            corpus,
            tag,
            out_dir,
        } => {
            let cfg = build_config(&common)?;
            let enc = load_encoded(&corpus, &cfg)?;
            let pool = FeaturePool::standard();
            let tags: Vec<Tag> = if tag.eq_ignore_ascii_case("all") {
                Tag::ALL.to_vec()
            } else {
                vec![Tag::from_name(&tag).ok_or_else(|| {
                    Error::Config(format!("unknown tag {tag:?} (POS|G|N|P|C|TAM|all)"))
                })?]
            };
            // Rebuild sentences from the encoded train split for selection.
            let table = load_phono(&corpus.phono)?;
            let sentences = sentences_from_encoded(&enc)?;
            for tag in tags {
                let ds = selection_dataset(&sentences, tag, &table)?;
                let (best, report) =
                    ga_run(&ds, pool.len(), &cfg.ga, &cfg.rf, &cfg.fitness, common.jobs)?;
                let mask = FeatureMask(best.bits.clone());
                let mask_path = out_dir.join(format!("features.{}.mask", tag.name()));
                write_atomic(
                    &mask_path,
                    &mask_file_string(pool, tag.name(), &mask, report.best_fitness),
                )?;
                let trace_path = out_dir.join(format!("ga_trace.{}.csv", tag.name()));
                write_atomic(&trace_path, &report.trace_csv())?;
                let pareto_path = out_dir.join(format!("pareto.{}.csv", tag.name()));
                write_atomic(&pareto_path, &report.pareto_csv())?;
                eprintln!(
                    "{}: best fitness {:.4} with {} features ({} evaluations)",
                    tag.name(),
                    report.best_fitness,
                    mask.count_ones(),
                    report.evaluations
                );
                println!("{}", mask_path.display());
            }
        }

        Command::Train {
            common,
            corpus,
            out,
            log,
            masks_dir,
        } => {
            let cfg = build_config(&common)?;
            let enc = load_encoded(&corpus, &cfg)?;
            let masks = load_masks(&masks_dir)?;
            let mut model = Model::new(
                cfg.model.clone(),
                enc.vocab.clone(),
                enc.domains.clone(),
                masks,
                cfg.train.seed,
            )?;
            let history = train_joint(&enc, &mut model, &cfg.loss, &cfg.train)?;
            save_checkpoint(&model, &out)?;
            if let Some(log_path) = &log {
                write_atomic(log_path, &history.to_csv())?;
            }
            let last = history.epochs.last();
            eprintln!(
                "trained {} epochs{}; final train loss {}",
                history.epochs.len(),
                history
                    .freeze_epoch
                    .map(|e| format!(" (tag predictor frozen at epoch {e})"))
                    .unwrap_or_default(),
                last.map(|e| e.train_loss.to_string()).unwrap_or_default()
            );
            println!("{}", out.display());
        }

        Command::Calibrate {
            common,
            corpus,
            out_dir,
            epochs,
            no_phase2,
        } => {
            let cfg = build_config(&common)?;
            let enc = load_encoded(&corpus, &cfg)?;
            let cal = CalibrationConfig {
                epochs,
                seed: cfg.train.seed,
                phase2: !no_phase2,
                ..CalibrationConfig::default()
            };
            let result = calibrate_lambdas(&enc, &cfg.model, &cfg.train, &cal)?;
            let grid_path = out_dir.join("calibration_grid.csv");
            write_atomic(&grid_path, &result.grid_csv())?;
            let chosen_path = out_dir.join("chosen_weights.cfg");
            write_atomic(&chosen_path, &result.chosen_manifest())?;
            eprintln!(
                "chosen lambda {} (lambda_l {}); {} phase-2 adjustments tried",
                result.chosen_lambda,
                1.0 - result.chosen_lambda,
                result.adjustments.len()
            );
            println!("{}", chosen_path.display());
        }

        Command::Analyze {
            model,
            input,
            out,
            phono,
        } => {
            let model = load_checkpoint(&model)?;
            let table = load_phono(&phono)?;
            let text = std::fs::read_to_string(&input)
                .map_err(|e| Error::io(input.display().to_string(), e))?;
            let mut out_text = String::new();
            let mut failures = 0usize;
            for line in text.lines() {
                let words: Vec<String> =
                    line.split_whitespace().map(|w| w.to_string()).collect();
                if words.is_empty() {
                    continue;
                }
                let tokens = analyze(&model, &table, &words)?;
                for t in &tokens {
                    if matches!(t, morphkit::model::AnalyzedToken::Failed { .. }) {
                        failures += 1;
                    }
                    out_text.push_str(&t.to_tsv_line());
                    out_text.push('\n');
                }
                out_text.push('\n');
            }
            write_atomic(&out, &out_text)?;
            if failures > 0 {
                eprintln!("{failures} tokens failed analysis (overlong); placeholders written");
            }
            println!("{}", out.display());
        }

        Command::Evaluate {
            pred,
            gold,
            manifest,
            out,
            csv,
            per_class,
            model,
        } => {
            let manifest = load_manifest(&manifest)?;
            let read_rows = |p: &Path| -> Result<Vec<AnalysisRow>> {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::io(p.display().to_string(), e))?;
                let labeled = parse_labeled(&p.display().to_string(), &text, &manifest)?;
                Ok(labeled
                    .into_iter()
                    .flatten()
                    .map(|t| AnalysisRow {
                        surface: t.surface,
                        lemma: t.lemma,
                        labels: t.labels,
                    })
                    .collect())
            };
            let pred_rows = read_rows(&pred)?;
            let gold_rows = read_rows(&gold)?;
            let vocab = match &model {
                Some(p) => Some(load_checkpoint(p)?.vocab),
                None => None,
            };
            let report = evaluate(&pred_rows, &gold_rows, vocab.as_ref())?;
            match &out {
                Some(p) => write_atomic(p, &report.to_text())?,
                None => print!("{}", report.to_text()),
            }
            if let Some(p) = &csv {
                write_atomic(p, &report.to_csv())?;
            }
            if let Some(p) = &per_class {
                write_atomic(p, &morphkit::eval::per_class_csv(&pred_rows, &gold_rows)?)?;
            }
        }

        Command::CompareMt {
            common,
            corpus,
            out,
        } => {
            let cfg = build_config(&common)?;
            let enc = load_encoded(&corpus, &cfg)?;
            let report = run_individual_vs_mt(&enc, &cfg.model, &cfg.train, &cfg.loss)?;
            write_atomic(&out, &report.to_csv())?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

/// Rebuild `Sentence` values from an encoded corpus's train split (the
/// selector works on surfaces and tag ids, both of which the cache keeps).
fn sentences_from_encoded(enc: &EncodedCorpus) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for sent in &enc.train {
        let tokens = sent
            .iter()
            .map(|item| morphkit::corpus::Token {
                surface: item.surface.clone(),
                lemma: item.lemma.clone(),
                tags: item.example.gold_tags,
            })
            .collect();
        out.push(Sentence::new(tokens)?);
    }
    Ok(out)
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
