//! Library-level end-to-end run: encode the toy corpus, train briefly,
//! checkpoint, reload, analyze, and score.

use morphkit::dataset::toy_encoded_corpus;
use morphkit::eval::evaluate;
use morphkit::layers::LossWeights;
use morphkit::lingfeat::{FeatureMask, FeaturePool, PhonoTable};
use morphkit::model::{analyze, load_checkpoint, save_checkpoint, AnalyzedToken, Model, ModelConfig};
use morphkit::train::{train_joint, TrainConfig};

#[test]
fn train_checkpoint_analyze_evaluate() {
    let corpus = toy_encoded_corpus(1, 8).unwrap();
    let pool = FeaturePool::standard();
    let masks = std::array::from_fn(|_| FeatureMask::all_ones(pool.len()));
    let mut model = Model::new(
        ModelConfig::toy(),
        corpus.vocab.clone(),
        corpus.domains.clone(),
        masks,
        99,
    )
    .unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: 25,
        freeze: false,
        eval_every: 25,
        target_train_loss: 0.05,
        seed: 99,
        ..TrainConfig::default()
    };
    train_joint(&corpus, &mut model, &LossWeights::calibrated(), &cfg).unwrap();

    // Checkpoint round trip preserves behavior exactly.
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    save_checkpoint(&model, &ckpt).unwrap();
    let loaded = load_checkpoint(&ckpt).unwrap();

    let table = PhonoTable::bundled();
    let words: Vec<String> = corpus.dev[0].iter().map(|i| i.surface.clone()).collect();
    let a = analyze(&model, table, &words).unwrap();
    let b = analyze(&loaded, table, &words).unwrap();
    let lines = |ts: &[AnalyzedToken]| {
        ts.iter().map(|t| t.to_tsv_line()).collect::<Vec<_>>()
    };
    assert_eq!(lines(&a), lines(&b), "loaded model must analyze identically");

    // Analyses of the train split score well above chance after training.
    let mut pred_rows = Vec::new();
    let mut gold_rows = Vec::new();
    for sent in corpus.train.iter().take(10) {
        let words: Vec<String> = sent.iter().map(|i| i.surface.clone()).collect();
        let analyses = analyze(&model, table, &words).unwrap();
        for (t, item) in analyses.iter().zip(sent) {
            pred_rows.push(t.to_row());
            gold_rows.push(morphkit::eval::AnalysisRow {
                surface: item.surface.clone(),
                lemma: item.lemma.clone(),
                labels: std::array::from_fn(|k| {
                    let tag = morphkit::corpus::Tag::ALL[k];
                    corpus
                        .domains
                        .get(tag)
                        .label(item.example.gold_tags.get(tag))
                        .to_string()
                }),
            });
        }
    }
    let report = evaluate(&pred_rows, &gold_rows, Some(&corpus.vocab)).unwrap();
    let pos = report.rows.iter().find(|(l, _)| l == "POS").unwrap().1;
    assert!(pos > 0.8, "POS accuracy after training: {pos}");
}
