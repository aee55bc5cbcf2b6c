//! Experiment harnesses on the synthetic corpus: the individual-vs-joint
//! comparison and the fine-tuning phase of weight calibration.

use morphkit::corpus::Tag;
use morphkit::dataset::toy_encoded_corpus;
use morphkit::layers::LossWeights;
use morphkit::model::ModelConfig;
use morphkit::train::{calibrate_lambdas, run_individual_vs_mt, CalibrationConfig, TrainConfig};

#[test]
fn joint_training_keeps_gender_competitive() {
    // Gender is decided by the inflection vowel, the same region every
    // other tag reads; joint training must stay within 0.02 of the
    // dedicated single-task model at a fixed seed.
    let corpus = toy_encoded_corpus(1, 8).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: 8,
        freeze: false,
        eval_every: 8,
        seed: 404,
        ..TrainConfig::default()
    };
    let report =
        run_individual_vs_mt(&corpus, &ModelConfig::toy(), &cfg, &LossWeights::calibrated())
            .unwrap();
    assert_eq!(report.rows.len(), 8, "7 single-task rows + 1 multi-task row");

    let single_g = report.row("single:G").unwrap().tag_f1[Tag::Gender.index()];
    let joint_g = report.row("multi-task").unwrap().tag_f1[Tag::Gender.index()];
    assert!(
        joint_g >= single_g - 0.02,
        "joint G F1 {joint_g} fell more than 0.02 below single-task {single_g}"
    );

    // CSV shape: header + 8 rows.
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("setting,f1_pos,"));
}

#[test]
fn calibration_phase2_respects_the_no_regression_rule() {
    let corpus = toy_encoded_corpus(1, 8).unwrap();
    let cal = CalibrationConfig {
        epochs: 4,
        seed: 505,
        phase2: true,
        neighborhood: vec![0.9],
        tolerance: 0.005,
    };
    let train_cfg = TrainConfig {
        batch_size: 16,
        seed: 505,
        ..TrainConfig::default()
    };
    let result = calibrate_lambdas(&corpus, &ModelConfig::toy(), &train_cfg, &cal).unwrap();
    assert_eq!(result.grid.len(), 11);

    // Any accepted adjustment must be reflected in the chosen weights;
    // rejected ones must not.
    for adj in &result.adjustments {
        let w = result.chosen.tag(adj.tag);
        if adj.accepted {
            assert_eq!(w, adj.weight, "{} accepted but weight not applied", adj.tag.name());
        }
    }
    // The manifest is a loadable config snippet.
    let manifest = result.chosen_manifest();
    let parsed = morphkit::config::RunConfig::parse(&manifest).unwrap();
    assert_eq!(parsed.loss.lemma, result.chosen.lemma);
    assert_eq!(parsed.loss.gender, result.chosen.gender);
}
