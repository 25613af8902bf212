//! Cross-validated segment labeling: train on three folds, parse the
//! fourth, and report per-label precision/recall.
//!
//! ```bash
//! cargo run --release -p scene-grammar --example evaluate_labeling
//! ```

use scene_grammar::{
    extract_labels_gt, extract_rules, gen_scene, labels_for_result, parse_beam, parse_kld, train,
    BeamConfig, Budget, KldOutcome, LabelTally, SceneTemplate, TrainConfig,
};

fn main() -> anyhow::Result<()> {
    let template = SceneTemplate::office();
    let corpus: Vec<_> = (0..40)
        .map(|i| gen_scene(&template, 4242 + i))
        .collect::<Result<_, _>>()?;

    let mut tally = LabelTally::default();
    for fold in 0..4usize {
        let train_pairs: Vec<_> = corpus
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 4 != fold)
            .map(|(_, p)| p.clone())
            .collect();
        let trees: Vec<_> = train_pairs.iter().map(|(_, t)| t.clone()).collect();
        let grammar = extract_rules(&trees)?.binarize()?;
        let tg = train(&train_pairs, &grammar, &TrainConfig::default())?;

        for (i, (scene, tree)) in corpus.iter().enumerate().filter(|(i, _)| i % 4 == fold) {
            let budget = Budget {
                max_expansions: 200_000,
                max_seconds: 5.0,
            };
            let result = match parse_kld(scene, &tg, &budget)? {
                KldOutcome::Goal(r) => r,
                KldOutcome::Exhausted(_) => parse_beam(
                    scene,
                    &tg,
                    &BeamConfig {
                        seed: i as u64,
                        ..Default::default()
                    },
                )?,
            };
            let pred = labels_for_result(&result, tg.grammar(), scene);
            let mut gold = extract_labels_gt(tree, tg.grammar());
            for seg in scene.segments() {
                gold.entry(seg.id).or_insert_with(|| "none".to_string());
            }
            tally.add(&pred, &gold)?;
        }
    }

    let report = tally.report();
    print!("{}", report.to_tsv());
    println!(
        "macro: recall {:.1}%, precision {:.1}%",
        report.macro_recall, report.macro_precision
    );
    Ok(())
}
