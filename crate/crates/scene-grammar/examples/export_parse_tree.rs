//! Parse the bundled example office scene and emit the tree as Graphviz
//! DOT (render with `dot -Tsvg`).
//!
//! ```bash
//! cargo run --release -p scene-grammar --example export_parse_tree > parse.dot
//! ```

use scene_grammar::{
    export_dot, extract_rules, gen_scene, load_scene, parse_kld, train, Budget, KldOutcome,
    SceneTemplate, TrainConfig,
};

fn main() -> anyhow::Result<()> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../..");
    let scene = load_scene(format!("{root}/scenes/office_example.json"))?;
    eprintln!(
        "loaded example scene: {} segments, {} edges",
        scene.n_terminals(),
        scene.edges().len()
    );

    // Train a throwaway grammar from the same template family.
    let template = SceneTemplate::office();
    let corpus: Vec<_> = (0..60)
        .map(|i| gen_scene(&template, i))
        .collect::<Result<_, _>>()?;
    let trees: Vec<_> = corpus.iter().map(|(_, t)| t.clone()).collect();
    let tg = train(&corpus, &extract_rules(&trees)?.binarize()?, &TrainConfig::default())?;

    match parse_kld(&scene, &tg, &Budget::default())? {
        KldOutcome::Goal(result) => {
            eprintln!("parse cost {:.4}, {} unspanned", result.cost, result.unspanned.len());
            print!("{}", export_dot(&result.tree));
        }
        KldOutcome::Exhausted(_) => eprintln!("budget exhausted"),
    }
    Ok(())
}
