//! End-to-end: generate a corpus, extract and binarize rules, fit the rule
//! models, and parse a held-out scene exactly.
//!
//! ```bash
//! cargo run --release -p scene-grammar --example train_and_parse
//! ```

use scene_grammar::{
    extract_labels, extract_rules, gen_scene, parse_kld, train, Budget, KldOutcome, ParseNode,
    SceneTemplate, TrainConfig,
};

fn main() -> anyhow::Result<()> {
    let template = SceneTemplate::office();
    let corpus: Vec<_> = (0..60)
        .map(|i| gen_scene(&template, 100 + i))
        .collect::<Result<_, _>>()?;

    let trees: Vec<_> = corpus.iter().map(|(_, t)| t.clone()).collect();
    let grammar = extract_rules(&trees)?.binarize()?;
    println!("extracted {} rules over {} symbols", grammar.rules().len(), grammar.symbols().len());

    let tg = train(&corpus, &grammar, &TrainConfig::default())?;

    let (scene, _) = gen_scene(&template, 9999)?;
    println!("parsing a fresh scene with {} terminals", scene.n_terminals());
    match parse_kld(&scene, &tg, &Budget::default())? {
        KldOutcome::Goal(result) => {
            println!(
                "cost {:.4}, {} unspanned, {} expansions",
                result.cost,
                result.unspanned.len(),
                result.stats.expansions
            );
            for (id, label) in extract_labels(&result.tree, tg.grammar()) {
                println!("  segment {id}: {label}");
            }
            print_tree(&result.tree.root, 0);
        }
        KldOutcome::Exhausted(partial) => {
            println!("budget exhausted; best partial forest has {} roots", partial.roots.len());
        }
    }
    Ok(())
}

fn print_tree(node: &ParseNode, depth: usize) {
    let indent = "  ".repeat(depth);
    if node.children.is_empty() {
        println!("{indent}segment {:?}", node.span);
    } else {
        println!("{indent}{} (cost {:.3})", node.symbol, node.cost);
        for c in &node.children {
            print_tree(c, depth + 1);
        }
    }
}
