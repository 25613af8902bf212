//! Grammar composition: split a trained grammar into a desk pack and a
//! chair pack, merge them back without retraining, and parse with the
//! result. This is the "download a trained model for a new object and
//! plug it in" workflow: rules carry their fitted parameters with them.
//!
//! ```bash
//! cargo run --release -p scene-grammar --example compose_grammars
//! ```

use scene_grammar::{
    compose, extract_rules, gen_scene, parse_kld, train, Budget, KldOutcome, ModelVariant,
    SceneTemplate, TrainConfig,
};

fn main() -> anyhow::Result<()> {
    let mut template = SceneTemplate::office();
    template.chair_prob = 1.0;
    let corpus: Vec<_> = (0..50)
        .map(|i| gen_scene(&template, 500 + i))
        .collect::<Result<_, _>>()?;
    let trees: Vec<_> = corpus.iter().map(|(_, t)| t.clone()).collect();
    let full = train(&corpus, &extract_rules(&trees)?.binarize()?, &TrainConfig::default())?;
    let stored = full.to_stored();

    // Chair pack: chair formation, chair parts, and the grouping rule that
    // attaches a chair to the scene. Desk pack: everything else.
    let is_chair_rule = |g: &scene_grammar::Grammar, r: &scene_grammar::Rule| {
        let names = std::iter::once(r.lhs).chain(r.rhs.iter().copied());
        names
            .map(|s| g.name(s))
            .any(|n| n == "Chair" || n.starts_with("chair"))
    };
    let chair_pack = stored.restrict(|_, r| is_chair_rule(&stored.grammar, r))?;
    let desk_pack = stored.restrict(|_, r| !is_chair_rule(&stored.grammar, r))?;
    println!(
        "full {} rules = desk {} + chair {}",
        stored.grammar.rules().len(),
        desk_pack.grammar.rules().len(),
        chair_pack.grammar.rules().len()
    );

    let merged = compose(&desk_pack, &chair_pack)?;
    println!("composed grammar: {} rules", merged.grammar.rules().len());

    // The chair rules carry the donor's Gaussians unchanged.
    let chair = merged.grammar.id_of("Chair").expect("composed grammar knows Chair");
    for &rid in merged.grammar.rules_with_lhs(chair) {
        if let Some(model) = &merged.models[rid] {
            if let ModelVariant::Gaussian(p) = &model.variant {
                println!(
                    "  {}: prior {:.3}, {} training sites, {}-dim Gaussian",
                    merged.grammar.display_rule(rid),
                    model.prior,
                    model.train_count,
                    p.mu.len()
                );
            }
        }
    }

    // The composed grammar parses chairs like the original.
    let tg = merged.into_trained()?;
    let (scene, _) = gen_scene(&template, 77777)?;
    match parse_kld(&scene, &tg, &Budget::default())? {
        KldOutcome::Goal(r) => println!(
            "composed parse: cost {:.4}, {} of {} terminals spanned",
            r.cost,
            scene.n_terminals() - r.unspanned.len(),
            scene.n_terminals()
        ),
        KldOutcome::Exhausted(_) => println!("budget exhausted"),
    }
    Ok(())
}
