//! Command-line surface over the library.
//!
//! Deterministic results (files, labels, costs, counters) go to stdout and
//! output files; wall-clock timings go to stderr so two runs of the same
//! seeded command produce byte-identical outputs.
//!
//! Exit codes: 0 success, 2 validation error, 3 budget exhausted without
//! reaching a goal parse.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::eval::{extract_labels_gt, labels_for_result, LabelTally};
use crate::grammar::extract_rules;
use crate::model::{compose, train, StoredGrammar, TrainConfig, TrainedGrammar};
use crate::parse::{
    parse_beam, parse_exhaustive, parse_kld, BeamConfig, Budget, KldOutcome, ParseNode,
    ParseResult,
};
use crate::scene::{load_scene, load_tree, Scene};
use crate::synth::{gen_corpus, load_corpus, SceneTemplate};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Parser)]
#[command(
    name = "scene-grammar",
    about = "Probabilistic grammar parsing of segmented 3D scenes",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    /// Exact lightest-derivation search, beam fallback on budget.
    Auto,
    Kld,
    Beam,
    Exhaustive,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus (scenes, trees, manifest).
    Gen {
        /// Built-in template name (office|mini|small) or a template JSON path.
        #[arg(long, default_value = "office")]
        template: String,
        #[arg(long, short = 'n', default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract binarized rules from ground-truth trees into a grammar skeleton.
    ExtractRules {
        /// Tree files; alternatively --corpus.
        #[arg(long = "tree")]
        trees: Vec<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit rule models on a corpus; prints training wall-time to stderr.
    Train {
        /// Grammar skeleton; defaults to rules extracted from the corpus.
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = crate::model::DEFAULT_GOAL_K)]
        goal_k: f64,
        /// Hold out one fold (cross-validation training).
        #[arg(long)]
        exclude_fold: Option<usize>,
    },
    /// Parse a scene and report the best tree, labels, and search stats.
    Parse {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = Algo::Auto)]
        algo: Algo,
        #[arg(long, default_value_t = 200)]
        beam_width: usize,
        #[arg(long, default_value_t = 4)]
        samples_per_state: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2_000_000)]
        budget_expansions: u64,
        #[arg(long, default_value_t = 30.0)]
        budget_seconds: f64,
        /// Write the parse tree as Graphviz DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Cross-validated segment-labeling report over a corpus (TSV).
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// Grammar skeleton; defaults to rules extracted per training fold.
        #[arg(long)]
        grammar: Option<PathBuf>,
        /// Override the manifest's fold count (reassigns round-robin).
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, value_enum, default_value_t = Algo::Auto)]
        algo: Algo,
        #[arg(long, default_value_t = 200)]
        beam_width: usize,
        #[arg(long, default_value_t = 4)]
        samples_per_state: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        budget_expansions: u64,
        #[arg(long, default_value_t = 5.0)]
        budget_seconds: f64,
        #[arg(long, default_value_t = crate::model::DEFAULT_GOAL_K)]
        goal_k: f64,
        /// Score gold trees against themselves (pipeline identity check).
        #[arg(long)]
        gold: bool,
        /// Write <out>.tsv and a full-precision <out>.json sidecar.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compose two grammars into one.
    Compose {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Gen {
            template,
            count,
            seed,
            folds,
            out,
        } => {
            let template = resolve_template(&template)?;
            let manifest = gen_corpus(&template, count, seed, folds, &out)?;
            println!("template\t{}", manifest.template);
            println!("scenes\t{}", manifest.entries.len());
            println!("folds\t{}", manifest.folds);
            println!("manifest\t{}", out.join("manifest.json").display());
            Ok(EXIT_OK)
        }
        Command::ExtractRules { trees, corpus, out } => {
            let mut gt = Vec::new();
            for p in &trees {
                gt.push(load_tree(p)?);
            }
            if let Some(corpus) = corpus {
                let (_, pairs) = load_corpus(&corpus)?;
                gt.extend(pairs.into_iter().map(|(_, t)| t));
            }
            if gt.is_empty() {
                return Err(Error::Invalid("no trees given (use --tree or --corpus)".into()));
            }
            let grammar = extract_rules(&gt)?.binarize()?;
            println!("symbols\t{}", grammar.symbols().len());
            println!("rules\t{}", grammar.rules().len());
            StoredGrammar::untrained(grammar).save(&out)?;
            println!("grammar\t{}", out.display());
            Ok(EXIT_OK)
        }
        Command::Train {
            grammar,
            corpus,
            out,
            goal_k,
            exclude_fold,
        } => {
            let (manifest, mut pairs) = load_corpus(&corpus)?;
            if let Some(fold) = exclude_fold {
                let keep: Vec<bool> = manifest.entries.iter().map(|e| e.fold != fold).collect();
                let mut it = keep.iter();
                pairs.retain(|_| *it.next().unwrap());
            }
            let skeleton = match grammar {
                Some(p) => StoredGrammar::load(p)?.grammar,
                None => {
                    let trees: Vec<_> = pairs.iter().map(|(_, t)| t.clone()).collect();
                    extract_rules(&trees)?.binarize()?
                }
            };
            let started = Instant::now();
            let trained = train(&pairs, &skeleton, &TrainConfig { goal_k })?;
            let elapsed = started.elapsed();
            eprintln!("training wall-time: {:.6} s", elapsed.as_secs_f64());
            println!("scenes\t{}", pairs.len());
            println!("rules\t{}", trained.grammar().rules().len());
            trained.save(&out)?;
            println!("grammar\t{}", out.display());
            Ok(EXIT_OK)
        }
        Command::Parse {
            grammar,
            scene,
            algo,
            beam_width,
            samples_per_state,
            seed,
            budget_expansions,
            budget_seconds,
            dot,
        } => {
            let tg = TrainedGrammar::load(&grammar)?;
            let scene = load_scene(&scene)?;
            let budget = Budget {
                max_expansions: budget_expansions,
                max_seconds: budget_seconds,
            };
            let beam = BeamConfig {
                beam_width,
                samples_per_state,
                seed,
            };
            let result = run_parse(&scene, &tg, algo, &budget, &beam)?;
            let result = match result {
                Some(r) => r,
                None => {
                    println!("outcome\tbudget-exhausted");
                    return Ok(EXIT_BUDGET);
                }
            };
            print_result(&result, &tg, &scene);
            if let Some(path) = dot {
                crate::scene::write_file(&path, &crate::dot::export_dot(&result.tree))?;
                println!("dot\t{}", path.display());
            }
            Ok(EXIT_OK)
        }
        Command::Eval {
            corpus,
            grammar,
            folds,
            algo,
            beam_width,
            samples_per_state,
            seed,
            budget_expansions,
            budget_seconds,
            goal_k,
            gold,
            out,
        } => {
            let (manifest, pairs) = load_corpus(&corpus)?;
            let fold_of: Vec<usize> = match folds {
                Some(f) => (0..pairs.len()).map(|i| i % f.max(1)).collect(),
                None => manifest.entries.iter().map(|e| e.fold).collect(),
            };
            let n_folds = fold_of.iter().copied().max().map_or(1, |m| m + 1);
            let skeleton = grammar.map(StoredGrammar::load).transpose()?;

            let mut tally = LabelTally::default();
            if gold {
                // Predictions are the gold labels themselves.
                let base = extract_rules(
                    &pairs.iter().map(|(_, t)| t.clone()).collect::<Vec<_>>(),
                )?;
                for (scene, tree) in &pairs {
                    let mut labels = extract_labels_gt(tree, &base);
                    for seg in scene.segments() {
                        labels
                            .entry(seg.id)
                            .or_insert_with(|| crate::eval::NONE_LABEL.to_string());
                    }
                    tally.add(&labels, &labels.clone())?;
                }
            } else {
                for fold in 0..n_folds {
                    let train_pairs: Vec<_> = pairs
                        .iter()
                        .zip(&fold_of)
                        .filter(|(_, &f)| f != fold)
                        .map(|(p, _)| p.clone())
                        .collect();
                    let eval_pairs: Vec<_> = pairs
                        .iter()
                        .zip(&fold_of)
                        .filter(|(_, &f)| f == fold)
                        .map(|(p, _)| p.clone())
                        .collect();
                    if train_pairs.is_empty() || eval_pairs.is_empty() {
                        continue;
                    }
                    let g = match &skeleton {
                        Some(s) => s.grammar.clone(),
                        None => {
                            let trees: Vec<_> =
                                train_pairs.iter().map(|(_, t)| t.clone()).collect();
                            extract_rules(&trees)?.binarize()?
                        }
                    };
                    let tg = train(&train_pairs, &g, &TrainConfig { goal_k })?;
                    let budget = Budget {
                        max_expansions: budget_expansions,
                        max_seconds: budget_seconds,
                    };
                    for (i, (scene, tree)) in eval_pairs.iter().enumerate() {
                        let beam = BeamConfig {
                            beam_width,
                            samples_per_state,
                            seed: seed ^ (fold as u64) << 32 ^ i as u64,
                        };
                        let result = run_parse(scene, &tg, algo, &budget, &beam)?
                            .unwrap_or_else(|| {
                                unreachable!("auto/beam always return a result")
                            });
                        let pred = labels_for_result(&result, tg.grammar(), scene);
                        let mut gold_labels = extract_labels_gt(tree, tg.grammar());
                        for seg in scene.segments() {
                            gold_labels
                                .entry(seg.id)
                                .or_insert_with(|| crate::eval::NONE_LABEL.to_string());
                        }
                        tally.add(&pred, &gold_labels)?;
                    }
                }
            }
            let report = tally.report();
            print!("{}", report.to_tsv());
            if let Some(prefix) = out {
                let tsv_path = prefix.with_extension("tsv");
                let json_path = prefix.with_extension("json");
                crate::scene::write_file(&tsv_path, &report.to_tsv())?;
                crate::scene::write_file(&json_path, &report.to_json())?;
                println!("report\t{}", tsv_path.display());
                println!("sidecar\t{}", json_path.display());
            }
            Ok(EXIT_OK)
        }
        Command::Compose { a, b, out } => {
            let ga = StoredGrammar::load(&a)?;
            let gb = StoredGrammar::load(&b)?;
            let merged = compose(&ga, &gb)?;
            println!("symbols\t{}", merged.grammar.symbols().len());
            println!("rules\t{}", merged.grammar.rules().len());
            merged.save(&out)?;
            println!("grammar\t{}", out.display());
            Ok(EXIT_OK)
        }
    }
}

fn resolve_template(spec: &str) -> Result<SceneTemplate> {
    if let Some(t) = SceneTemplate::by_name(spec) {
        return Ok(t);
    }
    let path = Path::new(spec);
    if path.exists() {
        return SceneTemplate::load(path);
    }
    Err(Error::Invalid(format!(
        "unknown template {spec:?} (built-ins: office, mini, small)"
    )))
}

/// Run the requested algorithm; `None` means the KLD budget tripped and no
/// fallback was allowed.
fn run_parse(
    scene: &Scene,
    tg: &TrainedGrammar,
    algo: Algo,
    budget: &Budget,
    beam: &BeamConfig,
) -> Result<Option<ParseResult>> {
    match algo {
        Algo::Kld => Ok(parse_kld(scene, tg, budget)?.goal()),
        Algo::Beam => Ok(Some(parse_beam(scene, tg, beam)?)),
        Algo::Exhaustive => Ok(Some(parse_exhaustive(scene, tg)?)),
        Algo::Auto => match parse_kld(scene, tg, budget)? {
            KldOutcome::Goal(r) => Ok(Some(r)),
            KldOutcome::Exhausted(_) => Ok(Some(parse_beam(scene, tg, beam)?)),
        },
    }
}

fn print_result(result: &ParseResult, tg: &TrainedGrammar, scene: &Scene) {
    println!("algorithm\t{}", result.algorithm);
    println!("cost\t{}", result.cost);
    println!("unspanned\t{}", result.unspanned.len());
    println!("clamped\t{}", result.clamped);
    println!("expansions\t{}", result.stats.expansions);
    println!("queue_peak\t{}", result.stats.queue_peak);
    eprintln!("wall-time: {:.6} s", result.stats.wall_seconds);
    let labels = labels_for_result(result, tg.grammar(), scene);
    for (id, label) in &labels {
        println!("label\t{id}\t{label}");
    }
    println!("tree\t{}", sexpr(&result.tree.root));
}

fn sexpr(node: &ParseNode) -> String {
    if node.children.is_empty() && node.rule.is_none() {
        let ids: Vec<String> = node.span.iter().map(u32::to_string).collect();
        return format!("(segment {})", ids.join(","));
    }
    let children: Vec<String> = node.children.iter().map(sexpr).collect();
    if children.is_empty() {
        format!("({})", node.symbol)
    } else {
        format!("({} {})", node.symbol, children.join(" "))
    }
}

/// Label map of one parse for library callers mirroring the CLI output.
pub fn labels_tsv(labels: &BTreeMap<u32, String>) -> String {
    let mut out = String::new();
    for (id, l) in labels {
        out.push_str(&format!("{id}\t{l}\n"));
    }
    out
}
