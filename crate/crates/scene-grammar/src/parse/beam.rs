//! Stochastic beam search over forests.
//!
//! A state is a forest: disjoint partial parse trees whose spans partition
//! the terminals. The beam starts from the all-isolated-terminals forest.
//! Each step every beamed forest proposes successors by applying one rule
//! to its roots; successors are sampled with probability proportional to
//! exp(-rule cost), pooled across the beam, deduplicated, and the lowest
//! total-cost states survive. Successor forests replace their parents.
//! The search stops when no rule applies anywhere; the answer applies the
//! goal rule to the best root seen, paying the per-terminal penalty for
//! everything outside its span.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grammar::RuleKind;
use crate::model::TrainedGrammar;
use crate::scene::Scene;
use crate::{Error, Result};

use super::{
    apply_rule, build_tree, goal_statement, terminal_statement, unspanned_ids, ParseNode,
    ParseResult, ParseTree, SearchStats, Statement,
};

#[derive(Clone, Copy, Debug)]
pub struct BeamConfig {
    /// Maximum states kept per step. `usize::MAX` means unbounded.
    pub beam_width: usize,
    /// Successors sampled per state per step.
    pub samples_per_state: usize,
    pub seed: u64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 200,
            samples_per_state: 4,
            seed: 0,
        }
    }
}

struct Forest {
    /// Arena indices of the roots, sorted by lowest covered terminal.
    roots: Vec<usize>,
    total_cost: f64,
}

struct Candidate {
    rule: crate::grammar::RuleId,
    root_positions: Vec<usize>,
    rule_cost: f64,
}

/// Approximate parse by stochastic beam search; always returns a result,
/// deterministic for a fixed seed.
pub fn parse_beam(scene: &Scene, tg: &TrainedGrammar, config: &BeamConfig) -> Result<ParseResult> {
    let start_time = Instant::now();
    let grammar = tg.grammar();
    let n = scene.n_terminals();
    if grammar.goal_rules().is_empty() {
        return Err(Error::Invalid("grammar has no goal rule".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = SearchStats::default();

    let mut arena: Vec<Statement> = Vec::new();
    for i in 0..n {
        arena.push(terminal_statement(scene, grammar, i));
    }
    // Forests overlap heavily in their subtrees; score each concrete rule
    // application once and share equal statements across forests.
    let mut cost_memo: HashMap<(crate::grammar::RuleId, usize, usize), f64> = HashMap::new();
    let mut stmt_dedup: HashMap<(super::StatementKey, u64), usize> = HashMap::new();

    // Best goal application over every forest ever beamed.
    let mut best_goal: Option<Statement> = None;
    let consider_goals =
        |forest: &Forest, arena: &[Statement], best: &mut Option<Statement>| -> Result<()> {
            for &root in &forest.roots {
                for &rid in grammar.goal_rules() {
                    if grammar.rule(rid).rhs[0] != arena[root].symbol() {
                        continue;
                    }
                    let goal = goal_statement(scene, tg, rid, arena, root)?;
                    let better = match best {
                        None => true,
                        Some(b) => goal.cost.total_cmp(&b.cost).is_lt(),
                    };
                    if better {
                        *best = Some(goal);
                    }
                }
            }
            Ok(())
        };

    let initial = Forest {
        roots: (0..n).collect(),
        total_cost: 0.0,
    };
    consider_goals(&initial, &arena, &mut best_goal)?;
    let mut beam = vec![initial];

    // Cycle guard; a grammar with unary loops would otherwise step forever.
    let max_steps = n * (grammar.symbols().len() + 2);
    for _ in 0..max_steps {
        let mut pool: Vec<Forest> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut max_popped = stats.max_popped_cost;

        for forest in &beam {
            // Deterministic candidate enumeration over sorted roots.
            let mut candidates: Vec<Candidate> = Vec::new();
            for (i, &r) in forest.roots.iter().enumerate() {
                let sym = arena[r].symbol();
                for &rid in grammar.unary_rules_over(sym) {
                    if grammar.rule(rid).kind == RuleKind::Goal {
                        continue;
                    }
                    let rule_cost = match cost_memo.get(&(rid, r, usize::MAX)) {
                        Some(&c) => c,
                        None => {
                            let c = tg.rule_cost(rid, &[&arena[r].entity], 0)?.cost;
                            cost_memo.insert((rid, r, usize::MAX), c);
                            c
                        }
                    };
                    candidates.push(Candidate {
                        rule: rid,
                        root_positions: vec![i],
                        rule_cost,
                    });
                }
                for (j_off, &r2) in forest.roots[i + 1..].iter().enumerate() {
                    let j = i + 1 + j_off;
                    let (a, b) = (&arena[r], &arena[r2]);
                    if !a.neighborhood.intersects(b.span()) {
                        continue;
                    }
                    for &rid in grammar.binary_rules_over(a.symbol(), b.symbol()) {
                        let (lo, hi) = (r.min(r2), r.max(r2));
                        let rule_cost = match cost_memo.get(&(rid, lo, hi)) {
                            Some(&c) => c,
                            None => {
                                let c = tg.rule_cost(rid, &[&a.entity, &b.entity], 0)?.cost;
                                cost_memo.insert((rid, lo, hi), c);
                                c
                            }
                        };
                        candidates.push(Candidate {
                            rule: rid,
                            root_positions: vec![i, j],
                            rule_cost,
                        });
                    }
                }
            }
            stats.expansions += candidates.len() as u64;
            if candidates.is_empty() {
                continue;
            }

            // Sample successors proportionally to exp(-rule cost), shifted
            // for stability; take everything when the set is small.
            let picked: Vec<usize> = if candidates.len() <= config.samples_per_state {
                (0..candidates.len()).collect()
            } else {
                let min_rc = candidates
                    .iter()
                    .map(|c| c.rule_cost)
                    .fold(f64::INFINITY, f64::min);
                let indices: Vec<usize> = (0..candidates.len()).collect();
                indices
                    .choose_multiple_weighted(&mut rng, config.samples_per_state, |&i| {
                        (-(candidates[i].rule_cost - min_rc)).exp().max(1e-300)
                    })
                    .map_err(|e| Error::Invalid(format!("successor sampling failed: {e}")))?
                    .copied()
                    .collect()
            };

            for pick in picked {
                let cand = &candidates[pick];
                let child_idxs: Vec<usize> =
                    cand.root_positions.iter().map(|&p| forest.roots[p]).collect();
                let stmt = apply_rule(scene, tg, cand.rule, &arena, &child_idxs)?;
                max_popped = max_popped.max(stmt.cost);
                let dedup_key = (stmt.key.clone(), stmt.cost.to_bits());
                let new_idx = match stmt_dedup.get(&dedup_key) {
                    Some(&idx) => idx,
                    None => {
                        let idx = arena.len();
                        arena.push(stmt);
                        stmt_dedup.insert(dedup_key, idx);
                        idx
                    }
                };
                let mut roots: Vec<usize> = forest
                    .roots
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| !cand.root_positions.contains(p))
                    .map(|(_, &r)| r)
                    .collect();
                roots.push(new_idx);
                roots.sort_by_key(|&r| arena[r].span().min_index());
                let successor = Forest {
                    total_cost: forest.total_cost + cand.rule_cost,
                    roots,
                };
                let sig = forest_signature(&successor, &arena);
                if seen.insert(sig) {
                    consider_goals(&successor, &arena, &mut best_goal)?;
                    pool.push(successor);
                }
            }
        }

        stats.max_popped_cost = max_popped;
        if pool.is_empty() {
            break;
        }
        pool.sort_by(|a, b| a.total_cost.total_cmp(&b.total_cost));
        pool.truncate(config.beam_width);
        stats.queue_peak = stats.queue_peak.max(pool.len());
        beam = pool;
    }

    stats.wall_seconds = start_time.elapsed().as_secs_f64();
    match best_goal {
        Some(goal) => {
            let cost = goal.cost;
            let idx = arena.len();
            arena.push(goal);
            let st = &arena[idx];
            Ok(ParseResult {
                cost,
                unspanned: unspanned_ids(scene, st.span()),
                algorithm: "beam",
                clamped: st.clamped,
                stats,
                tree: ParseTree {
                    root: build_tree(&arena, idx, scene, grammar),
                },
            })
        }
        None => {
            // No goal-eligible root was ever derived; answer with an empty
            // scene root paying the full penalty.
            let k = match &tg.model(grammar.goal_rules()[0]).variant {
                crate::model::ModelVariant::GoalPenalty { k } => *k,
                _ => unreachable!("goal rules carry goal models"),
            };
            let cost = k * n as f64;
            Ok(ParseResult {
                cost,
                unspanned: unspanned_ids(scene, &crate::span::Span::empty(scene.span_words())),
                algorithm: "beam",
                clamped: false,
                stats,
                tree: ParseTree {
                    root: ParseNode {
                        symbol: grammar.name(grammar.start()).to_string(),
                        rule: None,
                        cost,
                        span: Vec::new(),
                        children: Vec::new(),
                    },
                },
            })
        }
    }
}

fn forest_signature(forest: &Forest, arena: &[Statement]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut sigs: Vec<u64> = forest.roots.iter().map(|&r| arena[r].signature()).collect();
    sigs.sort_unstable();
    let mut h = std::collections::hash_map::DefaultHasher::new();
    sigs.hash(&mut h);
    h.finish()
}
