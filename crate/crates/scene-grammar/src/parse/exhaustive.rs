//! Exhaustive oracle: complete bottom-up enumeration over connected spans.
//!
//! Only feasible on tiny scenes (the number of connected terminal sets can
//! grow exponentially), which is exactly its job: an independent check of
//! the priority-queue search. Spans are enumerated outright, smallest
//! first; every span is seeded with all binary combinations of its
//! sub-span statements, closed under unary rules in cost order, and the
//! cheapest goal application over any derived statement wins.

use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use crate::model::TrainedGrammar;
use crate::scene::Scene;
use crate::span::Span;
use crate::{Error, Result};

use super::{
    apply_rule, build_tree, goal_statement, terminal_statement, unspanned_ids, ParseResult,
    ParseTree, SearchStats, Statement, StatementKey,
};

/// Hard cap on terminals for exhaustive parsing.
pub const EXHAUSTIVE_CAP: usize = 10;

/// Every non-empty connected terminal subset, smallest (then lowest mask)
/// first.
pub fn connected_spans(scene: &Scene) -> Vec<Span> {
    let n = scene.n_terminals();
    assert!(n <= 16, "connected span enumeration is for tiny scenes");
    let words = scene.span_words();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        let mut span = Span::empty(words);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                span.insert(i);
            }
        }
        if scene.span_connected(&span) {
            out.push(span);
        }
    }
    out.sort_by_key(|s| {
        let mask: u32 = s.iter().map(|i| 1u32 << i).sum();
        (s.len(), mask)
    });
    out
}

fn mask_of(span: &Span) -> u32 {
    span.iter().map(|i| 1u32 << i).sum()
}

struct LocalEntry {
    cost: f64,
    sym_rank: u32,
    seq: u64,
    stmt: Statement,
}
impl PartialEq for LocalEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for LocalEntry {}
impl PartialOrd for LocalEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for LocalEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.sym_rank.cmp(&self.sym_rank))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Minimum-cost goal derivation by complete enumeration.
pub fn parse_exhaustive(scene: &Scene, tg: &TrainedGrammar) -> Result<ParseResult> {
    let start_time = Instant::now();
    let n = scene.n_terminals();
    if n > EXHAUSTIVE_CAP {
        return Err(Error::TerminalCap(n, EXHAUSTIVE_CAP));
    }
    let grammar = tg.grammar();
    let spans = connected_spans(scene);
    let connected: HashMap<u32, ()> = spans.iter().map(|s| (mask_of(s), ())).collect();

    let mut arena: Vec<Statement> = Vec::new();
    let mut chart: HashMap<StatementKey, usize> = HashMap::new();
    // Finalized statements per span mask.
    let mut per_span: HashMap<u32, Vec<usize>> = HashMap::new();
    let mut stats = SearchStats::default();

    for span in &spans {
        let mask = mask_of(span);
        let mut seq = 0u64;
        let mut local: BinaryHeap<LocalEntry> = BinaryHeap::new();
        let push = |stmt: Statement, local: &mut BinaryHeap<LocalEntry>, seq: &mut u64| {
            *seq += 1;
            local.push(LocalEntry {
                cost: stmt.cost,
                sym_rank: grammar.name_rank(stmt.symbol()),
                seq: *seq,
                stmt,
            });
        };

        if span.len() == 1 {
            let idx = span.min_index().unwrap();
            push(terminal_statement(scene, grammar, idx), &mut local, &mut seq);
        } else {
            // All splits into two connected halves; the half containing the
            // lowest terminal is canonical to visit each split once.
            let low = 1u32 << span.min_index().unwrap();
            let mut sub = (mask - 1) & mask;
            while sub > 0 {
                let rest = mask ^ sub;
                if sub & low != 0
                    && rest != 0
                    && connected.contains_key(&sub)
                    && connected.contains_key(&rest)
                {
                    for &a in per_span.get(&sub).map(|v| v.as_slice()).unwrap_or(&[]) {
                        for &b in per_span.get(&rest).map(|v| v.as_slice()).unwrap_or(&[]) {
                            let (sa, sb) = (&arena[a], &arena[b]);
                            if !sa.neighborhood.intersects(sb.span()) {
                                continue;
                            }
                            for &rid in grammar.binary_rules_over(sa.symbol(), sb.symbol()) {
                                let stmt = apply_rule(scene, tg, rid, &arena, &[a, b])?;
                                push(stmt, &mut local, &mut seq);
                            }
                        }
                    }
                }
                sub = (sub - 1) & mask;
            }
        }

        // Unary closure within the span, processed in cost order so each
        // key is finalized at its minimum.
        while let Some(entry) = local.pop() {
            let stmt = entry.stmt;
            if chart.contains_key(&stmt.key) {
                continue;
            }
            let idx = arena.len();
            chart.insert(stmt.key.clone(), idx);
            per_span.entry(mask).or_default().push(idx);
            let sym = stmt.symbol();
            arena.push(stmt);
            stats.expansions += 1;
            for &rid in grammar.unary_rules_over(sym) {
                if grammar.rule(rid).kind == crate::grammar::RuleKind::Goal {
                    continue;
                }
                let parent = apply_rule(scene, tg, rid, &arena, &[idx])?;
                push(parent, &mut local, &mut seq);
            }
        }
    }

    // Cheapest goal application over everything derived; ties prefer the
    // smaller span, matching the queue search's tie-break.
    let mut best: Option<Statement> = None;
    for &rid in grammar.goal_rules() {
        let target = grammar.rule(rid).rhs[0];
        for idx in 0..arena.len() {
            if arena[idx].symbol() != target {
                continue;
            }
            let goal = goal_statement(scene, tg, rid, &arena, idx)?;
            let better = match &best {
                None => true,
                Some(b) => {
                    goal.cost.total_cmp(&b.cost).is_lt()
                        || (goal.cost == b.cost && goal.span().len() < b.span().len())
                }
            };
            if better {
                best = Some(goal);
            }
        }
    }

    let Some(goal) = best else {
        return Err(Error::Invalid("no goal derivation exists for this scene".into()));
    };
    let cost = goal.cost;
    let goal_idx = arena.len();
    arena.push(goal);
    stats.wall_seconds = start_time.elapsed().as_secs_f64();
    stats.queue_peak = arena.len();
    stats.max_popped_cost = cost;
    let st = &arena[goal_idx];
    Ok(ParseResult {
        cost,
        unspanned: unspanned_ids(scene, st.span()),
        algorithm: "exhaustive",
        clamped: st.clamped,
        stats,
        tree: ParseTree {
            root: build_tree(&arena, goal_idx, scene, grammar),
        },
    })
}
