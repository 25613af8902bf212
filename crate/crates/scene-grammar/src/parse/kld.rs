//! Lightest-derivation search: Dijkstra over statements.
//!
//! The queue is seeded with one zero-cost statement per terminal. Popping
//! the cheapest undived statement derives it; every rule application over
//! it and previously derived statements is enqueued with cost equal to the
//! children's costs plus the rule cost. Rule costs are nonnegative (the
//! model clamps at zero), so the first derived goal statement is optimal.

use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use crate::grammar::{RuleKind, SymbolId};
use crate::model::TrainedGrammar;
use crate::scene::Scene;
use crate::Result;

use super::{
    apply_rule, build_tree, goal_statement, terminal_statement, unspanned_ids, ParseNode,
    ParseResult, ParseTree, SearchStats, Statement, StatementKey,
};

/// Search limits; whichever trips first ends the parse.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    pub max_expansions: u64,
    pub max_seconds: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_expansions: 2_000_000,
            max_seconds: 30.0,
        }
    }
}

/// What a budget-bounded exact parse can end with.
#[derive(Debug)]
pub enum KldOutcome {
    /// A goal derivation, optimal under the clamped cost.
    Goal(ParseResult),
    /// Budget exhausted (or no goal derivable): the cheapest disjoint
    /// cover of the terminals by derived statements.
    Exhausted(PartialForest),
}

impl KldOutcome {
    pub fn goal(self) -> Option<ParseResult> {
        match self {
            KldOutcome::Goal(r) => Some(r),
            KldOutcome::Exhausted(_) => None,
        }
    }
}

#[derive(Debug)]
pub struct PartialForest {
    pub roots: Vec<ParseNode>,
    pub total_cost: f64,
    pub stats: SearchStats,
}

struct QueueEntry {
    cost: f64,
    span_len: u32,
    sym_rank: u32,
    seq: u64,
    stmt: Statement,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    // Reversed: BinaryHeap is a max-heap, we pop the cheapest. Ties break
    // on smaller span, then symbol name rank, then insertion order.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.span_len.cmp(&self.span_len))
            .then_with(|| other.sym_rank.cmp(&self.sym_rank))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Exact parse by lightest-derivation search.
pub fn parse_kld(scene: &Scene, tg: &TrainedGrammar, budget: &Budget) -> Result<KldOutcome> {
    let start_time = Instant::now();
    let grammar = tg.grammar();
    let n = scene.n_terminals();

    let mut arena: Vec<Statement> = Vec::new();
    let mut derived: HashMap<StatementKey, usize> = HashMap::new();
    let mut by_symbol: HashMap<SymbolId, Vec<usize>> = HashMap::new();
    let mut queue: BinaryHeap<QueueEntry> = BinaryHeap::new();
    let mut seq: u64 = 0;
    let mut stats = SearchStats::default();

    let push = |stmt: Statement,
                    queue: &mut BinaryHeap<QueueEntry>,
                    derived: &HashMap<StatementKey, usize>,
                    seq: &mut u64| {
        if derived.contains_key(&stmt.key) {
            return;
        }
        *seq += 1;
        queue.push(QueueEntry {
            cost: stmt.cost,
            span_len: stmt.span().len() as u32,
            sym_rank: grammar.name_rank(stmt.symbol()),
            seq: *seq,
            stmt,
        });
    };

    for i in 0..n {
        let stmt = terminal_statement(scene, grammar, i);
        push(stmt, &mut queue, &derived, &mut seq);
    }

    while let Some(entry) = queue.pop() {
        stats.queue_peak = stats.queue_peak.max(queue.len() + 1);
        if stats.expansions >= budget.max_expansions
            || start_time.elapsed().as_secs_f64() > budget.max_seconds
        {
            stats.wall_seconds = start_time.elapsed().as_secs_f64();
            return Ok(KldOutcome::Exhausted(partial_forest(
                &arena, &derived, scene, tg, stats,
            )));
        }
        let stmt = entry.stmt;
        if derived.contains_key(&stmt.key) {
            continue;
        }
        stats.expansions += 1;
        stats.max_popped_cost = stmt.cost;
        let sym = stmt.symbol();
        let idx = arena.len();
        derived.insert(stmt.key.clone(), idx);
        by_symbol.entry(sym).or_default().push(idx);
        arena.push(stmt);

        if sym == grammar.start() {
            stats.wall_seconds = start_time.elapsed().as_secs_f64();
            let tree = build_tree(&arena, idx, scene, grammar);
            let st = &arena[idx];
            return Ok(KldOutcome::Goal(ParseResult {
                cost: st.cost,
                unspanned: unspanned_ids(scene, st.span()),
                algorithm: "kld",
                clamped: st.clamped,
                stats,
                tree: ParseTree { root: tree },
            }));
        }

        // Goal wrappers and unary parents over the fresh statement.
        for &rid in grammar.unary_rules_over(sym) {
            let stmt = if grammar.rule(rid).kind == RuleKind::Goal {
                goal_statement(scene, tg, rid, &arena, idx)?
            } else {
                apply_rule(scene, tg, rid, &arena, &[idx])?
            };
            push(stmt, &mut queue, &derived, &mut seq);
        }

        // Binary parents: pair with every derived partner statement.
        for partner_sym in grammar.binary_partners(sym) {
            let rules = grammar.binary_rules_over(sym, partner_sym);
            let Some(partners) = by_symbol.get(&partner_sym) else {
                continue;
            };
            for &p in partners {
                if p == idx {
                    continue;
                }
                let (a, b) = (&arena[idx], &arena[p]);
                if !a.span().is_disjoint(b.span()) || !a.neighborhood.intersects(b.span()) {
                    continue;
                }
                for &rid in rules {
                    let stmt = apply_rule(scene, tg, rid, &arena, &[idx, p])?;
                    push(stmt, &mut queue, &derived, &mut seq);
                }
            }
        }
    }

    stats.wall_seconds = start_time.elapsed().as_secs_f64();
    Ok(KldOutcome::Exhausted(partial_forest(
        &arena, &derived, scene, tg, stats,
    )))
}

/// Cheapest disjoint cover of the terminals by derived statements:
/// greedy over (larger span, lower cost), then bare terminals.
fn partial_forest(
    arena: &[Statement],
    derived: &HashMap<StatementKey, usize>,
    scene: &Scene,
    tg: &TrainedGrammar,
    stats: SearchStats,
) -> PartialForest {
    let grammar = tg.grammar();
    let mut order: Vec<usize> = derived.values().copied().collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&arena[a], &arena[b]);
        sb.span()
            .len()
            .cmp(&sa.span().len())
            .then_with(|| sa.cost.total_cmp(&sb.cost))
            .then_with(|| a.cmp(&b))
    });
    let mut covered = crate::span::Span::empty(scene.span_words());
    let mut roots = Vec::new();
    let mut total = 0.0;
    for idx in order {
        let st = &arena[idx];
        if st.symbol() == grammar.start() || !st.span().is_disjoint(&covered) {
            continue;
        }
        covered.union_with(st.span());
        total += st.cost;
        roots.push(build_tree(arena, idx, scene, grammar));
    }
    PartialForest {
        roots,
        total_cost: total,
        stats,
    }
}
