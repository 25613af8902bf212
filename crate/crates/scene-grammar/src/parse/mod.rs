//! Parsers: exact lightest-derivation search, stochastic beam search over
//! forests, and an exhaustive oracle for tiny scenes.
//!
//! All three share the same statement representation: a symbol over a
//! connected terminal span with its entity, derivation cost, and
//! backpointers. Statements are deduplicated by (symbol, span) — plus the
//! leaf-part partition for intermediates, whose downstream features depend
//! on how their span is divided among parts — keeping the cheapest
//! derivation per key. Under that keying a statement's feature
//! contribution is determined by its key alone, so the minimum-cost table
//! is a pure function of scene and grammar and every search that computes
//! it agrees exactly.

mod beam;
mod exhaustive;
mod kld;

pub use beam::{parse_beam, BeamConfig};
pub use exhaustive::{connected_spans, parse_exhaustive, EXHAUSTIVE_CAP};
pub use kld::{parse_kld, Budget, KldOutcome, PartialForest};

use std::hash::{Hash, Hasher};

use smallvec::SmallVec;

use crate::features::Entity;
use crate::grammar::{Grammar, RuleId, SymbolId};
use crate::model::{make_entity, TrainedGrammar};
use crate::scene::{Scene, SegmentId};
use crate::span::Span;
use crate::Result;

/// Search counters reported with every parse.
#[derive(Clone, Copy, Debug, Default)]
pub struct SearchStats {
    /// Statements derived (KLD/oracle) or rule applications scored (beam).
    pub expansions: u64,
    /// Peak size of the priority queue or beam.
    pub queue_peak: usize,
    /// Highest cost of any derived statement; at most the goal cost.
    pub max_popped_cost: f64,
    pub wall_seconds: f64,
}

/// One node of a reconstructed parse tree. `cost` is the cost of the
/// whole subtree; leaves are terminals at cost zero.
#[derive(Clone, Debug)]
pub struct ParseNode {
    pub symbol: String,
    pub rule: Option<String>,
    pub cost: f64,
    pub span: Vec<SegmentId>,
    pub children: Vec<ParseNode>,
}

impl ParseNode {
    pub fn count_nodes(&self) -> usize {
        1 + self.children.iter().map(ParseNode::count_nodes).sum::<usize>()
    }

    pub fn leaf_ids(&self) -> Vec<SegmentId> {
        let mut out = Vec::new();
        fn rec(n: &ParseNode, out: &mut Vec<SegmentId>) {
            if n.children.is_empty() && n.rule.is_none() {
                out.extend(&n.span);
            }
            for c in &n.children {
                rec(c, out);
            }
        }
        rec(self, &mut out);
        out
    }
}

#[derive(Clone, Debug)]
pub struct ParseTree {
    pub root: ParseNode,
}

#[derive(Clone, Debug)]
pub struct ParseResult {
    pub tree: ParseTree,
    pub cost: f64,
    pub unspanned: Vec<SegmentId>,
    pub algorithm: &'static str,
    /// True when any rule application in the returned tree hit the
    /// cost-at-zero clamp, i.e. exp(-cost) is not a probability.
    pub clamped: bool,
    pub stats: SearchStats,
}

// ---------------------------------------------------------------------------
// Statements
// ---------------------------------------------------------------------------

/// Dedup key of a statement. Intermediates carry their part partition:
/// two derivations of the same intermediate over the same span can divide
/// it differently among leaf parts, and downstream features see the parts.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub(crate) struct StatementKey {
    pub symbol: SymbolId,
    pub span: Span,
    pub partition: Option<Box<[(SymbolId, Span)]>>,
}

#[derive(Clone, Debug)]
pub(crate) enum Back {
    Terminal,
    Apply {
        rule: RuleId,
        children: SmallVec<[usize; 2]>,
    },
    Goal {
        rule: RuleId,
        child: usize,
    },
}

#[derive(Debug)]
pub(crate) struct Statement {
    pub key: StatementKey,
    pub cost: f64,
    pub entity: Entity,
    pub back: Back,
    pub clamped: bool,
    /// Terminals adjacent to the span; cached for combination checks.
    pub neighborhood: Span,
}

impl Statement {
    pub fn span(&self) -> &Span {
        &self.key.span
    }

    pub fn symbol(&self) -> SymbolId {
        self.key.symbol
    }

    /// Identity for beam-state deduplication: same key and same cost means
    /// interchangeable roots.
    pub fn signature(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.key.hash(&mut h);
        self.cost.to_bits().hash(&mut h);
        h.finish()
    }
}

fn key_for(grammar: &Grammar, entity: &Entity, symbol: SymbolId, span: &Span) -> StatementKey {
    let partition = if grammar.symbol(symbol).kind == crate::grammar::SymbolKind::Intermediate {
        Some(
            entity
                .parts
                .iter()
                .map(|p| (p.symbol, p.span.clone()))
                .collect::<Vec<_>>()
                .into_boxed_slice(),
        )
    } else {
        None
    };
    StatementKey {
        symbol,
        span: span.clone(),
        partition,
    }
}

pub(crate) fn terminal_statement(scene: &Scene, grammar: &Grammar, index: usize) -> Statement {
    let span = Span::singleton(scene.span_words(), index);
    let entity = make_entity(scene, grammar, grammar.terminal(), span.clone(), &[]);
    Statement {
        key: key_for(grammar, &entity, grammar.terminal(), &span),
        cost: 0.0,
        entity,
        back: Back::Terminal,
        clamped: false,
        neighborhood: scene.span_neighborhood(&span),
    }
}

/// Score `rule` over the children and build the resulting statement.
pub(crate) fn apply_rule(
    scene: &Scene,
    tg: &TrainedGrammar,
    rule: RuleId,
    arena: &[Statement],
    child_idxs: &[usize],
) -> Result<Statement> {
    let grammar = tg.grammar();
    let children: Vec<&Statement> = child_idxs.iter().map(|&i| &arena[i]).collect();
    let entities: Vec<&Entity> = children.iter().map(|s| &s.entity).collect();
    let outcome = tg.rule_cost(rule, &entities, 0)?;
    let mut span = children[0].span().clone();
    for c in &children[1..] {
        span.union_with(c.span());
    }
    let lhs = grammar.rule(rule).lhs;
    let entity = make_entity(scene, grammar, lhs, span.clone(), &entities);
    let cost = children.iter().map(|c| c.cost).sum::<f64>() + outcome.cost;
    Ok(Statement {
        key: key_for(grammar, &entity, lhs, &span),
        cost,
        entity,
        back: Back::Apply {
            rule,
            children: SmallVec::from_slice(child_idxs),
        },
        clamped: outcome.clamped || children.iter().any(|c| c.clamped),
        neighborhood: scene.span_neighborhood(&span),
    })
}

/// Wrap a derived statement into the start symbol, paying the goal
/// penalty for every terminal outside its span.
pub(crate) fn goal_statement(
    scene: &Scene,
    tg: &TrainedGrammar,
    rule: RuleId,
    arena: &[Statement],
    child_idx: usize,
) -> Result<Statement> {
    let grammar = tg.grammar();
    let child = &arena[child_idx];
    let unspanned = scene.n_terminals() - child.span().len();
    let outcome = tg.rule_cost(rule, &[&child.entity], unspanned)?;
    let span = child.span().clone();
    let entity = make_entity(scene, grammar, grammar.start(), span.clone(), &[&child.entity]);
    Ok(Statement {
        key: key_for(grammar, &entity, grammar.start(), &span),
        cost: child.cost + outcome.cost,
        entity,
        back: Back::Goal {
            rule,
            child: child_idx,
        },
        clamped: outcome.clamped || child.clamped,
        neighborhood: scene.span_neighborhood(&span),
    })
}

/// True iff the items' symbols match the rule's RHS as a multiset, their
/// spans are disjoint, and (for binary rules) the spans are adjacent.
pub fn applicable(
    grammar: &Grammar,
    rule: RuleId,
    items: &[(SymbolId, &Span)],
    scene: &Scene,
) -> bool {
    let rhs = &grammar.rule(rule).rhs;
    if rhs.len() != items.len() {
        return false;
    }
    let mut want: Vec<SymbolId> = rhs.clone();
    want.sort();
    let mut have: Vec<SymbolId> = items.iter().map(|(s, _)| *s).collect();
    have.sort();
    if want != have {
        return false;
    }
    match items {
        [_] => true,
        [(_, a), (_, b)] => a.is_disjoint(b) && scene.spans_adjacent(a, b),
        _ => false,
    }
}

/// Rebuild a display tree from arena backpointers.
pub(crate) fn build_tree(
    arena: &[Statement],
    idx: usize,
    scene: &Scene,
    grammar: &Grammar,
) -> ParseNode {
    let st = &arena[idx];
    let mut span: Vec<SegmentId> = st.span().iter().map(|i| scene.id_of(i)).collect();
    span.sort_unstable();
    match &st.back {
        Back::Terminal => ParseNode {
            symbol: grammar.name(st.symbol()).to_string(),
            rule: None,
            cost: 0.0,
            span,
            children: Vec::new(),
        },
        Back::Apply { rule, children } => ParseNode {
            symbol: grammar.name(st.symbol()).to_string(),
            rule: Some(grammar.display_rule(*rule)),
            cost: st.cost,
            span,
            children: children
                .iter()
                .map(|&c| build_tree(arena, c, scene, grammar))
                .collect(),
        },
        Back::Goal { rule, child } => ParseNode {
            symbol: grammar.name(st.symbol()).to_string(),
            rule: Some(grammar.display_rule(*rule)),
            cost: st.cost,
            span,
            children: vec![build_tree(arena, *child, scene, grammar)],
        },
    }
}

pub(crate) fn unspanned_ids(scene: &Scene, span: &Span) -> Vec<SegmentId> {
    (0..scene.n_terminals())
        .filter(|&i| !span.contains(i))
        .map(|i| scene.id_of(i))
        .collect()
}
