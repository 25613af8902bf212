//! Rule probability models, training, and grammar files.
//!
//! Every rule carries one of three cost parameterizations:
//!
//! * a multivariate Gaussian over the rule's expanded feature vector, for
//!   rules combining 3D entities;
//! * a plane-fit penalty for rules forming `Plane`, costing the sum of
//!   squared distances of the merged points to their best-fit plane;
//! * a goal penalty `k` per terminal left unspanned by the scene root.
//!
//! plus a categorical prior over the rules sharing its LHS. The cost of an
//! application is the negative log of prior times likelihood, clamped at
//! zero (a continuous density can exceed one; the clamp keeps every cost
//! nonnegative, which the lightest-derivation search depends on, and each
//! result records whether it fired).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::features::{feature_vector, Entity, FeatureVector, GEOM_V1};
use crate::gaussian::{fit_mean_cov, MultivariateGaussian};
use crate::grammar::{
    Grammar, GrammarBuilder, Rule, RuleId, RuleKind, SymbolId, SymbolKind, PLANE_NAME,
};
use crate::scene::{GroundTruthTree, Scene, SegmentId};
use crate::span::Span;
use crate::{Error, Result};

pub const REG_EPSILON: f64 = 1e-6;
pub const DEFAULT_GOAL_K: f64 = 5.0;
/// Floor applied to prior weights of rules without training evidence when
/// composition renormalizes a family; avoids infinite costs.
pub const PRIOR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub reg_epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelVariant {
    Gaussian(GaussianParams),
    PlaneFit,
    GoalPenalty { k: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleModel {
    pub variant: ModelVariant,
    pub prior: f64,
    pub train_count: u64,
}

/// Sample mean and covariance (divisor `n`) of the application sites of
/// one rule. A single sample falls back to the identity covariance.
pub fn fit_gaussian(samples: &[FeatureVector]) -> Result<GaussianParams> {
    if samples.is_empty() {
        return Err(Error::Invalid("fit_gaussian needs at least one sample".into()));
    }
    let d = samples[0].len();
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.len(),
            });
        }
    }
    let (mu, sigma) = if samples.len() == 1 {
        (DVector::from_row_slice(&samples[0]), DMatrix::identity(d, d))
    } else {
        fit_mean_cov(samples)
    };
    Ok(GaussianParams {
        mu: mu.iter().copied().collect(),
        sigma: (0..d)
            .map(|r| (0..d).map(|c| sigma[(r, c)]).collect())
            .collect(),
        reg_epsilon: REG_EPSILON,
    })
}

/// Categorical priors: each rule's share of its LHS family's counts.
pub fn fit_priors(grammar: &Grammar, counts: &BTreeMap<RuleId, u64>) -> BTreeMap<RuleId, f64> {
    let mut family_total: HashMap<SymbolId, u64> = HashMap::new();
    for (&rule, &c) in counts {
        *family_total.entry(grammar.rule(rule).lhs).or_insert(0) += c;
    }
    counts
        .iter()
        .map(|(&rule, &c)| {
            let total = family_total[&grammar.rule(rule).lhs];
            (rule, c as f64 / total as f64)
        })
        .collect()
}

enum Prepared {
    Gaussian(MultivariateGaussian),
    PlaneFit,
    Goal { k: f64 },
}

/// A cost with the record of whether the nonnegativity clamp fired.
#[derive(Clone, Copy, Debug)]
pub struct CostOutcome {
    pub cost: f64,
    pub clamped: bool,
}

/// A grammar with a model on every rule, ready to score applications.
pub struct TrainedGrammar {
    grammar: Grammar,
    models: Vec<RuleModel>,
    prepared: Vec<Prepared>,
    log_priors: Vec<f64>,
    schema_id: String,
}

impl TrainedGrammar {
    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn models(&self) -> &[RuleModel] {
        &self.models
    }

    pub fn model(&self, rule: RuleId) -> &RuleModel {
        &self.models[rule]
    }

    pub fn schema_id(&self) -> &str {
        &self.schema_id
    }

    /// Cost of applying `rule` to `children`. `unspanned` is the number of
    /// terminals a goal application leaves out; ignored otherwise.
    pub fn rule_cost(
        &self,
        rule: RuleId,
        children: &[&Entity],
        unspanned: usize,
    ) -> Result<CostOutcome> {
        let log_prior = self.log_priors[rule];
        match &self.prepared[rule] {
            Prepared::Goal { k } => Ok(CostOutcome {
                cost: k * unspanned as f64,
                clamped: false,
            }),
            Prepared::PlaneFit => {
                // Fold in a canonical order so the cost is a pure function
                // of the child set.
                let merged = match children {
                    [a] => a.stats,
                    [a, b] => {
                        if a.min_index() <= b.min_index() {
                            a.stats.merge(&b.stats)
                        } else {
                            b.stats.merge(&a.stats)
                        }
                    }
                    _ => {
                        return Err(Error::Invalid(format!(
                            "plane rule applied to {} children",
                            children.len()
                        )))
                    }
                };
                let d = merged.plane_residual();
                let cost = -log_prior + d;
                if !cost.is_finite() {
                    return Err(Error::NonFiniteCost(self.grammar.display_rule(rule)));
                }
                Ok(CostOutcome {
                    cost,
                    clamped: false,
                })
            }
            Prepared::Gaussian(g) => {
                let x = feature_vector(children);
                if x.len() != g.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: g.dim(),
                        got: x.len(),
                    });
                }
                let raw = -(log_prior + g.log_density(&x));
                if !raw.is_finite() {
                    return Err(Error::NonFiniteCost(self.grammar.display_rule(rule)));
                }
                Ok(CostOutcome {
                    cost: raw.max(0.0),
                    clamped: raw < 0.0,
                })
            }
        }
    }

    pub fn to_stored(&self) -> StoredGrammar {
        StoredGrammar {
            grammar: self.grammar.clone(),
            models: self.models.iter().cloned().map(Some).collect(),
            schema_id: self.schema_id.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_stored().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedGrammar> {
        StoredGrammar::load(path)?.into_trained()
    }
}

/// Cost of applying one rule to a set of child entities.
pub fn rule_cost(
    tg: &TrainedGrammar,
    rule: RuleId,
    children: &[&Entity],
    unspanned: usize,
) -> Result<CostOutcome> {
    tg.rule_cost(rule, children, unspanned)
}

/// Build the entity for `symbol` over `span`. Statistics fold over the
/// span in ascending terminal order, so entities are pure functions of
/// (scene, symbol, span, child partition).
pub fn make_entity(
    scene: &Scene,
    grammar: &Grammar,
    symbol: SymbolId,
    span: Span,
    children: &[&Entity],
) -> Entity {
    let stats = scene.span_stats(&span);
    let rank = grammar.name_rank(symbol);
    if children.is_empty() {
        Entity::leaf(symbol, rank, span, stats)
    } else {
        let intermediate = grammar.symbol(symbol).kind == SymbolKind::Intermediate;
        Entity::compose(symbol, rank, intermediate, span, stats, children)
    }
}

/// Recompute a parse tree's cost from scratch: the sum of rule costs over
/// all internal nodes, goal penalty included. Independent of whatever the
/// parser recorded on the nodes.
pub fn tree_cost(
    tree: &crate::parse::ParseTree,
    tg: &TrainedGrammar,
    scene: &Scene,
) -> Result<CostOutcome> {
    fn rec(
        node: &crate::parse::ParseNode,
        tg: &TrainedGrammar,
        scene: &Scene,
    ) -> Result<(Entity, f64, bool)> {
        let grammar = tg.grammar();
        if node.children.is_empty() {
            if node.rule.is_some() || node.span.len() != 1 {
                return Err(Error::Invalid(format!(
                    "malformed leaf {:?} in parse tree",
                    node.symbol
                )));
            }
            let idx = scene.index_of(node.span[0]).ok_or_else(|| {
                Error::Invalid(format!("leaf {} is not a segment of the scene", node.span[0]))
            })?;
            let span = Span::singleton(scene.span_words(), idx);
            return Ok((
                make_entity(scene, grammar, grammar.terminal(), span, &[]),
                0.0,
                false,
            ));
        }
        let mut children = Vec::with_capacity(node.children.len());
        let mut child_cost = 0.0;
        let mut clamped = false;
        for c in &node.children {
            let (e, cost, cl) = rec(c, tg, scene)?;
            children.push(e);
            child_cost += cost;
            clamped |= cl;
        }
        let lhs = grammar.require(&node.symbol)?;
        let mut have: Vec<SymbolId> = children.iter().map(|e| e.symbol).collect();
        have.sort();
        let rid = grammar
            .rules_with_lhs(lhs)
            .iter()
            .copied()
            .find(|&r| {
                let mut rhs = grammar.rule(r).rhs.clone();
                rhs.sort();
                rhs == have
            })
            .ok_or_else(|| Error::NotDerivable {
                symbol: node.symbol.clone(),
                children: children
                    .iter()
                    .map(|e| grammar.name(e.symbol).to_string())
                    .collect(),
            })?;
        let mut span = children[0].span.clone();
        for c in &children[1..] {
            span.union_with(&c.span);
        }
        let refs: Vec<&Entity> = children.iter().collect();
        let unspanned = if grammar.rule(rid).kind == RuleKind::Goal {
            scene.n_terminals() - span.len()
        } else {
            0
        };
        let outcome = tg.rule_cost(rid, &refs, unspanned)?;
        let entity = make_entity(scene, grammar, lhs, span, &refs);
        Ok((
            entity,
            child_cost + outcome.cost,
            clamped || outcome.clamped,
        ))
    }
    let (_, cost, clamped) = rec(&tree.root, tg, scene)?;
    Ok(CostOutcome { cost, clamped })
}

// ---------------------------------------------------------------------------
// Rewriting ground-truth trees into binarized derivations
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum DerivChild {
    Leaf(SegmentId),
    Node(Box<DerivNode>),
}

/// A ground-truth tree rewritten against a binarized grammar: every node
/// is one rule application, with intermediate chain nodes inserted.
#[derive(Debug)]
pub struct DerivNode {
    pub symbol: SymbolId,
    pub rule: RuleId,
    pub children: Vec<DerivChild>,
}

impl DerivChild {
    fn symbol(&self, grammar: &Grammar) -> SymbolId {
        match self {
            DerivChild::Leaf(_) => grammar.terminal(),
            DerivChild::Node(n) => n.symbol,
        }
    }
}

/// Rewrite a labeled tree into rule applications of `grammar`.
///
/// A node is matched first against a rule whose RHS multiset equals the
/// children's symbols directly, then against one whose expanded leaf
/// parts match, in which case the binarization chain is inserted.
pub fn derive_tree(tree: &GroundTruthTree, grammar: &Grammar) -> Result<DerivNode> {
    match convert(tree, grammar)? {
        DerivChild::Node(n) => Ok(*n),
        DerivChild::Leaf(_) => Err(Error::Invalid("tree root cannot be a leaf".into())),
    }
}

fn convert(tree: &GroundTruthTree, grammar: &Grammar) -> Result<DerivChild> {
    let GroundTruthTree::Node { label, children } = tree else {
        return Ok(DerivChild::Leaf(match tree {
            GroundTruthTree::Leaf(id) => *id,
            _ => unreachable!(),
        }));
    };
    let lhs = grammar.require(label)?;
    let derived: Vec<DerivChild> = children
        .iter()
        .map(|c| convert(c, grammar))
        .collect::<Result<_>>()?;
    let mut multiset: Vec<SymbolId> = derived.iter().map(|c| c.symbol(grammar)).collect();
    multiset.sort();

    let not_derivable = || Error::NotDerivable {
        symbol: label.clone(),
        children: children
            .iter()
            .map(|c| c.label().unwrap_or("segment").to_string())
            .collect(),
    };

    // Direct match: children line up with the RHS symbols one to one.
    for &rid in grammar.rules_with_lhs(lhs) {
        let mut rhs = grammar.rule(rid).rhs.clone();
        rhs.sort();
        if rhs == multiset {
            let mut pool: Vec<Option<DerivChild>> = derived.into_iter().map(Some).collect();
            let ordered = grammar.rule(rid).rhs.clone();
            let mut out = Vec::with_capacity(ordered.len());
            for sym in ordered {
                out.push(take_matching(&mut pool, sym, grammar).ok_or_else(not_derivable)?);
            }
            return Ok(DerivChild::Node(Box::new(DerivNode {
                symbol: lhs,
                rule: rid,
                children: out,
            })));
        }
    }

    // Expanded match: the rule's leaf parts equal the child multiset, so
    // the intermediate chain is rebuilt around the children.
    for &rid in grammar.rules_with_lhs(lhs) {
        let mut expanded: Vec<SymbolId> = grammar
            .rule(rid)
            .rhs
            .iter()
            .flat_map(|&s| grammar.leaf_parts(s).iter().copied())
            .collect();
        expanded.sort();
        if expanded == multiset {
            let mut pool: Vec<Option<DerivChild>> = derived.into_iter().map(Some).collect();
            let ordered = grammar.rule(rid).rhs.clone();
            let mut out = Vec::with_capacity(ordered.len());
            for sym in ordered {
                out.push(attach(sym, &mut pool, grammar).ok_or_else(not_derivable)?);
            }
            return Ok(DerivChild::Node(Box::new(DerivNode {
                symbol: lhs,
                rule: rid,
                children: out,
            })));
        }
    }

    Err(not_derivable())
}

fn take_matching(
    pool: &mut [Option<DerivChild>],
    sym: SymbolId,
    grammar: &Grammar,
) -> Option<DerivChild> {
    for slot in pool.iter_mut() {
        if slot.as_ref().is_some_and(|c| c.symbol(grammar) == sym) {
            return slot.take();
        }
    }
    None
}

fn attach(
    sym: SymbolId,
    pool: &mut [Option<DerivChild>],
    grammar: &Grammar,
) -> Option<DerivChild> {
    if grammar.symbol(sym).kind != SymbolKind::Intermediate {
        return take_matching(pool, sym, grammar);
    }
    let def = *grammar.rules_with_lhs(sym).first()?;
    let mut children = Vec::new();
    for &part in &grammar.rule(def).rhs.clone() {
        children.push(attach(part, pool, grammar)?);
    }
    Some(DerivChild::Node(Box::new(DerivNode {
        symbol: sym,
        rule: def,
        children,
    })))
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub goal_k: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            goal_k: DEFAULT_GOAL_K,
        }
    }
}

/// Fit one model per rule from a labeled corpus: one pass collects every
/// rule's application-site features and counts, then Gaussians and priors
/// are fitted per rule. Rules never applied in the corpus are dropped.
pub fn train(
    corpus: &[(Scene, GroundTruthTree)],
    grammar: &Grammar,
    config: &TrainConfig,
) -> Result<TrainedGrammar> {
    if !grammar.is_binarized() {
        return Err(Error::Invalid("train requires a binarized grammar".into()));
    }
    let mut samples: HashMap<RuleId, Vec<FeatureVector>> = HashMap::new();
    let mut counts: BTreeMap<RuleId, u64> = BTreeMap::new();

    for (scene, tree) in corpus {
        let deriv = derive_tree(tree, grammar)?;
        collect_sites(&deriv, scene, grammar, &mut samples, &mut counts)?;
    }

    // Rebuild the grammar over the rules that actually occurred.
    let mut b = GrammarBuilder::new();
    let mut kept: Vec<(RuleId, RuleId)> = Vec::new(); // (old, new)
    for (old_id, rule) in grammar.rules().iter().enumerate() {
        if !counts.contains_key(&old_id) {
            continue;
        }
        let lhs = b.intern_as(grammar.name(rule.lhs), grammar.symbol(rule.lhs).kind)?;
        let rhs = rule
            .rhs
            .iter()
            .map(|&s| b.intern_as(grammar.name(s), grammar.symbol(s).kind))
            .collect::<Result<Vec<_>>>()?;
        let new_id = b.add_rule_ids(lhs, rhs, rule.kind);
        kept.push((old_id, new_id));
    }
    let trained_grammar = b.build()?;

    let new_counts: BTreeMap<RuleId, u64> = kept
        .iter()
        .map(|&(old, new)| (new, counts[&old]))
        .collect();
    let priors = assign_priors(&trained_grammar, &new_counts);

    let mut models: Vec<Option<RuleModel>> = vec![None; trained_grammar.rules().len()];
    for &(old, new) in &kept {
        let rule = trained_grammar.rule(new);
        let variant = if rule.kind == RuleKind::Goal {
            ModelVariant::GoalPenalty { k: config.goal_k }
        } else if trained_grammar.name(rule.lhs) == PLANE_NAME {
            ModelVariant::PlaneFit
        } else {
            ModelVariant::Gaussian(fit_gaussian(samples.get(&old).map_or(&[][..], |v| v))?)
        };
        models[new] = Some(RuleModel {
            variant,
            prior: priors[&new],
            train_count: new_counts[&new],
        });
    }

    StoredGrammar {
        grammar: trained_grammar,
        models,
        schema_id: GEOM_V1.id.to_string(),
    }
    .into_trained()
}

/// Count-proportional priors per family; goal rules share uniformly (their
/// cost ignores the prior, and the goal file block carries no count).
fn assign_priors(grammar: &Grammar, counts: &BTreeMap<RuleId, u64>) -> BTreeMap<RuleId, f64> {
    let mut priors = fit_priors(grammar, counts);
    let goals = grammar.goal_rules();
    let present: Vec<RuleId> = goals
        .iter()
        .copied()
        .filter(|r| counts.contains_key(r))
        .collect();
    for &g in &present {
        priors.insert(g, 1.0 / present.len() as f64);
    }
    priors
}

fn collect_sites(
    node: &DerivNode,
    scene: &Scene,
    grammar: &Grammar,
    samples: &mut HashMap<RuleId, Vec<FeatureVector>>,
    counts: &mut BTreeMap<RuleId, u64>,
) -> Result<Entity> {
    let mut children = Vec::with_capacity(node.children.len());
    for c in &node.children {
        match c {
            DerivChild::Leaf(id) => {
                let idx = scene.index_of(*id).ok_or_else(|| {
                    Error::Invalid(format!("tree leaf {id} is not a segment of its scene"))
                })?;
                let span = Span::singleton(scene.span_words(), idx);
                children.push(make_entity(scene, grammar, grammar.terminal(), span, &[]));
            }
            DerivChild::Node(n) => {
                children.push(collect_sites(n, scene, grammar, samples, counts)?)
            }
        }
    }
    *counts.entry(node.rule).or_insert(0) += 1;
    let refs: Vec<&Entity> = children.iter().collect();
    let rule = grammar.rule(node.rule);
    if rule.kind != RuleKind::Goal && grammar.name(rule.lhs) != PLANE_NAME {
        samples
            .entry(node.rule)
            .or_default()
            .push(feature_vector(&refs));
    }
    let mut span = children[0].span.clone();
    for c in &children[1..] {
        span.union_with(&c.span);
    }
    Ok(make_entity(scene, grammar, node.symbol, span, &refs))
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// Union of two grammars with their models.
///
/// Models of rules unique to one side carry over unchanged. A rule present
/// in both must agree on its parameters. Priors are only recomputed for
/// LHS families that gained members, proportional to each rule's training
/// evidence in its source grammar; untouched families keep their priors
/// bit for bit.
pub fn compose(a: &StoredGrammar, b: &StoredGrammar) -> Result<StoredGrammar> {
    if a.schema_id != b.schema_id {
        return Err(Error::SchemaMismatch {
            grammar: b.schema_id.clone(),
            supported: a.schema_id.clone(),
        });
    }
    let mut builder = GrammarBuilder::new();
    for g in [&a.grammar, &b.grammar] {
        for s in g.symbols() {
            builder.intern_as(&s.name, s.kind)?;
        }
    }

    struct Source {
        model: Option<RuleModel>,
        from_a: bool,
        from_b: bool,
        weight: f64,
    }
    let mut merged_rules: Vec<Rule> = Vec::new();
    let mut sources: Vec<Source> = Vec::new();
    let mut seen: HashMap<(SymbolId, Vec<SymbolId>), usize> = HashMap::new();

    let add_side = |g: &Grammar,
                        models: &[Option<RuleModel>],
                        is_a: bool,
                        builder: &mut GrammarBuilder,
                        merged_rules: &mut Vec<Rule>,
                        sources: &mut Vec<Source>,
                        seen: &mut HashMap<(SymbolId, Vec<SymbolId>), usize>|
     -> Result<()> {
        // Family totals in the source grammar, for renormalization weights.
        let mut family_count: HashMap<SymbolId, u64> = HashMap::new();
        for (i, r) in g.rules().iter().enumerate() {
            if let Some(m) = &models[i] {
                *family_count.entry(r.lhs).or_insert(0) += m.train_count;
            }
        }
        for (i, r) in g.rules().iter().enumerate() {
            let lhs = builder.intern(g.name(r.lhs));
            let rhs: Vec<SymbolId> = r.rhs.iter().map(|&s| builder.intern(g.name(s))).collect();
            let mut key_rhs = rhs.clone();
            key_rhs.sort();
            let key = (lhs, key_rhs);
            let weight = models[i].as_ref().map_or(0.0, |m| {
                m.prior * family_count.get(&r.lhs).copied().unwrap_or(0) as f64
            });
            match seen.get(&key) {
                None => {
                    seen.insert(key, merged_rules.len());
                    merged_rules.push(Rule {
                        lhs,
                        rhs,
                        kind: r.kind,
                    });
                    sources.push(Source {
                        model: models[i].clone(),
                        from_a: is_a,
                        from_b: !is_a,
                        weight,
                    });
                }
                Some(&idx) => {
                    let src = &mut sources[idx];
                    src.from_b |= !is_a;
                    src.from_a |= is_a;
                    match (&src.model, &models[i]) {
                        (Some(ma), Some(mb)) => {
                            let agree = match (&ma.variant, &mb.variant) {
                                (ModelVariant::Gaussian(x), ModelVariant::Gaussian(y)) => {
                                    x.mu == y.mu && x.sigma == y.sigma
                                }
                                (ModelVariant::PlaneFit, ModelVariant::PlaneFit) => true,
                                (
                                    ModelVariant::GoalPenalty { k: ka },
                                    ModelVariant::GoalPenalty { k: kb },
                                ) => ka == kb,
                                _ => false,
                            };
                            if !agree {
                                return Err(Error::ConflictingModels(format!(
                                    "{} -> ...",
                                    g.name(r.lhs)
                                )));
                            }
                        }
                        (None, Some(_)) => {
                            src.model = models[i].clone();
                            src.weight = weight;
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    };
    add_side(
        &a.grammar,
        &a.models,
        true,
        &mut builder,
        &mut merged_rules,
        &mut sources,
        &mut seen,
    )?;
    add_side(
        &b.grammar,
        &b.models,
        false,
        &mut builder,
        &mut merged_rules,
        &mut sources,
        &mut seen,
    )?;

    for rule in &merged_rules {
        builder.add_rule_ids(rule.lhs, rule.rhs.clone(), rule.kind);
    }
    let grammar = builder.build()?;

    // Families whose membership changed get count-proportional priors;
    // families untouched by the union keep their priors exactly.
    let mut by_lhs: BTreeMap<SymbolId, Vec<usize>> = BTreeMap::new();
    for (i, r) in merged_rules.iter().enumerate() {
        by_lhs.entry(r.lhs).or_default().push(i);
    }
    let mut models: Vec<Option<RuleModel>> = sources.iter().map(|s| s.model.clone()).collect();
    for (_lhs, rules) in by_lhs {
        let pure_a = rules.iter().all(|&i| sources[i].from_a && !sources[i].from_b);
        let pure_b = rules.iter().all(|&i| sources[i].from_b && !sources[i].from_a);
        let shared_only = rules.iter().all(|&i| sources[i].from_a == sources[i].from_b);
        if pure_a || pure_b || shared_only {
            continue;
        }
        let modeled: Vec<usize> = rules
            .iter()
            .copied()
            .filter(|&i| models[i].is_some())
            .collect();
        if modeled.is_empty() {
            continue;
        }
        if merged_rules[modeled[0]].kind == RuleKind::Goal {
            for &i in &modeled {
                models[i].as_mut().unwrap().prior = 1.0 / modeled.len() as f64;
            }
            continue;
        }
        let weights: Vec<f64> = modeled
            .iter()
            .map(|&i| sources[i].weight.max(PRIOR_FLOOR))
            .collect();
        let total: f64 = weights.iter().sum();
        for (&i, w) in modeled.iter().zip(&weights) {
            models[i].as_mut().unwrap().prior = w / total;
        }
    }

    Ok(StoredGrammar {
        grammar,
        models,
        schema_id: a.schema_id.clone(),
    })
}

// ---------------------------------------------------------------------------
// Grammar files
// ---------------------------------------------------------------------------

/// A grammar file in memory: rules plus an optional model per rule.
/// Skeletons (from rule extraction) have no models; training fills them.
pub struct StoredGrammar {
    pub grammar: Grammar,
    pub models: Vec<Option<RuleModel>>,
    pub schema_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type")]
enum ModelDto {
    #[serde(rename = "gaussian")]
    Gaussian {
        mu: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        prior: f64,
        count: u64,
    },
    #[serde(rename = "planefit")]
    PlaneFit { prior: f64, count: u64 },
    #[serde(rename = "goal")]
    Goal { k: f64 },
}

#[derive(Serialize, Deserialize)]
struct SymbolDto {
    name: String,
    kind: SymbolKind,
}

#[derive(Serialize, Deserialize)]
struct RuleDto {
    lhs: String,
    rhs: Vec<String>,
    kind: RuleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<ModelDto>,
}

#[derive(Serialize, Deserialize)]
struct GrammarDto {
    schema_id: String,
    start: String,
    symbols: Vec<SymbolDto>,
    rules: Vec<RuleDto>,
}

impl StoredGrammar {
    pub fn untrained(grammar: Grammar) -> Self {
        let n = grammar.rules().len();
        StoredGrammar {
            grammar,
            models: vec![None; n],
            schema_id: GEOM_V1.id.to_string(),
        }
    }

    pub fn is_trained(&self) -> bool {
        self.models.iter().all(Option::is_some)
    }

    pub fn to_json(&self) -> String {
        let g = &self.grammar;
        let dto = GrammarDto {
            schema_id: self.schema_id.clone(),
            start: g.name(g.start()).to_string(),
            symbols: g
                .symbols()
                .iter()
                .map(|s| SymbolDto {
                    name: s.name.clone(),
                    kind: s.kind,
                })
                .collect(),
            rules: g
                .rules()
                .iter()
                .enumerate()
                .map(|(i, r)| RuleDto {
                    lhs: g.name(r.lhs).to_string(),
                    rhs: r.rhs.iter().map(|&s| g.name(s).to_string()).collect(),
                    kind: r.kind,
                    model: self.models[i].as_ref().map(|m| match &m.variant {
                        ModelVariant::Gaussian(p) => ModelDto::Gaussian {
                            mu: p.mu.clone(),
                            sigma: p.sigma.clone(),
                            prior: m.prior,
                            count: m.train_count,
                        },
                        ModelVariant::PlaneFit => ModelDto::PlaneFit {
                            prior: m.prior,
                            count: m.train_count,
                        },
                        ModelVariant::GoalPenalty { k } => ModelDto::Goal { k: *k },
                    }),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dto).expect("grammar serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::scene::write_file(path.as_ref(), &self.to_json())
    }

    pub fn from_json(text: &str, file: &str) -> Result<StoredGrammar> {
        let dto: GrammarDto = serde_json::from_str(text).map_err(|source| Error::Json {
            path: file.to_string(),
            source,
        })?;
        if dto.start != crate::grammar::START_NAME {
            return Err(Error::format(
                file,
                "start",
                format!("start symbol must be \"S\", found {:?}", dto.start),
            ));
        }
        let mut b = GrammarBuilder::new();
        for s in &dto.symbols {
            b.intern_as(&s.name, s.kind)?;
        }
        let mut raw_models = Vec::with_capacity(dto.rules.len());
        for (i, r) in dto.rules.iter().enumerate() {
            if r.rhs.is_empty() || r.rhs.len() > 2 {
                return Err(Error::format(
                    file,
                    format!("rules[{i}].rhs"),
                    "rules must have one or two RHS symbols",
                ));
            }
            let lhs = b.intern(&r.lhs);
            let rhs = r.rhs.iter().map(|n| b.intern(n)).collect();
            let id = b.add_rule_ids(lhs, rhs, r.kind);
            raw_models.push((id, i));
        }
        let grammar = b.build()?;

        let mut models: Vec<Option<RuleModel>> = vec![None; grammar.rules().len()];
        let goal_total = dto
            .rules
            .iter()
            .filter(|r| matches!(r.model, Some(ModelDto::Goal { .. })))
            .count();
        for (rule_id, dto_idx) in raw_models {
            let r = &dto.rules[dto_idx];
            let Some(m) = &r.model else { continue };
            let at = |f: &str| format!("rules[{dto_idx}].model.{f}");
            let model = match m {
                ModelDto::Gaussian {
                    mu,
                    sigma,
                    prior,
                    count,
                } => {
                    check_prior(*prior, file, &at("prior"))?;
                    if sigma.len() != mu.len() || sigma.iter().any(|row| row.len() != mu.len()) {
                        return Err(Error::format(file, at("sigma"), "must be square and match mu"));
                    }
                    RuleModel {
                        variant: ModelVariant::Gaussian(GaussianParams {
                            mu: mu.clone(),
                            sigma: sigma.clone(),
                            reg_epsilon: REG_EPSILON,
                        }),
                        prior: *prior,
                        train_count: *count,
                    }
                }
                ModelDto::PlaneFit { prior, count } => {
                    check_prior(*prior, file, &at("prior"))?;
                    RuleModel {
                        variant: ModelVariant::PlaneFit,
                        prior: *prior,
                        train_count: *count,
                    }
                }
                ModelDto::Goal { k } => {
                    if !k.is_finite() || *k <= 0.0 {
                        return Err(Error::format(file, at("k"), "must be positive"));
                    }
                    RuleModel {
                        variant: ModelVariant::GoalPenalty { k: *k },
                        prior: 1.0 / goal_total.max(1) as f64,
                        train_count: 0,
                    }
                }
            };
            models[rule_id] = Some(model);
        }
        Ok(StoredGrammar {
            grammar,
            models,
            schema_id: dto.schema_id,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StoredGrammar> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Sub-grammar with the rules selected by `keep`. Priors of families
    /// that lost members are renormalized over the survivors, so composing
    /// two complementary restrictions recovers count-proportional priors.
    pub fn restrict(&self, keep: impl Fn(RuleId, &Rule) -> bool) -> Result<StoredGrammar> {
        let g = &self.grammar;
        let mut b = GrammarBuilder::new();
        let mut kept: Vec<(RuleId, RuleId)> = Vec::new();
        for (id, rule) in g.rules().iter().enumerate() {
            if !keep(id, rule) {
                continue;
            }
            let lhs = b.intern_as(g.name(rule.lhs), g.symbol(rule.lhs).kind)?;
            let rhs = rule
                .rhs
                .iter()
                .map(|&s| b.intern_as(g.name(s), g.symbol(s).kind))
                .collect::<Result<Vec<_>>>()?;
            let new_id = b.add_rule_ids(lhs, rhs, rule.kind);
            kept.push((id, new_id));
        }
        let grammar = b.build()?;
        let mut models: Vec<Option<RuleModel>> = vec![None; grammar.rules().len()];
        for &(old, new) in &kept {
            models[new] = self.models[old].clone();
        }
        // Renormalize priors family by family over the modeled survivors.
        let mut family_mass: HashMap<SymbolId, f64> = HashMap::new();
        for (i, m) in models.iter().enumerate() {
            if let Some(m) = m {
                *family_mass.entry(grammar.rule(i).lhs).or_insert(0.0) += m.prior;
            }
        }
        for (i, m) in models.iter_mut().enumerate() {
            if let Some(m) = m {
                m.prior /= family_mass[&grammar.rule(i).lhs];
            }
        }
        Ok(StoredGrammar {
            grammar,
            models,
            schema_id: self.schema_id.clone(),
        })
    }

    /// Validate models and freeze the densities.
    pub fn into_trained(self) -> Result<TrainedGrammar> {
        if self.schema_id != GEOM_V1.id {
            return Err(Error::SchemaMismatch {
                grammar: self.schema_id.clone(),
                supported: GEOM_V1.id.to_string(),
            });
        }
        let g = &self.grammar;
        let mut models = Vec::with_capacity(g.rules().len());
        for (i, m) in self.models.iter().enumerate() {
            models.push(m.clone().ok_or_else(|| Error::MissingModel(g.display_rule(i)))?);
        }

        // Priors over each LHS family must form a distribution.
        let mut family_sum: BTreeMap<SymbolId, f64> = BTreeMap::new();
        for (i, m) in models.iter().enumerate() {
            *family_sum.entry(g.rule(i).lhs).or_insert(0.0) += m.prior;
        }
        for (lhs, sum) in family_sum {
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid(format!(
                    "priors for LHS {:?} sum to {sum}, expected 1",
                    g.name(lhs)
                )));
            }
        }

        let mut prepared = Vec::with_capacity(models.len());
        let mut log_priors = Vec::with_capacity(models.len());
        for (i, m) in models.iter().enumerate() {
            let rule = g.rule(i);
            let p = match &m.variant {
                ModelVariant::GoalPenalty { k } => {
                    if rule.kind != RuleKind::Goal {
                        return Err(Error::Invalid(format!(
                            "goal model on non-goal rule {}",
                            g.display_rule(i)
                        )));
                    }
                    Prepared::Goal { k: *k }
                }
                ModelVariant::PlaneFit => {
                    if g.name(rule.lhs) != PLANE_NAME {
                        return Err(Error::Invalid(format!(
                            "plane-fit model on rule {}",
                            g.display_rule(i)
                        )));
                    }
                    Prepared::PlaneFit
                }
                ModelVariant::Gaussian(params) => {
                    let expected = GEOM_V1.vector_len(g.expanded_arity(i));
                    if params.mu.len() != expected {
                        return Err(Error::DimensionMismatch {
                            expected,
                            got: params.mu.len(),
                        });
                    }
                    let d = params.mu.len();
                    let mut sigma = DMatrix::from_fn(d, d, |r, c| params.sigma[r][c]);
                    for j in 0..d {
                        sigma[(j, j)] += params.reg_epsilon;
                    }
                    let mvn =
                        MultivariateGaussian::new(DVector::from_row_slice(&params.mu), sigma)
                            .ok_or_else(|| {
                                Error::Invalid(format!(
                                    "covariance for rule {} is not positive definite",
                                    g.display_rule(i)
                                ))
                            })?;
                    Prepared::Gaussian(mvn)
                }
            };
            prepared.push(p);
            log_priors.push(m.prior.ln());
        }

        Ok(TrainedGrammar {
            grammar: self.grammar,
            models,
            prepared,
            log_priors,
            schema_id: self.schema_id,
        })
    }
}

fn check_prior(p: f64, file: &str, at: &str) -> Result<()> {
    if !p.is_finite() || p <= 0.0 || p > 1.0 {
        return Err(Error::format(file, at, "prior must be in (0, 1]"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fit_two_scalar_samples() {
        let p = fit_gaussian(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(p.mu, vec![1.0]);
        assert_eq!(p.sigma, vec![vec![1.0]]);
    }

    #[test]
    fn fit_single_sample_identity_fallback() {
        let p = fit_gaussian(&[vec![3.0, -1.0]]).unwrap();
        assert_eq!(p.mu, vec![3.0, -1.0]);
        assert_eq!(p.sigma, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn fit_duplicated_sample_set_is_identical() {
        let base = vec![vec![0.0, 1.0], vec![2.0, 5.0], vec![-1.0, 0.5]];
        let mut doubled = base.clone();
        doubled.extend(base.clone());
        let a = fit_gaussian(&base).unwrap();
        let b = fit_gaussian(&doubled).unwrap();
        assert_eq!(a.mu, b.mu);
        for (ra, rb) in a.sigma.iter().zip(&b.sigma) {
            for (x, y) in ra.iter().zip(rb) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fit_dimension_mismatch() {
        let err = fit_gaussian(&[vec![0.0], vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn priors_are_count_fractions() {
        let mut b = GrammarBuilder::new();
        let r1 = b.add_rule("Chair", &["chairBase", "chairBackRest"]);
        let r2 = b.add_rule("Chair", &["chairBase", "chairBackRest", "chairBack"]);
        let r3 = b.add_rule("chairBase", &["Plane"]);
        b.add_rule("chairBackRest", &["Plane"]);
        b.add_rule("chairBack", &["Plane"]);
        b.add_rule("Plane", &["segment"]);
        b.add_rule("S", &["Chair"]);
        let g = b.build().unwrap();
        let mut counts = BTreeMap::new();
        counts.insert(r1, 6);
        counts.insert(r2, 4);
        counts.insert(r3, 10);
        let priors = fit_priors(&g, &counts);
        assert_relative_eq!(priors[&r1], 0.6, epsilon = 1e-15);
        assert_relative_eq!(priors[&r2], 0.4, epsilon = 1e-15);
        assert_relative_eq!(priors[&r3], 1.0, epsilon = 1e-15);
        let sum: f64 = priors[&r1] + priors[&r2];
        assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
    }
}
