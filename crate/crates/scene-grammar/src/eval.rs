//! Segment-label extraction from parse trees and precision/recall reports.
//!
//! A terminal's label is the symbol of its lowest ancestor that is a real
//! part or object name: intermediates, `segment`, `Plane`, `*Complex`
//! grouping symbols and the scene root don't count. Terminals outside the
//! parse map to `"none"`, which never enters the macro average.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::grammar::{Grammar, SymbolKind};
use crate::parse::{ParseNode, ParseResult, ParseTree};
use crate::scene::{GroundTruthTree, Scene, SegmentId};
use crate::{Error, Result};

pub const NONE_LABEL: &str = "none";

/// True when `name` is a reportable part/object label.
fn is_part_label(name: &str, grammar: &Grammar) -> bool {
    if name == "S" || name == "segment" || name == "Plane" || name.ends_with("Complex") {
        return false;
    }
    match grammar.id_of(name) {
        Some(id) => !matches!(
            grammar.symbol(id).kind,
            SymbolKind::Intermediate | SymbolKind::Terminal | SymbolKind::Start
        ),
        None => !name.contains('_'),
    }
}

/// Labels of the terminals covered by a parse tree.
pub fn extract_labels(tree: &ParseTree, grammar: &Grammar) -> BTreeMap<SegmentId, String> {
    let mut out = BTreeMap::new();
    fn rec(
        node: &ParseNode,
        current: Option<&str>,
        grammar: &Grammar,
        out: &mut BTreeMap<SegmentId, String>,
    ) {
        let current = if is_part_label(&node.symbol, grammar) {
            Some(node.symbol.as_str())
        } else {
            current
        };
        if node.children.is_empty() && node.rule.is_none() {
            for &id in &node.span {
                out.insert(id, current.unwrap_or(NONE_LABEL).to_string());
            }
        }
        for c in &node.children {
            rec(c, current, grammar, out);
        }
    }
    rec(&tree.root, None, grammar, &mut out);
    out
}

/// Same extraction over a ground-truth tree (the gold side of a report).
pub fn extract_labels_gt(tree: &GroundTruthTree, grammar: &Grammar) -> BTreeMap<SegmentId, String> {
    let mut out = BTreeMap::new();
    fn rec(
        t: &GroundTruthTree,
        current: Option<&str>,
        grammar: &Grammar,
        out: &mut BTreeMap<SegmentId, String>,
    ) {
        match t {
            GroundTruthTree::Leaf(id) => {
                out.insert(*id, current.unwrap_or(NONE_LABEL).to_string());
            }
            GroundTruthTree::Node { label, children } => {
                let current = if is_part_label(label, grammar) {
                    Some(label.as_str())
                } else {
                    current
                };
                for c in children {
                    rec(c, current, grammar, out);
                }
            }
        }
    }
    rec(tree, None, grammar, &mut out);
    out
}

/// Labels for every terminal of the scene: parsed ones from the tree,
/// unspanned ones as `"none"`.
pub fn labels_for_result(
    result: &ParseResult,
    grammar: &Grammar,
    scene: &Scene,
) -> BTreeMap<SegmentId, String> {
    let mut labels = extract_labels(&result.tree, grammar);
    for seg in scene.segments() {
        labels.entry(seg.id).or_insert_with(|| NONE_LABEL.to_string());
    }
    labels
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct LabelMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Percent in [0, 100].
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelReport {
    pub per_label: BTreeMap<String, LabelMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// (gold, predicted, count) triples, sorted.
    pub confusion: Vec<(String, String, u64)>,
}

/// Accumulates (gold, predicted) pairs; folds pool their counts here and
/// the report is computed once over the pooled confusion.
#[derive(Clone, Debug, Default)]
pub struct LabelTally {
    counts: BTreeMap<(String, String), u64>,
}

impl LabelTally {
    pub fn add(
        &mut self,
        pred: &BTreeMap<SegmentId, String>,
        gold: &BTreeMap<SegmentId, String>,
    ) -> Result<()> {
        if pred.len() != gold.len() || !pred.keys().eq(gold.keys()) {
            return Err(Error::DomainMismatch(format!(
                "prediction covers {} segments, gold covers {}",
                pred.len(),
                gold.len()
            )));
        }
        for (id, g) in gold {
            let p = &pred[id];
            *self.counts.entry((g.clone(), p.clone())).or_insert(0) += 1;
        }
        Ok(())
    }

    pub fn report(&self) -> LabelReport {
        let mut labels: Vec<String> = Vec::new();
        for (g, p) in self.counts.keys() {
            for l in [g, p] {
                if l != NONE_LABEL && !labels.contains(l) {
                    labels.push(l.clone());
                }
            }
        }
        labels.sort();

        let mut per_label = BTreeMap::new();
        let mut macro_p = 0.0;
        let mut macro_r = 0.0;
        let mut gold_labels = 0u64;
        for l in &labels {
            let mut m = LabelMetrics::default();
            for ((g, p), &c) in &self.counts {
                match (g == l, p == l) {
                    (true, true) => m.tp += c,
                    (true, false) => m.fn_ += c,
                    (false, true) => m.fp += c,
                    (false, false) => {}
                }
            }
            m.precision = if m.tp + m.fp > 0 {
                100.0 * m.tp as f64 / (m.tp + m.fp) as f64
            } else {
                0.0
            };
            m.recall = if m.tp + m.fn_ > 0 {
                100.0 * m.tp as f64 / (m.tp + m.fn_) as f64
            } else {
                0.0
            };
            // Macro average runs over labels present in gold only.
            if m.tp + m.fn_ > 0 {
                macro_p += m.precision;
                macro_r += m.recall;
                gold_labels += 1;
            }
            per_label.insert(l.clone(), m);
        }
        let confusion: Vec<(String, String, u64)> = self
            .counts
            .iter()
            .map(|((g, p), &c)| (g.clone(), p.clone(), c))
            .collect();
        LabelReport {
            per_label,
            macro_precision: if gold_labels > 0 { macro_p / gold_labels as f64 } else { 0.0 },
            macro_recall: if gold_labels > 0 { macro_r / gold_labels as f64 } else { 0.0 },
            confusion,
        }
    }
}

/// Per-label precision/recall of one prediction against gold.
pub fn precision_recall(
    pred: &BTreeMap<SegmentId, String>,
    gold: &BTreeMap<SegmentId, String>,
) -> Result<LabelReport> {
    let mut tally = LabelTally::default();
    tally.add(pred, gold)?;
    Ok(tally.report())
}

impl LabelReport {
    /// Two-row table: integer-rounded recall and precision per label plus
    /// the macro average.
    pub fn to_tsv(&self) -> String {
        let gold_labels: Vec<&String> = self
            .per_label
            .iter()
            .filter(|(_, m)| m.tp + m.fn_ > 0)
            .map(|(l, _)| l)
            .collect();
        let mut out = String::from("label");
        for l in &gold_labels {
            out.push('\t');
            out.push_str(l);
        }
        out.push_str("\tmacro_avg\n");
        for (row, get, avg) in [
            ("recall", (|m: &LabelMetrics| m.recall) as fn(&LabelMetrics) -> f64, self.macro_recall),
            ("precision", |m: &LabelMetrics| m.precision, self.macro_precision),
        ] {
            out.push_str(row);
            for l in &gold_labels {
                out.push_str(&format!("\t{}", get(&self.per_label[*l]).round() as i64));
            }
            out.push_str(&format!("\t{}\n", avg.round() as i64));
        }
        out
    }

    /// Full-precision sidecar.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}
