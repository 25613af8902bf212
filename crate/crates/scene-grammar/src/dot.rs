//! Graphviz DOT export of parse trees.

use crate::parse::{ParseNode, ParseTree};

/// Render a parse tree as a DOT digraph: internal nodes show symbol and
/// subtree cost, leaves show the segment id.
pub fn export_dot(tree: &ParseTree) -> String {
    let mut out = String::from("digraph parse {\n  node [shape=box];\n");
    let mut next = 0usize;
    fn rec(node: &ParseNode, next: &mut usize, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        let label = if node.children.is_empty() && node.rule.is_none() {
            let ids: Vec<String> = node.span.iter().map(u32::to_string).collect();
            format!("segment {}", ids.join(","))
        } else {
            format!("{} ({:.4})", node.symbol, node.cost)
        };
        out.push_str(&format!("  n{id} [label=\"{}\"];\n", label.replace('"', "\\\"")));
        for c in &node.children {
            let cid = rec(c, next, out);
            out.push_str(&format!("  n{id} -> n{cid};\n"));
        }
        id
    }
    rec(&tree.root, &mut next, &mut out);
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(id: u32) -> ParseNode {
        ParseNode {
            symbol: "segment".into(),
            rule: None,
            cost: 0.0,
            span: vec![id],
            children: Vec::new(),
        }
    }

    #[test]
    fn single_node_digraph() {
        let tree = ParseTree { root: leaf(7) };
        let dot = export_dot(&tree);
        assert_eq!(dot.matches("label=").count(), 1);
        assert_eq!(dot.matches("->").count(), 0);
        assert!(dot.contains("segment 7"));
    }

    #[test]
    fn node_and_edge_counts_roundtrip() {
        let tree = ParseTree {
            root: ParseNode {
                symbol: "Plane".into(),
                rule: Some("Plane -> Plane segment".into()),
                cost: 1.25,
                span: vec![0, 1, 2],
                children: vec![
                    ParseNode {
                        symbol: "Plane".into(),
                        rule: Some("Plane -> segment".into()),
                        cost: 0.5,
                        span: vec![0, 1],
                        children: vec![leaf(0), leaf(1)],
                    },
                    leaf(2),
                ],
            },
        };
        let dot = export_dot(&tree);
        let nodes = tree.root.count_nodes();
        assert_eq!(dot.matches("label=").count(), nodes);
        assert_eq!(dot.matches("->").count(), nodes - 1);
        assert!(dot.contains("Plane (1.2500)"));
    }
}
