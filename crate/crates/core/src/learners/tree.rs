use serde::{Deserialize, Serialize};

/// Flat binary tree. Node 0 is the root; rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Fraction of positive training rows in the leaf.
        probability: f64,
        size: usize,
    },
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> (f64, usize) {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { probability, size } => return (*probability, *size),
            }
        }
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        self.leaf_for(x).0
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn split_features(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }
}

/// Incrementally grown tree; children are pushed after their parent.
pub(crate) struct TreeBuilder {
    pub nodes: Vec<Node>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn reserve(&mut self) -> usize {
        self.nodes.push(Node::Leaf {
            probability: 0.0,
            size: 0,
        });
        self.nodes.len() - 1
    }

    pub fn set(&mut self, at: usize, node: Node) {
        self.nodes[at] = node;
    }

    pub fn finish(self) -> Tree {
        Tree { nodes: self.nodes }
    }
}

pub(crate) fn leaf(rows: &[usize], labels: &[bool]) -> Node {
    let pos = rows.iter().filter(|&&i| labels[i]).count();
    Node::Leaf {
        probability: if rows.is_empty() {
            0.0
        } else {
            pos as f64 / rows.len() as f64
        },
        size: rows.len(),
    }
}
