//! Traffic graph: nodes and ordered admissible-successor lists.

use serde::{Deserialize, Serialize};

use crate::spec::Violation;

/// Directed routing network. `successors[i]` is the ordered list of nodes a
/// driver at node `i` may move to next (it may contain `i` itself).
///
/// All per-edge tensors in this crate are indexed
/// `[team][time][node][successor position]`, where the successor position
/// refers to this ordered list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficGraph {
    pub node_count: usize,
    pub successors: Vec<Vec<usize>>,
}

impl TrafficGraph {
    pub fn new(node_count: usize, successors: Vec<Vec<usize>>) -> Self {
        TrafficGraph {
            node_count,
            successors,
        }
    }

    /// Ordered admissible successors of node `i`.
    pub fn succ(&self, i: usize) -> &[usize] {
        &self.successors[i]
    }

    /// Number of admissible moves out of node `i`.
    pub fn out_degree(&self, i: usize) -> usize {
        self.successors[i].len()
    }

    /// Position of node `j` in the successor list of `i`, if admissible.
    pub fn position_of(&self, i: usize, j: usize) -> Option<usize> {
        self.successors[i].iter().position(|&s| s == j)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.node_count == 0 {
            out.push(Violation::EmptyGraph);
            return out;
        }
        if self.successors.len() != self.node_count {
            out.push(Violation::Shape {
                tensor: "successors",
                detail: format!(
                    "expected {} successor lists, found {}",
                    self.node_count,
                    self.successors.len()
                ),
            });
            return out;
        }
        for (i, succ) in self.successors.iter().enumerate() {
            if succ.is_empty() {
                out.push(Violation::DeadEnd { node: i });
            }
            let mut seen = vec![false; self.node_count];
            for &j in succ {
                if j >= self.node_count {
                    out.push(Violation::InvalidSuccessor { node: i, succ: j });
                } else if seen[j] {
                    out.push(Violation::DuplicateSuccessor { node: i, succ: j });
                } else {
                    seen[j] = true;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_graph_has_no_violations() {
        let g = TrafficGraph::new(3, vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]);
        assert!(g.violations().is_empty());
        assert_eq!(g.position_of(1, 2), Some(2));
        assert_eq!(g.position_of(0, 2), None);
    }

    #[test]
    fn dead_end_and_bad_indices_reported() {
        let g = TrafficGraph::new(2, vec![vec![], vec![0, 0, 5]]);
        let v = g.violations();
        assert!(v.iter().any(|x| matches!(x, Violation::DeadEnd { node: 0 })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::DuplicateSuccessor { node: 1, succ: 0 })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::InvalidSuccessor { node: 1, succ: 5 })));
    }
}
