//! The shared control-flow-graph representation both the IR and source sides
//! lower into, so the kernel compares like with like.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Coarse node labels shared by source-level and IR-level CFGs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Entry,
    Exit,
    Branch,
    Switch,
    Call,
    Return,
    Plain,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Entry => "entry",
            NodeKind::Exit => "exit",
            NodeKind::Branch => "branch",
            NodeKind::Switch => "switch",
            NodeKind::Call => "call",
            NodeKind::Return => "return",
            NodeKind::Plain => "plain",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CfgOrigin {
    Source,
    Ir,
}

/// Simple directed graph: dense node ids, deduplicated edges, one kind label
/// per node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    kinds: Vec<NodeKind>,
    edges: BTreeSet<(u32, u32)>,
    origin: CfgOrigin,
}

impl Cfg {
    pub fn new(origin: CfgOrigin) -> Self {
        Self {
            kinds: Vec::new(),
            edges: BTreeSet::new(),
            origin,
        }
    }

    pub fn add_node(&mut self, kind: NodeKind) -> u32 {
        self.kinds.push(kind);
        (self.kinds.len() - 1) as u32
    }

    /// Inserting the same edge twice is a no-op (simple graph).
    pub fn add_edge(&mut self, from: u32, to: u32) {
        let n = self.kinds.len() as u32;
        assert!(from < n && to < n, "edge ({from},{to}) out of range (n={n})");
        self.edges.insert((from, to));
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn kind(&self, id: u32) -> NodeKind {
        self.kinds[id as usize]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: u32, to: u32) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn origin(&self) -> CfgOrigin {
        self.origin
    }

    pub fn set_kind(&mut self, id: u32, kind: NodeKind) {
        self.kinds[id as usize] = kind;
    }

    /// Forward adjacency lists; `symmetric` also inserts reverse arcs.
    pub fn adjacency(&self, symmetric: bool) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.kinds.len()];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            if symmetric && u != v {
                adj[v as usize].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_deduplicate() {
        let mut g = Cfg::new(CfgOrigin::Ir);
        let a = g.add_node(NodeKind::Entry);
        let b = g.add_node(NodeKind::Plain);
        g.add_edge(a, b);
        g.add_edge(a, b);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn out_of_range_edge_panics() {
        let mut g = Cfg::new(CfgOrigin::Source);
        let a = g.add_node(NodeKind::Plain);
        g.add_edge(a, 5);
    }

    #[test]
    fn adjacency_symmetric_adds_reverse() {
        let mut g = Cfg::new(CfgOrigin::Ir);
        let a = g.add_node(NodeKind::Entry);
        let b = g.add_node(NodeKind::Return);
        g.add_edge(a, b);
        assert_eq!(g.adjacency(false)[b as usize], Vec::<u32>::new());
        assert_eq!(g.adjacency(true)[b as usize], vec![a]);
    }
}
