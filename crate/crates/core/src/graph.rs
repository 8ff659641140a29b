//! Attributed graph model shared by every other module.
//!
//! Nodes are dense indices `0..num_nodes`. Edges are undirected and stored
//! once per unordered pair with `src < dst`; duplicates are merged by summing
//! weights and self-loops are never stored.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Partial map from node to binary class (0 or 1).
pub type Labels = BTreeMap<NodeId, usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    UserUser,
    UserItem,
    ItemItem,
}

impl EdgeType {
    pub fn code(self) -> &'static str {
        match self {
            EdgeType::UserUser => "uu",
            EdgeType::UserItem => "ui",
            EdgeType::ItemItem => "ii",
        }
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uu" => Ok(EdgeType::UserUser),
            "ui" => Ok(EdgeType::UserItem),
            "ii" => Ok(EdgeType::ItemItem),
            other => Err(format!("unknown edge type `{other}` (expected uu, ui or ii)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
    Unsigned,
}

impl Sign {
    pub fn code(self) -> &'static str {
        match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
            Sign::Unsigned => "0",
        }
    }
}

impl FromStr for Sign {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "+" => Ok(Sign::Positive),
            "-" => Ok(Sign::Negative),
            "0" => Ok(Sign::Unsigned),
            other => Err(format!("unknown sign `{other}` (expected +, - or 0)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub etype: EdgeType,
    pub sign: Sign,
    pub weight: f64,
}

impl EdgeRecord {
    pub fn new(src: NodeId, dst: NodeId) -> Self {
        EdgeRecord {
            src,
            dst,
            etype: EdgeType::UserUser,
            sign: Sign::Unsigned,
            weight: 1.0,
        }
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }

    pub fn with_type(mut self, etype: EdgeType) -> Self {
        self.etype = etype;
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

impl fmt::Display for EdgeRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.src,
            self.dst,
            self.etype.code(),
            self.sign.code(),
            self.weight
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Item,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeStats {
    pub mean_degree: f64,
    pub max_degree: usize,
    pub edge_count: usize,
    pub node_count: usize,
}

/// An immutable attributed graph `G(V, E, X)` with optional supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    num_nodes: usize,
    node_kind: Vec<NodeKind>,
    edges: Vec<EdgeRecord>,
    features: Array2<f64>,
    labels: Option<Labels>,
    r0: Option<Array2<f64>>,
    adjacency: Vec<Vec<NodeId>>,
}

impl AttributedGraph {
    /// Builds a graph from raw edges, inferring node kinds from edge types.
    ///
    /// Edges are canonicalised to `src < dst`, self-loops are dropped and
    /// duplicates of the same unordered pair are merged by summing weights
    /// (the first occurrence keeps its type and sign).
    pub fn new(num_nodes: usize, edges: Vec<EdgeRecord>, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::Validation(format!(
                "feature matrix has {} rows but graph has {num_nodes} nodes",
                features.nrows()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature matrix contains non-finite values".into()));
        }

        let mut merged: Vec<EdgeRecord> = Vec::with_capacity(edges.len());
        let mut slot: HashMap<(NodeId, NodeId), usize> = HashMap::with_capacity(edges.len());
        for e in edges {
            if e.src >= num_nodes || e.dst >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge {}-{} references a node outside 0..{num_nodes}",
                    e.src, e.dst
                )));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::Validation(format!(
                    "edge {}-{} has invalid weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            if e.src == e.dst {
                continue;
            }
            let key = (e.src.min(e.dst), e.src.max(e.dst));
            match slot.get(&key) {
                Some(&k) => merged[k].weight += e.weight,
                None => {
                    slot.insert(key, merged.len());
                    // Keep the user endpoint first for user-item edges so the
                    // kind inference below stays meaningful.
                    let (src, dst) = if e.etype == EdgeType::UserItem {
                        (e.src, e.dst)
                    } else {
                        key
                    };
                    merged.push(EdgeRecord { src, dst, ..e });
                }
            }
        }

        let node_kind = infer_kinds(num_nodes, &merged)?;
        let mut adjacency = vec![Vec::new(); num_nodes];
        for e in &merged {
            adjacency[e.src].push(e.dst);
            adjacency[e.dst].push(e.src);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        Ok(AttributedGraph {
            num_nodes,
            node_kind,
            edges: merged,
            features,
            labels: None,
            r0: None,
            adjacency,
        })
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        for (&node, &class) in &labels {
            if node >= self.num_nodes {
                return Err(Error::Validation(format!("label references unknown node {node}")));
            }
            if class > 1 {
                return Err(Error::Validation(format!(
                    "node {node} has class {class}; only 0 and 1 are allowed"
                )));
            }
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_r0(mut self, r0: Array2<f64>) -> Result<Self> {
        validate_assignment(&r0, self.num_nodes)?;
        self.r0 = Some(r0);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn node_kinds(&self) -> &[NodeKind] {
        &self.node_kind
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn r0(&self) -> Option<&Array2<f64>> {
        self.r0.as_ref()
    }

    pub fn is_heterogeneous(&self) -> bool {
        let users = self.node_kind.iter().filter(|k| **k == NodeKind::User).count();
        users != 0 && users != self.num_nodes
    }

    pub fn has_signed_edges(&self) -> bool {
        self.edges.iter().any(|e| e.sign == Sign::Negative)
    }

    /// Every node sharing an edge with `i`, sorted ascending.
    pub fn neighbors(&self, i: NodeId) -> Result<&[NodeId]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Validation(format!("node {i} is outside 0..{}", self.num_nodes)))
    }

    pub fn is_edge(&self, i: NodeId, j: NodeId) -> bool {
        self.adjacency
            .get(i)
            .is_some_and(|list| list.binary_search(&j).is_ok())
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency.get(i).map_or(0, Vec::len)
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let mean_degree = if self.num_nodes == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.num_nodes as f64
        };
        DegreeStats {
            mean_degree,
            max_degree: self.adjacency.iter().map(Vec::len).max().unwrap_or(0),
            edge_count: self.edges.len(),
            node_count: self.num_nodes,
        }
    }

    /// Encoder input: `X`, with a user/item one-hot appended for
    /// heterogeneous graphs.
    pub fn model_features(&self) -> Array2<f64> {
        if !self.is_heterogeneous() {
            return self.features.clone();
        }
        let mut kind = Array2::zeros((self.num_nodes, 2));
        for (i, k) in self.node_kind.iter().enumerate() {
            kind[[i, usize::from(*k == NodeKind::Item)]] = 1.0;
        }
        concatenate(Axis(1), &[self.features.view(), kind.view()])
            .expect("row counts agree by construction")
    }

    /// Returns a copy with extra nodes and edges appended. Existing nodes,
    /// edges and their order are untouched.
    pub fn extended(&self, extra_features: &Array2<f64>, extra_edges: Vec<EdgeRecord>) -> Result<Self> {
        if extra_features.ncols() != self.features.ncols() {
            return Err(Error::Validation(format!(
                "extra features have {} columns, graph has {}",
                extra_features.ncols(),
                self.features.ncols()
            )));
        }
        let features = concatenate(Axis(0), &[self.features.view(), extra_features.view()])
            .expect("column counts checked above");
        let n = self.num_nodes + extra_features.nrows();
        let mut edges = self.edges.clone();
        edges.extend(extra_edges);
        let mut g = AttributedGraph::new(n, edges, features)?;
        g.labels = self.labels.clone();
        Ok(g)
    }
}

fn infer_kinds(num_nodes: usize, edges: &[EdgeRecord]) -> Result<Vec<NodeKind>> {
    let mut kind: Vec<Option<NodeKind>> = vec![None; num_nodes];
    let mut set = |node: NodeId, k: NodeKind| -> Result<()> {
        match kind[node] {
            Some(prev) if prev != k => Err(Error::Validation(format!(
                "node {node} appears both as a user and as an item"
            ))),
            _ => {
                kind[node] = Some(k);
                Ok(())
            }
        }
    };
    for e in edges {
        let (a, b) = match e.etype {
            EdgeType::UserUser => (NodeKind::User, NodeKind::User),
            EdgeType::UserItem => (NodeKind::User, NodeKind::Item),
            EdgeType::ItemItem => (NodeKind::Item, NodeKind::Item),
        };
        set(e.src, a)?;
        set(e.dst, b)?;
    }
    Ok(kind.into_iter().map(|k| k.unwrap_or(NodeKind::User)).collect())
}

/// Checks that `r` is an `n x 2` row-stochastic matrix (rows sum to 1 within 1e-9).
pub fn validate_assignment(r: &Array2<f64>, n: usize) -> Result<()> {
    if r.nrows() != n || r.ncols() != 2 {
        return Err(Error::Validation(format!(
            "assignment must be {n}x2, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    for (i, row) in r.outer_iter().enumerate() {
        if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation(format!("assignment row {i} has entries outside [0,1]")));
        }
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("assignment row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}
