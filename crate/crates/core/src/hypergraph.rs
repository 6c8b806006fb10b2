//! Unified scene hypergraph and random-walk hyperedge sampling.
//!
//! Nodes are entity instances (one per video, frame and tracked id) and
//! predicate categories (one per category, shared by all frames). Hyperedges
//! come from three places:
//!
//! * `spatial`: one per relationship triplet, `{subject, predicate, object}`;
//! * `transition`: one per positive procedural-graph weight, `{from, to}`;
//! * `sampled`: the node set visited by a random walk that alternates
//!   node -> incident hyperedge -> member node.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EntityId, PredicateId, PredicateVocab, VideoAnnotation};
use crate::procedural::ProceduralGraph;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HyperNode {
    Entity { video_id: String, frame_index: usize, entity_id: EntityId },
    Predicate(PredicateId),
}

impl HyperNode {
    pub fn entity(video_id: impl Into<String>, frame_index: usize, entity_id: EntityId) -> Self {
        HyperNode::Entity { video_id: video_id.into(), frame_index, entity_id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOrigin {
    Spatial,
    Transition,
    Sampled,
}

/// A hyperedge over at least two nodes.
///
/// Spatial and transition edges keep their members in role order
/// (`[subject, predicate, object]`, `[from, to]`); sampled edges are sets and
/// keep their members sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperedge {
    members: Vec<NodeId>,
    origin: EdgeOrigin,
    weight: Option<f64>,
}

impl Hyperedge {
    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn origin(&self) -> EdgeOrigin {
        self.origin
    }

    pub fn weight(&self) -> Option<f64> {
        self.weight
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.members.contains(&node)
    }

    /// Members sorted and deduplicated.
    pub fn member_set(&self) -> Vec<NodeId> {
        let mut s = self.members.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Identity used to reject duplicates of the same origin. Directed edges
    /// compare in role order so `a -> b` and `b -> a` are distinct.
    fn key(&self) -> (EdgeOrigin, Vec<NodeId>) {
        match self.origin {
            EdgeOrigin::Sampled => (self.origin, self.member_set()),
            _ => (self.origin, self.members.clone()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Hypergraph {
    vocab: Option<PredicateVocab>,
    nodes: Vec<HyperNode>,
    node_ids: HashMap<HyperNode, NodeId>,
    edges: Vec<Hyperedge>,
    incidence: Vec<Vec<EdgeId>>,
    edge_keys: HashSet<(EdgeOrigin, Vec<NodeId>)>,
    member_sets: HashSet<Vec<NodeId>>,
}

impl PartialEq for Hypergraph {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Hypergraph {
    pub fn new(vocab: PredicateVocab) -> Self {
        Self { vocab: Some(vocab), ..Default::default() }
    }

    pub fn vocab(&self) -> Option<&PredicateVocab> {
        self.vocab.as_ref()
    }

    pub fn nodes(&self) -> &[HyperNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&HyperNode> {
        self.nodes.get(id.0)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Hyperedge> {
        self.edges.get(id.0)
    }

    pub fn node_id(&self, node: &HyperNode) -> Option<NodeId> {
        self.node_ids.get(node).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn count_origin(&self, origin: EdgeOrigin) -> usize {
        self.edges.iter().filter(|e| e.origin == origin).count()
    }

    /// Insert a node, returning the existing id if it is already present.
    pub fn add_node(&mut self, node: HyperNode) -> NodeId {
        if let Some(&id) = self.node_ids.get(&node) {
            return id;
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(node.clone());
        self.node_ids.insert(node, id);
        self.incidence.push(Vec::new());
        id
    }

    /// Insert a hyperedge. Returns `Ok(None)` when an identical edge of the
    /// same origin already exists.
    pub fn add_edge(&mut self, members: Vec<NodeId>, origin: EdgeOrigin, weight: Option<f64>) -> Result<Option<EdgeId>> {
        if let Some(bad) = members.iter().find(|m| m.0 >= self.nodes.len()) {
            return Err(Error::Argument(format!("edge member {} is not a node", bad.0)));
        }
        let mut edge = Hyperedge { members, origin, weight };
        if origin == EdgeOrigin::Sampled {
            edge.members = edge.member_set();
        }
        let set = edge.member_set();
        if set.len() < 2 {
            return Err(Error::Argument("a hyperedge needs at least two distinct members".into()));
        }
        match origin {
            EdgeOrigin::Spatial if edge.members.len() != 3 => {
                return Err(Error::Argument("spatial edges have exactly three members".into()))
            }
            EdgeOrigin::Transition if edge.members.len() != 2 => {
                return Err(Error::Argument("transition edges have exactly two members".into()))
            }
            _ => {}
        }
        if !self.edge_keys.insert(edge.key()) {
            return Ok(None);
        }
        let id = EdgeId(self.edges.len());
        for &m in &set {
            self.incidence[m.0].push(id);
        }
        self.member_sets.insert(set);
        self.edges.push(edge);
        Ok(Some(id))
    }

    /// Whether any edge, of any origin, has exactly this member set.
    pub fn has_member_set(&self, sorted_members: &[NodeId]) -> bool {
        self.member_sets.contains(sorted_members)
    }

    /// Edges containing `node`, in insertion order.
    pub fn incident_hyperedges(&self, node: NodeId) -> Result<&[EdgeId]> {
        self.incidence
            .get(node.0)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Argument(format!("unknown node {}", node.0)))
    }

    /// Every edge as `(origin, member nodes)`; handy for structural comparison.
    pub fn edge_payloads(&self) -> Vec<(EdgeOrigin, Vec<&HyperNode>)> {
        self.edges
            .iter()
            .map(|e| (e.origin, e.members.iter().map(|m| &self.nodes[m.0]).collect()))
            .collect()
    }

    fn node_label(&self, node: &HyperNode) -> String {
        match node {
            HyperNode::Entity { video_id, frame_index, entity_id } => format!("{video_id}@{frame_index}#{entity_id}"),
            HyperNode::Predicate(p) => self
                .vocab
                .as_ref()
                .and_then(|v| v.name(*p))
                .map(str::to_string)
                .unwrap_or_else(|| format!("predicate {p}")),
        }
    }

    /// Graphviz rendering: nodes plus one hub point per hyperedge.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph hypergraph {\n  node [shape=ellipse];\n");
        for (i, node) in self.nodes.iter().enumerate() {
            let label = self.node_label(node).replace('"', "\\\"");
            match node {
                HyperNode::Entity { .. } => writeln!(out, "  n{i} [label=\"{label}\"];").unwrap(),
                HyperNode::Predicate(_) => writeln!(
                    out,
                    "  n{i} [label=\"{label}\", shape=box, style=filled, fillcolor=palegreen];"
                )
                .unwrap(),
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let (color, label) = match (e.origin, e.weight) {
                (EdgeOrigin::Spatial, _) => ("gray40", String::new()),
                (EdgeOrigin::Transition, Some(w)) => ("red", format!("{w:.3}")),
                (EdgeOrigin::Transition, None) => ("red", String::new()),
                (EdgeOrigin::Sampled, _) => ("blue", String::new()),
            };
            writeln!(out, "  e{i} [shape=point, color={color}, xlabel=\"{label}\"];").unwrap();
            for m in &e.members {
                writeln!(out, "  e{i} -- n{} [color={color}];", m.0).unwrap();
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = HypergraphDoc {
            vocab: self.vocab.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| match n {
                    HyperNode::Entity { video_id, frame_index, entity_id } => NodeDoc::Entity {
                        video_id: video_id.clone(),
                        frame_index: *frame_index,
                        entity_id: *entity_id,
                    },
                    HyperNode::Predicate(p) => NodeDoc::Predicate {
                        predicate: *p,
                        name: self.vocab.as_ref().and_then(|v| v.name(*p)).map(str::to_string),
                    },
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc { members: e.members.clone(), origin: e.origin, weight: e.weight })
                .collect(),
        };
        let mut s = crate::jsonfmt::to_string(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HypergraphDoc = crate::ingest::parse_json(text)?;
        let mut h = Hypergraph { vocab: doc.vocab, ..Default::default() };
        for n in doc.nodes {
            let node = match n {
                NodeDoc::Entity { video_id, frame_index, entity_id } => {
                    HyperNode::Entity { video_id, frame_index, entity_id }
                }
                NodeDoc::Predicate { predicate, .. } => HyperNode::Predicate(predicate),
            };
            if h.node_ids.contains_key(&node) {
                return Err(Error::Argument(format!("duplicate node {node:?}")));
            }
            h.add_node(node);
        }
        for e in doc.edges {
            if h.add_edge(e.members, e.origin, e.weight)?.is_none() {
                return Err(Error::Argument("duplicate hyperedge".into()));
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HypergraphDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<PredicateVocab>,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeDoc {
    Entity {
        video_id: String,
        frame_index: usize,
        entity_id: EntityId,
    },
    Predicate {
        predicate: PredicateId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeDoc {
    members: Vec<NodeId>,
    origin: EdgeOrigin,
    weight: Option<f64>,
}

/// Union of all frame scene graphs and the procedural graph.
///
/// Nodes are created in annotation order: for each video and frame, its
/// entities, then predicate nodes as triplets first mention them, then any
/// predicates only reached through the procedural graph.
pub fn unify_hypergraph(videos: &[VideoAnnotation], pg: &ProceduralGraph) -> Result<Hypergraph> {
    let vocab = pg.vocab();
    let mut h = Hypergraph::new(vocab.clone());
    for video in videos {
        if &video.vocab != vocab {
            return Err(Error::Config(format!(
                "video {:?} uses vocabulary {:?} but the procedural graph uses {:?}",
                video.video_id,
                video.vocab.names(),
                vocab.names()
            )));
        }
        for frame in &video.frames {
            let t = frame.frame_index;
            for e in &frame.entities {
                h.add_node(HyperNode::entity(video.video_id.as_str(), t, e.entity_id));
            }
            for tr in &frame.triplets {
                let s = h.add_node(HyperNode::entity(video.video_id.as_str(), t, tr.subject));
                let p = h.add_node(HyperNode::Predicate(tr.predicate));
                let o = h.add_node(HyperNode::entity(video.video_id.as_str(), t, tr.object));
                h.add_edge(vec![s, p, o], EdgeOrigin::Spatial, None)?;
            }
        }
    }
    for (from, to, w) in pg.edges() {
        let a = h.add_node(HyperNode::Predicate(from));
        let b = h.add_node(HyperNode::Predicate(to));
        h.add_edge(vec![a, b], EdgeOrigin::Transition, Some(w))?;
    }
    Ok(h)
}

/// Edges containing `node`, in insertion order; an unknown node is an error.
pub fn incident_hyperedges(h: &Hypergraph, node: NodeId) -> Result<&[EdgeId]> {
    h.incident_hyperedges(node)
}

/// Random-walk parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    num_walks: usize,
    walk_length: usize,
    pub seed: u64,
    /// Pick incident edges proportionally to their weight (transition edges
    /// carry `w`, all others count 1) instead of uniformly.
    pub weight_transitions: bool,
}

pub const DEFAULT_NUM_WALKS: usize = 60;
pub const DEFAULT_WALK_LENGTH: usize = 7;

impl Default for WalkConfig {
    fn default() -> Self {
        Self { num_walks: DEFAULT_NUM_WALKS, walk_length: DEFAULT_WALK_LENGTH, seed: 0, weight_transitions: false }
    }
}

impl WalkConfig {
    pub fn new(num_walks: usize, walk_length: usize, seed: u64) -> Result<Self> {
        if num_walks == 0 || walk_length == 0 {
            return Err(Error::Argument("num_walks and walk_length must both be at least 1".into()));
        }
        Ok(Self { num_walks, walk_length, seed, weight_transitions: false })
    }

    pub fn num_walks(&self) -> usize {
        self.num_walks
    }

    pub fn walk_length(&self) -> usize {
        self.walk_length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkStep {
    Node(NodeId),
    Edge(EdgeId),
}

/// Sequence visited by one walk: node, edge, node, edge, ...
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkTrace {
    pub steps: Vec<WalkStep>,
}

impl WalkTrace {
    /// Distinct visited nodes, sorted.
    pub fn node_set(&self) -> Vec<NodeId> {
        let mut nodes: Vec<NodeId> = self
            .steps
            .iter()
            .filter_map(|s| match s {
                WalkStep::Node(n) => Some(*n),
                WalkStep::Edge(_) => None,
            })
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

#[derive(Debug, Clone)]
pub struct WalkOutcome {
    pub graph: Hypergraph,
    pub traces: Vec<WalkTrace>,
    /// Ids (in `graph`) of the sampled edges that were added.
    pub added: Vec<EdgeId>,
}

/// Run walk number `index` on `h`.
///
/// Draws come from stream `(cfg.seed, index)`: one for the start node, then
/// one per step. Odd steps move from the current node to an incident edge,
/// even steps from that edge to one of its members. A node without incident
/// edges ends the walk early.
pub fn walk_once(h: &Hypergraph, cfg: &WalkConfig, index: usize) -> WalkTrace {
    let mut steps = Vec::with_capacity(cfg.walk_length + 1);
    if h.nodes.is_empty() {
        return WalkTrace { steps };
    }
    let mut rng = SeededRng::with_stream(cfg.seed, index as u64);
    let mut node = NodeId(rng.index(h.nodes.len()));
    steps.push(WalkStep::Node(node));
    let mut edge = EdgeId(0);
    for j in 1..=cfg.walk_length {
        if j % 2 == 1 {
            let incident = &h.incidence[node.0];
            if incident.is_empty() {
                break;
            }
            let pick = if cfg.weight_transitions {
                let weights: Vec<f64> = incident
                    .iter()
                    .map(|e| match &h.edges[e.0] {
                        Hyperedge { origin: EdgeOrigin::Transition, weight: Some(w), .. } => *w,
                        _ => 1.0,
                    })
                    .collect();
                rng.weighted_index(&weights).unwrap_or(0)
            } else {
                rng.index(incident.len())
            };
            edge = incident[pick];
            steps.push(WalkStep::Edge(edge));
        } else {
            let members = &h.edges[edge.0].members;
            node = members[rng.index(members.len())];
            steps.push(WalkStep::Node(node));
        }
    }
    WalkTrace { steps }
}

/// Augment `h` with random-walk hyperedges, returning the walk traces too.
///
/// Walks run in parallel but see only the input graph; candidates are then
/// admitted in walk order when they have at least two nodes and their member
/// set is not already an edge of the input or an earlier sample.
pub fn random_walk_traced(h: &Hypergraph, cfg: &WalkConfig) -> WalkOutcome {
    let traces: Vec<WalkTrace> = (0..cfg.num_walks).into_par_iter().map(|i| walk_once(h, cfg, i)).collect();
    let mut graph = h.clone();
    let mut added = Vec::new();
    for trace in &traces {
        let set = trace.node_set();
        if set.len() < 2 || graph.has_member_set(&set) {
            continue;
        }
        if let Ok(Some(id)) = graph.add_edge(set, EdgeOrigin::Sampled, None) {
            added.push(id);
        }
    }
    WalkOutcome { graph, traces, added }
}

/// Augment `h` with random-walk hyperedges. The input is left unchanged.
pub fn random_walk_construct(h: &Hypergraph, cfg: &WalkConfig) -> Hypergraph {
    random_walk_traced(h, cfg).graph
}
