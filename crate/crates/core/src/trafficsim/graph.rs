//! Road graph: intersections, terminals, directed edges and precomputed routes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::phase::NUM_STAGES;
use super::presets;
use crate::{Error, Result};

/// Upper bound on the shortest routes kept per (source, exit) pair.
const MAX_ROUTES_PER_EXIT: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    #[default]
    Intersection,
    /// Boundary point where vehicles enter or leave the network.
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    #[serde(default)]
    pub kind: NodeKind,
    /// Incoming edge ids served by each of the four green stages.
    /// Omitted for terminals; for intersections a split program is generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_program: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub lanes: u32,
    pub length_m: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDoc {
    pub edge: String,
    pub rate_veh_per_s: f64,
}

/// JSON topology document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub sources: Vec<SourceDoc>,
    /// Free-form global attributes; carried along, never interpreted.
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub lanes: u32,
    pub length_m: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub edge: usize,
    pub rate: f64,
}

/// A full path from a source edge to an exit edge, inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub exit: usize,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone)]
struct SourceRoutes {
    routes: Vec<Route>,
    /// Route index ranges grouped by exit edge, in exit order.
    by_exit: Vec<std::ops::Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct TrafficGraph {
    doc: TopologyDocument,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    intersections: Vec<usize>,
    intersection_of: Vec<Option<usize>>,
    programs: Vec<[Vec<usize>; NUM_STAGES]>,
    sources: Vec<Source>,
    routes: Vec<SourceRoutes>,
}

impl TrafficGraph {
    pub fn from_document(doc: TopologyDocument) -> Result<Self> {
        let mut problems = Vec::new();
        let mut node_index = BTreeMap::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                problems.push(format!("duplicate node id `{}`", n.id));
            }
            if n.kind == NodeKind::Terminal && n.phase_program.is_some() {
                problems.push(format!("terminal `{}` has a phase program", n.id));
            }
        }
        let mut edge_index = BTreeMap::new();
        let mut edges = Vec::with_capacity(doc.edges.len());
        for (j, e) in doc.edges.iter().enumerate() {
            if edge_index.insert(e.id.clone(), j).is_some() {
                problems.push(format!("duplicate edge id `{}`", e.id));
            }
            let from = node_index.get(&e.from).copied();
            let to = node_index.get(&e.to).copied();
            if from.is_none() {
                problems.push(format!("edge `{}` references missing node `{}`", e.id, e.from));
            }
            if to.is_none() {
                problems.push(format!("edge `{}` references missing node `{}`", e.id, e.to));
            }
            if e.from == e.to {
                problems.push(format!("edge `{}` is a self-loop", e.id));
            }
            if !(e.length_m > 0.0 && e.length_m.is_finite()) {
                problems.push(format!("edge `{}` has nonpositive length {}", e.id, e.length_m));
            }
            if !(e.speed_mps > 0.0 && e.speed_mps.is_finite()) {
                problems.push(format!("edge `{}` has nonpositive speed {}", e.id, e.speed_mps));
            }
            if e.lanes < 1 {
                problems.push(format!("edge `{}` has no lanes", e.id));
            }
            if let (Some(f), Some(t)) = (from, to) {
                if doc.nodes[f].kind == NodeKind::Terminal && doc.nodes[t].kind == NodeKind::Terminal {
                    problems.push(format!("edge `{}` joins two terminals", e.id));
                }
                edges.push(Edge {
                    id: e.id.clone(),
                    from: f,
                    to: t,
                    lanes: e.lanes,
                    length_m: e.length_m,
                    speed_mps: e.speed_mps,
                });
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }

        let mut nodes: Vec<Node> = doc
            .nodes
            .iter()
            .map(|n| Node { id: n.id.clone(), kind: n.kind, incoming: Vec::new(), outgoing: Vec::new() })
            .collect();
        for (j, e) in edges.iter().enumerate() {
            nodes[e.from].outgoing.push(j);
            nodes[e.to].incoming.push(j);
        }

        let mut intersections = Vec::new();
        let mut intersection_of = vec![None; nodes.len()];
        let mut programs = Vec::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            if n.kind != NodeKind::Intersection {
                continue;
            }
            let incoming = &nodes[i].incoming;
            if incoming.is_empty() {
                problems.push(format!("intersection `{}` has no incoming edges", n.id));
                continue;
            }
            let program = match &n.phase_program {
                None => split_program(incoming),
                Some(stages) => match parse_program(&n.id, stages, incoming, &edge_index) {
                    Ok(p) => p,
                    Err(mut errs) => {
                        problems.append(&mut errs);
                        continue;
                    }
                },
            };
            intersection_of[i] = Some(intersections.len());
            intersections.push(i);
            programs.push(program);
        }

        let mut sources = Vec::new();
        for s in &doc.sources {
            match edge_index.get(&s.edge) {
                None => problems.push(format!("source references missing edge `{}`", s.edge)),
                Some(&j) => {
                    if nodes[edges[j].from].kind != NodeKind::Terminal {
                        problems.push(format!("source edge `{}` does not start at a terminal", s.edge));
                    }
                    if !(s.rate_veh_per_s >= 0.0 && s.rate_veh_per_s.is_finite()) {
                        problems.push(format!("source `{}` has invalid rate {}", s.edge, s.rate_veh_per_s));
                    }
                    sources.push(Source { edge: j, rate: s.rate_veh_per_s });
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }

        let mut graph = TrafficGraph {
            doc,
            nodes,
            edges,
            intersections,
            intersection_of,
            programs,
            sources,
            routes: Vec::new(),
        };
        graph.routes = (0..graph.sources.len()).map(|s| graph.shortest_routes(s)).collect();
        Ok(graph)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn document(&self) -> &TopologyDocument {
        &self.doc
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, j: usize) -> &Edge {
        &self.edges[j]
    }

    /// Number of signalised intersections (agents).
    pub fn num_intersections(&self) -> usize {
        self.intersections.len()
    }

    /// Node index of intersection `i`.
    pub fn intersection_node(&self, i: usize) -> usize {
        self.intersections[i]
    }

    pub fn intersection_of_node(&self, node: usize) -> Option<usize> {
        self.intersection_of[node]
    }

    pub fn intersection_id(&self, i: usize) -> &str {
        &self.nodes[self.intersections[i]].id
    }

    /// Incoming edges of intersection `i`, in document order.
    pub fn incoming(&self, i: usize) -> &[usize] {
        &self.nodes[self.intersections[i]].incoming
    }

    pub fn max_in_degree(&self) -> usize {
        (0..self.num_intersections()).map(|i| self.incoming(i).len()).max().unwrap_or(0)
    }

    pub fn program(&self, i: usize) -> &[Vec<usize>; NUM_STAGES] {
        &self.programs[i]
    }

    /// Intersection `i`'s neighbours: intersections at the far end of incoming edges.
    pub fn upstream_intersections(&self, i: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .incoming(i)
            .iter()
            .filter_map(|&j| self.intersection_of[self.edges[j].from])
            .collect();
        set.into_iter().collect()
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn source_rates(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.rate).collect()
    }

    /// Edges whose downstream node is a terminal.
    pub fn is_exit(&self, j: usize) -> bool {
        self.nodes[self.edges[j].to].kind == NodeKind::Terminal
    }

    pub fn routes(&self, source: usize) -> &[Route] {
        &self.routes[source].routes
    }

    pub fn route(&self, source: usize, route: usize) -> &Route {
        &self.routes[source].routes[route]
    }

    /// Route index ranges, one per reachable exit.
    pub fn routes_by_exit(&self, source: usize) -> &[std::ops::Range<usize>] {
        &self.routes[source].by_exit
    }

    /// All minimum-hop routes from a source edge to every reachable exit other than
    /// the one returning to the source's own terminal.
    fn shortest_routes(&self, source: usize) -> SourceRoutes {
        let src_edge = self.sources[source].edge;
        let origin_terminal = self.edges[src_edge].from;
        let start = self.edges[src_edge].to;
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        let mut queue = VecDeque::new();
        if self.nodes[start].kind == NodeKind::Intersection {
            dist[start] = 0;
            queue.push_back(start);
        }
        while let Some(u) = queue.pop_front() {
            for &j in &self.nodes[u].outgoing {
                let v = self.edges[j].to;
                if self.nodes[v].kind != NodeKind::Intersection {
                    continue;
                }
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
                if dist[v] == dist[u] + 1 {
                    pred[v].push(j);
                }
            }
        }

        let mut routes = Vec::new();
        let mut by_exit = Vec::new();
        for (exit, e) in self.edges.iter().enumerate() {
            if !self.is_exit(exit) || e.to == origin_terminal || dist[e.from] == usize::MAX {
                continue;
            }
            let first = routes.len();
            let mut stack = vec![(e.from, vec![exit])];
            while let Some((node, suffix)) = stack.pop() {
                if routes.len() - first >= MAX_ROUTES_PER_EXIT {
                    break;
                }
                if node == start {
                    let mut edges = vec![src_edge];
                    edges.extend(suffix.iter().rev());
                    routes.push(Route { exit, edges });
                    continue;
                }
                for &j in pred[node].iter().rev() {
                    let mut s = suffix.clone();
                    s.push(j);
                    stack.push((self.edges[j].from, s));
                }
            }
            by_exit.push(first..routes.len());
        }
        SourceRoutes { routes, by_exit }
    }
}

/// Stage `k` serves incoming approach `k mod in-degree`.
fn split_program(incoming: &[usize]) -> [Vec<usize>; NUM_STAGES] {
    std::array::from_fn(|k| vec![incoming[k % incoming.len()]])
}

fn parse_program(
    node: &str,
    stages: &[Vec<String>],
    incoming: &[usize],
    edge_index: &BTreeMap<String, usize>,
) -> std::result::Result<[Vec<usize>; NUM_STAGES], Vec<String>> {
    let mut problems = Vec::new();
    if stages.len() != NUM_STAGES {
        return Err(vec![format!("intersection `{node}` has {} stages, expected {NUM_STAGES}", stages.len())]);
    }
    let mut out: [Vec<usize>; NUM_STAGES] = Default::default();
    for (k, stage) in stages.iter().enumerate() {
        for id in stage {
            match edge_index.get(id) {
                Some(&j) if incoming.contains(&j) => out[k].push(j),
                _ => problems.push(format!("intersection `{node}` stage {k} lists `{id}`, not an incoming edge")),
            }
        }
    }
    for &j in incoming {
        if !out.iter().any(|s| s.contains(&j)) {
            problems.push(format!("intersection `{node}` never serves incoming edge {j}"));
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(problems)
    }
}

/// Loads a preset by name, or otherwise reads a topology document from a path.
pub fn load_network(name_or_path: &str) -> Result<TrafficGraph> {
    if let Some(doc) = presets::preset(name_or_path) {
        return TrafficGraph::from_document(doc);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::config(format!(
            "`{name_or_path}` is neither a preset ({}) nor a readable file",
            presets::PRESET_NAMES.join(", ")
        )));
    }
    TrafficGraph::from_json(&std::fs::read_to_string(path)?)
}
