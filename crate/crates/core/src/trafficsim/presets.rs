//! Built-in networks.
//!
//! `gridRxC` builds an R×C grid (e.g. `grid5x5`, `grid2x2`) with one boundary
//! terminal per open side of every border intersection. `non_euclidean8` is an
//! eight-intersection network with two three-way intersections and ten
//! external inputs; `non_euclidean4` is a four-intersection cut of the same
//! style.

use std::collections::BTreeMap;

use super::graph::{EdgeDoc, NodeDoc, NodeKind, SourceDoc, TopologyDocument};

pub const PRESET_NAMES: &[&str] = &["grid5x5", "grid2x2", "gridRxC", "non_euclidean8", "non_euclidean4"];

pub const EPISODE_SECONDS: f64 = 2500.0;
pub const GRID_ROAD_M: f64 = 100.0;
pub const SPEED_MPS: f64 = 13.89;
pub const GRID5X5_VEHICLES: f64 = 930.0;
pub const GRID2X2_VEHICLES: f64 = 150.0;
pub const NON_EUCLIDEAN8_VEHICLES: f64 = 250.0;
pub const NON_EUCLIDEAN4_VEHICLES: f64 = 125.0;

pub fn preset(name: &str) -> Option<TopologyDocument> {
    match name {
        "grid5x5" => Some(grid(5, 5, 3, GRID5X5_VEHICLES)),
        "grid2x2" => Some(grid(2, 2, 3, GRID2X2_VEHICLES)),
        "non_euclidean8" => Some(non_euclidean8()),
        "non_euclidean4" => Some(non_euclidean4()),
        _ => {
            let dims = name.strip_prefix("grid")?;
            let (r, c) = dims.split_once('x')?;
            let (r, c) = (r.parse().ok()?, c.parse().ok()?);
            if r == 0 || c == 0 {
                return None;
            }
            // same per-source rate as the 5x5 preset
            let rate = GRID5X5_VEHICLES / EPISODE_SECONDS / 20.0;
            Some(grid(r, c, 3, rate * 2.0 * (r + c) as f64 * EPISODE_SECONDS))
        }
    }
}

struct Builder {
    doc: TopologyDocument,
}

impl Builder {
    fn new(name: &str) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("preset".to_string(), serde_json::Value::String(name.to_string()));
        Builder { doc: TopologyDocument { nodes: vec![], edges: vec![], sources: vec![], meta } }
    }

    fn node(&mut self, id: String, kind: NodeKind) {
        self.doc.nodes.push(NodeDoc { id, kind, phase_program: None });
    }

    fn edge(&mut self, from: &str, to: &str, lanes: u32, length_m: f64) {
        self.doc.edges.push(EdgeDoc {
            id: format!("{from}->{to}"),
            from: from.to_string(),
            to: to.to_string(),
            lanes,
            length_m,
            speed_mps: SPEED_MPS,
        });
    }

    fn road(&mut self, a: &str, b: &str, lanes: u32, length_m: f64) {
        self.edge(a, b, lanes, length_m);
        self.edge(b, a, lanes, length_m);
    }

    /// Adds a terminal attached to `at`, with an entry source and an exit edge.
    fn terminal(&mut self, id: String, at: &str, lanes: u32, length_m: f64) {
        self.node(id.clone(), NodeKind::Terminal);
        self.road(&id, at, lanes, length_m);
        self.doc.sources.push(SourceDoc { edge: format!("{id}->{at}"), rate_veh_per_s: 0.0 });
    }

    /// Spreads `vehicles` per episode evenly over all sources.
    fn finish(mut self, vehicles: f64) -> TopologyDocument {
        let rate = vehicles / EPISODE_SECONDS / self.doc.sources.len() as f64;
        for s in &mut self.doc.sources {
            s.rate_veh_per_s = rate;
        }
        self.doc
    }
}

fn grid(rows: usize, cols: usize, lanes: u32, vehicles: f64) -> TopologyDocument {
    let mut b = Builder::new(&format!("grid{rows}x{cols}"));
    let id = |r: usize, c: usize| format!("i{r}_{c}");
    for r in 0..rows {
        for c in 0..cols {
            b.node(id(r, c), NodeKind::Intersection);
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                b.road(&id(r, c), &id(r, c + 1), lanes, GRID_ROAD_M);
            }
            if r + 1 < rows {
                b.road(&id(r, c), &id(r + 1, c), lanes, GRID_ROAD_M);
            }
        }
    }
    for c in 0..cols {
        b.terminal(format!("tN{c}"), &id(0, c), lanes, GRID_ROAD_M);
        b.terminal(format!("tS{c}"), &id(rows - 1, c), lanes, GRID_ROAD_M);
    }
    for r in 0..rows {
        b.terminal(format!("tW{r}"), &id(r, 0), lanes, GRID_ROAD_M);
        b.terminal(format!("tE{r}"), &id(r, cols - 1), lanes, GRID_ROAD_M);
    }
    b.finish(vehicles)
}

fn irregular(name: &str, n: usize, links: &[(usize, usize, f64)], terminals: &[usize], vehicles: f64) -> TopologyDocument {
    const LANES: u32 = 2;
    let mut b = Builder::new(name);
    for i in 0..n {
        b.node(format!("v{i}"), NodeKind::Intersection);
    }
    for &(x, y, len) in links {
        b.road(&format!("v{x}"), &format!("v{y}"), LANES, len);
    }
    for (i, &count) in terminals.iter().enumerate() {
        for t in 0..count {
            b.terminal(format!("t{i}_{t}"), &format!("v{i}"), LANES, GRID_ROAD_M);
        }
    }
    b.finish(vehicles)
}

fn non_euclidean8() -> TopologyDocument {
    let links = [
        (0, 1, 120.0),
        (1, 2, 90.0),
        (0, 3, 150.0),
        (1, 4, 100.0),
        (3, 4, 75.0),
        (4, 5, 130.0),
        (3, 6, 110.0),
        (5, 7, 85.0),
        (6, 7, 140.0),
        (5, 6, 95.0),
    ];
    // v2 and v4 are three-way intersections
    irregular("non_euclidean8", 8, &links, &[2, 1, 2, 1, 0, 1, 1, 2], NON_EUCLIDEAN8_VEHICLES)
}

fn non_euclidean4() -> TopologyDocument {
    let links = [(0, 1, 80.0), (1, 2, 140.0), (2, 3, 95.0), (1, 3, 120.0)];
    irregular("non_euclidean4", 4, &links, &[3, 1, 1, 2], NON_EUCLIDEAN4_VEHICLES)
}
