//! Discrete-time, queue-based traffic simulation on a directed road graph.
//!
//! Vehicles enter at boundary terminals, travel freely to the tail of the
//! queue on each edge, wait until their approach is green, and discharge at
//! saturation flow onto the next edge of their route.

mod demand;
mod graph;
mod metrics;
mod phase;
pub mod presets;
mod sim;
mod trace;

pub use demand::{generate_demand, Arrival};
pub use graph::{
    load_network, Edge, EdgeDoc, Node, NodeDoc, NodeKind, Route, Source, SourceDoc, TopologyDocument, TrafficGraph,
};
pub use metrics::{metrics, Metrics};
pub use phase::{phase_violations, PhaseMachine, PhaseTiming, Signal, NUM_STAGES};
pub use sim::{EdgeState, SimConfig, SimState, Simulator, Vehicle};
pub use trace::{DensityRow, Trace, TraceRow};
