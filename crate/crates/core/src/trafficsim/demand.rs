//! Seeded Poisson vehicle arrivals at boundary sources.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::TrafficGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arrival {
    pub tick: u64,
    pub source: usize,
    /// Index into `graph.routes(source)`.
    pub route: usize,
}

/// Poisson arrivals for every tick in `[0, horizon_s / dt)`, sorted by tick then source.
///
/// Each vehicle picks a reachable exit uniformly, then one of that exit's
/// shortest routes uniformly.
pub fn generate_demand(graph: &TrafficGraph, rates: &[f64], seed: u64, horizon_s: f64, dt: f64) -> Result<Vec<Arrival>> {
    if rates.len() != graph.sources().len() {
        return Err(Error::shape(format!("{} rates for {} sources", rates.len(), graph.sources().len())));
    }
    if let Some(bad) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::config(format!("arrival rate must be finite and >= 0, got {bad}")));
    }
    if !(dt > 0.0) || !(horizon_s >= 0.0) {
        return Err(Error::config(format!("invalid horizon {horizon_s} s or step {dt} s")));
    }
    for (s, &rate) in rates.iter().enumerate() {
        if rate > 0.0 && graph.routes(s).is_empty() {
            let edge = &graph.edge(graph.sources()[s].edge).id;
            return Err(Error::Routing(format!("no exit reachable from source edge `{edge}`")));
        }
    }
    let dists: Vec<Option<Poisson<f64>>> = rates
        .iter()
        .map(|&r| if r > 0.0 { Poisson::new(r * dt).ok() } else { None })
        .collect();
    let ticks = (horizon_s / dt).round() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for tick in 0..ticks {
        for (source, dist) in dists.iter().enumerate() {
            let Some(dist) = dist else { continue };
            let count = dist.sample(&mut rng) as u64;
            let groups = graph.routes_by_exit(source);
            for _ in 0..count {
                let group = &groups[rng.random_range(0..groups.len())];
                let route = rng.random_range(group.clone());
                out.push(Arrival { tick, source, route });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trafficsim::load_network;

    #[test]
    fn zero_rate_is_empty() {
        let g = load_network("grid2x2").unwrap();
        let rates = vec![0.0; g.sources().len()];
        assert!(generate_demand(&g, &rates, 1, 2500.0, 1.0).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_schedule() {
        let g = load_network("grid5x5").unwrap();
        let a = generate_demand(&g, &g.source_rates(), 9, 2500.0, 1.0).unwrap();
        let b = generate_demand(&g, &g.source_rates(), 9, 2500.0, 1.0).unwrap();
        let c = generate_demand(&g, &g.source_rates(), 10, 2500.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn negative_rate_rejected() {
        let g = load_network("grid2x2").unwrap();
        let mut rates = g.source_rates();
        rates[0] = -1.0;
        assert!(matches!(generate_demand(&g, &rates, 1, 10.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn unreachable_exit_is_routing_error() {
        let g = TrafficGraph::from_json(
            r#"{"nodes": [{"id": "t", "kind": "terminal"}, {"id": "x"}],
                "edges": [{"id": "tx", "from": "t", "to": "x", "lanes": 1, "length_m": 50, "speed_mps": 10},
                          {"id": "xt", "from": "x", "to": "t", "lanes": 1, "length_m": 50, "speed_mps": 10}],
                "sources": [{"edge": "tx", "rate_veh_per_s": 0.1}]}"#,
        )
        .unwrap();
        assert!(matches!(generate_demand(&g, &[0.1], 1, 10.0, 1.0), Err(Error::Routing(_))));
    }
}
