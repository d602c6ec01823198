//! Edmonds-Karp maximum flow over real-valued capacities.

use std::collections::VecDeque;

pub type EdgeId = usize;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
    flow: f64,
}

/// Directed network with paired residual edges. Edge `e` and `e ^ 1` are
/// the forward and backward halves of one arc.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<EdgeId>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) -> EdgeId {
        assert!(cap >= 0.0, "capacities must be nonnegative");
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, flow: 0.0 });
        self.edges.push(Edge { to: from, cap: 0.0, flow: 0.0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    pub fn flow(&self, e: EdgeId) -> f64 {
        self.edges[e].flow
    }

    fn residual(&self, e: EdgeId) -> f64 {
        self.edges[e].cap - self.edges[e].flow
    }

    /// Pushes the maximum flow from `source` to `sink` and returns its value.
    /// Residual capacities at or below a scale-relative epsilon count as
    /// saturated, which keeps the augmentation count finite under rounding.
    pub fn max_flow(&mut self, source: usize, sink: usize) -> f64 {
        let scale = self
            .edges
            .iter()
            .map(|e| e.cap)
            .filter(|c| c.is_finite())
            .fold(0.0, f64::max);
        let eps = 1e-14 * scale.max(f64::MIN_POSITIVE);
        let n = self.num_nodes();
        let mut total = 0.0;
        loop {
            let mut parent: Vec<Option<EdgeId>> = vec![None; n];
            let mut seen = vec![false; n];
            seen[source] = true;
            let mut queue = VecDeque::from([source]);
            while let Some(u) = queue.pop_front() {
                if u == sink {
                    break;
                }
                for &e in &self.adj[u] {
                    let v = self.edges[e].to;
                    if !seen[v] && self.residual(e) > eps {
                        seen[v] = true;
                        parent[v] = Some(e);
                        queue.push_back(v);
                    }
                }
            }
            if !seen[sink] {
                return total;
            }
            let mut bottleneck = f64::INFINITY;
            let mut v = sink;
            while let Some(e) = parent[v] {
                bottleneck = bottleneck.min(self.residual(e));
                v = self.edges[e ^ 1].to;
            }
            if !bottleneck.is_finite() {
                // an all-infinite path: the flow is unbounded
                return f64::INFINITY;
            }
            let mut v = sink;
            while let Some(e) = parent[v] {
                self.edges[e].flow += bottleneck;
                self.edges[e ^ 1].flow -= bottleneck;
                v = self.edges[e ^ 1].to;
            }
            total += bottleneck;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let mut net = FlowNetwork::new(2);
        let e = net.add_edge(0, 1, 5.0);
        assert_eq!(net.max_flow(0, 1), 5.0);
        assert_eq!(net.flow(e), 5.0);
    }

    #[test]
    fn parallel_paths() {
        let mut net = FlowNetwork::new(4);
        net.add_edge(0, 1, 3.0);
        net.add_edge(1, 3, 3.0);
        net.add_edge(0, 2, 4.0);
        net.add_edge(2, 3, 4.0);
        assert_eq!(net.max_flow(0, 3), 7.0);
    }

    #[test]
    fn needs_backward_edge() {
        // classic instance where the first augmenting path must be undone
        let mut net = FlowNetwork::new(4);
        net.add_edge(0, 1, 1.0);
        net.add_edge(0, 2, 1.0);
        net.add_edge(1, 2, 1.0);
        net.add_edge(1, 3, 1.0);
        net.add_edge(2, 3, 1.0);
        assert_eq!(net.max_flow(0, 3), 2.0);
    }

    #[test]
    fn disconnected_sink() {
        let mut net = FlowNetwork::new(3);
        net.add_edge(0, 1, 2.0);
        assert_eq!(net.max_flow(0, 2), 0.0);
    }
}
