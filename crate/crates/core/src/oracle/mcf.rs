//! Minimum-cost flow by successive shortest paths.
//!
//! Capacities are integral, so the optimum found is integral and equals the
//! LP optimum of the same network. Arc costs must be nonnegative; paths are
//! found with Bellman-Ford on the residual graph, which is plenty for the
//! handful of nodes the oracle ever builds.

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: i64,
    cost: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MinCostFlow {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResult {
    pub flow: i64,
    pub cost: f64,
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds `from -> to` and returns its handle for [`MinCostFlow::flow_on`].
    pub fn add_arc(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        assert!(cap >= 0 && cost >= 0.0, "arc data must be nonnegative");
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    pub fn flow_on(&self, arc: usize) -> i64 {
        self.arcs[arc ^ 1].cap
    }

    /// Pushes up to `limit` units from `s` to `t` at minimum cost.
    pub fn run(&mut self, s: usize, t: usize, limit: i64) -> FlowResult {
        let n = self.adj.len();
        let mut flow = 0;
        let mut cost = 0.0;
        while flow < limit {
            let mut dist = vec![f64::INFINITY; n];
            let mut via: Vec<Option<usize>> = vec![None; n];
            dist[s] = 0.0;
            // Bellman-Ford; the residual graph has no negative cycles.
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if dist[u] == f64::INFINITY {
                        continue;
                    }
                    for &a in &self.adj[u] {
                        let arc = &self.arcs[a];
                        if arc.cap > 0 && dist[u] + arc.cost < dist[arc.to] - 1e-12 {
                            dist[arc.to] = dist[u] + arc.cost;
                            via[arc.to] = Some(a);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t] == f64::INFINITY {
                break;
            }
            let mut push = limit - flow;
            let mut v = t;
            while let Some(a) = via[v] {
                push = push.min(self.arcs[a].cap);
                v = self.arcs[a ^ 1].to;
            }
            let mut v = t;
            while let Some(a) = via[v] {
                self.arcs[a].cap -= push;
                self.arcs[a ^ 1].cap += push;
                cost += push as f64 * self.arcs[a].cost;
                v = self.arcs[a ^ 1].to;
            }
            flow += push;
        }
        FlowResult { flow, cost }
    }
}
