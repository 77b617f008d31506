//! Exact bipartite transportation on integer-scaled marginals.
//!
//! Masses are scaled by 2^50 and rounded; each side is then balanced to sum
//! to exactly the scale so that max-flow saturation is an exact test. Costs
//! are nonnegative integers and the min-cost solution is found by successive
//! shortest augmenting paths (Bellman-Ford on the residual graph).

use std::collections::VecDeque;

pub(crate) const SCALE: i64 = 1 << 50;

/// Scales nonnegative weights to integers summing exactly to [`SCALE`].
///
/// Weights at or below `eps` become zero. Returns `None` when nothing is left.
pub(crate) fn scale_weights(weights: &[f64], eps: f64) -> Option<Vec<i64>> {
    let mass: f64 = weights.iter().filter(|w| **w > eps).sum();
    if mass <= 0.0 {
        return None;
    }
    let mut out: Vec<i64> = weights
        .iter()
        .map(|&w| {
            if w > eps {
                ((w / mass) * SCALE as f64).round() as i64
            } else {
                0
            }
        })
        .collect();
    let total: i64 = out.iter().sum();
    let (imax, _) = out.iter().enumerate().max_by_key(|(_, v)| **v)?;
    out[imax] += SCALE - total;
    Some(out)
}

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: i64,
    cost: i128,
}

struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: i128) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[to].push(id + 1);
        id
    }

    /// Cheapest residual path from `s` to `t`, as the list of edge ids.
    fn shortest_path(&self, s: usize, t: usize) -> Option<Vec<usize>> {
        let n = self.adj.len();
        let mut dist: Vec<Option<i128>> = vec![None; n];
        let mut via: Vec<Option<usize>> = vec![None; n];
        let mut queued = vec![false; n];
        let mut queue = VecDeque::new();
        dist[s] = Some(0);
        queue.push_back(s);
        queued[s] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            let du = dist[u].expect("queued nodes have a distance");
            for &e in &self.adj[u] {
                let edge = &self.edges[e];
                if edge.cap <= 0 {
                    continue;
                }
                let nd = du + edge.cost;
                if dist[edge.to].is_none_or(|d| nd < d) {
                    dist[edge.to] = Some(nd);
                    via[edge.to] = Some(e);
                    if !queued[edge.to] {
                        queued[edge.to] = true;
                        queue.push_back(edge.to);
                    }
                }
            }
        }
        dist[t]?;
        let mut path = Vec::new();
        let mut v = t;
        while v != s {
            let e = via[v]?;
            path.push(e);
            v = self.edges[e ^ 1].to;
        }
        path.reverse();
        Some(path)
    }

    fn reachable_from(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let edge = &self.edges[e];
                if edge.cap > 0 && !seen[edge.to] {
                    seen[edge.to] = true;
                    stack.push(edge.to);
                }
            }
        }
        seen
    }
}

/// Result of a transportation solve.
pub(crate) struct Plan {
    /// Integer mass shipped, indexed `[out][in]`.
    pub flow: Vec<Vec<i64>>,
    /// Integer supplies actually used for each source.
    pub supply: Vec<i64>,
    /// Shipped total; equals [`SCALE`] when every demand is met.
    pub shipped: i64,
    /// Targets not reachable from the source in the final residual graph.
    /// When `shipped < SCALE` this is the max-deficit target set.
    pub cut_targets: Vec<usize>,
}

/// Min-cost max-flow from `supply` (sources) to `demand` (targets).
///
/// `cost[out][in]` is `None` where shipping is forbidden.
pub(crate) fn solve(supply: &[i64], demand: &[i64], cost: &[Vec<Option<i128>>]) -> Plan {
    let n_in = supply.len();
    let n_out = demand.len();
    let src = 0;
    let sink = 1 + n_in + n_out;
    let mut net = Network::new(sink + 1);
    for (j, &s) in supply.iter().enumerate() {
        if s > 0 {
            net.add(src, 1 + j, s, 0);
        }
    }
    let mut middle = vec![vec![None; n_in]; n_out];
    for (i, row) in cost.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if let Some(c) = c {
                if supply[j] > 0 {
                    middle[i][j] = Some(net.add(1 + j, 1 + n_in + i, SCALE, *c));
                }
            }
        }
    }
    for (i, &d) in demand.iter().enumerate() {
        if d > 0 {
            net.add(1 + n_in + i, sink, d, 0);
        }
    }

    let mut shipped = 0i64;
    while let Some(path) = net.shortest_path(src, sink) {
        let push = path
            .iter()
            .map(|&e| net.edges[e].cap)
            .min()
            .expect("paths are nonempty");
        if push <= 0 {
            break;
        }
        for &e in &path {
            net.edges[e].cap -= push;
            net.edges[e ^ 1].cap += push;
        }
        shipped += push;
    }

    let flow = middle
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| e.map_or(0, |e: usize| net.edges[e ^ 1].cap))
                .collect()
        })
        .collect();
    let seen = net.reachable_from(src);
    let cut_targets = (0..n_out).filter(|&i| !seen[1 + n_in + i]).collect();
    Plan {
        flow,
        supply: supply.to_vec(),
        shipped,
        cut_targets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_weights_sum_exactly() {
        let w = scale_weights(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.0).unwrap();
        assert_eq!(w.iter().sum::<i64>(), SCALE);
        assert!(scale_weights(&[0.0, 0.0], 0.0).is_none());
    }

    #[test]
    fn min_cost_prefers_free_edges() {
        let half = SCALE / 2;
        let cost = vec![
            vec![Some(0), Some(5)],
            vec![Some(5), Some(0)],
        ];
        let plan = solve(&[half, half], &[half, half], &cost);
        assert_eq!(plan.shipped, SCALE);
        assert_eq!(plan.flow[0][0], half);
        assert_eq!(plan.flow[1][1], half);
        assert_eq!(plan.flow[0][1], 0);
    }

    #[test]
    fn deficit_cut_names_starved_targets() {
        let half = SCALE / 2;
        // only the second source may feed target 0, which wants everything
        let cost = vec![vec![None, Some(0)], vec![Some(0), Some(0)]];
        let plan = solve(&[half, half], &[SCALE, 0], &cost);
        assert_eq!(plan.shipped, half);
        assert_eq!(plan.cut_targets, vec![0]);
    }
}
