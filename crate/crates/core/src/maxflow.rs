//! Dinic's maximum flow on real capacities.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    fn push_pair(&mut self, a: usize, b: usize, ab: f64, ba: f64) {
        self.adj[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(ab);
        self.adj[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(ba);
    }

    pub fn add_arc(&mut self, a: usize, b: usize, cap: f64) {
        self.push_pair(a, b, cap, 0.0);
    }

    pub fn add_undirected(&mut self, a: usize, b: usize, cap: f64) {
        self.push_pair(a, b, cap, cap);
    }

    fn levels(&self, s: usize, eps: f64) -> Vec<i64> {
        let mut level = vec![-1; self.adj.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            for &a in &self.adj[x] {
                let y = self.to[a];
                if level[y] < 0 && self.cap[a] > eps {
                    level[y] = level[x] + 1;
                    q.push_back(y);
                }
            }
        }
        level
    }

    fn augment(&mut self, x: usize, t: usize, limit: f64, level: &[i64], it: &mut [usize], eps: f64) -> f64 {
        if x == t {
            return limit;
        }
        while it[x] < self.adj[x].len() {
            let a = self.adj[x][it[x]];
            let y = self.to[a];
            if self.cap[a] > eps && level[y] == level[x] + 1 {
                let got = self.augment(y, t, limit.min(self.cap[a]), level, it, eps);
                if got > 0.0 {
                    self.cap[a] -= got;
                    self.cap[a ^ 1] += got;
                    return got;
                }
            }
            it[x] += 1;
        }
        0.0
    }

    /// Saturates the network and returns the flow value. Residual capacities
    /// at or below `eps` count as saturated.
    pub fn max_flow(&mut self, s: usize, t: usize, eps: f64) -> f64 {
        let mut total = 0.0;
        loop {
            let level = self.levels(s, eps);
            if level[t] < 0 {
                return total;
            }
            let mut it = vec![0; self.adj.len()];
            loop {
                let f = self.augment(s, t, f64::INFINITY, &level, &mut it, eps);
                if f <= 0.0 {
                    break;
                }
                total += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual network.
    pub fn source_side(&self, s: usize, eps: f64) -> Vec<bool> {
        self.levels(s, eps).into_iter().map(|l| l >= 0).collect()
    }
}
