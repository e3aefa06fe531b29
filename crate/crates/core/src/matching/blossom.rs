//! Dense primal-dual blossom solver for maximum-weight matching.
//!
//! The solver works on strictly positive integer weights over a complete
//! graph, which makes every maximum-weight matching perfect when the vertex
//! count is even. Dual variables are kept in doubled units so every update
//! stays integral: for an edge `(u, v)` the slack is
//! `lab[u] + lab[v] - 2 w(u, v) + sum of lab[B]` over blossoms `B` holding
//! both endpoints.
//!
//! Vertices are 1-based internally; index 0 is the null vertex. Indices
//! `n + 1 ..= 2n` are reused for blossoms.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Copy, Default)]
struct Edge {
    u: u32,
    v: u32,
    w: i64,
}

const EVEN: i8 = 0;
const ODD: i8 = 1;
const FREE: i8 = -1;

pub(crate) struct DenseBlossom {
    n: usize,
    nx: usize,
    stride: usize,
    g: Vec<Edge>,
    lab: Vec<i64>,
    mate: Vec<usize>,
    slack: Vec<usize>,
    /// `delta(edge(slack[x], x))`, refreshed after every dual update.
    slack_d: Vec<i64>,
    st: Vec<usize>,
    pa: Vec<usize>,
    flower_from: Vec<u32>,
    label: Vec<i8>,
    vis: Vec<u32>,
    stamp: u32,
    flower: Vec<Vec<usize>>,
    queue: VecDeque<usize>,
}

/// Final state of a solve: 0-based partner array plus the dual solution.
pub(crate) struct BlossomOutcome {
    pub partner: Vec<usize>,
    /// Vertex duals (doubled units), 0-based.
    pub vertex_duals: Vec<i64>,
    /// Blossoms alive at termination: 0-based member vertices and dual.
    pub blossoms: Vec<(Vec<usize>, i64)>,
}

impl DenseBlossom {
    /// `weight(i, j)` for 0-based `i != j` must be strictly positive and symmetric.
    pub(crate) fn new(n: usize, weight: impl Fn(usize, usize) -> i64) -> Self {
        let stride = 2 * n + 1;
        let mut g = vec![Edge::default(); stride * stride];
        for u in 1..=n {
            for v in 1..=n {
                let w = if u == v { 0 } else { weight(u - 1, v - 1) };
                debug_assert!(u == v || w > 0);
                g[u * stride + v] = Edge {
                    u: u as u32,
                    v: v as u32,
                    w,
                };
            }
        }
        let mut flower_from = vec![0u32; stride * (n + 1)];
        for u in 1..=n {
            flower_from[u * (n + 1) + u] = u as u32;
        }
        DenseBlossom {
            n,
            nx: n,
            stride,
            g,
            lab: vec![0; stride],
            mate: vec![0; stride],
            slack: vec![0; stride],
            slack_d: vec![0; stride],
            st: (0..stride).map(|i| if i <= n { i } else { 0 }).collect(),
            pa: vec![0; stride],
            flower_from,
            label: vec![FREE; stride],
            vis: vec![0; stride],
            stamp: 0,
            flower: vec![Vec::new(); stride],
            queue: VecDeque::new(),
        }
    }

    #[inline]
    fn edge(&self, u: usize, v: usize) -> Edge {
        self.g[u * self.stride + v]
    }

    #[inline]
    fn delta(&self, e: Edge) -> i64 {
        self.lab[e.u as usize] + self.lab[e.v as usize] - 2 * e.w
    }

    #[inline]
    fn ff(&self, b: usize, x: usize) -> usize {
        self.flower_from[b * (self.n + 1) + x] as usize
    }

    #[inline]
    fn update_slack(&mut self, u: usize, x: usize) {
        let d = self.delta(self.edge(u, x));
        self.offer_slack(u, x, d);
    }

    /// `d` must equal `delta(edge(u, x))`.
    #[inline]
    fn offer_slack(&mut self, u: usize, x: usize, d: i64) {
        if self.slack[x] == 0 || d < self.slack_d[x] {
            self.slack[x] = u;
            self.slack_d[x] = d;
        }
    }

    fn refresh_slack_deltas(&mut self) {
        for x in 1..=self.nx {
            let s = self.slack[x];
            if s != 0 {
                self.slack_d[x] = self.delta(self.edge(s, x));
            }
        }
    }

    fn set_slack(&mut self, x: usize) {
        self.slack[x] = 0;
        for u in 1..=self.n {
            if self.edge(u, x).w > 0 && self.st[u] != x && self.label[self.st[u]] == EVEN {
                self.update_slack(u, x);
            }
        }
    }

    fn queue_push(&mut self, x: usize) {
        if x <= self.n {
            self.queue.push_back(x);
        } else {
            for i in 0..self.flower[x].len() {
                let c = self.flower[x][i];
                self.queue_push(c);
            }
        }
    }

    fn set_st(&mut self, x: usize, b: usize) {
        self.st[x] = b;
        if x > self.n {
            for i in 0..self.flower[x].len() {
                let c = self.flower[x][i];
                self.set_st(c, b);
            }
        }
    }

    fn get_pr(&mut self, b: usize, xr: usize) -> usize {
        let f = &mut self.flower[b];
        let pr = f.iter().position(|&c| c == xr).expect("sub-blossom not in flower");
        if pr % 2 == 1 {
            f[1..].reverse();
            f.len() - pr
        } else {
            pr
        }
    }

    fn set_match(&mut self, u: usize, v: usize) {
        let e = self.edge(u, v);
        self.mate[u] = e.v as usize;
        if u > self.n {
            let xr = self.ff(u, e.u as usize);
            let pr = self.get_pr(u, xr);
            for i in 0..pr {
                let a = self.flower[u][i];
                let b = self.flower[u][i ^ 1];
                self.set_match(a, b);
            }
            self.set_match(xr, v);
            self.flower[u].rotate_left(pr);
        }
    }

    fn augment(&mut self, mut u: usize, mut v: usize) {
        loop {
            let xnv = self.st[self.mate[u]];
            self.set_match(u, v);
            if xnv == 0 {
                return;
            }
            let next = self.st[self.pa[xnv]];
            self.set_match(xnv, next);
            u = next;
            v = xnv;
        }
    }

    fn get_lca(&mut self, mut u: usize, mut v: usize) -> usize {
        self.stamp += 1;
        let t = self.stamp;
        while u != 0 || v != 0 {
            if u != 0 {
                if self.vis[u] == t {
                    return u;
                }
                self.vis[u] = t;
                u = self.st[self.mate[u]];
                if u != 0 {
                    u = self.st[self.pa[u]];
                }
            }
            core::mem::swap(&mut u, &mut v);
        }
        0
    }

    fn add_blossom(&mut self, u: usize, lca: usize, v: usize) {
        let n = self.n;
        let mut b = n + 1;
        while b <= self.nx && self.st[b] != 0 {
            b += 1;
        }
        if b > self.nx {
            self.nx += 1;
        }
        self.lab[b] = 0;
        self.label[b] = EVEN;
        self.mate[b] = self.mate[lca];

        let mut flower = vec![lca];
        let mut pushed = Vec::new();
        let mut x = u;
        while x != lca {
            let y = self.st[self.mate[x]];
            flower.push(x);
            flower.push(y);
            pushed.push(y);
            x = self.st[self.pa[y]];
        }
        flower[1..].reverse();
        let mut x = v;
        while x != lca {
            let y = self.st[self.mate[x]];
            flower.push(x);
            flower.push(y);
            pushed.push(y);
            x = self.st[self.pa[y]];
        }
        self.flower[b] = flower;
        for y in pushed {
            self.queue_push(y);
        }
        self.set_st(b, b);

        let s = self.stride;
        for x in 1..=self.nx {
            self.g[b * s + x].w = 0;
            self.g[x * s + b].w = 0;
        }
        let row = b * (n + 1);
        self.flower_from[row + 1..row + n + 1].fill(0);
        for i in 0..self.flower[b].len() {
            let xs = self.flower[b][i];
            for x in 1..=self.nx {
                let cur = self.g[b * s + x];
                let cand = self.g[xs * s + x];
                if cur.w == 0 || self.delta(cand) < self.delta(cur) {
                    self.g[b * s + x] = cand;
                    self.g[x * s + b] = self.g[x * s + xs];
                }
            }
            for x in 1..=n {
                if self.ff(xs, x) != 0 {
                    self.flower_from[row + x] = xs as u32;
                }
            }
        }
        self.set_slack(b);
    }

    fn expand_blossom(&mut self, b: usize) {
        for i in 0..self.flower[b].len() {
            let c = self.flower[b][i];
            self.set_st(c, c);
        }
        let xr = self.ff(b, self.edge(b, self.pa[b]).u as usize);
        let pr = self.get_pr(b, xr);
        let mut i = 0;
        while i < pr {
            let xs = self.flower[b][i];
            let xns = self.flower[b][i + 1];
            self.pa[xs] = self.edge(xns, xs).u as usize;
            self.label[xs] = ODD;
            self.label[xns] = EVEN;
            self.slack[xs] = 0;
            self.set_slack(xns);
            self.queue_push(xns);
            i += 2;
        }
        self.label[xr] = ODD;
        self.pa[xr] = self.pa[b];
        for i in pr + 1..self.flower[b].len() {
            let xs = self.flower[b][i];
            self.label[xs] = FREE;
            self.set_slack(xs);
        }
        self.st[b] = 0;
    }

    fn on_found_edge(&mut self, e: Edge) -> bool {
        let u = self.st[e.u as usize];
        let v = self.st[e.v as usize];
        if self.label[v] == FREE {
            self.pa[v] = e.u as usize;
            self.label[v] = ODD;
            let nu = self.st[self.mate[v]];
            self.slack[v] = 0;
            self.slack[nu] = 0;
            self.label[nu] = EVEN;
            self.queue_push(nu);
        } else if self.label[v] == EVEN {
            let lca = self.get_lca(u, v);
            if lca == 0 {
                self.augment(u, v);
                self.augment(v, u);
                return true;
            }
            self.add_blossom(u, lca, v);
        }
        false
    }

    /// One augmentation stage. Returns false when no augmenting path remains.
    fn stage(&mut self) -> bool {
        let n = self.n;
        self.label[1..=self.nx].fill(FREE);
        self.slack[1..=self.nx].fill(0);
        self.queue.clear();
        for x in 1..=self.nx {
            if self.st[x] == x && self.mate[x] == 0 {
                self.pa[x] = 0;
                self.label[x] = EVEN;
                self.queue_push(x);
            }
        }
        if self.queue.is_empty() {
            return false;
        }
        loop {
            while let Some(u) = self.queue.pop_front() {
                if self.label[self.st[u]] == ODD {
                    continue;
                }
                let row = u * self.stride;
                for v in 1..=n {
                    let e = self.g[row + v];
                    let sv = self.st[v];
                    // st[u] changes when a blossom forms mid-scan.
                    if e.w > 0 && self.st[u] != sv {
                        let d = self.delta(e);
                        if d == 0 {
                            if self.on_found_edge(e) {
                                return true;
                            }
                        } else if sv == v {
                            self.offer_slack(u, v, d);
                        } else {
                            self.update_slack(u, sv);
                        }
                    }
                }
            }

            let mut d = i64::MAX;
            for b in n + 1..=self.nx {
                if self.st[b] == b && self.label[b] == ODD {
                    d = d.min(self.lab[b] / 2);
                }
            }
            for x in 1..=self.nx {
                if self.st[x] == x && self.slack[x] != 0 {
                    let sd = self.slack_d[x];
                    if self.label[x] == FREE {
                        d = d.min(sd);
                    } else if self.label[x] == EVEN {
                        d = d.min(sd / 2);
                    }
                }
            }
            for u in 1..=n {
                match self.label[self.st[u]] {
                    EVEN => {
                        if self.lab[u] <= d {
                            return false;
                        }
                        self.lab[u] -= d;
                    }
                    ODD => self.lab[u] += d,
                    _ => {}
                }
            }
            for b in n + 1..=self.nx {
                if self.st[b] == b {
                    match self.label[b] {
                        EVEN => self.lab[b] += 2 * d,
                        ODD => self.lab[b] -= 2 * d,
                        _ => {}
                    }
                }
            }

            self.refresh_slack_deltas();
            self.queue.clear();
            for x in 1..=self.nx {
                let s = self.slack[x];
                if self.st[x] == x && s != 0 && self.st[s] != x {
                    let e = self.edge(s, x);
                    if self.delta(e) == 0 && self.on_found_edge(e) {
                        return true;
                    }
                }
            }
            for b in n + 1..=self.nx {
                if self.st[b] == b && self.label[b] == ODD && self.lab[b] == 0 {
                    self.expand_blossom(b);
                }
            }
        }
    }

    pub(crate) fn solve(mut self) -> BlossomOutcome {
        let n = self.n;
        self.warm_start();
        while self.stage() {}

        let partner = (1..=n)
            .map(|u| self.mate[u].wrapping_sub(1))
            .collect::<Vec<_>>();
        let vertex_duals = self.lab[1..=n].to_vec();
        let mut blossoms = Vec::new();
        for b in n + 1..=self.nx {
            if self.st[b] != 0 {
                let mut members = Vec::new();
                self.collect_members(b, &mut members);
                members.sort_unstable();
                blossoms.push((members, self.lab[b]));
            }
        }
        BlossomOutcome {
            partner,
            vertex_duals,
            blossoms,
        }
    }

    /// Feasible starting duals plus a greedy matching on tight edges.
    ///
    /// Each vertex in turn lowers its dual to the smallest feasible value
    /// given the others and, if that makes an edge to a free vertex tight,
    /// is matched along the lowest-indexed one. Free vertices may end with
    /// unequal duals, so optimality holds only for perfect matchings; the
    /// caller's weights must make every maximum-weight matching perfect.
    fn warm_start(&mut self) {
        let n = self.n;
        for u in 1..=n {
            let row = u * self.stride;
            self.lab[u] = (1..=n).filter(|&v| v != u).map(|v| self.g[row + v].w).max().unwrap_or(0);
        }
        for u in 1..=n {
            if self.mate[u] != 0 {
                continue;
            }
            let row = u * self.stride;
            let mut best = i64::MIN;
            let mut pick = 0;
            for v in 1..=n {
                if v == u {
                    continue;
                }
                let need = 2 * self.g[row + v].w - self.lab[v];
                if need > best {
                    best = need;
                    pick = if self.mate[v] == 0 { v } else { 0 };
                } else if need == best && pick == 0 && self.mate[v] == 0 {
                    pick = v;
                }
            }
            self.lab[u] = best;
            if pick != 0 {
                self.mate[u] = pick;
                self.mate[pick] = u;
            }
        }
    }

    fn collect_members(&self, b: usize, out: &mut Vec<usize>) {
        if b <= self.n {
            out.push(b - 1);
        } else {
            for &c in &self.flower[b] {
                self.collect_members(c, out);
            }
        }
    }
}
