//! Fill-reducing orderings for the sparse LU.
//!
//! Nested dissection on the symmetrized pattern using BFS level-structure
//! separators. Rows/columns of very high degree (the zero-mean pressure
//! multiplier, for instance) are removed from the graph and ordered last.

use super::sparse::CsrMatrix;

const LEAF_SIZE: usize = 48;

/// Returns a column permutation `q` where `q[k]` is the original index of
/// the `k`-th eliminated column.
pub fn nested_dissection(m: &CsrMatrix) -> Vec<usize> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "ordering needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    let adj = symmetric_adjacency(m);
    let dense_threshold = 16usize.max((10.0 * (n as f64).sqrt()) as usize);
    let mut dense = Vec::new();
    let mut keep = Vec::with_capacity(n);
    for v in 0..n {
        if adj.degree(v) > dense_threshold {
            dense.push(v);
        } else {
            keep.push(v);
        }
    }
    let mut active = vec![true; n];
    for &v in &dense {
        active[v] = false;
    }
    let mut state = Dissector { adj: &adj, stamp: vec![0; n], next_stamp: 1, active };
    let mut order = Vec::with_capacity(n);
    state.dissect(keep, &mut order);
    order.extend(dense);
    debug_assert_eq!(order.len(), n);
    order
}

struct Adjacency {
    ptr: Vec<usize>,
    idx: Vec<usize>,
}

impl Adjacency {
    fn degree(&self, v: usize) -> usize {
        self.ptr[v + 1] - self.ptr[v]
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.idx[self.ptr[v]..self.ptr[v + 1]]
    }
}

fn symmetric_adjacency(m: &CsrMatrix) -> Adjacency {
    let n = m.nrows();
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for (c, _) in m.row(r) {
            if c != r {
                lists[r].push(c);
                lists[c].push(r);
            }
        }
    }
    let mut ptr = Vec::with_capacity(n + 1);
    let mut idx = Vec::new();
    ptr.push(0);
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
        idx.extend_from_slice(l);
        ptr.push(idx.len());
    }
    Adjacency { ptr, idx }
}

struct Dissector<'a> {
    adj: &'a Adjacency,
    stamp: Vec<u32>,
    next_stamp: u32,
    active: Vec<bool>,
}

impl Dissector<'_> {
    fn fresh_stamp(&mut self, nodes: &[usize]) -> u32 {
        let s = self.next_stamp;
        self.next_stamp += 1;
        for &v in nodes {
            self.stamp[v] = s;
        }
        s
    }

    /// BFS restricted to nodes carrying stamp `s`. Returns levels.
    fn levels(&self, root: usize, s: u32, seen: &mut [u32], seen_mark: u32) -> Vec<Vec<usize>> {
        let mut levels = vec![vec![root]];
        seen[root] = seen_mark;
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &w in self.adj.neighbors(v) {
                    if self.active[w] && self.stamp[w] == s && seen[w] != seen_mark {
                        seen[w] = seen_mark;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    }

    fn dissect(&mut self, nodes: Vec<usize>, out: &mut Vec<usize>) {
        if nodes.len() <= LEAF_SIZE {
            out.extend(nodes);
            return;
        }
        let s = self.fresh_stamp(&nodes);
        let n_total = self.stamp.len();
        let mut seen = vec![0u32; n_total];

        // split into connected components first
        let mut comps: Vec<Vec<usize>> = Vec::new();
        let mut mark = 1u32;
        for &v in &nodes {
            if seen[v] != 0 {
                continue;
            }
            let lv = self.levels(v, s, &mut seen, mark);
            comps.push(lv.into_iter().flatten().collect());
            mark += 1;
        }
        if comps.len() > 1 {
            for c in comps {
                self.dissect(c, out);
            }
            return;
        }

        // pseudo-peripheral root
        let mut levels = self.levels(nodes[0], s, &mut vec![0u32; n_total], 1);
        for _ in 0..4 {
            let last = levels.last().unwrap();
            let cand = *last
                .iter()
                .min_by_key(|&&v| (self.adj.degree(v), v))
                .unwrap();
            let trial = self.levels(cand, s, &mut vec![0u32; n_total], 1);
            if trial.len() > levels.len() {
                levels = trial;
            } else {
                break;
            }
        }
        if levels.len() < 3 {
            out.extend(levels.into_iter().flatten());
            return;
        }

        let half = nodes.len() / 2;
        let mut acc = 0;
        let mut mid = 1;
        for (i, l) in levels.iter().enumerate() {
            acc += l.len();
            if acc >= half {
                mid = i;
                break;
            }
        }
        mid = mid.clamp(1, levels.len() - 2);

        let mut level_of = vec![usize::MAX; n_total];
        for (i, l) in levels.iter().enumerate() {
            for &v in l {
                level_of[v] = i;
            }
        }
        let mut part_a: Vec<usize> = levels[..mid].iter().flatten().copied().collect();
        let part_b: Vec<usize> = levels[mid + 1..].iter().flatten().copied().collect();
        let mut sep = Vec::new();
        for &v in &levels[mid] {
            // a separator node with no neighbour beyond the separator is not needed
            let touches_b = self
                .adj
                .neighbors(v)
                .iter()
                .any(|&w| self.active[w] && self.stamp[w] == s && level_of[w] == mid + 1);
            if touches_b {
                sep.push(v);
            } else {
                part_a.push(v);
            }
        }
        self.dissect(part_a, out);
        self.dissect(part_b, out);
        out.extend(sep);
    }
}
