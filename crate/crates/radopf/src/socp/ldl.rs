//! Sparse LDLᵀ factorization of quasi-definite symmetric matrices.
//!
//! Up-looking factorization driven by the elimination tree, with a
//! minimum-degree fill-reducing ordering computed once per sparsity
//! pattern. Pivots whose sign disagrees with the expected inertia are
//! replaced by a small regularization of the right sign.

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    /// perm[k] = original index placed at position k
    perm: Vec<usize>,
    // permuted upper-triangular CSC pattern
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    /// entry `e` of the caller's triplet list lands at ax[slot[e]]
    slot: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    /// expected pivot sign per permuted position
    sign: Vec<f64>,
    pub regularized_pivots: usize,
}

impl LdlFactor {
    /// `entries` lists (row, col) positions of the upper triangle (row ≤ col)
    /// in original numbering; each must be unique and every diagonal present.
    /// `signs[i]` is +1 or −1, the expected sign of pivot i.
    pub fn new(n: usize, entries: &[(usize, usize)], signs: &[f64]) -> Self {
        let perm = min_degree_order(n, entries);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        // permuted positions, upper triangle
        let pos: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (iperm[i], iperm[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        let mut count = vec![0usize; n + 1];
        for &(_, c) in &pos {
            count[c + 1] += 1;
        }
        for k in 0..n {
            count[k + 1] += count[k];
        }
        let ap = count.clone();
        let mut next = count;
        let mut ai = vec![0; entries.len()];
        let mut slot = vec![0; entries.len()];
        // sort rows within each column for deterministic traversal
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&e| (pos[e].1, pos[e].0));
        for e in order {
            let (r, c) = pos[e];
            ai[next[c]] = r;
            slot[e] = next[c];
            next[c] += 1;
        }

        // elimination tree and column counts
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for j in 0..n {
            flag[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while i != j && flag[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let total = lp[n];
        let sign = perm.iter().map(|&p| signs[p]).collect();
        LdlFactor {
            n,
            perm,
            ap,
            ai,
            ax: vec![0.0; entries.len()],
            slot,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            sign,
            regularized_pivots: 0,
        }
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization with values given in the order of `entries`.
    /// Pivots with |d| below `eps` or of the wrong sign become `sign·delta`.
    pub fn factor(&mut self, values: &[f64], eps: f64, delta: f64) -> bool {
        let n = self.n;
        for (e, &v) in values.iter().enumerate() {
            self.ax[self.slot[e]] = v;
        }
        let mut y = vec![0.0; n];
        let mut marker = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        self.regularized_pivots = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] += self.ax[p];
                    continue;
                }
                y[b] += self.ax[p];
                if !marker[b] {
                    marker[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if marker[nx] {
                            break;
                        }
                        marker[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = self.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let t = next_space[c];
                let yc = y[c];
                for j in self.lp[c]..t {
                    y[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[t] = k;
                let l = yc * self.dinv[c];
                self.lx[t] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y[c] = 0.0;
                marker[c] = false;
            }
            if !(self.sign[k] * self.d[k] > eps) {
                if !self.d[k].is_finite() {
                    return false;
                }
                self.d[k] = self.sign[k] * delta;
                self.regularized_pivots += 1;
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        true
    }

    /// Solves in place, `b` in original numbering.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }
}

/// Greedy minimum-degree ordering on the graph of the pattern, with explicit
/// clique formation on bitsets. Ties break on the smaller index.
fn min_degree_order(n: usize, entries: &[(usize, usize)]) -> Vec<usize> {
    let words = n.div_ceil(64);
    let mut adj = vec![0u64; n * words];
    let set = |adj: &mut [u64], a: usize, b: usize| adj[a * words + b / 64] |= 1u64 << (b % 64);
    for &(i, j) in entries {
        if i != j {
            set(&mut adj, i, j);
            set(&mut adj, j, i);
        }
    }
    let mut alive = vec![u64::MAX; words];
    if n % 64 != 0 {
        alive[words - 1] = (1u64 << (n % 64)) - 1;
    }
    let popcount =
        |adj: &[u64], a: usize| adj[a * words..(a + 1) * words].iter().map(|w| w.count_ones() as usize).sum();
    let mut degree: Vec<usize> = (0..n).map(|a| popcount(&adj, a)).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nbrs = Vec::new();
    for _ in 0..n {
        let v = (0..n).filter(|&a| !done[a]).min_by_key(|&a| (degree[a], a)).unwrap();
        done[v] = true;
        order.push(v);
        alive[v / 64] &= !(1u64 << (v % 64));
        nbrs.clear();
        for w in 0..words {
            let mut bits = adj[v * words + w] & alive[w];
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                nbrs.push(w * 64 + b);
                bits &= bits - 1;
            }
        }
        let row_v: Vec<u64> = adj[v * words..(v + 1) * words].to_vec();
        for &u in &nbrs {
            let row = &mut adj[u * words..(u + 1) * words];
            for w in 0..words {
                row[w] = (row[w] | row_v[w]) & alive[w];
            }
            row[u / 64] &= !(1u64 << (u % 64));
            degree[u] = row.iter().map(|w| w.count_ones() as usize).sum();
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve_check(n: usize, entries: &[(usize, usize)], vals: &[f64], signs: &[f64]) {
        let mut f = LdlFactor::new(n, entries, signs);
        assert!(f.factor(vals, 1e-14, 1e-9));
        let mut m = vec![vec![0.0; n]; n];
        for (&(i, j), &v) in entries.iter().zip(vals) {
            m[i][j] += v;
            if i != j {
                m[j][i] += v;
            }
        }
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 0.3).collect();
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j] * xs[j]).sum()).collect();
        f.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-10, "{i}: {} vs {}", b[i], xs[i]);
        }
    }

    #[test]
    fn quasi_definite_kkt() {
        // [[2, 0, 1], [0, 3, 1], [1, 1, -1]]
        let entries = [(0, 0), (1, 1), (2, 2), (0, 2), (1, 2)];
        dense_solve_check(3, &entries, &[2.0, 3.0, -1.0, 1.0, 1.0], &[1.0, 1.0, -1.0]);
    }

    #[test]
    fn arrow_and_chain() {
        let n = 70;
        let mut entries = Vec::new();
        let mut vals = Vec::new();
        let mut signs = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            let neg = i >= 50;
            vals.push(if neg { -4.0 } else { 4.0 + i as f64 * 0.01 });
            signs.push(if neg { -1.0 } else { 1.0 });
        }
        for i in 0..50 {
            entries.push((i, 50 + i % 20));
            vals.push(0.3 + 0.01 * i as f64);
        }
        for i in 0..49 {
            entries.push((i, i + 1));
            vals.push(-0.5);
        }
        dense_solve_check(n, &entries, &vals, &signs);
    }
}
