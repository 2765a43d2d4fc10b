//! Sparse parity-check codes for syndrome-based reconciliation, with a
//! sum-product decoder.
//!
//! Bob sends `H x_B`; Alice looks for the sparse error `e` with
//! `H e = H x_A ^ H x_B` and outputs `x_A ^ e`.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};

use crate::bits::BitString;
use crate::rng::Rng;

const COLUMN_WEIGHT: usize = 4;
const LLR_CLAMP: f64 = 30.0;

/// A sparse parity-check matrix stored by rows. The default construction is
/// a staircase of degree-2 columns (column `j` checks rows `j` and `j + 1`)
/// followed by columns of weight 4 on randomly shuffled, evenly used rows.
#[derive(Clone, Debug)]
pub struct Ldpc {
    n: usize,
    checks: usize,
    /// `row_start[i]..row_start[i + 1]` indexes `edge_var`.
    row_start: Vec<usize>,
    /// Variable of each edge, grouped by row.
    edge_var: Vec<u32>,
    /// Edges of each variable, `COLUMN_WEIGHT` (or fewer) per variable.
    var_start: Vec<usize>,
    var_edges: Vec<u32>,
}

impl Ldpc {
    /// Deterministic in `(n, checks, seed)`.
    pub fn new(n: usize, checks: usize, seed: u64) -> Self {
        assert!(n > 0 && checks > 0);
        let mut rng = Rng::seed_from_u64(seed);
        let stair = checks.min(n / 2);
        let mut columns: Vec<Vec<u32>> = (0..stair)
            .map(|j| {
                if j + 1 < checks {
                    vec![j as u32, j as u32 + 1]
                } else {
                    vec![j as u32]
                }
            })
            .collect();
        let w = COLUMN_WEIGHT.min(checks);
        let rest = n - stair;
        let mut sockets: Vec<u32> = (0..rest * w).map(|e| (e % checks) as u32).collect();
        sockets.shuffle(&mut rng);
        for chunk in sockets.chunks(w) {
            let mut c = chunk.to_vec();
            c.sort_unstable();
            c.dedup();
            while c.len() < w {
                let r = rng.gen_range(0..checks as u32);
                if !c.contains(&r) {
                    c.push(r);
                }
            }
            columns.push(c);
        }
        Self::from_columns(checks, &columns)
    }

    /// Builds a code from the check rows of each column.
    pub fn from_columns(checks: usize, columns: &[Vec<u32>]) -> Self {
        let n = columns.len();
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); checks];
        for (j, col) in columns.iter().enumerate() {
            for &r in col {
                rows[r as usize].push(j as u32);
            }
        }
        let mut row_start = Vec::with_capacity(checks + 1);
        let mut edge_var = Vec::new();
        row_start.push(0);
        for row in &rows {
            edge_var.extend_from_slice(row);
            row_start.push(edge_var.len());
        }
        let mut per_var: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (e, &v) in edge_var.iter().enumerate() {
            per_var[v as usize].push(e as u32);
        }
        let mut var_start = Vec::with_capacity(n + 1);
        let mut var_edges = Vec::with_capacity(edge_var.len());
        var_start.push(0);
        for v in &per_var {
            var_edges.extend_from_slice(v);
            var_start.push(var_edges.len());
        }
        Ldpc {
            n,
            checks,
            row_start,
            edge_var,
            var_start,
            var_edges,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn checks(&self) -> usize {
        self.checks
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.edge_var[self.row_start[i]..self.row_start[i + 1]]
    }

    /// `H x`.
    pub fn syndrome(&self, x: &BitString) -> BitString {
        assert_eq!(x.len(), self.n);
        let mut s = BitString::zeros(self.checks);
        for i in 0..self.checks {
            let parity = self.row(i).iter().fold(false, |p, &v| p ^ x.bit(v as usize));
            s.set_bit(i, parity);
        }
        s
    }

    /// Finds `x_B` from `x_A` and `H x_B`, assuming the two differ in each
    /// position independently with probability `p`. `None` if the decoder does
    /// not reach a word with the target syndrome.
    pub fn decode(
        &self,
        x_a: &BitString,
        syndrome_b: &BitString,
        p: f64,
        max_iterations: usize,
    ) -> Option<BitString> {
        assert_eq!(x_a.len(), self.n);
        assert_eq!(syndrome_b.len(), self.checks);
        let target = self.syndrome(x_a).xor(syndrome_b).expect("equal lengths");
        let flip: Vec<bool> = target.to_bools();
        let p = p.clamp(1e-6, 0.5 - 1e-6);
        let prior = ((1.0 - p) / p).ln();

        let edges = self.edge_var.len();
        let mut v2c = vec![prior; edges];
        let mut c2v = vec![0.0f64; edges];
        let mut e = vec![false; self.n];
        let mut t = Vec::new();

        for _ in 0..max_iterations {
            for i in 0..self.checks {
                let (lo, hi) = (self.row_start[i], self.row_start[i + 1]);
                t.clear();
                t.extend(v2c[lo..hi].iter().map(|&m| (m / 2.0).tanh()));
                // leave-one-out products via prefix/suffix sweeps
                let sign = if flip[i] { -1.0 } else { 1.0 };
                let mut prefix = sign;
                for (k, edge) in (lo..hi).enumerate() {
                    c2v[edge] = prefix;
                    prefix *= t[k];
                }
                let mut suffix = 1.0;
                for (k, edge) in (lo..hi).enumerate().rev() {
                    let prod = (c2v[edge] * suffix).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[edge] = (2.0 * prod.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP);
                    suffix *= t[k];
                }
            }
            for (j, ej) in e.iter_mut().enumerate() {
                let es = &self.var_edges[self.var_start[j]..self.var_start[j + 1]];
                let total: f64 = prior + es.iter().map(|&x| c2v[x as usize]).sum::<f64>();
                *ej = total < 0.0;
                for &x in es {
                    v2c[x as usize] = (total - c2v[x as usize]).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
            }
            let satisfied = (0..self.checks).all(|i| {
                self.row(i).iter().fold(false, |acc, &v| acc ^ e[v as usize]) == flip[i]
            });
            if satisfied {
                return Some(x_a.xor(&BitString::from_bits(&e)).expect("equal lengths"));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_weights_and_determinism() {
        let a = Ldpc::new(500, 100, 7);
        let b = Ldpc::new(500, 100, 7);
        assert_eq!(a.edge_var, b.edge_var);
        let weight = |j: usize| a.var_start[j + 1] - a.var_start[j];
        assert!((0..99).all(|j| weight(j) == 2));
        assert_eq!(weight(99), 1);
        assert!((100..500).all(|j| weight(j) == COLUMN_WEIGHT));
        let rows: Vec<usize> = (0..100).map(|i| a.row(i).len()).collect();
        assert!(rows.iter().all(|&r| (14..=22).contains(&r)), "{rows:?}");
    }

    #[test]
    fn decodes_sparse_errors() {
        let mut rng = Rng::seed_from_u64(1);
        let code = Ldpc::new(1024, 400, 3);
        let xb = BitString::random(1024, &mut rng);
        let mut xa = xb.clone();
        for i in [3usize, 100, 517, 900, 1000] {
            xa.set_bit(i, !xa.bit(i));
        }
        let got = code.decode(&xa, &code.syndrome(&xb), 0.01, 50).unwrap();
        assert_eq!(got, xb);
    }
}
