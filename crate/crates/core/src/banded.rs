//! Banded LU with partial pivoting after a reverse Cuthill-McKee reordering.
//!
//! Storage follows the LAPACK general band layout: `ldab = 2 kl + ku + 1`
//! rows, entry `(i, j)` at `ab[kv + i - j + j * ldab]` with `kv = kl + ku`.

use std::collections::VecDeque;

use crate::error::{MfgError, Result};
use crate::sparse::SparseOperator;

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    // perm[new] = old
    perm: Vec<usize>,
}

/// Reverse Cuthill-McKee ordering of the symmetrized sparsity pattern.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node");
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            next.dedup();
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

impl BandedLu {
    pub fn factor(a: &SparseOperator) -> Result<Self> {
        let n = a.order();
        let perm = reverse_cuthill_mckee(&a.adjacency());
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0, 0);
        for r in 0..n {
            for (c, v) in a.row(r) {
                if v == 0.0 {
                    continue;
                }
                let (i, j) = (inv[r], inv[c]);
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        let ldab = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![0.0; ldab * n];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if v == 0.0 {
                    continue;
                }
                let (i, j) = (inv[r], inv[c]);
                ab[kv + i - j + j * ldab] += v;
            }
        }
        let mut lu = BandedLu { n, kl, ku, ab, ipiv: vec![0; n], perm };
        lu.factorize()?;
        Ok(lu)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidths after reordering.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn factorize(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ldab = self.ldab();
        let kv = kl + ku;
        let ab = &mut self.ab;
        let at = |i: usize, j: usize| kv + i - j + j * ldab;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = ab[kv + j * ldab].abs();
            for t in 1..=km {
                let v = ab[kv + t + j * ldab].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(MfgError::Singular(format!("zero pivot in column {j} of banded factorization")));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(at(j, c), at(j + jp, c));
                }
            }
            if km > 0 {
                let pivot = ab[kv + j * ldab];
                for t in 1..=km {
                    ab[kv + t + j * ldab] /= pivot;
                }
                for c in j + 1..=ju {
                    let f = ab[at(j, c)];
                    if f != 0.0 {
                        for t in 1..=km {
                            let l = ab[kv + t + j * ldab];
                            ab[at(j + t, c)] -= l * f;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.solve_permuted(&mut x);
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.solve_permuted_transpose(&mut x);
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }

    fn solve_permuted(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        let ldab = self.ldab();
        let kv = kl + self.ku;
        let ab = &self.ab;
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            for t in 1..=kl.min(n - 1 - j) {
                b[j + t] -= ab[kv + t + j * ldab] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= ab[kv + j * ldab];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= ab[kv + i - j + j * ldab] * bj;
            }
        }
    }

    fn solve_permuted_transpose(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        let ldab = self.ldab();
        let kv = kl + self.ku;
        let ab = &self.ab;
        for j in 0..n {
            let mut s = b[j];
            for i in j.saturating_sub(kv)..j {
                s -= ab[kv + i - j + j * ldab] * b[i];
            }
            b[j] = s / ab[kv + j * ldab];
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let mut s = b[j];
            for t in 1..=kl.min(n - 1 - j) {
                s -= ab[kv + t + j * ldab] * b[j + t];
            }
            b[j] = s;
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{laplace_matrix, GridSpec, Stencil};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(a: &SparseOperator, rng: &mut ChaCha8Rng) {
        let n = a.order();
        let lu = BandedLu::factor(a).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = a.to_dense();
        let oracle = dense.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let oracle_t = dense.transpose().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let mut x = b.clone();
        lu.solve(&mut x);
        let mut xt = b.clone();
        lu.solve_transpose(&mut xt);
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() < 1e-9 * (1.0 + oracle[i].abs()), "solve {i}");
            assert!((xt[i] - oracle_t[i]).abs() < 1e-9 * (1.0 + oracle_t[i].abs()), "transpose {i}");
        }
    }

    #[test]
    fn periodic_1d_has_small_band() {
        let g = GridSpec::new(1, 50, 1, 1.0).unwrap();
        let a = SparseOperator::identity(50).add_scaled(-0.01, &laplace_matrix(&g, Stencil::Compact));
        let lu = BandedLu::factor(&a).unwrap();
        let (kl, ku) = lu.bandwidths();
        assert!(kl <= 2 && ku <= 2, "{kl} {ku}");
        check(&a, &mut ChaCha8Rng::seed_from_u64(1));
    }

    #[test]
    fn matches_dense_on_random_nonsymmetric_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [1, 2] {
            let g = GridSpec::new(dim, 7, 1, 1.0).unwrap();
            let n = g.n_nodes();
            let lap = laplace_matrix(&g, Stencil::Compact);
            let mut trips = Vec::new();
            for r in 0..n {
                for (c, _) in lap.row(r) {
                    // weak diagonal forces pivoting
                    let v = if r == c { rng.gen_range(-0.5..0.5) } else { rng.gen_range(-1.0..1.0) };
                    trips.push((r, c, v));
                }
            }
            check(&SparseOperator::from_triplets(n, trips), &mut rng);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = SparseOperator::from_triplets(3, vec![(0, 0, 1.0), (1, 1, 0.0), (2, 2, 1.0), (1, 0, 0.0)]);
        assert!(matches!(BandedLu::factor(&a), Err(MfgError::Singular(_))));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let g = GridSpec::new(2, 6, 1, 1.0).unwrap();
        let mut p = reverse_cuthill_mckee(&laplace_matrix(&g, Stencil::Compact).adjacency());
        p.sort();
        assert_eq!(p, (0..36).collect::<Vec<_>>());
    }
}
