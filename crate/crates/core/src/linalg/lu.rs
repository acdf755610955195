//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Column `k` of the factor is obtained by a sparse triangular solve against
//! the columns already computed; the nonzero pattern of that solve is found by
//! a depth-first search over the graph of `L`. Columns are visited in a
//! nested-dissection order and the diagonal is kept as pivot whenever it is
//! within `PIVOT_TOLERANCE` of the largest candidate, which preserves the
//! ordering's fill behaviour on the near-symmetric systems assembled here.

use super::ordering::nested_dissection;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

const PIVOT_TOLERANCE: f64 = 0.01;
/// A pivot below this fraction of the largest matrix entry is treated as zero.
const SINGULAR_TOLERANCE: f64 = 1e-13;

/// Compressed sparse column storage used internally by the factorization.
struct Csc {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Csc {
    fn from_csr(m: &CsrMatrix) -> Self {
        let t = m.transpose();
        Self {
            ptr: t.row_ptr().to_vec(),
            idx: t.col_idx().to_vec(),
            val: t.values().to_vec(),
        }
    }
}

/// Sparse `P A Q = L U` factorization.
pub struct SparseLu {
    n: usize,
    /// `pinv[i]`: position of original row `i` in the pivot order
    pinv: Vec<usize>,
    q: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
}

/// Reusable column ordering for matrices sharing one sparsity pattern.
#[derive(Debug, Clone)]
pub struct Ordering {
    q: Vec<usize>,
}

impl Ordering {
    pub fn nested_dissection(m: &CsrMatrix) -> Self {
        Self { q: nested_dissection(m) }
    }

    pub fn natural(n: usize) -> Self {
        Self { q: (0..n).collect() }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.q
    }
}

impl SparseLu {
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        let ord = Ordering::nested_dissection(m);
        Self::factor_with_ordering(m, &ord)
    }

    pub fn factor_with_ordering(m: &CsrMatrix, ordering: &Ordering) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "LU of a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        if ordering.q.len() != n {
            return Err(Error::DimensionMismatch("ordering length".into()));
        }
        let a = Csc::from_csr(m);
        let scale = m.max_abs();
        let zero_pivot = SINGULAR_TOLERANCE * scale;
        let q = ordering.q.clone();

        const UNSET: usize = usize::MAX;
        let mut pinv = vec![UNSET; n];
        let mut x = vec![0.0; n];
        let mut xi = vec![0usize; n];
        let mut stack = Vec::new();
        let mut visited = vec![usize::MAX; n];

        let est = 4 * m.nnz() + n;
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx: Vec<usize> = Vec::with_capacity(est);
        let mut l_val: Vec<f64> = Vec::with_capacity(est);
        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut u_idx: Vec<usize> = Vec::with_capacity(est);
        let mut u_val: Vec<f64> = Vec::with_capacity(est);

        for k in 0..n {
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
            let col = q[k];

            // reach of column `col` in the graph of L (pattern of x = L \ A(:,col))
            let mut top = n;
            for p in a.ptr[col]..a.ptr[col + 1] {
                let i = a.idx[p];
                if visited[i] != k {
                    top = dfs(i, k, &l_ptr, &l_idx, &pinv, &mut visited, &mut xi, &mut stack, top);
                }
            }
            for &i in &xi[top..n] {
                x[i] = 0.0;
            }
            for p in a.ptr[col]..a.ptr[col + 1] {
                x[a.idx[p]] = a.val[p];
            }
            for px in top..n {
                let j = xi[px];
                let jj = pinv[j];
                if jj == UNSET {
                    continue;
                }
                let xj = x[j];
                // L columns store the unit diagonal first
                for p in l_ptr[jj] + 1..l_ptr_end(&l_ptr, &l_idx, jj) {
                    x[l_idx[p]] -= l_val[p] * xj;
                }
            }

            let mut ipiv = UNSET;
            let mut amax = -1.0f64;
            for &i in &xi[top..n] {
                if pinv[i] == UNSET {
                    let t = x[i].abs();
                    if t > amax {
                        amax = t;
                        ipiv = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            if ipiv == UNSET || amax <= zero_pivot {
                return Err(Error::SingularMatrix { step: k, row: col });
            }
            if pinv[col] == UNSET && x[col].abs() >= amax * PIVOT_TOLERANCE {
                ipiv = col;
            }
            let pivot = x[ipiv];
            u_idx.push(k);
            u_val.push(pivot);
            pinv[ipiv] = k;
            l_idx.push(ipiv);
            l_val.push(1.0);
            for &i in &xi[top..n] {
                if pinv[i] == UNSET {
                    l_idx.push(i);
                    l_val.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        for i in l_idx.iter_mut() {
            *i = pinv[*i];
        }
        Ok(Self { n, pinv, q, l_ptr, l_idx, l_val, u_ptr, u_idx, u_val })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries in `L` and `U`.
    pub fn fill(&self) -> usize {
        self.l_idx.len() + self.u_idx.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "rhs length");
        let mut x = vec![0.0; self.n];
        for (i, &bi) in b.iter().enumerate() {
            x[self.pinv[i]] = bi;
        }
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in (0..self.n).rev() {
            let end = self.u_ptr[j + 1] - 1;
            x[j] /= self.u_val[end];
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.u_ptr[j]..end {
                x[self.u_idx[p]] -= self.u_val[p] * xj;
            }
        }
        let mut out = vec![0.0; self.n];
        for (k, &qk) in self.q.iter().enumerate() {
            out[qk] = x[k];
        }
        out
    }
}

#[inline]
fn l_ptr_end(l_ptr: &[usize], l_idx: &[usize], j: usize) -> usize {
    if j + 1 < l_ptr.len() {
        l_ptr[j + 1]
    } else {
        l_idx.len()
    }
}

/// Iterative DFS from row `start` through the columns of `L` already
/// computed; pushes finished nodes onto `xi[..top]` in topological order.
#[allow(clippy::too_many_arguments)]
fn dfs(
    start: usize,
    k: usize,
    l_ptr: &[usize],
    l_idx: &[usize],
    pinv: &[usize],
    visited: &mut [usize],
    xi: &mut [usize],
    stack: &mut Vec<(usize, usize)>,
    mut top: usize,
) -> usize {
    const FRESH: usize = usize::MAX;
    stack.clear();
    stack.push((start, FRESH));
    while let Some(&mut (j, ref mut next)) = stack.last_mut() {
        let jj = pinv[j];
        if *next == FRESH {
            visited[j] = k;
            *next = if jj == usize::MAX { 0 } else { l_ptr[jj] + 1 };
        }
        let mut pushed = None;
        if jj != usize::MAX {
            let end = l_ptr_end(l_ptr, l_idx, jj);
            while *next < end {
                let i = l_idx[*next];
                *next += 1;
                if visited[i] != k {
                    pushed = Some(i);
                    break;
                }
            }
        }
        match pushed {
            Some(i) => stack.push((i, FRESH)),
            None => {
                stack.pop();
                top -= 1;
                xi[top] = j;
            }
        }
    }
    top
}

/// Factor and solve in one call.
pub fn sparse_lu_solve(m: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.nrows() {
        return Err(Error::DimensionMismatch("rhs length".into()));
    }
    Ok(SparseLu::factor(m)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::{norm2, TripletBuilder};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual_ok(m: &CsrMatrix, x: &[f64], b: &[f64]) -> bool {
        let mut r = m.matvec(x);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= bi);
        norm2(&r) <= 1e-10 * (m.frobenius_norm() * norm2(x) + norm2(b))
    }

    #[test]
    fn identity_returns_rhs() {
        let m = CsrMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(sparse_lu_solve(&m, &b).unwrap(), b.to_vec());
    }

    #[test]
    fn two_by_two_by_hand() {
        let m = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = sparse_lu_solve(&m, &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let m = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        match sparse_lu_solve(&m, &[1.0, 1.0]) {
            Err(Error::SingularMatrix { .. }) => {}
            other => panic!("expected singular-matrix error, got {other:?}"),
        }
    }

    #[test]
    fn zero_diagonal_needs_pivoting() {
        // saddle-point shaped [[1, 1], [1, 0]]
        let m = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 0.0]]);
        let x = sparse_lu_solve(&m, &[2.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    fn random_sparse(n: usize, density: f64, spd: bool, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen::<f64>() < density {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    b.push(i, j, v);
                    if spd {
                        b.push(j, i, v);
                    }
                }
            }
        }
        let m = b.build();
        // diagonal dominance only for the SPD family; the others get a random diagonal
        let mut d = TripletBuilder::new(n, n);
        for i in 0..n {
            for (j, v) in m.row(i) {
                d.push(i, j, v);
            }
            let rowsum: f64 = m.row(i).map(|(_, v)| v.abs()).sum();
            let diag = if spd { rowsum + 1.0 } else { rng.gen_range(-2.0..2.0) };
            d.push(i, i, diag);
        }
        d.build()
    }

    #[test]
    fn random_round_trips() {
        for seed in 0..50u64 {
            let n = 20 + (seed as usize * 97) % 480;
            let spd = seed % 2 == 0;
            let m = random_sparse(n, 4.0 / n as f64, spd, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            match sparse_lu_solve(&m, &b) {
                Ok(x) => assert!(residual_ok(&m, &x, &b), "seed {seed}: residual too large"),
                Err(Error::SingularMatrix { .. }) if !spd => {}
                Err(e) => panic!("seed {seed}: {e}"),
            }
        }
    }

    proptest! {
        #[test]
        fn tridiagonal_residual(n in 2usize..200, shift in 2.5f64..10.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b = TripletBuilder::new(n, n);
            for i in 0..n {
                b.push(i, i, shift);
                if i + 1 < n {
                    b.push(i, i + 1, rng.gen_range(-1.0..1.0));
                    b.push(i + 1, i, rng.gen_range(-1.0..1.0));
                }
            }
            let m = b.build();
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = sparse_lu_solve(&m, &rhs).unwrap();
            prop_assert!(residual_ok(&m, &x, &rhs));
        }
    }
}
