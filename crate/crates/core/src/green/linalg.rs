//! Sparse symmetric matrices, envelope Cholesky and preconditioned CG.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};
use crate::lattice::{Domain, WeightedGraph};

/// Envelope storage above this many entries is refused.
pub const DEFAULT_ENVELOPE_BUDGET: usize = 120_000_000;

/// Symmetric sparse matrix in CSR form, both triangles stored.
#[derive(Clone, Debug)]
pub struct SparseSym {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// −L restricted to the interior of `domain`, indexed by interior slot:
    /// diagonal Σ_y W_xy over all neighbors (halo included), off-diagonal
    /// −W_xy between interior vertices.
    pub fn generator(graph: &WeightedGraph, domain: &Domain) -> Self {
        let n = domain.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for &v in domain.interior() {
            let (t, w) = graph.neighbors(v);
            let mut row: Vec<(usize, f64)> = t
                .iter()
                .zip(w)
                .filter_map(|(&y, &wy)| domain.slot(y).map(|j| (j, -wy)))
                .collect();
            row.push((domain.slot(v).expect("interior vertex"), graph.rate(v)));
            row.sort_unstable_by_key(|e| e.0);
            for (c, x) in row {
                cols.push(c);
                vals.push(x);
            }
            offsets.push(cols.len());
        }
        Self {
            n,
            offsets,
            cols,
            vals,
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed. The
    /// caller supplies both triangles.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, x) in triplets {
            if i >= n || j >= n {
                return Err(invalid(format!("entry ({i},{j}) outside a {n}×{n} matrix")));
            }
            rows[i].push((j, x));
        }
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut r in rows {
            r.sort_unstable_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, x) in r {
                if last == Some(c) {
                    *vals.last_mut().expect("nonempty") += x;
                } else {
                    cols.push(c);
                    vals.push(x);
                    last = Some(c);
                }
            }
            offsets.push(cols.len());
        }
        Ok(Self {
            n,
            offsets,
            cols,
            vals,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().position(|&j| j == i).map_or(0.0, |k| v[k])
            })
            .collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    /// Envelope size Σ_i (i − first_i + 1) under the permutation `perm`
    /// (new index → old index).
    fn envelope_size(&self, perm: &[usize], inv: &[usize]) -> usize {
        (0..self.n)
            .map(|i| {
                let (c, _) = self.row(perm[i]);
                let first = c.iter().map(|&j| inv[j]).min().unwrap_or(i).min(i);
                i - first + 1
            })
            .sum()
    }
}

/// Reverse Cuthill–McKee ordering (new index → old index).
pub fn reverse_cuthill_mckee(a: &SparseSym) -> Vec<usize> {
    let n = a.len();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if placed[seed] {
            continue;
        }
        let root = pseudo_peripheral(a, seed, &degree);
        let mut queue = VecDeque::new();
        placed[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).0.iter().copied().filter(|&j| !placed[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                placed[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &SparseSym, root: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; a.len()];
    let mut queue = VecDeque::new();
    level[root] = 0;
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        for &j in a.row(v).0 {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                queue.push_back(j);
            }
        }
    }
    level
}

fn pseudo_peripheral(a: &SparseSym, start: usize, degree: &[usize]) -> usize {
    let mut root = start;
    let mut ecc = 0;
    for _ in 0..4 {
        let level = bfs_levels(a, root);
        let far = level
            .iter()
            .filter(|&&l| l != usize::MAX)
            .copied()
            .max()
            .unwrap_or(0);
        if far <= ecc {
            break;
        }
        ecc = far;
        root = (0..a.len())
            .filter(|&i| level[i] == far)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(root);
    }
    root
}

/// Cholesky factor A = L Lᵀ stored by rows over the envelope of a
/// (possibly reordered) symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    n: usize,
    /// new index → original index
    perm: Vec<usize>,
    /// original index → new index
    inv: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
    min_pivot: f64,
}

impl SkylineCholesky {
    pub fn factor(a: &SparseSym) -> Result<Self> {
        Self::factor_with_budget(a, DEFAULT_ENVELOPE_BUDGET)
    }

    /// Factor `a`, reordering by reverse Cuthill–McKee when that shrinks the
    /// envelope.
    pub fn factor_with_budget(a: &SparseSym, budget: usize) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(invalid("cannot factor an empty matrix"));
        }
        let identity: Vec<usize> = (0..n).collect();
        let rcm = reverse_cuthill_mckee(a);
        let inv_of = |p: &[usize]| {
            let mut inv = vec![0; n];
            for (new, &old) in p.iter().enumerate() {
                inv[old] = new;
            }
            inv
        };
        let rcm_inv = inv_of(&rcm);
        let (perm, inv) = if a.envelope_size(&rcm, &rcm_inv) < a.envelope_size(&identity, &identity)
        {
            (rcm, rcm_inv)
        } else {
            (identity.clone(), identity)
        };

        let mut first = vec![0usize; n];
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            let (c, _) = a.row(perm[i]);
            first[i] = c.iter().map(|&j| inv[j]).min().unwrap_or(i).min(i);
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let size = start[n];
        if size > budget {
            return Err(Error::Budget {
                what: "Cholesky envelope entries",
                requested: size,
                budget,
            });
        }
        let mut vals = vec![0.0; size];
        for i in 0..n {
            let (c, v) = a.row(perm[i]);
            for (&j, &x) in c.iter().zip(v) {
                let jj = inv[j];
                if jj <= i {
                    vals[start[i] + jj - first[i]] += x;
                }
            }
        }

        let mut min_pivot = f64::INFINITY;
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = vals.split_at_mut(start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &done[start[j]..start[j] + (j - fj + 1)];
                let s = dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                row_i[j - fi] = (row_i[j - fi] - s) / row_j[j - fj];
            }
            let s = dot(&row_i[..i - fi], &row_i[..i - fi]);
            let pivot = row_i[i - fi] - s;
            if !(pivot > 0.0) {
                return Err(Error::Singular(format!(
                    "non-positive pivot {pivot:e} at row {} (original index {})",
                    i, perm[i]
                )));
            }
            min_pivot = min_pivot.min(pivot);
            row_i[i - fi] = pivot.sqrt();
        }
        Ok(Self {
            n,
            perm,
            inv,
            first,
            start,
            vals,
            min_pivot,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Smallest pivot A_ii − Σ L_ik² met during factorization (> 0 means PD).
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn envelope_entries(&self) -> usize {
        self.vals.len()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.diag(i).ln()).sum::<f64>()
    }

    #[inline]
    fn diag(&self, i: usize) -> f64 {
        self.vals[self.start[i + 1] - 1]
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.vals[self.start[i]..self.start[i + 1] - 1]
    }

    /// Solve L y = b in place (permuted coordinates), skipping the leading
    /// `skip` rows known to be zero in both b and y.
    fn forward_from(&self, y: &mut [f64], skip: usize) {
        for i in skip..self.n {
            let fi = self.first[i].max(skip);
            let row = &self.row(i)[fi - self.first[i]..];
            let s = dot(row, &y[fi..i]);
            y[i] = (y[i] - s) / self.diag(i);
        }
    }

    /// Solve Lᵀ x = y in place (permuted coordinates).
    fn backward(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let xi = y[i] / self.diag(i);
            y[i] = xi;
            let fi = self.first[i];
            let row = self.row(i);
            for (k, &l) in row.iter().enumerate() {
                y[fi + k] -= l * xi;
            }
        }
    }

    /// Solve A x = b in place (original coordinates).
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        self.forward_from(&mut y, 0);
        self.backward(&mut y);
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    /// Column `j` of A⁻¹ (original coordinates).
    pub fn inverse_column(&self, j: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let jj = self.inv[j];
        y[jj] = 1.0;
        self.forward_from(&mut y, jj);
        self.backward(&mut y);
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }

    /// (A⁻¹)_jj = ‖L⁻¹ e_j‖², from a forward solve alone.
    pub fn inverse_diagonal_entry(&self, j: usize) -> f64 {
        let jj = self.inv[j];
        let mut y = vec![0.0; self.n];
        y[jj] = 1.0;
        self.forward_from(&mut y, jj);
        dot(&y[jj..], &y[jj..])
    }

    /// x = L⁻ᵀ z mapped back to original coordinates: if z is standard
    /// normal, x has covariance A⁻¹.
    pub fn apply_inverse_transpose_factor(&self, z: &[f64], out: &mut [f64]) {
        let mut y = z.to_vec();
        self.backward(&mut y);
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = y[new];
        }
    }

    /// Dense A⁻¹ in row-major order, computed by blocked solves against
    /// unit vectors. Each column is solved independently, so the symmetry
    /// of the result is a genuine check on the solve.
    pub fn dense_inverse(&self) -> Vec<f64> {
        const NB: usize = 32;
        let n = self.n;
        let mut out = vec![0.0; n * n];
        let mut block = vec![0.0; n * NB];
        let mut c0 = 0;
        while c0 < n {
            let nb = NB.min(n - c0);
            block.iter_mut().for_each(|x| *x = 0.0);
            for c in 0..nb {
                block[(c0 + c) * NB + c] = 1.0;
            }
            // forward: rows before c0 stay zero
            for i in c0..n {
                let fi = self.first[i].max(c0);
                let row = &self.row(i)[fi - self.first[i]..];
                let (head, tail) = block.split_at_mut(i * NB);
                let yi = &mut tail[..NB];
                for (k, &l) in row.iter().enumerate() {
                    let yk = &head[(fi + k) * NB..(fi + k + 1) * NB];
                    for r in 0..NB {
                        yi[r] -= l * yk[r];
                    }
                }
                let d = 1.0 / self.diag(i);
                yi.iter_mut().for_each(|x| *x *= d);
            }
            // backward
            for i in (0..n).rev() {
                let d = 1.0 / self.diag(i);
                let fi = self.first[i];
                let row = self.row(i);
                let (head, tail) = block.split_at_mut(i * NB);
                let xi = &mut tail[..NB];
                xi.iter_mut().for_each(|x| *x *= d);
                for (k, &l) in row.iter().enumerate() {
                    let yk = &mut head[(fi + k) * NB..(fi + k + 1) * NB];
                    for r in 0..NB {
                        yk[r] -= l * xi[r];
                    }
                }
            }
            for i in 0..n {
                let oi = self.perm[i];
                for c in 0..nb {
                    out[oi * n + self.perm[c0 + c]] = block[i * NB + c];
                }
            }
            c0 += nb;
        }
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize without reassociation
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for A x = b, starting from the
/// contents of `x`. Stops when ‖r‖ ≤ tol·‖b‖.
pub fn conjugate_gradient(
    a: &SparseSym,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = a.len();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut ax = vec![0.0; n];
    a.matvec(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            return Ok(CgOutcome {
                iterations: it,
                relative_residual: rnorm / bnorm,
            });
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular(format!(
                "CG met non-positive curvature {pap:e}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = dot(&r, &r).sqrt();
    Err(Error::Singular(format!(
        "CG did not converge in {max_iter} iterations (relative residual {:e})",
        rnorm / bnorm
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path_matrix(n: usize) -> SparseSym {
        // tridiagonal 2, −1 with scrambled labels so RCM has work to do
        let label = |i: usize| (i * 7) % n;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((label(i), label(i), 2.0));
            if i + 1 < n {
                t.push((label(i), label(i + 1), -1.0));
                t.push((label(i + 1), label(i), -1.0));
            }
        }
        SparseSym::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn two_by_two_by_hand() {
        let a =
            SparseSym::from_triplets(2, &[(0, 0, 4.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 3.0)])
                .unwrap();
        let f = SkylineCholesky::factor(&a).unwrap();
        let inv = f.dense_inverse();
        // [[4,-1],[-1,3]]⁻¹ = [[3,1],[1,4]] / 11
        let want = [3.0 / 11.0, 1.0 / 11.0, 1.0 / 11.0, 4.0 / 11.0];
        for (x, w) in inv.iter().zip(want) {
            assert_relative_eq!(*x, w, epsilon = 1e-15);
        }
        assert_relative_eq!(f.log_det(), 11f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(f.inverse_diagonal_entry(1), 4.0 / 11.0, epsilon = 1e-15);
    }

    #[test]
    fn rcm_shrinks_scrambled_path() {
        let a = path_matrix(101);
        let f = SkylineCholesky::factor(&a).unwrap();
        assert!(f.envelope_entries() <= 2 * 101);
        // inverse of the Dirichlet path Laplacian: G(i,j) = min(i+1,j+1)(n+1−max(i+1,j+1))/(n+1)
        let n = 101;
        let inv = f.dense_inverse();
        let label = |i: usize| (i * 7) % n;
        for i in [0usize, 13, 50, 100] {
            for j in [0usize, 7, 50, 99] {
                let (lo, hi) = ((i.min(j) + 1) as f64, (i.max(j) + 1) as f64);
                let want = lo * ((n + 1) as f64 - hi) / (n + 1) as f64;
                assert_relative_eq!(inv[label(i) * n + label(j)], want, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn solve_paths_agree() {
        let a = path_matrix(40);
        let f = SkylineCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let mut x1 = b.clone();
        f.solve_in_place(&mut x1);
        let mut x2 = vec![0.0; 40];
        let out = conjugate_gradient(&a, &b, &mut x2, 1e-13, 1000).unwrap();
        assert!(out.relative_residual <= 1e-13);
        for (u, v) in x1.iter().zip(&x2) {
            assert_relative_eq!(u, v, epsilon = 1e-10);
        }
        let col = f.inverse_column(5);
        let dense = f.dense_inverse();
        for i in 0..40 {
            assert_relative_eq!(col[i], dense[i * 40 + 5], epsilon = 1e-14);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = SparseSym::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)])
            .unwrap();
        assert!(matches!(
            SkylineCholesky::factor(&a),
            Err(Error::Singular(_))
        ));
        let tiny = SkylineCholesky::factor_with_budget(&path_matrix(50), 10);
        assert!(matches!(tiny, Err(Error::Budget { .. })));
    }
}
