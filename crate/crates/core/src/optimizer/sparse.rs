//! Block-sparse symmetric positive-definite solves with 3×3 blocks.
//!
//! The sparsity pattern is the vertex adjacency of the pose graph. A greedy
//! minimum-degree ordering is computed on that block graph once per solve;
//! the elimination graph it produces is exactly the fill pattern of the
//! Cholesky factor, so the numeric phase never has to grow its storage.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{Matrix3, Vector3};

/// Symmetric block matrix: diagonal blocks plus the strict upper triangle.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    diag: Vec<Matrix3<f64>>,
    upper: Vec<HashMap<usize, Matrix3<f64>>>,
}

impl BlockMatrix {
    pub fn zeros(n: usize) -> Self {
        BlockMatrix {
            diag: vec![Matrix3::zeros(); n],
            upper: vec![HashMap::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn is_finite(&self) -> bool {
        self.diag.iter().all(|m| m.iter().all(|x| x.is_finite()))
            && self
                .upper
                .iter()
                .flat_map(|r| r.values())
                .all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// Adds `m` to block `(row, col)` (and its transpose to `(col, row)`).
    pub fn add(&mut self, row: usize, col: usize, m: &Matrix3<f64>) {
        use std::cmp::Ordering;
        match row.cmp(&col) {
            Ordering::Equal => self.diag[row] += m,
            Ordering::Less => *self.upper[row].entry(col).or_insert_with(Matrix3::zeros) += m,
            Ordering::Greater => {
                *self.upper[col].entry(row).or_insert_with(Matrix3::zeros) += m.transpose()
            }
        }
    }

    pub fn add_to_diagonal(&mut self, lambda: f64) {
        for d in &mut self.diag {
            for k in 0..3 {
                d[(k, k)] += lambda;
            }
        }
    }

    pub fn block(&self, row: usize, col: usize) -> Matrix3<f64> {
        use std::cmp::Ordering;
        match row.cmp(&col) {
            Ordering::Equal => self.diag[row],
            Ordering::Less => self.upper[row]
                .get(&col)
                .copied()
                .unwrap_or_else(Matrix3::zeros),
            Ordering::Greater => self.upper[col]
                .get(&row)
                .map(|m| m.transpose())
                .unwrap_or_else(Matrix3::zeros),
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut out = nalgebra::DMatrix::zeros(3 * n, 3 * n);
        for r in 0..n {
            for c in 0..n {
                out.fixed_view_mut::<3, 3>(3 * r, 3 * c)
                    .copy_from(&self.block(r, c));
            }
        }
        out
    }
}

/// Fill-reducing ordering and factor structure for a block pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    /// `order[k]` is the original block eliminated at step `k`.
    order: Vec<usize>,
    /// `position[b]` is the step at which block `b` is eliminated.
    position: Vec<usize>,
    /// Rows (in elimination positions, ascending) of each factor column.
    columns: Vec<Vec<usize>>,
}

impl Symbolic {
    /// Greedy minimum degree over the block adjacency `neighbors`.
    pub fn analyze(neighbors: &[BTreeSet<usize>]) -> Self {
        let n = neighbors.len();
        let mut graph: Vec<BTreeSet<usize>> = neighbors.to_vec();
        let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (graph[v].len(), v)).collect();
        let mut order = Vec::with_capacity(n);
        let mut eliminated_nbrs = Vec::with_capacity(n);

        while let Some((_, v)) = queue.pop_first() {
            let nbrs: Vec<usize> = graph[v].iter().copied().collect();
            for &a in &nbrs {
                queue.remove(&(graph[a].len(), a));
                graph[a].remove(&v);
            }
            for (i, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[i + 1..] {
                    graph[a].insert(b);
                    graph[b].insert(a);
                }
            }
            for &a in &nbrs {
                queue.insert((graph[a].len(), a));
            }
            graph[v].clear();
            order.push(v);
            eliminated_nbrs.push(nbrs);
        }

        let mut position = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        let columns = eliminated_nbrs
            .into_iter()
            .map(|nbrs| {
                let mut rows: Vec<usize> = nbrs.into_iter().map(|b| position[b]).collect();
                rows.sort_unstable();
                rows
            })
            .collect();
        Symbolic {
            order,
            position,
            columns,
        }
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    /// Number of off-diagonal blocks in the factor.
    pub fn fill(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }
}

/// Numeric Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Factor<'s> {
    symbolic: &'s Symbolic,
    diag: Vec<Matrix3<f64>>,
    off: Vec<Vec<Matrix3<f64>>>,
}

impl<'s> Factor<'s> {
    /// Right-looking block factorization. Returns `None` when the matrix is
    /// not numerically positive definite.
    pub fn new(symbolic: &'s Symbolic, a: &BlockMatrix) -> Option<Self> {
        let n = symbolic.dim();
        assert_eq!(n, a.dim(), "pattern and matrix disagree on size");
        let mut diag: Vec<Matrix3<f64>> = (0..n).map(|k| a.diag[symbolic.order[k]]).collect();
        let mut off: Vec<Vec<Matrix3<f64>>> = symbolic
            .columns
            .iter()
            .map(|rows| vec![Matrix3::zeros(); rows.len()])
            .collect();
        for (b, row) in a.upper.iter().enumerate() {
            for (&c, m) in row {
                let (pb, pc) = (symbolic.position[b], symbolic.position[c]);
                // store at (max, min) in elimination positions
                let (r, col, blk) = if pb > pc {
                    (pb, pc, *m)
                } else {
                    (pc, pb, m.transpose())
                };
                let slot = symbolic.columns[col]
                    .binary_search(&r)
                    .expect("input pattern is contained in the fill pattern");
                off[col][slot] += blk;
            }
        }

        for k in 0..n {
            let lkk = diag[k].cholesky()?.l();
            let lkk_inv_t = lkk.try_inverse()?.transpose();
            diag[k] = lkk;
            for blk in off[k].iter_mut() {
                *blk *= lkk_inv_t;
            }
            let rows = &symbolic.columns[k];
            for (jj, &j) in rows.iter().enumerate() {
                let ljk = off[k][jj];
                diag[j] -= ljk * ljk.transpose();
                for (ii, &i) in rows.iter().enumerate().skip(jj + 1) {
                    let update = off[k][ii] * ljk.transpose();
                    let slot = symbolic.columns[j]
                        .binary_search(&i)
                        .expect("elimination clique is in the fill pattern");
                    off[j][slot] -= update;
                }
            }
        }
        Some(Factor {
            symbolic,
            diag,
            off,
        })
    }

    /// Solves `A x = rhs` (both indexed by original block).
    pub fn solve(&self, rhs: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let s = self.symbolic;
        let n = s.dim();
        let mut y: Vec<Vector3<f64>> = (0..n).map(|k| rhs[s.order[k]]).collect();
        for k in 0..n {
            let yk = forward_3(&self.diag[k], &y[k]);
            y[k] = yk;
            for (slot, &i) in s.columns[k].iter().enumerate() {
                y[i] -= self.off[k][slot] * yk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = y[k];
            for (slot, &i) in s.columns[k].iter().enumerate() {
                acc -= self.off[k][slot].transpose() * y[i];
            }
            y[k] = backward_3(&self.diag[k], &acc);
        }
        let mut x = vec![Vector3::zeros(); n];
        for k in 0..n {
            x[s.order[k]] = y[k];
        }
        x
    }
}

fn forward_3(l: &Matrix3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let x0 = b[0] / l[(0, 0)];
    let x1 = (b[1] - l[(1, 0)] * x0) / l[(1, 1)];
    let x2 = (b[2] - l[(2, 0)] * x0 - l[(2, 1)] * x1) / l[(2, 2)];
    Vector3::new(x0, x1, x2)
}

fn backward_3(l: &Matrix3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let x2 = b[2] / l[(2, 2)];
    let x1 = (b[1] - l[(2, 1)] * x2) / l[(1, 1)];
    let x0 = (b[0] - l[(1, 0)] * x1 - l[(2, 0)] * x2) / l[(0, 0)];
    Vector3::new(x0, x1, x2)
}
