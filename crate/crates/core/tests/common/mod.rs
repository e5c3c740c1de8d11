//! Test-only reference implementations and generators.
#![allow(dead_code)]

use assocmem::memory::{RowMatrix, WriteBatch, WriteKeys};
use rand::Rng;

/// Solves A x = B for square A by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().chain(rb).copied().collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        let p = aug[col][col];
        assert!(p.abs() > 1e-12, "singular system");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    let pivot_row = aug[col].clone();
                    for (x, p) in aug[r].iter_mut().zip(&pivot_row) {
                        *x -= f * p;
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn to_rows(m: &RowMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).to_vec()).collect()
}

/// Full-column-rank least squares via the normal equations (W^T W) M = W^T Z.
pub fn normal_equations(w: &RowMatrix, z: &RowMatrix) -> Vec<Vec<f64>> {
    let (n, k, c) = (w.nrows(), w.ncols(), z.ncols());
    let wtw: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| (0..n).map(|r| w.get(r, i) * w.get(r, j)).sum()).collect())
        .collect();
    let wtz: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..c).map(|j| (0..n).map(|r| w.get(r, i) * z.get(r, j)).sum()).collect())
        .collect();
    gauss_solve(&wtw, &wtz)
}

pub fn frob(a: &[Vec<f64>], b: &RowMatrix) -> f64 {
    a.iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, v)| (i, j, v)))
        .map(|(i, j, v)| (v - b.get(i, j)).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> RowMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    RowMatrix::from_vec(rows, cols, data).unwrap()
}

/// Squared Frobenius norm of Z - W M.
pub fn residual_sq(w: &RowMatrix, z: &RowMatrix, m: &RowMatrix) -> f64 {
    let mut total = 0.0;
    for n in 0..z.nrows() {
        for c in 0..z.ncols() {
            let pred: f64 = (0..w.ncols()).map(|k| w.get(n, k) * m.get(k, c)).sum();
            total += (z.get(n, c) - pred).powi(2);
        }
    }
    total
}

#[derive(Clone, Copy, Debug)]
pub enum KeyShape {
    Dense,
    OneHot,
    /// Dense with some rows duplicated, forcing rank deficiency.
    DenseDuplicated,
    /// One-hot with repeated slots and differing encodings.
    OneHotCollisions,
}

pub fn random_batch(rng: &mut impl Rng, shape: KeyShape) -> WriteBatch {
    let n = rng.random_range(1..=50);
    let k = rng.random_range(1..=20);
    let c = rng.random_range(1..=32);
    let z = random_matrix(rng, n, c);
    let keys = match shape {
        KeyShape::Dense => WriteKeys::Dense(random_matrix(rng, n, k)),
        KeyShape::DenseDuplicated => {
            let mut w = random_matrix(rng, n, k);
            if n > 1 {
                for _ in 0..rng.random_range(1..=n / 2 + 1) {
                    let (src, dst) = (rng.random_range(0..n), rng.random_range(0..n));
                    let row = w.row(src).to_vec();
                    w.row_mut(dst).copy_from_slice(&row);
                }
            }
            WriteKeys::Dense(w)
        }
        KeyShape::OneHot | KeyShape::OneHotCollisions => {
            let slots = (0..n).map(|_| rng.random_range(0..k)).collect();
            WriteKeys::OneHot { slots, len: k }
        }
    };
    WriteBatch::new(z, keys).unwrap()
}

/// Random batch satisfying the fast-path precondition: one-hot keys and a
/// single distinct encoding per slot, with repeats.
pub fn random_eligible_batch(rng: &mut impl Rng, max_n: usize, max_k: usize, max_c: usize) -> WriteBatch {
    let k = rng.random_range(1..=max_k);
    let c = rng.random_range(1..=max_c);
    let n = rng.random_range(1..=max_n);
    let per_slot = random_matrix(rng, k, c);
    let slots: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let mut z = RowMatrix::zeros(n, c);
    for (i, &s) in slots.iter().enumerate() {
        z.row_mut(i).copy_from_slice(per_slot.row(s));
    }
    WriteBatch::one_hot(z, slots, k).unwrap()
}

/// Classic O(n m) LCS table.
pub fn lcs_dp(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
