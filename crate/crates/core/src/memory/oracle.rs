//! Reference least-squares solver used to check [`super::write`].
//!
//! One-sided Jacobi SVD (Hestenes): plane rotations orthogonalize the columns
//! of `W`; the column norms are then the singular values. Shares no code with
//! the production solver.

use super::{MemoryMatrix, RowMatrix, Tier, WriteBatch, RANK_RTOL};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Minimum-norm least-squares solution of `Z ~ W M` by Jacobi SVD with
/// threshold-rank truncation.
#[allow(clippy::needless_range_loop)]
pub fn oracle_lstsq(batch: &WriteBatch) -> Result<MemoryMatrix> {
    let w = batch.keys().to_dense();
    let z = batch.z();
    if !w.is_finite() || !z.is_finite() {
        return Err(Error::Numerical("non-finite input".into()));
    }
    let (n, k, c) = (w.nrows(), w.ncols(), z.ncols());

    // Column-major working copy of W; `v` accumulates the right rotations.
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| (0..n).map(|i| w.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..k).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a * b).sum();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut cols, p, q, cs, sn);
                rotate(&mut v, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = cols.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let sigma_max = sigma.iter().fold(0.0f64, |m, &s| m.max(s));
    let cutoff = RANK_RTOL * sigma_max;

    // M = sum_j v_j (u_j^T Z) / sigma_j  with  u_j = col_j / sigma_j
    let mut m = RowMatrix::zeros(k, c);
    for j in 0..k {
        let s = sigma[j];
        if s.is_nan() || s <= cutoff {
            continue;
        }
        let mut proj = vec![0.0; c];
        for i in 0..n {
            let u = cols[j][i] / s;
            for (p, &zv) in proj.iter_mut().zip(z.row(i)) {
                *p += u * zv;
            }
        }
        for r in 0..k {
            let coef = v[j][r] / s;
            if coef == 0.0 {
                continue;
            }
            for (mv, &p) in m.row_mut(r).iter_mut().zip(&proj) {
                *mv += coef * p;
            }
        }
    }
    Ok(MemoryMatrix::new(m, Tier::Host))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, cs: f64, sn: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (a, b) = (&mut left[p], &mut right[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = cs * xp - sn * yq;
        *y = sn * xp + cs * yq;
    }
}
