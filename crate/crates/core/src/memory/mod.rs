//! Value memory: least-squares write, readout, and host/device placement.
//!
//! `write` returns the minimum-norm solution of `min ||Z - W M||_F`. When no
//! row of `W` has more than one nonzero entry the columns of `W` have disjoint
//! support, `W^T W` is diagonal, and the problem splits into one weighted mean
//! per slot; otherwise it goes through an SVD with singular values below
//! `1e-10 * sigma_max` dropped.

mod oracle;
mod tier;

use std::io::Write;

use nalgebra::DMatrix;

use crate::codec::LatentVector;
use crate::error::{Error, Result};
use crate::keys::KeyVector;
use crate::linefmt;

pub use oracle::oracle_lstsq;
pub use tier::{LedgerSnapshot, Tier, TransferLedger, SCALAR_BYTES};

/// Relative cutoff below which singular values are treated as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::input(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(RowMatrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::input("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(RowMatrix { rows: rows.len(), cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_distance(&self, other: &RowMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut out = RowMatrix::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        out
    }
}

/// Keys of a write batch, one per row of `Z`.
#[derive(Clone, Debug, PartialEq)]
pub enum WriteKeys {
    /// Arbitrary N x K key matrix.
    Dense(RowMatrix),
    /// Row n is the one-hot key selecting `slots[n]` out of `len`.
    OneHot { slots: Vec<usize>, len: usize },
}

impl WriteKeys {
    pub fn n(&self) -> usize {
        match self {
            WriteKeys::Dense(w) => w.nrows(),
            WriteKeys::OneHot { slots, .. } => slots.len(),
        }
    }

    pub fn slots(&self) -> usize {
        match self {
            WriteKeys::Dense(w) => w.ncols(),
            WriteKeys::OneHot { len, .. } => *len,
        }
    }

    pub fn to_dense(&self) -> RowMatrix {
        match self {
            WriteKeys::Dense(w) => w.clone(),
            WriteKeys::OneHot { slots, len } => {
                let mut w = RowMatrix::zeros(slots.len(), *len);
                for (n, &k) in slots.iter().enumerate() {
                    w.row_mut(n)[k] = 1.0;
                }
                w
            }
        }
    }
}

/// Encodings `Z` (N x C) and their keys `W` (N x K).
#[derive(Clone, Debug, PartialEq)]
pub struct WriteBatch {
    z: RowMatrix,
    keys: WriteKeys,
}

impl WriteBatch {
    pub fn new(z: RowMatrix, keys: WriteKeys) -> Result<Self> {
        if z.nrows() == 0 {
            return Err(Error::input("write batch needs at least one row"));
        }
        if z.ncols() == 0 {
            return Err(Error::input("encodings must have at least one column"));
        }
        if keys.n() != z.nrows() {
            return Err(Error::input(format!(
                "{} encodings but {} keys",
                z.nrows(),
                keys.n()
            )));
        }
        if keys.slots() == 0 {
            return Err(Error::input("memory needs at least one slot"));
        }
        if let WriteKeys::OneHot { slots, len } = &keys {
            if let Some(&bad) = slots.iter().find(|&&k| k >= *len) {
                return Err(Error::input(format!("slot {bad} out of range for {len} slots")));
            }
        }
        Ok(WriteBatch { z, keys })
    }

    pub fn dense(z: RowMatrix, w: RowMatrix) -> Result<Self> {
        WriteBatch::new(z, WriteKeys::Dense(w))
    }

    pub fn one_hot(z: RowMatrix, slots: Vec<usize>, len: usize) -> Result<Self> {
        WriteBatch::new(z, WriteKeys::OneHot { slots, len })
    }

    pub fn z(&self) -> &RowMatrix {
        &self.z
    }

    pub fn keys(&self) -> &WriteKeys {
        &self.keys
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// Memory size K.
    pub fn slots(&self) -> usize {
        self.keys.slots()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    fn check_finite(&self) -> Result<()> {
        if !self.z.is_finite() {
            return Err(Error::Numerical("encodings contain non-finite values".into()));
        }
        if let WriteKeys::Dense(w) = &self.keys {
            if !w.is_finite() {
                return Err(Error::Numerical("keys contain non-finite values".into()));
            }
        }
        Ok(())
    }

    /// (row, slot, weight) for every row with exactly one nonzero key entry,
    /// or `None` if some row has two or more nonzeros.
    fn single_entry_rows(&self) -> Option<Vec<(usize, usize, f64)>> {
        match &self.keys {
            WriteKeys::OneHot { slots, .. } => {
                Some(slots.iter().enumerate().map(|(n, &k)| (n, k, 1.0)).collect())
            }
            WriteKeys::Dense(w) => {
                let mut out = Vec::with_capacity(w.nrows());
                for n in 0..w.nrows() {
                    let mut hit = None;
                    for (k, &v) in w.row(n).iter().enumerate() {
                        if v != 0.0 {
                            if hit.is_some() {
                                return None;
                            }
                            hit = Some((n, k, v));
                        }
                    }
                    out.extend(hit);
                }
                Some(out)
            }
        }
    }
}

/// The K x C value memory together with its placement.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryMatrix {
    values: RowMatrix,
    tier: Tier,
}

impl MemoryMatrix {
    pub fn new(values: RowMatrix, tier: Tier) -> Self {
        MemoryMatrix { values, tier }
    }

    pub fn values(&self) -> &RowMatrix {
        &self.values
    }

    pub fn slots(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn size_bytes(&self) -> u64 {
        (self.slots() * self.dim()) as u64 * SCALAR_BYTES
    }

    /// Writes each slot as a record labelled with its index.
    pub fn export<W: Write>(&self, out: &mut W) -> Result<()> {
        let labels: Vec<String> = (0..self.slots()).map(|k| k.to_string()).collect();
        linefmt::write_records(
            out,
            self.dim(),
            labels.iter().enumerate().map(|(k, l)| (l.as_str(), self.values.row(k))),
        )
    }
}

/// Minimum-norm least-squares write `M = W^+ Z`.
pub fn write(batch: &WriteBatch) -> Result<MemoryMatrix> {
    batch.check_finite()?;
    let values = match batch.single_entry_rows() {
        Some(entries) => solve_disjoint(batch, &entries),
        None => solve_svd(batch)?,
    };
    if !values.is_finite() {
        return Err(Error::Numerical("least-squares solution is not finite".into()));
    }
    Ok(MemoryMatrix::new(values, Tier::Host))
}

/// Per-slot weighted mean of `z_n / w_nk` with weights `w_nk^2`. Running-mean
/// updates are skipped when the incoming value already equals the mean, so a
/// slot that only ever sees one distinct encoding holds it bit for bit.
fn solve_disjoint(batch: &WriteBatch, entries: &[(usize, usize, f64)]) -> RowMatrix {
    let k_slots = batch.slots();
    let mut weight = vec![0.0f64; k_slots];
    for &(_, k, w) in entries {
        weight[k] += w * w;
    }
    let sigma_max = weight.iter().fold(0.0f64, |m, &s| m.max(s.sqrt()));
    let keep: Vec<bool> = weight
        .iter()
        .map(|&s| s > 0.0 && s.sqrt() > RANK_RTOL * sigma_max)
        .collect();

    let dim = batch.dim();
    let mut m = RowMatrix::zeros(k_slots, dim);
    let mut seen = vec![0.0f64; k_slots];
    let mut target = vec![0.0f64; dim];
    for &(n, k, w) in entries {
        if !keep[k] {
            continue;
        }
        let z = batch.z.row(n);
        if w == 1.0 {
            target.copy_from_slice(z);
        } else {
            target.iter_mut().zip(z).for_each(|(t, &zv)| *t = zv / w);
        }
        let row = m.row_mut(k);
        if seen[k] == 0.0 {
            row.copy_from_slice(&target);
            seen[k] = w * w;
            continue;
        }
        seen[k] += w * w;
        let step = (w * w) / seen[k];
        for (mv, &t) in row.iter_mut().zip(&target) {
            if t != *mv {
                *mv += step * (t - *mv);
            }
        }
    }
    m
}

fn solve_svd(batch: &WriteBatch) -> Result<RowMatrix> {
    let w = batch.keys.to_dense().to_nalgebra();
    let z = batch.z.to_nalgebra();
    let svd = w.svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let m = svd
        .solve(&z, RANK_RTOL * sigma_max)
        .map_err(|e| Error::Numerical(format!("SVD solve failed: {e}")))?;
    Ok(RowMatrix::from_nalgebra(&m))
}

/// Result of [`write_onehot_fast`].
#[derive(Clone, Debug, PartialEq)]
pub struct FastWrite {
    pub memory: MemoryMatrix,
    /// The batch did not meet the fast-path precondition and `write` was used instead.
    pub fallback_used: bool,
}

/// Places each encoding directly into its keyed slot in O(N * C).
///
/// Requires every key to be one-hot and every slot to receive a single distinct
/// encoding (repeats of that encoding are fine). Anything else falls back to
/// [`write`] and sets `fallback_used`.
pub fn write_onehot_fast(batch: &WriteBatch) -> Result<FastWrite> {
    let fallback = || write(batch).map(|memory| FastWrite { memory, fallback_used: true });

    let owned;
    let slots: &[usize] = match &batch.keys {
        WriteKeys::OneHot { slots, .. } => slots,
        WriteKeys::Dense(w) => match dense_one_hot_slots(w) {
            Some(s) => {
                owned = s;
                &owned
            }
            None => return fallback(),
        },
    };

    let mut m = RowMatrix::zeros(batch.slots(), batch.dim());
    let mut first: Vec<Option<usize>> = vec![None; batch.slots()];
    for (n, &k) in slots.iter().enumerate() {
        let z = batch.z.row(n);
        match first[k] {
            None => {
                if z.iter().any(|v| !v.is_finite()) {
                    return fallback();
                }
                m.row_mut(k).copy_from_slice(z);
                first[k] = Some(n);
            }
            Some(prev) => {
                if batch.z.row(prev) != z {
                    return fallback();
                }
            }
        }
    }
    Ok(FastWrite { memory: MemoryMatrix::new(m, Tier::Host), fallback_used: false })
}

fn dense_one_hot_slots(w: &RowMatrix) -> Option<Vec<usize>> {
    (0..w.nrows())
        .map(|n| {
            let row = w.row(n);
            let hot = row.iter().position(|&v| v == 1.0)?;
            row.iter()
                .enumerate()
                .all(|(k, &v)| k == hot || v == 0.0)
                .then_some(hot)
        })
        .collect()
}

/// Readout `w M` for a one-hot key: a copy of row `w.hot_index()`.
pub fn read(w: &KeyVector, m: &MemoryMatrix) -> Result<LatentVector> {
    if w.len() != m.slots() {
        return Err(Error::input(format!(
            "key has {} entries, memory has {} slots",
            w.len(),
            m.slots()
        )));
    }
    LatentVector::new(m.values.row(w.hot_index()).to_vec())
}

/// Readout `w M` for an arbitrary weight vector.
pub fn read_dense(w: &[f64], m: &MemoryMatrix) -> Result<LatentVector> {
    if w.len() != m.slots() {
        return Err(Error::input(format!(
            "key has {} entries, memory has {} slots",
            w.len(),
            m.slots()
        )));
    }
    let mut out = vec![0.0; m.dim()];
    for (k, &wk) in w.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(m.values.row(k)) {
            *o += wk * v;
        }
    }
    LatentVector::new(out)
}

/// Moves `m` to `tier`, charging the ledger for the full matrix when it changes tier.
pub fn place(m: MemoryMatrix, tier: Tier, ledger: &TransferLedger) -> MemoryMatrix {
    let bytes = m.size_bytes();
    match (m.tier, tier) {
        (Tier::Host, Tier::Device) => {
            ledger.host_to_device(bytes);
            ledger.alloc_device(bytes);
        }
        (Tier::Device, Tier::Host) => {
            ledger.device_to_host(bytes);
            ledger.free_device(bytes);
        }
        _ => {}
    }
    MemoryMatrix { tier, ..m }
}

/// Reads with a one-hot key and delivers the readout to `dest`. Only the
/// C-vector crosses tiers.
pub fn read_to(
    w: &KeyVector,
    m: &MemoryMatrix,
    dest: Tier,
    ledger: &TransferLedger,
) -> Result<LatentVector> {
    let z = read(w, m)?;
    let bytes = z.dim() as u64 * SCALAR_BYTES;
    match (m.tier, dest) {
        (Tier::Host, Tier::Device) => ledger.host_to_device(bytes),
        (Tier::Device, Tier::Host) => ledger.device_to_host(bytes),
        _ => {}
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::one_hot_key;

    fn mat(rows: &[&[f64]]) -> RowMatrix {
        RowMatrix::from_rows(rows).unwrap()
    }

    fn identity(n: usize) -> RowMatrix {
        let mut m = RowMatrix::zeros(n, n);
        for i in 0..n {
            m.row_mut(i)[i] = 1.0;
        }
        m
    }

    #[test]
    fn identity_keys_return_z() {
        let z = mat(&[&[1.0, 2.0], &[3.0, -4.0], &[0.5, 0.25]]);
        let batch = WriteBatch::dense(z.clone(), identity(3)).unwrap();
        assert_eq!(write(&batch).unwrap().values(), &z);
    }

    #[test]
    fn permutation_keys_place_rows() {
        let z = mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let perm = [2usize, 0, 1];
        let mut w = RowMatrix::zeros(3, 3);
        for (n, &k) in perm.iter().enumerate() {
            w.row_mut(n)[k] = 1.0;
        }
        let m = write(&WriteBatch::dense(z.clone(), w).unwrap()).unwrap();
        for (n, &k) in perm.iter().enumerate() {
            assert_eq!(m.values().row(k), z.row(n));
        }
    }

    #[test]
    fn duplicate_slot_holds_average() {
        // min (a - m)^2 + (b - m)^2  =>  m = (a + b) / 2
        let z = mat(&[&[1.0, 10.0], &[3.0, -2.0]]);
        let batch = WriteBatch::one_hot(z, vec![1, 1], 2).unwrap();
        let m = write(&batch).unwrap();
        assert_eq!(m.values().row(0), &[0.0, 0.0]);
        let got = m.values().row(1);
        assert!((got[0] - 2.0).abs() < 1e-12 && (got[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn write_rejects_non_finite() {
        let z = mat(&[&[f64::NAN]]);
        let batch = WriteBatch::one_hot(z, vec![0], 1).unwrap();
        assert!(matches!(write(&batch), Err(Error::Numerical(_))));
        let z = mat(&[&[1.0]]);
        let w = mat(&[&[f64::INFINITY, 1.0]]);
        let batch = WriteBatch::dense(z, w).unwrap();
        assert!(matches!(write(&batch), Err(Error::Numerical(_))));
    }

    #[test]
    fn batch_validation() {
        let z = mat(&[&[1.0], &[2.0]]);
        assert!(WriteBatch::one_hot(z.clone(), vec![0], 1).is_err());
        assert!(WriteBatch::one_hot(z.clone(), vec![0, 3], 2).is_err());
        assert!(WriteBatch::one_hot(z.clone(), vec![0, 0], 0).is_err());
        assert!(WriteBatch::dense(z, RowMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn fast_path_on_repeats() {
        let z = mat(&[&[1.0, 2.0], &[3.0, 4.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let batch = WriteBatch::one_hot(z, vec![1, 0, 1, 1], 3).unwrap();
        let fast = write_onehot_fast(&batch).unwrap();
        assert!(!fast.fallback_used);
        assert_eq!(fast.memory, write(&batch).unwrap());
    }

    #[test]
    fn fast_path_falls_back_on_collision() {
        let z = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let batch = WriteBatch::one_hot(z, vec![0, 0], 1).unwrap();
        let fast = write_onehot_fast(&batch).unwrap();
        assert!(fast.fallback_used);
        assert_eq!(fast.memory, write(&batch).unwrap());
    }

    #[test]
    fn fast_path_accepts_dense_one_hot_and_rejects_dense() {
        let z = mat(&[&[1.0], &[2.0]]);
        let batch = WriteBatch::dense(z.clone(), mat(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let fast = write_onehot_fast(&batch).unwrap();
        assert!(!fast.fallback_used);
        assert_eq!(fast.memory.values(), &mat(&[&[2.0], &[1.0]]));

        let batch = WriteBatch::dense(z, mat(&[&[0.5, 1.0], &[1.0, 0.0]])).unwrap();
        assert!(write_onehot_fast(&batch).unwrap().fallback_used);
    }

    #[test]
    fn read_examples() {
        let m = MemoryMatrix::new(mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]), Tier::Host);
        let w = one_hot_key(2, 3).unwrap();
        assert_eq!(read(&w, &m).unwrap().as_slice(), &[5.0, 6.0]);
        assert_eq!(read_dense(&[0.0; 3], &m).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(matches!(read(&one_hot_key(0, 2).unwrap(), &m), Err(Error::Input(_))));

        let m2 = MemoryMatrix::new(mat(&[&[1.0, 2.0], &[3.0, 4.0]]), Tier::Host);
        // [0.5, -2] . [[1,2],[3,4]] = [0.5 - 6, 1 - 8]
        assert_eq!(read_dense(&[0.5, -2.0], &m2).unwrap().as_slice(), &[-5.5, -7.0]);
    }

    #[test]
    fn place_accounts_bytes() {
        let ledger = TransferLedger::default();
        let m = MemoryMatrix::new(RowMatrix::zeros(1000, 256), Tier::Host);
        let m = place(m, Tier::Host, &ledger);
        assert_eq!(ledger.snapshot(), LedgerSnapshot::default());
        let m = place(m, Tier::Device, &ledger);
        assert_eq!(m.tier(), Tier::Device);
        let snap = ledger.snapshot();
        assert_eq!(snap.bytes_host_to_device, 2_048_000);
        assert_eq!(snap.peak_device_bytes, 2_048_000);
        let m = place(m, Tier::Host, &ledger);
        assert_eq!(m.tier(), Tier::Host);
        assert_eq!(ledger.snapshot().bytes_device_to_host, 2_048_000);
    }

    #[test]
    fn read_to_device_moves_one_vector() {
        let ledger = TransferLedger::default();
        let m = MemoryMatrix::new(mat(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]), Tier::Host);
        let w = one_hot_key(1, 2).unwrap();
        let host = read_to(&w, &m, Tier::Device, &ledger).unwrap();
        assert_eq!(ledger.snapshot().bytes_host_to_device, 3 * SCALAR_BYTES);

        let dev_ledger = TransferLedger::default();
        let on_device = place(m, Tier::Device, &dev_ledger);
        let before = dev_ledger.snapshot();
        let dev = read_to(&w, &on_device, Tier::Device, &dev_ledger).unwrap();
        assert_eq!(dev_ledger.snapshot(), before);
        assert_eq!(host, dev);
    }

    #[test]
    fn export_labels_slots() {
        let m = MemoryMatrix::new(mat(&[&[1.5], &[-2.0]]), Tier::Host);
        let mut buf = Vec::new();
        m.export(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# dim 1\n0\t1.5\n1\t-2\n");
    }
}
