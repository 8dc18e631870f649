//! Random Hadamard incoherence processing.
//!
//! Conjugating a weight matrix by seeded sign flips and orthonormal
//! Hadamard transforms flattens its largest entries (drives the
//! incoherence ratio toward 1) without changing the proxy loss, provided
//! the Hessian is conjugated by the same column transform. Non
//! power-of-two dimensions factor as 2^a * b against a registered base
//! Hadamard of order b.

use crate::error::{Error, Result};
use crate::rng;
use nalgebra::DMatrix;
use std::path::Path;

/// A hand-registered Hadamard matrix of small order, entries +/-1.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseHadamard {
    order: usize,
    /// Row-major +/-1.0 entries.
    entries: Vec<f64>,
}

impl BaseHadamard {
    pub const MAX_ORDER: usize = 256;

    pub fn from_entries(order: usize, entries: Vec<f64>) -> Result<Self> {
        if order == 0 || order > Self::MAX_ORDER {
            return Err(Error::BadHadamard(format!("order {order} out of range")));
        }
        if entries.len() != order * order {
            return Err(Error::BadHadamard(format!(
                "{} entries for order {order}",
                entries.len()
            )));
        }
        if entries.iter().any(|&e| e != 1.0 && e != -1.0) {
            return Err(Error::BadHadamard("entries must be +1 or -1".into()));
        }
        // H H^T = n I, exact in f64 for +/-1 entries at these orders
        for i in 0..order {
            for j in i..order {
                let dot: f64 = (0..order)
                    .map(|k| entries[i * order + k] * entries[j * order + k])
                    .sum();
                let want = if i == j { order as f64 } else { 0.0 };
                if dot != want {
                    return Err(Error::BadHadamard(format!(
                        "rows {i} and {j} are not orthogonal"
                    )));
                }
            }
        }
        Ok(BaseHadamard { order, entries })
    }

    /// Parses a plain-text matrix: one row per line, entries either
    /// whitespace-separated `1`/`-1` tokens or a compact `+-` string.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<f64> = if line.chars().all(|c| c == '+' || c == '-') {
                line.chars().map(|c| if c == '+' { 1.0 } else { -1.0 }).collect()
            } else {
                line.split_whitespace()
                    .map(|t| match t {
                        "1" | "+1" | "+" => Ok(1.0),
                        "-1" | "-" => Ok(-1.0),
                        other => Err(Error::BadHadamard(format!("bad entry {other:?}"))),
                    })
                    .collect::<Result<_>>()?
            };
            rows.push(row);
        }
        let order = rows.len();
        if rows.iter().any(|r| r.len() != order) {
            return Err(Error::BadHadamard("matrix is not square".into()));
        }
        Self::from_entries(order, rows.concat())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Orthonormal transform of a fixed length: Sylvester butterflies over a
/// power of two, optionally Kronecker-lifted over a base Hadamard.
#[derive(Clone, Debug)]
pub struct HadamardOp {
    len: usize,
    base: Option<BaseHadamard>,
}

impl HadamardOp {
    /// Picks a factorization of `len`: pure power of two when possible,
    /// otherwise `2^a * base.order` with the supplied base.
    pub fn new(len: usize, base: Option<&BaseHadamard>) -> Result<Self> {
        if len == 0 {
            return Err(Error::UnsupportedLength(0));
        }
        if len.is_power_of_two() {
            return Ok(HadamardOp { len, base: None });
        }
        if let Some(b) = base {
            if len.is_multiple_of(b.order) && (len / b.order).is_power_of_two() {
                return Ok(HadamardOp { len, base: Some(b.clone()) });
            }
        }
        Err(Error::UnsupportedLength(len))
    }

    pub fn dim(&self) -> usize {
        self.len
    }

    pub fn apply(&self, v: &mut [f64]) {
        self.run(v, false);
    }

    pub fn apply_transpose(&self, v: &mut [f64]) {
        self.run(v, true);
    }

    fn run(&self, v: &mut [f64], transpose: bool) {
        assert_eq!(v.len(), self.len);
        let b = self.base.as_ref().map_or(1, |b| b.order);
        if let Some(base) = &self.base {
            let mut scratch = vec![0.0f64; b];
            for chunk in v.chunks_exact_mut(b) {
                for (r, slot) in scratch.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, &x) in chunk.iter().enumerate() {
                        let e = if transpose {
                            base.entries[k * b + r]
                        } else {
                            base.entries[r * b + k]
                        };
                        acc += e * x;
                    }
                    *slot = acc;
                }
                chunk.copy_from_slice(&scratch);
            }
        }
        // Sylvester part is symmetric; stride keeps base chunks intact
        let rows = self.len / b;
        let mut h = 1;
        while h < rows {
            let mut block = 0;
            while block < rows {
                for r in block..block + h {
                    for o in 0..b {
                        let i = r * b + o;
                        let j = (r + h) * b + o;
                        let (x, y) = (v[i], v[j]);
                        v[i] = x + y;
                        v[j] = x - y;
                    }
                }
                block += 2 * h;
            }
            h *= 2;
        }
        let scale = 1.0 / (self.len as f64).sqrt();
        for x in v.iter_mut() {
            *x *= scale;
        }
    }
}

/// Seeds for the row- and column-side sign vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RhtSeeds {
    pub row_seed: u64,
    pub col_seed: u64,
}

/// The two-sided random Hadamard transform of one matrix shape.
#[derive(Clone, Debug)]
pub struct Rht {
    pub seeds: RhtSeeds,
    row_op: HadamardOp,
    col_op: HadamardOp,
    row_signs: Vec<f64>,
    col_signs: Vec<f64>,
}

impl Rht {
    pub fn new(rows: usize, cols: usize, seeds: RhtSeeds) -> Result<Self> {
        Self::with_bases(rows, cols, seeds, None, None)
    }

    pub fn with_bases(
        rows: usize,
        cols: usize,
        seeds: RhtSeeds,
        row_base: Option<&BaseHadamard>,
        col_base: Option<&BaseHadamard>,
    ) -> Result<Self> {
        Ok(Rht {
            seeds,
            row_op: HadamardOp::new(rows, row_base)?,
            col_op: HadamardOp::new(cols, col_base)?,
            row_signs: rng::sign_vec(seeds.row_seed, rows),
            col_signs: rng::sign_vec(seeds.col_seed, cols),
        })
    }

    fn scale_rows(&self, w: &mut DMatrix<f64>) {
        for mut col in w.column_iter_mut() {
            for (i, x) in col.iter_mut().enumerate() {
                *x *= self.row_signs[i];
            }
        }
    }

    fn scale_cols(&self, w: &mut DMatrix<f64>) {
        for (j, mut col) in w.column_iter_mut().enumerate() {
            let s = self.col_signs[j];
            for x in col.iter_mut() {
                *x *= s;
            }
        }
    }

    fn transform_cols(&self, w: &mut DMatrix<f64>, transpose: bool) {
        for mut col in w.column_iter_mut() {
            let slice = col.as_mut_slice();
            if transpose {
                self.row_op.apply_transpose(slice);
            } else {
                self.row_op.apply(slice);
            }
        }
    }

    fn transform_rows(&self, w: &mut DMatrix<f64>, op: &HadamardOp, transpose: bool) {
        let mut scratch = vec![0.0f64; w.ncols()];
        for i in 0..w.nrows() {
            for (j, slot) in scratch.iter_mut().enumerate() {
                *slot = w[(i, j)];
            }
            if transpose {
                op.apply_transpose(&mut scratch);
            } else {
                op.apply(&mut scratch);
            }
            for (j, &x) in scratch.iter().enumerate() {
                w[(i, j)] = x;
            }
        }
    }

    /// In place: W <- U S_r W S_c U', both sides sign-flipped then rotated.
    pub fn forward(&self, w: &mut DMatrix<f64>) -> Result<()> {
        self.check(w)?;
        self.scale_rows(w);
        self.scale_cols(w);
        self.transform_cols(w, false);
        self.transform_rows(w, &self.col_op, false);
        Ok(())
    }

    /// Exact inverse of [`Rht::forward`] up to float rounding.
    pub fn inverse(&self, w: &mut DMatrix<f64>) -> Result<()> {
        self.check(w)?;
        self.transform_cols(w, true);
        self.transform_rows(w, &self.col_op, true);
        self.scale_rows(w);
        self.scale_cols(w);
        Ok(())
    }

    /// Conjugates an n x n proxy Hessian by the column-side transform and
    /// re-symmetrizes, so the proxy loss is preserved exactly.
    pub fn conjugate_hessian(&self, h: &mut DMatrix<f64>) -> Result<()> {
        let n = self.col_op.dim();
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} Hessian vs column transform of length {n}",
                h.nrows(),
                h.ncols()
            )));
        }
        for (j, mut col) in h.column_iter_mut().enumerate() {
            let cs = self.col_signs[j];
            for (i, x) in col.iter_mut().enumerate() {
                *x *= cs * self.col_signs[i];
            }
        }
        for mut col in h.column_iter_mut() {
            self.col_op.apply(col.as_mut_slice());
        }
        self.transform_rows(h, &self.col_op, false);
        let ht = h.transpose();
        *h += ht;
        *h *= 0.5;
        Ok(())
    }

    fn check(&self, w: &DMatrix<f64>) -> Result<()> {
        if w.nrows() != self.row_op.dim() || w.ncols() != self.col_op.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix vs {}x{} transform",
                w.nrows(),
                w.ncols(),
                self.row_op.dim(),
                self.col_op.dim()
            )));
        }
        Ok(())
    }
}

/// Incoherence ratio: `max |W_ij| * sqrt(m n) / ||W||_F`. Equals 1 when
/// every entry carries the same magnitude.
pub fn incoherence_mu(w: &DMatrix<f64>) -> Result<f64> {
    let fro = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if fro == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let peak = w.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    Ok(peak * ((w.nrows() * w.ncols()) as f64).sqrt() / fro)
}

/// High-probability bound on the post-transform incoherence ratio:
/// mu <= 2 ln(4 m n / delta) except with probability delta.
pub fn mu_bound(rows: usize, cols: usize, delta: f64) -> f64 {
    2.0 * ((4 * rows * cols) as f64 / delta).ln()
}
