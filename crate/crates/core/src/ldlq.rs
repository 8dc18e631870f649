//! Proxy-Hessian machinery and the block feedback rounding loop.
//!
//! A quantized matrix is judged by `tr((What - W) H (What - W)^T)` for a
//! symmetric proxy Hessian `H`. Rounding runs over column blocks from the
//! last to the first: the residual of every already-quantized block is
//! pushed back into the current one through the strictly-block-lower
//! feedback matrix `A = L - I` of the block `LDL^T` factorization, so each
//! trellis encode sees a target already corrected for downstream error.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::codes::NodeValueSource;
use crate::error::{Error, Result};
use crate::incoherence::{BaseHadamard, Rht};
use crate::packing::{pack, unpack, QuantizedMatrix};
use crate::trellis::{reconstruct, Encoder, TrellisSpec};

/// Symmetric curvature estimate plus the diagonal shift that makes it
/// positive definite. The shift is part of the objective: factorization
/// and reported losses both use `matrix + regularization * I`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyHessian {
    pub matrix: DMatrix<f64>,
    pub regularization: f64,
}

impl ProxyHessian {
    /// Accepts a square matrix that is symmetric to within `1e-6`
    /// (relative to its largest entry) and stores the exactly
    /// symmetrized average, so downstream algebra never sees skew.
    pub fn new(matrix: DMatrix<f64>, regularization: f64) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r == 0 {
            return Err(Error::DimensionMismatch(format!(
                "proxy Hessian must be square and nonempty, got {r}x{c}"
            )));
        }
        if !regularization.is_finite() || regularization < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "regularization must be finite and nonnegative, got {regularization}"
            )));
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut skew = 0.0f64;
        for i in 0..r {
            for j in (i + 1)..r {
                skew = skew.max((matrix[(i, j)] - matrix[(j, i)]).abs());
            }
        }
        if !skew.is_finite() || skew > 1e-6 * scale {
            return Err(Error::InvalidSpec(format!(
                "matrix is asymmetric: max skew {skew:.3e} exceeds tolerance"
            )));
        }
        let sym = 0.5 * (&matrix + matrix.transpose());
        Ok(ProxyHessian { matrix: sym, regularization })
    }

    pub fn identity(n: usize) -> Self {
        ProxyHessian { matrix: DMatrix::identity(n, n), regularization: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The matrix actually factored and scored: `H + lambda * I`.
    pub fn effective(&self) -> DMatrix<f64> {
        let mut h = self.matrix.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += self.regularization;
        }
        h
    }
}

/// Standard diagonal repair: `lambda = factor * mean(diag(H))`. A raw
/// curvature estimate is usually rank-deficient; this keeps its scale
/// while guaranteeing the block factorization a margin.
pub fn regularize(h_raw: &DMatrix<f64>, factor: f64) -> Result<ProxyHessian> {
    if !factor.is_finite() || factor < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "regularization factor must be finite and nonnegative, got {factor}"
        )));
    }
    let n = h_raw.nrows();
    if n == 0 || h_raw.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "proxy Hessian must be square and nonempty, got {}x{}",
            h_raw.nrows(),
            h_raw.ncols()
        )));
    }
    let mean_diag = (0..n).map(|i| h_raw[(i, i)]).sum::<f64>() / n as f64;
    ProxyHessian::new(h_raw.clone(), factor * mean_diag)
}

/// `tr((What - W) H (What - W)^T)`: the quadratic form every rounding
/// decision in this module is scored by.
pub fn proxy_loss(w: &DMatrix<f64>, w_hat: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
    if w.shape() != w_hat.shape() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but its quantization is {}x{}",
            w.nrows(),
            w.ncols(),
            w_hat.nrows(),
            w_hat.ncols()
        )));
    }
    if h.nrows() != h.ncols() || h.nrows() != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Hessian is {}x{} but the matrix has {} columns",
            h.nrows(),
            h.ncols(),
            w.ncols()
        )));
    }
    let e = w_hat - w;
    Ok((&e * h).component_mul(&e).sum())
}

/// Unit-block-lower factorization `H + lambda I = L D L^T` with square
/// diagonal blocks of the given size, plus the feedback matrix `A = L - I`
/// the rounding loop multiplies residuals by.
#[derive(Clone, Debug)]
pub struct BlockLdl {
    pub lower: DMatrix<f64>,
    pub diag: DMatrix<f64>,
    pub feedback: DMatrix<f64>,
    pub block: usize,
}

pub fn block_ldl(h: &ProxyHessian, block: usize) -> Result<BlockLdl> {
    let n = h.dim();
    if block == 0 || !n.is_multiple_of(block) {
        return Err(Error::DimensionMismatch(format!(
            "{n}x{n} matrix does not split into {block}-column blocks"
        )));
    }
    let nb = n / block;
    let mut s = h.effective();
    let mut lower = DMatrix::<f64>::identity(n, n);
    let mut diag = DMatrix::<f64>::zeros(n, n);
    for p in 0..nb {
        let d = s.view((p * block, p * block), (block, block)).into_owned();
        // A failed pivot factorization is the PD check: it means the
        // remaining Schur complement went indefinite and the caller
        // should raise the regularization.
        let chol = d.clone().cholesky().ok_or(Error::NotPositiveDefinite(p))?;
        diag.view_mut((p * block, p * block), (block, block)).copy_from(&d);
        for i in (p + 1)..nb {
            // L[i,p] solves L[i,p] * D_p = S[i,p].
            let sip = s.view((i * block, p * block), (block, block)).transpose();
            let lip = chol.solve(&sip).transpose();
            lower.view_mut((i * block, p * block), (block, block)).copy_from(&lip);
        }
        // Trailing update S[i,j] -= L[i,p] D_p L[j,p]^T. Later pivots only
        // read the lower triangle, so updating j <= i suffices.
        for i in (p + 1)..nb {
            let lip_d = lower.view((i * block, p * block), (block, block)) * &d;
            for j in (p + 1)..=i {
                let upd = &lip_d * lower.view((j * block, p * block), (block, block)).transpose();
                let mut tgt = s.view_mut((i * block, j * block), (block, block));
                tgt -= upd;
            }
        }
    }
    let feedback = &lower - DMatrix::<f64>::identity(n, n);
    Ok(BlockLdl { lower, diag, feedback, block })
}

/// How the matrix is normalized before encoding. The codes target unit
/// Gaussian data, so matrices are divided by a scale that is stored in
/// the container and multiplied back on decode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScaleMode {
    /// Use this exact divisor.
    Fixed(f64),
    /// Divide by the population standard deviation of all entries.
    PerMatrixStd,
}

/// Everything the rounding loop needs besides the data: trellis shape,
/// code, tile geometry, walk closure, and normalization. Elements inside
/// a tile are scanned row-major (all columns of tile row 0, then row 1,
/// ...), the order the container format assumes.
#[derive(Clone, Debug)]
pub struct QuantConfig {
    pub spec: TrellisSpec,
    pub code: NodeValueSource,
    pub block_rows: usize,
    pub block_cols: usize,
    pub tail_biting: bool,
    pub scale: ScaleMode,
}

impl QuantConfig {
    pub fn new(
        spec: TrellisSpec,
        code: NodeValueSource,
        block_rows: usize,
        block_cols: usize,
    ) -> Result<Self> {
        if block_rows == 0 || block_cols == 0 {
            return Err(Error::InvalidSpec("tile dimensions must be positive".into()));
        }
        spec.groups_for(block_rows * block_cols)?;
        if code.vector_width() != spec.vector_width {
            return Err(Error::DimensionMismatch(format!(
                "code emits {}-vectors but the trellis expects {}",
                code.vector_width(),
                spec.vector_width
            )));
        }
        Ok(QuantConfig {
            spec,
            code,
            block_rows,
            block_cols,
            tail_biting: true,
            scale: ScaleMode::PerMatrixStd,
        })
    }
}

fn resolve_scale(w: &DMatrix<f64>, mode: ScaleMode) -> Result<f64> {
    let s = match mode {
        ScaleMode::Fixed(s) => s,
        ScaleMode::PerMatrixStd => {
            let len = w.len() as f64;
            let mean = w.iter().sum::<f64>() / len;
            let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
            var.sqrt()
        }
    };
    if !s.is_finite() || s <= 0.0 {
        return Err(Error::InvalidSpec(format!(
            "encoding scale must be positive and finite, got {s}"
        )));
    }
    Ok(s)
}

/// Quantizes `w` tile by tile with Hessian feedback and returns the
/// reconstruction, its container, and `proxy_loss` against
/// `h.effective()`.
///
/// Column blocks run from last to first. Before encoding block `j`, the
/// residual of blocks `> j` is multiplied by the matching feedback
/// columns and added to the block, so its encode compensates error that
/// is already committed. The diagonal block of the feedback matrix is
/// zero, hence a block never feeds back into itself, and with `H = I`
/// the whole correction vanishes. Tiles within one column block are
/// independent and encoded in parallel; results are committed in tile
/// order, so the output is deterministic.
pub fn blockldlq_quantize(
    w: &DMatrix<f64>,
    h: &ProxyHessian,
    cfg: &QuantConfig,
) -> Result<(DMatrix<f64>, QuantizedMatrix, f64)> {
    let (m, n) = w.shape();
    let (tx, ty) = (cfg.block_rows, cfg.block_cols);
    if tx == 0 || ty == 0 || m == 0 || n == 0 || m % tx != 0 || n % ty != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{m}x{n} matrix does not tile into {tx}x{ty} blocks"
        )));
    }
    if h.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "Hessian is {dim}x{dim} but the matrix has {n} columns",
            dim = h.dim()
        )));
    }
    let encoder = Encoder::new(cfg.spec, &cfg.code)?;
    let scale = resolve_scale(w, cfg.scale)?;
    let ldl = block_ldl(h, ty)?;

    let ws = w.unscale(scale);
    let mut w_hat = DMatrix::<f64>::zeros(m, n);
    let grid_rows = m / tx;
    let grid_cols = n / ty;
    let per = cfg.spec.storage_bits(tx * ty, cfg.tail_biting).div_ceil(8);
    let mut payload = vec![0u8; grid_rows * grid_cols * per];

    for j in (0..grid_cols).rev() {
        let c0 = j * ty;
        // Feedback-corrected target. The residual slice starts at this
        // block, but its own columns of What are still zero and meet the
        // zero diagonal block of the feedback matrix, contributing
        // nothing.
        let mut x = ws.columns(c0, ty).into_owned();
        let resid = ws.columns(c0, n - c0) - w_hat.columns(c0, n - c0);
        x.gemm(1.0, &resid, &ldl.feedback.view((c0, c0), (n - c0, ty)), 1.0);

        let tiles: Vec<(Vec<f32>, Vec<u8>)> = (0..grid_rows)
            .into_par_iter()
            .map(|r| {
                let mut seq = vec![0.0f32; tx * ty];
                for i in 0..tx {
                    for l in 0..ty {
                        seq[i * ty + l] = x[(r * tx + i, l)] as f32;
                    }
                }
                let (path, _) = if cfg.tail_biting {
                    encoder.encode_tailbiting(&seq)?
                } else {
                    encoder.encode(&seq)?
                };
                let recon = encoder.reconstruct(&path);
                let packed = pack(&path, cfg.tail_biting)?;
                Ok((recon, packed.bytes))
            })
            .collect::<Result<_>>()?;

        for (r, (recon, bytes)) in tiles.iter().enumerate() {
            for i in 0..tx {
                for l in 0..ty {
                    w_hat[(r * tx + i, c0 + l)] = recon[i * ty + l] as f64;
                }
            }
            let at = (r * grid_cols + j) * per;
            payload[at..at + bytes.len()].copy_from_slice(bytes);
        }
    }

    let w_hat = w_hat.scale(scale);
    let container = QuantizedMatrix {
        rows: m as u32,
        cols: n as u32,
        block_rows: tx as u32,
        block_cols: ty as u32,
        spec: cfg.spec,
        tail_biting: cfg.tail_biting,
        code: cfg.code.clone(),
        rht: None,
        scale,
        regularization: h.regularization,
        payload,
    };
    container.validate()?;
    let loss = proxy_loss(w, &w_hat, &h.effective())?;
    Ok((w_hat, container, loss))
}

/// Rebuilds the dense matrix a container describes: unpack and decode
/// every tile, multiply by the stored scale, and undo the recorded
/// random Hadamard transform if one was applied. Base matrices are only
/// needed for dimensions that are not a power of two.
pub fn dequantize_matrix(
    qm: &QuantizedMatrix,
    row_base: Option<&BaseHadamard>,
    col_base: Option<&BaseHadamard>,
) -> Result<DMatrix<f64>> {
    qm.validate()?;
    let (m, n) = (qm.rows as usize, qm.cols as usize);
    let (tx, ty) = (qm.block_rows as usize, qm.block_cols as usize);
    let (gr, gc) = qm.block_grid();
    let tiles: Vec<Vec<f32>> = (0..gr * gc)
        .into_par_iter()
        .map(|t| {
            let packed = qm.sequence(t / gc, t % gc)?;
            reconstruct(&unpack(&packed)?, &qm.code)
        })
        .collect::<Result<_>>()?;
    let mut w = DMatrix::<f64>::zeros(m, n);
    for (t, vals) in tiles.iter().enumerate() {
        let (r, j) = (t / gc, t % gc);
        for i in 0..tx {
            for l in 0..ty {
                w[(r * tx + i, j * ty + l)] = vals[i * ty + l] as f64 * qm.scale;
            }
        }
    }
    if let Some(seeds) = qm.rht {
        let rht = Rht::with_bases(m, n, seeds, row_base, col_base)?;
        rht.inverse(&mut w)?;
    }
    Ok(w)
}
