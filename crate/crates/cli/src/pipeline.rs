//! Quantize/dequantize file pipeline: tensor in, container out, and back.
//!
//! Quantization optionally rotates the matrix (and conjugates the
//! Hessian) with the random Hadamard transform before block rounding;
//! the seeds, scale, and regularization all land in the container so
//! decode needs nothing but the file and, for non-power-of-two shapes,
//! the same registered base matrices.

use nalgebra::DMatrix;
use tcq::incoherence::{BaseHadamard, Rht, RhtSeeds};
use tcq::ldlq::{blockldlq_quantize, dequantize_matrix, regularize, QuantConfig};
use tcq::packing::QuantizedMatrix;
use tcq::rng;
use tcq::{incoherence_mu, Error, Result};

pub struct PipelineOptions {
    pub cfg: QuantConfig,
    pub hreg_factor: f64,
    pub use_rht: bool,
    pub seed: u64,
    pub row_base: Option<BaseHadamard>,
    pub col_base: Option<BaseHadamard>,
}

pub struct QuantizeOutcome {
    pub container: QuantizedMatrix,
    /// Reconstruction mapped back to the original basis.
    pub w_hat: DMatrix<f64>,
    pub mu_before: f64,
    pub mu_after: Option<f64>,
    /// Rounding objective in the basis the encoder saw.
    pub proxy_loss: f64,
    /// Plain per-element squared error in the original basis.
    pub mse: f64,
}

pub fn quantize_matrix(
    w: &DMatrix<f64>,
    h_raw: Option<&DMatrix<f64>>,
    opts: &PipelineOptions,
) -> Result<QuantizeOutcome> {
    let (m, n) = w.shape();
    let mu_before = incoherence_mu(w)?;
    let mut work = w.clone();
    let mut h_work = match h_raw {
        Some(h) => h.clone(),
        None => DMatrix::identity(n, n),
    };
    let mut seeds = None;
    let mut mu_after = None;
    if opts.use_rht {
        let s = RhtSeeds {
            row_seed: rng::derive_seed(opts.seed, 0),
            col_seed: rng::derive_seed(opts.seed, 1),
        };
        let rht =
            Rht::with_bases(m, n, s, opts.row_base.as_ref(), opts.col_base.as_ref())?;
        rht.forward(&mut work)?;
        if h_raw.is_some() {
            // conjugating the identity is the identity; skip the
            // transform so H = I keeps its exact zero-feedback shape
            rht.conjugate_hessian(&mut h_work)?;
        }
        seeds = Some(s);
        mu_after = Some(incoherence_mu(&work)?);
    }
    let h = regularize(&h_work, opts.hreg_factor)?;
    let (mut w_hat, mut container, proxy) = blockldlq_quantize(&work, &h, &opts.cfg)?;
    container.rht = seeds;
    if let Some(s) = seeds {
        Rht::with_bases(m, n, s, opts.row_base.as_ref(), opts.col_base.as_ref())?
            .inverse(&mut w_hat)?;
    }
    let mse = (&w_hat - w).norm_squared() / (m * n) as f64;
    Ok(QuantizeOutcome {
        container,
        w_hat,
        mu_before,
        mu_after,
        proxy_loss: proxy,
        mse,
    })
}

pub fn dequantize(
    qm: &QuantizedMatrix,
    row_base: Option<&BaseHadamard>,
    col_base: Option<&BaseHadamard>,
) -> Result<DMatrix<f64>> {
    dequantize_matrix(qm, row_base, col_base)
}

/// Row-major `[rows, cols]` tensor to a matrix.
pub fn tensor_to_matrix(dims: &[u32], data: &[f32]) -> Result<DMatrix<f64>> {
    if dims.len() != 2 {
        return Err(Error::Format(format!(
            "expected a rank-2 tensor, got rank {}",
            dims.len()
        )));
    }
    let (m, n) = (dims[0] as usize, dims[1] as usize);
    if m * n != data.len() {
        return Err(Error::Format(format!(
            "{m}x{n} header does not match {} values",
            data.len()
        )));
    }
    let wide: Vec<f64> = data.iter().map(|&x| x as f64).collect();
    Ok(DMatrix::from_row_slice(m, n, &wide))
}

/// Matrix to a row-major rank-2 tensor payload.
pub fn matrix_to_tensor(w: &DMatrix<f64>) -> (Vec<u32>, Vec<f32>) {
    let (m, n) = w.shape();
    let mut data = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            data.push(w[(i, j)] as f32);
        }
    }
    (vec![m as u32, n as u32], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tcq::codes::OneMadParams;
    use tcq::trellis::TrellisSpec;
    use tcq::NodeValueSource;

    fn options(l: u32, k: u32, tile: usize, use_rht: bool) -> PipelineOptions {
        let spec = TrellisSpec::new(l, k, 1).unwrap();
        let code = NodeValueSource::OneMad(OneMadParams::default());
        PipelineOptions {
            cfg: QuantConfig::new(spec, code, tile, tile).unwrap(),
            hreg_factor: 0.01,
            use_rht,
            seed: 13,
            row_base: None,
            col_base: None,
        }
    }

    fn gaussian_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        DMatrix::from_row_slice(m, n, &rng::gaussian_vec_f64(seed, m * n))
    }

    #[test]
    fn round_trip_reproduces_the_reconstruction() {
        let w = gaussian_matrix(32, 32, 1);
        let out = quantize_matrix(&w, None, &options(8, 2, 8, true)).unwrap();
        let back = dequantize(&out.container, None, None).unwrap();
        assert_eq!(back, out.w_hat);
        assert!(out.mu_after.unwrap() < out.mu_before * 2.0);
        assert!(out.mse > 0.0 && out.mse < 0.5);
    }

    #[test]
    fn transform_keeps_distortion_unchanged_in_expectation() {
        // Orthogonal basis change preserves squared error; with H = I the
        // proxy loss is (1 + hreg) * rows * cols * mse up to round-off.
        let w = gaussian_matrix(32, 32, 3);
        let out = quantize_matrix(&w, None, &options(8, 2, 8, true)).unwrap();
        assert!((out.proxy_loss / (1.01 * 32.0 * 32.0) - out.mse).abs() < 1e-9);
    }

    #[test]
    fn hessian_goes_through_conjugation() {
        let w = gaussian_matrix(16, 16, 5);
        let g = gaussian_matrix(16, 16, 6);
        let h = (g.transpose() * &g).unscale(16.0);
        let with_h = quantize_matrix(&w, Some(&h), &options(8, 2, 4, true)).unwrap();
        assert!(with_h.proxy_loss.is_finite() && with_h.proxy_loss > 0.0);
        assert!(with_h.container.rht.is_some());
    }

    #[test]
    fn tensor_matrix_round_trip() {
        let w = gaussian_matrix(3, 5, 7);
        let (dims, data) = matrix_to_tensor(&w);
        let back = tensor_to_matrix(&dims, &data).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(back[(i, j)], w[(i, j)] as f32 as f64);
            }
        }
        assert!(tensor_to_matrix(&[3], &data).is_err());
        assert!(tensor_to_matrix(&[4, 5], &data).is_err());
    }
}
