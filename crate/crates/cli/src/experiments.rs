//! Distortion-rate and tail-biting experiment loops.
//!
//! Sequences are drawn per-index from the counter-based generator, so a
//! report is a pure function of its echoed configuration. Per-sequence
//! statistics are aggregated with a fixed-tree pairwise sum: bit-identical
//! results regardless of thread count.

use rayon::prelude::*;
use std::time::Instant;
use tcq::codes::{distortion_rate_bound, lloyd_max};
use tcq::rng;
use tcq::trellis::{Encoder, TrellisSpec};
use tcq::{NodeValueSource, Result};

/// Mean and standard error of per-sequence distortions.
#[derive(Clone, Copy, Debug)]
pub struct MseStat {
    pub mean: f64,
    pub sem: f64,
    pub sequences: usize,
}

/// Deterministic summation: recursive halving down to short runs, summed
/// left to right. Thread counts and chunking never change the result.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn summarize(per_seq: &[f64]) -> MseStat {
    let n = per_seq.len();
    assert!(n > 0, "no sequences");
    let mean = pairwise_sum(per_seq) / n as f64;
    let sem = if n > 1 {
        let devs: Vec<f64> = per_seq.iter().map(|m| (m - mean) * (m - mean)).collect();
        (pairwise_sum(&devs) / ((n - 1) as f64 * n as f64)).sqrt()
    } else {
        0.0
    };
    MseStat { mean, sem, sequences: n }
}

#[derive(Clone, Debug)]
pub struct DrReport {
    pub stat: MseStat,
    pub per_seq: Vec<f64>,
    pub bound: f64,
    pub wall_seconds: f64,
}

/// Quantizes `n_seqs` independent standard-normal sequences of length `t`
/// and reports the per-element mean squared error.
pub fn bench_dr(
    spec: TrellisSpec,
    code: &NodeValueSource,
    t: usize,
    n_seqs: usize,
    seed: u64,
    tail_biting: bool,
) -> Result<DrReport> {
    let enc = Encoder::new(spec, code)?;
    let start = Instant::now();
    let per_seq: Vec<f64> = (0..n_seqs)
        .into_par_iter()
        .map(|i| {
            let data = rng::gaussian_vec_f32(rng::derive_seed(seed, i as u64), t);
            let (_, cost) = if tail_biting {
                enc.encode_tailbiting(&data)?
            } else {
                enc.encode(&data)?
            };
            Ok(cost / t as f64)
        })
        .collect::<Result<_>>()?;
    Ok(DrReport {
        stat: summarize(&per_seq),
        per_seq,
        bound: distortion_rate_bound(spec.bits_per_weight),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Scalar Lloyd-Max baseline on the same kind of source: a `2^bits`-level
/// optimal quantizer trained once, applied elementwise.
pub fn bench_lloyd_max(
    bits: u32,
    t: usize,
    n_seqs: usize,
    seed: u64,
    train_samples: usize,
    train_seed: u64,
) -> Result<DrReport> {
    let q = lloyd_max(bits, train_samples, train_seed)?;
    let start = Instant::now();
    let per_seq: Vec<f64> = (0..n_seqs)
        .into_par_iter()
        .map(|i| {
            let data = rng::gaussian_vec_f32(rng::derive_seed(seed, i as u64), t);
            let se: f64 = data
                .iter()
                .map(|&x| {
                    let d = q.quantize(x as f64) - x as f64;
                    d * d
                })
                .sum();
            se / t as f64
        })
        .collect();
    Ok(DrReport {
        stat: summarize(&per_seq),
        per_seq,
        bound: distortion_rate_bound(bits),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug)]
pub struct TailbiteArm {
    pub bits_per_weight: u32,
    pub heuristic: MseStat,
    pub per_seq: Vec<f64>,
    /// Exhaustive-overlap optimum on the first `exact_seqs` sequences,
    /// paired with the heuristic on the same subsample.
    pub exact: Option<MseStat>,
    pub exact_per_seq: Option<Vec<f64>>,
    pub heuristic_on_subsample: Option<MseStat>,
    /// Mean of (heuristic - exact) over the subsample; nonnegative when
    /// the heuristic never beats the optimum (it cannot).
    pub mean_gap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TailbiteReport {
    pub arms: Vec<TailbiteArm>,
    pub wall_seconds: f64,
}

/// Tail-biting benchmark: a random-table code on an `state_bits`-state
/// trellis, one arm per rate `k`, Gaussian sequences shared across arms.
pub fn bench_tailbite(
    state_bits: u32,
    ks: &[u32],
    t: usize,
    n_seqs: usize,
    seed: u64,
    lut_seed: u64,
    exact_seqs: usize,
) -> Result<TailbiteReport> {
    let start = Instant::now();
    let code = NodeValueSource::Lut(tcq::codes::LutParams::gaussian(state_bits, 1, lut_seed));
    let mut arms = Vec::new();
    for &k in ks {
        let spec = TrellisSpec::new(state_bits, k, 1)?;
        let enc = Encoder::new(spec, &code)?;
        let per_seq: Vec<f64> = (0..n_seqs)
            .into_par_iter()
            .map(|i| {
                let data = rng::gaussian_vec_f32(rng::derive_seed(seed, i as u64), t);
                Ok(enc.encode_tailbiting(&data)?.1 / t as f64)
            })
            .collect::<Result<_>>()?;
        let (exact, exact_per, sub, gap) = if exact_seqs > 0 {
            let m = exact_seqs.min(n_seqs);
            let exact_per: Vec<f64> = (0..m)
                .into_par_iter()
                .map(|i| {
                    let data = rng::gaussian_vec_f32(rng::derive_seed(seed, i as u64), t);
                    Ok(enc.encode_tailbiting_exact(&data)?.1 / t as f64)
                })
                .collect::<Result<_>>()?;
            let diffs: Vec<f64> =
                per_seq[..m].iter().zip(&exact_per).map(|(h, e)| h - e).collect();
            (
                Some(summarize(&exact_per)),
                Some(exact_per),
                Some(summarize(&per_seq[..m])),
                Some(pairwise_sum(&diffs) / m as f64),
            )
        } else {
            (None, None, None, None)
        };
        arms.push(TailbiteArm {
            bits_per_weight: k,
            heuristic: summarize(&per_seq),
            per_seq,
            exact,
            exact_per_seq: exact_per,
            heuristic_on_subsample: sub,
            mean_gap: gap,
        });
    }
    Ok(TailbiteReport { arms, wall_seconds: start.elapsed().as_secs_f64() })
}

/// Frozen reference windows used by `--assert`: center and half-width of
/// the distortion each standard configuration must reproduce.
pub mod reference {
    /// (L=16, k=2, V=1, T=256) computed codes and the hashed-table code
    /// at Q=9, plus the scalar Lloyd-Max baseline at 2 bits.
    pub const DR_1MAD: (f64, f64) = (0.069, 0.004);
    pub const DR_3INST: (f64, f64) = (0.069, 0.004);
    pub const DR_HYB: (f64, f64) = (0.071, 0.004);
    pub const LLOYD_MAX_2BIT: (f64, f64) = (0.118, 0.001);
    /// Tail-biting (L=12, V=1, T=256) random-table code, k = 1..=4.
    pub const TAILBITE: [(u32, f64, f64); 4] = [
        (1, 0.2803, 0.002),
        (2, 0.0733, 0.002),
        (3, 0.0198, 0.001),
        (4, 0.0055, 0.0005),
    ];
    /// Ceiling on mean (heuristic - exact) at k=1 on the subsample.
    pub const TAILBITE_GAP: f64 = 0.001;
}
