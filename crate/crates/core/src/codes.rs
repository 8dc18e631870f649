//! Node-value codes: maps from a trellis state to one or two weights.
//!
//! The computed families (`OneMad`, `ThreeInst`, `Hyb`) exist so a decoder
//! can regenerate values from the state bits alone with a handful of
//! integer instructions; the `Lut` family tabulates arbitrary codebooks.
//! All decode paths are bit-exact functions of their inputs: integer
//! arithmetic wraps mod 2^32 and float work is f32 with explicit binary16
//! round-trips, so the same state decodes identically everywhere.

use crate::error::{Error, Result};
use crate::f16::{f16_to_f32, f32_to_f16};
use crate::rng;
use crate::trellis::TrellisSpec;
use rayon::prelude::*;

/// Multiplier/increment for the congruential step shared by the computed
/// codes: `word = multiplier * x + increment (mod 2^32)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OneMadParams {
    pub multiplier: u32,
    pub increment: u32,
}

impl Default for OneMadParams {
    fn default() -> Self {
        OneMadParams { multiplier: 34038481, increment: 76625530 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThreeInstParams {
    pub multiplier: u32,
    pub increment: u32,
    /// Binary16 bit pattern of the additive magic constant.
    pub magic_bits: u16,
}

impl ThreeInstParams {
    pub fn with_magic(magic: f32) -> Self {
        ThreeInstParams { magic_bits: f32_to_f16(magic), ..Default::default() }
    }
}

impl Default for ThreeInstParams {
    fn default() -> Self {
        // 0.922 rounds to binary16 0x3B60 = 0.921875
        ThreeInstParams { multiplier: 89226354, increment: 64248484, magic_bits: 0x3B60 }
    }
}

/// Hashed lookup code producing 2-vectors from a small sign-extended table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HybParams {
    /// Number of table index bits taken from the hash (Q).
    pub index_bits: u32,
    /// Also flip the first entry's sign on hash bit 31, doubling the
    /// effective codebook again. Off by default.
    pub two_sign_flips: bool,
    /// Provenance of a k-means-built table; zero for hand-built tables.
    pub seed: u64,
    pub sample_count: u64,
    /// `2^index_bits` entries, each a binary16 pair.
    pub lut: Vec<[u16; 2]>,
}

impl HybParams {
    pub fn new(index_bits: u32, lut: Vec<[u16; 2]>) -> Result<Self> {
        if index_bits > 15 {
            return Err(Error::InvalidSpec(format!(
                "hyb index bits {index_bits} exceed the 15 hash bits available"
            )));
        }
        let expected = 1usize << index_bits;
        if lut.len() != expected {
            return Err(Error::LutSize { got: lut.len(), expected });
        }
        Ok(HybParams { index_bits, two_sign_flips: false, seed: 0, sample_count: 0, lut })
    }
}

/// Plain tabulated code: `2^state_bits` vectors of `vector_width` floats.
#[derive(Clone, Debug, PartialEq)]
pub struct LutParams {
    pub vector_width: u32,
    pub table: Vec<f32>,
}

impl LutParams {
    pub fn new(vector_width: u32, table: Vec<f32>) -> Result<Self> {
        if vector_width == 0 || table.is_empty() || !table.len().is_multiple_of(vector_width as usize) {
            return Err(Error::InvalidSpec(format!(
                "lut of {} values is not a whole number of {}-vectors",
                table.len(),
                vector_width
            )));
        }
        Ok(LutParams { vector_width, table })
    }

    /// Standard-normal table for a given state width, seeded and reproducible.
    pub fn gaussian(state_bits: u32, vector_width: u32, seed: u64) -> Self {
        let n = (1usize << state_bits) * vector_width as usize;
        LutParams { vector_width, table: rng::gaussian_vec_f32(seed, n) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeValueSource {
    OneMad(OneMadParams),
    ThreeInst(ThreeInstParams),
    Hyb(HybParams),
    Lut(LutParams),
}

impl NodeValueSource {
    /// Number of weights one state decodes to.
    pub fn vector_width(&self) -> u32 {
        match self {
            NodeValueSource::OneMad(_) | NodeValueSource::ThreeInst(_) => 1,
            NodeValueSource::Hyb(_) => 2,
            NodeValueSource::Lut(p) => p.vector_width,
        }
    }

    /// Decodes state `x` into `out`, which must hold `vector_width` floats.
    pub fn decode_into(&self, x: u32, out: &mut [f32]) {
        match self {
            NodeValueSource::OneMad(p) => out[0] = decode_1mad(x, p),
            NodeValueSource::ThreeInst(p) => out[0] = decode_3inst(x, p),
            NodeValueSource::Hyb(p) => out.copy_from_slice(&decode_hyb(x, p)),
            NodeValueSource::Lut(p) => {
                let v = p.vector_width as usize;
                let base = x as usize * v;
                out.copy_from_slice(&p.table[base..base + v]);
            }
        }
    }

    pub fn decode(&self, x: u32) -> Vec<f32> {
        let mut out = vec![0.0; self.vector_width() as usize];
        self.decode_into(x, &mut out);
        out
    }

    /// Materializes values for every state: `2^state_bits * vector_width`
    /// floats, row-major by state. For `Lut` the table length must match.
    pub fn value_table(&self, state_bits: u32) -> Result<Vec<f32>> {
        let states = 1usize << state_bits;
        let v = self.vector_width() as usize;
        if let NodeValueSource::Lut(p) = self {
            if p.table.len() != states * v {
                return Err(Error::LutSize { got: p.table.len() / v, expected: states });
            }
            return Ok(p.table.clone());
        }
        let mut out = vec![0.0f32; states * v];
        out.par_chunks_mut(v)
            .enumerate()
            .for_each(|(i, chunk)| self.decode_into(i as u32, chunk));
        Ok(out)
    }
}

/// One multiply-add, then the byte-wise sum of the 32-bit word. The four
/// roughly uniform bytes sum to an approximate Gaussian (Irwin-Hall with
/// n=4), centered and scaled to unit variance.
#[inline]
pub fn decode_1mad(x: u32, p: &OneMadParams) -> f32 {
    let w = p.multiplier.wrapping_mul(x).wrapping_add(p.increment);
    let sum = (w & 0xFF) + ((w >> 8) & 0xFF) + ((w >> 16) & 0xFF) + (w >> 24);
    (sum as f32 - 510.0) / 147.8
}

/// The mask-xor-add tail of the three-instruction code: keep the sign and
/// mantissa bits of both packed halves, overwrite the exponents with the
/// magic constant's, then sum the halves as binary16.
#[inline]
pub fn three_inst_mix(word: u32, magic_bits: u16) -> f32 {
    let magic = ((magic_bits as u32) << 16) | magic_bits as u32;
    let x = (word & 0x8FFF_8FFF) ^ magic;
    f16_to_f32(x as u16) + f16_to_f32((x >> 16) as u16)
}

#[inline]
pub fn decode_3inst(x: u32, p: &ThreeInstParams) -> f32 {
    three_inst_mix(p.multiplier.wrapping_mul(x).wrapping_add(p.increment), p.magic_bits)
}

/// `x^2 + x mod 2^32`, an invertible mixer whose low half avalanches well.
#[inline]
pub fn hyb_hash(x: u32) -> u32 {
    x.wrapping_mul(x).wrapping_add(x)
}

#[inline]
pub fn decode_hyb(x: u32, p: &HybParams) -> [f32; 2] {
    let h = hyb_hash(x);
    let idx = ((h >> (15 - p.index_bits)) & ((1u32 << p.index_bits) - 1)) as usize;
    let e = p.lut[idx];
    let mut v0 = f16_to_f32(e[0]);
    let mut v1 = f16_to_f32(e[1]);
    if h & 0x8000 != 0 {
        v1 = -v1;
    }
    if p.two_sign_flips && h & 0x8000_0000 != 0 {
        v0 = -v0;
    }
    [v0, v1]
}

/// Builds the hashed-lookup table by k-means over `sample_count` i.i.d.
/// Gaussian pairs, then rescales the centroids to unit per-coordinate
/// power before rounding to binary16.
///
/// The rescale matters: hash indices hit the table uniformly, not with
/// the cluster weights k-means assumed, which would otherwise leave the
/// effective code variance far from 1. The factor is clamped to [1/2, 2]
/// so degenerate tables (a single near-zero centroid) stay put.
pub fn build_hyb_lut(index_bits: u32, sample_count: usize, seed: u64) -> Result<HybParams> {
    if index_bits > 15 {
        return Err(Error::InvalidSpec(format!(
            "hyb index bits {index_bits} exceed the 15 hash bits available"
        )));
    }
    if sample_count < 2 {
        return Err(Error::InvalidSpec("need at least 2 samples".into()));
    }
    let k = 1usize << index_bits;
    let raw = rng::gaussian_vec_f64(seed, 2 * sample_count);
    let pts: Vec<[f64; 2]> = raw.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let mut centroids = kmeans_2d(&pts, k);

    let power: f64 =
        centroids.iter().map(|c| c[0] * c[0] + c[1] * c[1]).sum::<f64>() / (2 * k) as f64;
    let scale = (1.0 / power.sqrt()).clamp(0.5, 2.0);
    for c in &mut centroids {
        c[0] *= scale;
        c[1] *= scale;
    }

    let lut = centroids
        .iter()
        .map(|c| [f32_to_f16(c[0] as f32), f32_to_f16(c[1] as f32)])
        .collect();
    let mut p = HybParams::new(index_bits, lut)?;
    p.seed = seed;
    p.sample_count = sample_count as u64;
    Ok(p)
}

/// Lloyd's algorithm with farthest-point seeding. At most 100 rounds,
/// stopping when the inertia improves by less than 1e-6 relative.
fn kmeans_2d(pts: &[[f64; 2]], k: usize) -> Vec<[f64; 2]> {
    let k = k.min(pts.len());
    let mut centroids = Vec::with_capacity(k);
    centroids.push(pts[0]);
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(p, &pts[0])).collect();
    while centroids.len() < k {
        let far = argmax_first(&d2);
        let c = pts[far];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(pts) {
            *d = d.min(dist2(p, &c));
        }
    }

    let mut assign = vec![0u32; pts.len()];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..100 {
        let inertia: f64 = {
            assign
                .par_iter_mut()
                .zip_eq(pts.par_iter())
                .map(|(a, p)| {
                    let (mut bi, mut bd) = (0u32, dist2(p, &centroids[0]));
                    for (i, c) in centroids.iter().enumerate().skip(1) {
                        let d = dist2(p, c);
                        if d < bd {
                            bd = d;
                            bi = i as u32;
                        }
                    }
                    *a = bi;
                    bd
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum()
        };
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0u64; k];
        for (a, p) in assign.iter().zip(pts) {
            let s = &mut sums[*a as usize];
            s[0] += p[0];
            s[1] += p[1];
            counts[*a as usize] += 1;
        }
        for i in 0..k {
            if counts[i] > 0 {
                centroids[i] = [sums[i][0] / counts[i] as f64, sums[i][1] / counts[i] as f64];
            } else {
                // re-seed an empty cluster at the worst-covered point
                let d2: Vec<f64> = pts
                    .par_iter()
                    .zip_eq(assign.par_iter())
                    .map(|(p, a)| dist2(p, &centroids[*a as usize]))
                    .collect();
                centroids[i] = pts[argmax_first(&d2)];
            }
        }
        if (prev_inertia - inertia).abs() <= 1e-6 * inertia.abs() {
            break;
        }
        prev_inertia = inertia;
    }
    centroids
}

#[inline]
fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Optimal scalar quantizer for the standard normal, fit empirically.
#[derive(Clone, Debug)]
pub struct LloydMaxQuantizer {
    pub levels: Vec<f64>,
    /// `levels.len() - 1` cell boundaries, ascending.
    pub boundaries: Vec<f64>,
    /// Training MSE on the fitting sample.
    pub mse: f64,
}

impl LloydMaxQuantizer {
    pub fn quantize(&self, x: f64) -> f64 {
        self.levels[self.boundaries.partition_point(|b| *b <= x)]
    }
}

/// Fits `2^bits` levels on `sample_count` Gaussian draws (use at least
/// 2^20 for table-grade accuracy). Deterministic in (bits, count, seed).
pub fn lloyd_max(bits: u32, sample_count: usize, seed: u64) -> Result<LloydMaxQuantizer> {
    if bits > 8 {
        return Err(Error::InvalidSpec(format!("{bits}-bit scalar quantizer is out of range")));
    }
    let k = 1usize << bits;
    if sample_count < 16 * k {
        return Err(Error::InvalidSpec("too few samples for the requested level count".into()));
    }
    let mut xs = rng::gaussian_vec_f64(seed, sample_count);
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    // prefix sums of x and x^2 make each Lloyd round O(k log n)
    let mut s1 = vec![0.0f64; n + 1];
    let mut s2 = vec![0.0f64; n + 1];
    for (i, &x) in xs.iter().enumerate() {
        s1[i + 1] = s1[i] + x;
        s2[i + 1] = s2[i] + x * x;
    }
    let mut levels: Vec<f64> = (0..k).map(|j| xs[(2 * j + 1) * n / (2 * k)]).collect();
    let mut prev_mse = f64::INFINITY;
    let mut mse = prev_mse;
    for _ in 0..500 {
        let bounds: Vec<f64> =
            levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let mut cuts = Vec::with_capacity(k + 1);
        cuts.push(0);
        for b in &bounds {
            cuts.push(xs.partition_point(|x| *x <= *b));
        }
        cuts.push(n);
        mse = 0.0;
        for j in 0..k {
            let (a, b) = (cuts[j], cuts[j + 1]);
            if a < b {
                levels[j] = (s1[b] - s1[a]) / (b - a) as f64;
            }
            let l = levels[j];
            mse += (s2[b] - s2[a]) - 2.0 * l * (s1[b] - s1[a]) + l * l * (b - a) as f64;
        }
        mse /= n as f64;
        if (prev_mse - mse).abs() <= 1e-7 * mse {
            break;
        }
        prev_mse = mse;
    }
    let boundaries = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(LloydMaxQuantizer { levels, boundaries, mse })
}

/// Shannon lower bound on MSE for a unit Gaussian at `bits` per weight.
pub fn distortion_rate_bound(bits: u32) -> f64 {
    0.25f64.powi(bits as i32)
}

/// Pearson correlation between the last weight of a state and the first
/// weight of each successor, over every edge of the trellis. Constant
/// codes return 0.
pub fn neighbor_correlation(code: &NodeValueSource, spec: &TrellisSpec) -> Result<f64> {
    let v = code.vector_width() as usize;
    if v != spec.vector_width as usize {
        return Err(Error::DimensionMismatch(format!(
            "code emits {v}-vectors but the trellis expects {}",
            spec.vector_width
        )));
    }
    let table = code.value_table(spec.state_bits)?;
    let states = spec.num_states();
    let fan = spec.fan_out();
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    for s in 0..states {
        let a = table[s * v + v - 1] as f64;
        let base = spec.first_successor(s as u32) as usize;
        for c in 0..fan {
            let b = table[(base + c) * v] as f64;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    let n = (states * fan) as f64;
    let cov = sab / n - (sa / n) * (sb / n);
    let va = saa / n - (sa / n) * (sa / n);
    let vb = sbb / n - (sb / n) * (sb / n);
    if va <= 0.0 || vb <= 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

/// Mean and population variance of the decoded values over all states.
pub fn marginal_moments(code: &NodeValueSource, state_bits: u32) -> Result<(f64, f64)> {
    let table = code.value_table(state_bits)?;
    let n = table.len() as f64;
    let mean = table.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = table.iter().map(|&x| (x as f64 - mean) * (x as f64 - mean)).sum::<f64>() / n;
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen against an independent wide-integer prototype; values are the
    // exact f64 widenings of the expected f32 outputs.
    #[test]
    fn one_mad_golden() {
        let p = OneMadParams::default();
        let cases = [
            (0u32, -1.251691460609436),
            (1, -0.8389715552330017),
            (2, -0.42625167965888977),
            (3, -0.013531799428164959),
            (65535, 0.41271987557411194),
            (123456789, 1.454668402671814),
        ];
        for (x, want) in cases {
            assert_eq!(decode_1mad(x, &p) as f64, want, "state {x}");
        }
        let degenerate = OneMadParams { multiplier: 0, increment: 0 };
        assert_eq!(decode_1mad(0, &degenerate) as f64, -3.450608968734741);
        let mid = OneMadParams { multiplier: 0, increment: 0x00FF_FF00 };
        assert_eq!(decode_1mad(0, &mid), 0.0);
    }

    #[test]
    fn three_inst_golden() {
        let p = ThreeInstParams::default();
        assert_eq!(p.magic_bits, 0x3B60);
        let cases = [
            (0u32, 0.76806640625),
            (1, -0.9193115234375),
            (2, 0.931396484375),
            (3, 0.29443359375),
            (65535, -0.158203125),
            (123456789, 0.156494140625),
        ];
        for (x, want) in cases {
            assert_eq!(decode_3inst(x, &p) as f64, want, "state {x}");
        }
        // both halves reduce to the magic constant itself
        assert_eq!(three_inst_mix(0, 0x3B60) as f64, 1.84375);
        assert_eq!(three_inst_mix(0x8000_8000, 0x3B60) as f64, -1.84375);
    }

    #[test]
    fn with_magic_rounds_through_binary16() {
        assert_eq!(ThreeInstParams::with_magic(0.922).magic_bits, 0x3B60);
    }

    fn ramp_hyb() -> HybParams {
        let lut = (0..512u32)
            .map(|i| [f32_to_f16(i as f32 / 7.0), f32_to_f16(-(i as f32) / 13.0)])
            .collect();
        HybParams::new(9, lut).unwrap()
    }

    #[test]
    fn hyb_golden() {
        let p = ramp_hyb();
        assert_eq!(hyb_hash(181), 0x80AE);
        assert_eq!(hyb_hash(77777), 0x6891_9872);
        assert_eq!(hyb_hash(u32::MAX), 0);
        let cases: [(u32, f64, f64); 4] = [
            (0, 0.0, -0.0),
            (181, 0.28564453125, 0.15380859375),
            (77777, 13.859375, 7.4609375),
            (u32::MAX, 0.0, -0.0),
        ];
        for (x, w0, w1) in cases {
            let v = decode_hyb(x, &p);
            assert_eq!(v[0] as f64, w0, "state {x}");
            assert_eq!(v[1] as f64, w1, "state {x}");
        }
    }

    #[test]
    fn hyb_two_flip_variant() {
        let mut p = ramp_hyb();
        p.two_sign_flips = true;
        // hash of 77777 has bit 31 clear, so nothing changes
        assert_eq!(decode_hyb(77777, &p), {
            let mut q = ramp_hyb();
            q.two_sign_flips = false;
            decode_hyb(77777, &q)
        });
        // find a state whose hash sets bit 31 and check only v0 flips
        let x = (0..u32::MAX).find(|&x| hyb_hash(x) & 0x8000_0000 != 0).unwrap();
        let base = decode_hyb(x, &ramp_hyb());
        let flipped = decode_hyb(x, &p);
        assert_eq!(flipped[0], -base[0]);
        assert_eq!(flipped[1], base[1]);
    }

    #[test]
    fn hyb_rejects_bad_sizes() {
        assert!(HybParams::new(2, vec![[0, 0]; 3]).is_err());
        assert!(HybParams::new(16, vec![[0, 0]; 1]).is_err());
    }

    #[test]
    fn built_lut_is_centered_at_q0() {
        // a single centroid must sit at the sample mean, near the origin
        let p = build_hyb_lut(0, 1 << 16, 11).unwrap();
        assert_eq!(p.lut.len(), 1);
        let v = decode_hyb(0, &p);
        assert!(v[0].abs() <= 0.05 && v[1].abs() <= 0.05, "{v:?}");
    }

    #[test]
    fn built_lut_q1_splits_symmetrically() {
        // two clusters split one coordinate near +/- the half-normal mean
        let p = build_hyb_lut(1, 1 << 16, 11).unwrap();
        let a = [f16_to_f32(p.lut[0][0]), f16_to_f32(p.lut[0][1])];
        let b = [f16_to_f32(p.lut[1][0]), f16_to_f32(p.lut[1][1])];
        // the split direction is data-dependent; check the widest axis
        let axis = if (a[0] - b[0]).abs() >= (a[1] - b[1]).abs() { 0 } else { 1 };
        assert!((a[axis] + b[axis]).abs() < 0.1, "{a:?} {b:?}");
        assert!((a[axis] - b[axis]).abs() > 1.0, "{a:?} {b:?}");
    }

    #[test]
    fn built_lut_determinism() {
        let a = build_hyb_lut(4, 1 << 14, 3).unwrap();
        let b = build_hyb_lut(4, 1 << 14, 3).unwrap();
        assert_eq!(a, b);
        let c = build_hyb_lut(4, 1 << 14, 4).unwrap();
        assert_ne!(a.lut, c.lut);
    }

    #[test]
    fn built_lut_unit_power() {
        let p = build_hyb_lut(9, 1 << 16, 1).unwrap();
        let m2: f64 = p
            .lut
            .iter()
            .flat_map(|e| e.iter().map(|&b| f16_to_f32(b) as f64))
            .map(|x| x * x)
            .sum::<f64>()
            / (2.0 * p.lut.len() as f64);
        assert!((m2 - 1.0).abs() < 0.02, "per-coordinate power {m2}");
    }

    #[test]
    fn lloyd_max_two_bit_matches_analytic() {
        let q = lloyd_max(2, 1 << 20, 7).unwrap();
        let want = [-1.510418, -0.452780, 0.452780, 1.510418];
        for (l, w) in q.levels.iter().zip(want) {
            assert!((l - w).abs() < 0.01, "levels {:?}", q.levels);
        }
        assert!((q.mse - 0.117482).abs() < 0.002, "mse {}", q.mse);
        assert_eq!(q.quantize(0.5), q.levels[2]);
        assert_eq!(q.quantize(-3.0), q.levels[0]);
    }

    #[test]
    fn lloyd_max_one_bit() {
        // optimal 1-bit levels are +/- sqrt(2/pi)
        let q = lloyd_max(1, 1 << 20, 7).unwrap();
        let m = (2.0 / std::f64::consts::PI).sqrt();
        assert!((q.levels[0] + m).abs() < 0.01);
        assert!((q.levels[1] - m).abs() < 0.01);
        assert!((q.mse - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 0.005);
    }

    #[test]
    fn dr_bound_values() {
        assert_eq!(distortion_rate_bound(1), 0.25);
        assert_eq!(distortion_rate_bound(2), 0.0625);
        assert_eq!(distortion_rate_bound(3), 0.015625);
        assert_eq!(distortion_rate_bound(4), 0.00390625);
    }

    #[test]
    fn moments_one_mad() {
        let code = NodeValueSource::OneMad(OneMadParams::default());
        let (mean, var) = marginal_moments(&code, 16).unwrap();
        assert!((mean - -0.000394).abs() < 1e-5, "mean {mean}");
        assert!((var - 1.000184).abs() < 1e-4, "var {var}");
    }

    #[test]
    fn moments_three_inst() {
        // the exponent spread of the two binary16 halves puts the variance
        // well above 1; frozen from exhaustive enumeration
        let code = NodeValueSource::ThreeInst(ThreeInstParams::default());
        let (mean, var) = marginal_moments(&code, 16).unwrap();
        assert!((mean - 0.000210).abs() < 1e-5, "mean {mean}");
        assert!((var - 1.546811).abs() < 1e-4, "var {var}");
    }

    #[test]
    fn correlation_constant_code_is_zero() {
        let spec = TrellisSpec::new(8, 1, 1).unwrap();
        let table = vec![1.0f32; 256];
        let code = NodeValueSource::Lut(LutParams::new(1, table).unwrap());
        assert_eq!(neighbor_correlation(&code, &spec).unwrap(), 0.0);
    }

    #[test]
    fn correlation_three_inst_near_zero() {
        let spec = TrellisSpec::new(16, 2, 1).unwrap();
        let code = NodeValueSource::ThreeInst(ThreeInstParams::default());
        let rho = neighbor_correlation(&code, &spec).unwrap();
        assert!((rho - 0.000238).abs() < 1e-5, "rho {rho}");
    }

    #[test]
    fn correlation_ramp_code() {
        // a state-index ramp inherits correlation from the shared bits;
        // the shift structure caps it at 2^-kV, not near 1
        let mk = |bits: u32| {
            let n = 1usize << bits;
            let table: Vec<f32> = (0..n).map(|i| i as f32 / n as f32).collect();
            NodeValueSource::Lut(LutParams::new(1, table).unwrap())
        };
        let s12_1 = TrellisSpec::new(12, 1, 1).unwrap();
        let rho = neighbor_correlation(&mk(12), &s12_1).unwrap();
        assert!((rho - 0.5).abs() < 1e-6, "rho {rho}");
        let s12_2 = TrellisSpec::new(12, 2, 1).unwrap();
        let rho = neighbor_correlation(&mk(12), &s12_2).unwrap();
        assert!((rho - 0.25).abs() < 1e-6, "rho {rho}");
    }

    #[test]
    fn value_table_matches_decode() {
        let code = NodeValueSource::Hyb(ramp_hyb());
        let table = code.value_table(10).unwrap();
        assert_eq!(table.len(), 2048);
        for s in [0u32, 1, 513, 1023] {
            let v = code.decode(s);
            assert_eq!(&table[s as usize * 2..s as usize * 2 + 2], v.as_slice());
        }
    }

    #[test]
    fn lut_table_size_checked() {
        let code = NodeValueSource::Lut(LutParams::new(1, vec![0.0; 16]).unwrap());
        assert!(code.value_table(4).is_ok());
        assert!(code.value_table(5).is_err());
    }
}
