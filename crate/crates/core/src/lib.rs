//! Trellis-coded quantization over the bitshift trellis.
//!
//! The pipeline: weights pass through a random Hadamard transform
//! ([`incoherence`]), are rounded block-by-block with Hessian feedback
//! ([`ldlq`]), each block encoded as a walk through a `2^L`-state trellis
//! ([`trellis`]) whose per-state values come from computed pseudorandom
//! Gaussian codes or lookup tables ([`codes`]), and the walks serialize
//! to a compact self-describing container ([`packing`]).

pub mod codes;
pub mod error;
pub mod f16;
pub mod incoherence;
pub mod ldlq;
pub mod packing;
pub mod rng;
pub mod trellis;

pub use codes::{
    build_hyb_lut, decode_1mad, decode_3inst, decode_hyb, distortion_rate_bound, lloyd_max,
    neighbor_correlation, HybParams, LloydMaxQuantizer, LutParams, NodeValueSource, OneMadParams,
    ThreeInstParams,
};
pub use error::{Error, Result};
pub use incoherence::{incoherence_mu, mu_bound, BaseHadamard, Rht, RhtSeeds};
pub use ldlq::{
    block_ldl, blockldlq_quantize, dequantize_matrix, proxy_loss, regularize, BlockLdl,
    ProxyHessian, QuantConfig, ScaleMode,
};
pub use packing::{pack, unpack, PackedSequence, QuantizedMatrix};
pub use trellis::{
    brute_force_encode, next_states, path_cost, reconstruct, tailbite_encode, viterbi_encode,
    viterbi_encode_constrained, Encoder, StatePath, TailBiteOverlap, TrellisSpec,
};
