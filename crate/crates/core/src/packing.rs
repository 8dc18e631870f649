//! Bit-exact serialization of walks and whole quantized matrices.
//!
//! A walk packs MSB-first as the first state's L bits followed by the kV
//! fresh bits of each transition. Tail-biting walks drop the final L-kV
//! bits: they duplicate the stream's first L-kV bits, so every state is
//! still a contiguous (wrapping) L-bit window at offset t*kV. That keeps
//! random-access decode of group t a single masked load.

use crate::codes::{HybParams, LutParams, NodeValueSource, OneMadParams, ThreeInstParams};
use crate::error::{Error, Result};
use crate::incoherence::RhtSeeds;
use crate::trellis::{StatePath, TrellisSpec};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedSequence {
    pub spec: TrellisSpec,
    pub tail_biting: bool,
    /// Exact payload length in bits; `bytes` may carry zero padding.
    pub bit_len: usize,
    pub bytes: Vec<u8>,
}

struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter { bytes: Vec::new(), bit_len: 0 }
    }

    fn push(&mut self, value: u32, width: u32) {
        for i in (0..width).rev() {
            if self.bit_len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (value >> i) & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 1 << (7 - self.bit_len % 8);
            }
            self.bit_len += 1;
        }
    }
}

/// Reads `width` bits MSB-first starting at `start`, wrapping modulo
/// `bit_len` when asked (tail-biting windows can wrap several times).
fn read_window(bytes: &[u8], bit_len: usize, start: usize, width: u32, wrap: bool) -> u32 {
    let mut out = 0u32;
    for i in 0..width as usize {
        let mut pos = start + i;
        if wrap {
            pos %= bit_len;
        }
        debug_assert!(pos < bit_len);
        let bit = (bytes[pos / 8] >> (7 - pos % 8)) & 1;
        out = (out << 1) | bit as u32;
    }
    out
}

/// Packs a validated walk. With `tail_biting` the path must actually bite
/// its tail; the packed form is then exactly k bits per weight.
pub fn pack(path: &StatePath, tail_biting: bool) -> Result<PackedSequence> {
    path.validate()?;
    if tail_biting && !path.is_tail_biting() {
        return Err(Error::NotTailBiting);
    }
    let spec = path.spec;
    let kv = spec.group_bits();
    let mut w = BitWriter::new();
    w.push(path.states[0], spec.state_bits);
    for &s in &path.states[1..] {
        w.push(s & ((1 << kv) - 1), kv);
    }
    let mut bytes = w.bytes;
    let mut bit_len = w.bit_len;
    if tail_biting {
        bit_len -= spec.overlap_bits() as usize;
        bytes.truncate(bit_len.div_ceil(8));
        let tail = bit_len % 8;
        if tail != 0 {
            *bytes.last_mut().unwrap() &= 0xFFu8 << (8 - tail);
        }
    }
    debug_assert_eq!(bit_len, spec.storage_bits(path.weights(), tail_biting));
    Ok(PackedSequence { spec, tail_biting, bit_len, bytes })
}

impl PackedSequence {
    pub fn groups(&self) -> usize {
        let kv = self.spec.group_bits() as usize;
        if self.tail_biting {
            self.bit_len / kv
        } else {
            (self.bit_len - self.spec.overlap_bits() as usize) / kv
        }
    }

    pub fn weights(&self) -> usize {
        self.groups() * self.spec.vector_width as usize
    }

    /// State of group `t` without touching the rest of the stream.
    pub fn state_at(&self, t: usize) -> u32 {
        debug_assert!(t < self.groups());
        let kv = self.spec.group_bits() as usize;
        read_window(&self.bytes, self.bit_len, t * kv, self.spec.state_bits, self.tail_biting)
    }

    /// Weights of group `t` alone; `out` must hold `vector_width` floats.
    pub fn decode_group(&self, t: usize, code: &NodeValueSource, out: &mut [f32]) {
        code.decode_into(self.state_at(t), out);
    }
}

/// Inverse of [`pack`]: recovers the full state sequence.
pub fn unpack(seq: &PackedSequence) -> Result<StatePath> {
    let n = seq.groups();
    if n == 0 {
        return Err(Error::Format("packed sequence holds no groups".into()));
    }
    let states = (0..n).map(|t| seq.state_at(t)).collect();
    StatePath::new(seq.spec, states)
}

/// Everything needed to reconstruct one quantized weight matrix: trellis
/// and code identity, transform seeds, scale, and the packed walks of
/// every (block_rows x block_cols) tile, each starting on a byte
/// boundary, tiles in row-major block order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMatrix {
    pub rows: u32,
    pub cols: u32,
    pub block_rows: u32,
    pub block_cols: u32,
    pub spec: TrellisSpec,
    pub tail_biting: bool,
    pub code: NodeValueSource,
    pub rht: Option<RhtSeeds>,
    pub scale: f64,
    pub regularization: f64,
    pub payload: Vec<u8>,
}

const MAGIC: &[u8; 4] = b"TCQ1";
const VERSION: u16 = 1;

impl QuantizedMatrix {
    pub fn weights_per_sequence(&self) -> usize {
        (self.block_rows * self.block_cols) as usize
    }

    pub fn bytes_per_sequence(&self) -> usize {
        self.spec.storage_bits(self.weights_per_sequence(), self.tail_biting).div_ceil(8)
    }

    pub fn block_grid(&self) -> (usize, usize) {
        ((self.rows / self.block_rows) as usize, (self.cols / self.block_cols) as usize)
    }

    pub fn num_sequences(&self) -> usize {
        let (r, c) = self.block_grid();
        r * c
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0
            || self.cols == 0
            || self.block_rows == 0
            || self.block_cols == 0
            || !self.rows.is_multiple_of(self.block_rows)
            || !self.cols.is_multiple_of(self.block_cols)
        {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix does not tile into {}x{} blocks",
                self.rows, self.cols, self.block_rows, self.block_cols
            )));
        }
        self.spec.groups_for(self.weights_per_sequence())?;
        if self.code.vector_width() != self.spec.vector_width {
            return Err(Error::DimensionMismatch(format!(
                "code emits {}-vectors but the trellis expects {}",
                self.code.vector_width(),
                self.spec.vector_width
            )));
        }
        if let NodeValueSource::Lut(p) = &self.code {
            let expected = self.spec.num_states() * p.vector_width as usize;
            if p.table.len() != expected {
                return Err(Error::LutSize {
                    got: p.table.len(),
                    expected: self.spec.num_states(),
                });
            }
        }
        let want = self.num_sequences() * self.bytes_per_sequence();
        if self.payload.len() != want {
            return Err(Error::Format(format!(
                "payload holds {} bytes, expected {want}",
                self.payload.len()
            )));
        }
        Ok(())
    }

    /// The packed walk of one tile.
    pub fn sequence(&self, row_block: usize, col_block: usize) -> Result<PackedSequence> {
        let (gr, gc) = self.block_grid();
        if row_block >= gr || col_block >= gc {
            return Err(Error::DimensionMismatch(format!(
                "block ({row_block},{col_block}) outside {gr}x{gc} grid"
            )));
        }
        let per = self.bytes_per_sequence();
        let at = (row_block * gc + col_block) * per;
        Ok(PackedSequence {
            spec: self.spec,
            tail_biting: self.tail_biting,
            bit_len: self.spec.storage_bits(self.weights_per_sequence(), self.tail_biting),
            bytes: self.payload[at..at + per].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(64 + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let flags: u16 =
            (self.tail_biting as u16) | ((self.rht.is_some() as u16) << 1);
        out.extend_from_slice(&flags.to_le_bytes());
        for v in [self.rows, self.cols, self.block_rows, self.block_cols] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.spec.state_bits as u8);
        out.push(self.spec.bits_per_weight as u8);
        out.push(self.spec.vector_width as u8);
        out.push(0); // scan order: row-major blocks, row-major inside
        out.extend_from_slice(&self.scale.to_le_bytes());
        out.extend_from_slice(&self.regularization.to_le_bytes());
        let seeds = self.rht.unwrap_or(RhtSeeds { row_seed: 0, col_seed: 0 });
        out.extend_from_slice(&seeds.row_seed.to_le_bytes());
        out.extend_from_slice(&seeds.col_seed.to_le_bytes());
        write_code(&mut out, &self.code);
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut rd = Rd { buf, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = rd.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let flags = rd.u16()?;
        if flags & !0b11 != 0 {
            return Err(Error::Format(format!("unknown flag bits {flags:#06x}")));
        }
        let rows = rd.u32()?;
        let cols = rd.u32()?;
        let block_rows = rd.u32()?;
        let block_cols = rd.u32()?;
        let spec = TrellisSpec::new(rd.u8()? as u32, rd.u8()? as u32, rd.u8()? as u32)?;
        let scan = rd.u8()?;
        if scan != 0 {
            return Err(Error::Format(format!("unknown scan order {scan}")));
        }
        let scale = rd.f64()?;
        let regularization = rd.f64()?;
        let row_seed = rd.u64()?;
        let col_seed = rd.u64()?;
        let code = read_code(&mut rd)?;
        let payload_len = rd.u64()? as usize;
        let payload = rd.take(payload_len)?.to_vec();
        if rd.pos != buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                buf.len() - rd.pos
            )));
        }
        let qm = QuantizedMatrix {
            rows,
            cols,
            block_rows,
            block_cols,
            spec,
            tail_biting: flags & 1 != 0,
            code,
            rht: (flags & 2 != 0).then_some(RhtSeeds { row_seed, col_seed }),
            scale,
            regularization,
            payload,
        };
        qm.validate()?;
        Ok(qm)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Rd<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Rd<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("unexpected end of input".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn write_code(out: &mut Vec<u8>, code: &NodeValueSource) {
    match code {
        NodeValueSource::OneMad(p) => {
            out.push(0);
            out.extend_from_slice(&p.multiplier.to_le_bytes());
            out.extend_from_slice(&p.increment.to_le_bytes());
        }
        NodeValueSource::ThreeInst(p) => {
            out.push(1);
            out.extend_from_slice(&p.multiplier.to_le_bytes());
            out.extend_from_slice(&p.increment.to_le_bytes());
            out.extend_from_slice(&p.magic_bits.to_le_bytes());
        }
        NodeValueSource::Hyb(p) => {
            out.push(2);
            out.push(p.index_bits as u8);
            out.push(p.two_sign_flips as u8);
            out.extend_from_slice(&p.seed.to_le_bytes());
            out.extend_from_slice(&p.sample_count.to_le_bytes());
            for e in &p.lut {
                out.extend_from_slice(&e[0].to_le_bytes());
                out.extend_from_slice(&e[1].to_le_bytes());
            }
        }
        NodeValueSource::Lut(p) => {
            out.push(3);
            out.push(p.vector_width as u8);
            out.extend_from_slice(&(p.table.len() as u32).to_le_bytes());
            for v in &p.table {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

fn read_code(rd: &mut Rd) -> Result<NodeValueSource> {
    match rd.u8()? {
        0 => Ok(NodeValueSource::OneMad(OneMadParams {
            multiplier: rd.u32()?,
            increment: rd.u32()?,
        })),
        1 => Ok(NodeValueSource::ThreeInst(ThreeInstParams {
            multiplier: rd.u32()?,
            increment: rd.u32()?,
            magic_bits: rd.u16()?,
        })),
        2 => {
            let index_bits = rd.u8()? as u32;
            let two_sign_flips = match rd.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Format(format!("bad flag byte {b}"))),
            };
            let seed = rd.u64()?;
            let sample_count = rd.u64()?;
            if index_bits > 15 {
                return Err(Error::Format(format!("hyb index bits {index_bits} out of range")));
            }
            let n = 1usize << index_bits;
            let mut lut = Vec::with_capacity(n);
            for _ in 0..n {
                lut.push([rd.u16()?, rd.u16()?]);
            }
            let mut p = HybParams::new(index_bits, lut)?;
            p.two_sign_flips = two_sign_flips;
            p.seed = seed;
            p.sample_count = sample_count;
            Ok(NodeValueSource::Hyb(p))
        }
        3 => {
            let vector_width = rd.u8()? as u32;
            let len = rd.u32()? as usize;
            if len > (1 << 26) {
                return Err(Error::Format(format!("lut of {len} values is implausibly large")));
            }
            let raw = rd.take(4 * len)?;
            let table = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(NodeValueSource::Lut(LutParams::new(vector_width, table)?))
        }
        t => Err(Error::Format(format!("unknown code tag {t}"))),
    }
}

const TENSOR_MAGIC: &[u8; 4] = b"TSR1";

/// Row-major f32 tensor file: magic, version, rank, dims, data (all LE).
pub fn tensor_to_bytes(dims: &[u32], data: &[f32]) -> Result<Vec<u8>> {
    let count: u64 = dims.iter().map(|&d| d as u64).product();
    if dims.is_empty() || dims.len() > 8 || count != data.len() as u64 {
        return Err(Error::DimensionMismatch(format!(
            "dims {dims:?} do not describe {} values",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + 4 * data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(0); // dtype f32
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn tensor_from_bytes(buf: &[u8]) -> Result<(Vec<u32>, Vec<f32>)> {
    let mut rd = Rd { buf, pos: 0 };
    if rd.take(4)? != TENSOR_MAGIC {
        return Err(Error::Format("bad tensor magic".into()));
    }
    let version = rd.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let dtype = rd.u8()?;
    if dtype != 0 {
        return Err(Error::Format(format!("unsupported dtype {dtype}")));
    }
    let rank = rd.u8()? as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Format(format!("bad tensor rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(rd.u32()?);
    }
    let count: u64 = dims.iter().map(|&d| d as u64).product();
    if count > (1 << 31) {
        return Err(Error::Format(format!("tensor of {count} values is implausibly large")));
    }
    let raw = rd.take(4 * count as usize)?;
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    if rd.pos != buf.len() {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    Ok((dims, data))
}

pub fn write_tensor(path: impl AsRef<Path>, dims: &[u32], data: &[f32]) -> Result<()> {
    std::fs::write(path, tensor_to_bytes(dims, data)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<(Vec<u32>, Vec<f32>)> {
    tensor_from_bytes(&std::fs::read(path)?)
}
