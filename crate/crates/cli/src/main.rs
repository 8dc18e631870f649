//! `tcq`: distortion benchmarks and the matrix quantization pipeline.
//!
//! Reports are line-delimited `key=value` so runs can be diffed and
//! scripted; every number is reproducible from the echoed seeds.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Display;
use std::path::PathBuf;
use tcq::codes::{
    build_hyb_lut, marginal_moments, neighbor_correlation, LutParams, OneMadParams,
    ThreeInstParams,
};
use tcq::incoherence::BaseHadamard;
use tcq::ldlq::{QuantConfig, ScaleMode};
use tcq::packing::{read_tensor, write_tensor, QuantizedMatrix};
use tcq::trellis::TrellisSpec;
use tcq::{Error, NodeValueSource};
use tcq_cli::experiments::{self, reference};
use tcq_cli::pipeline;

const DEFAULT_DATA_SEED: u64 = tcq_cli::defaults::DATA_SEED;
const DEFAULT_TABLE_SEED: u64 = tcq_cli::defaults::TABLE_SEED;
const DEFAULT_HYB_SEED: u64 = tcq_cli::defaults::HYB_SEED;
const HYB_TRAIN_SAMPLES: usize = tcq_cli::defaults::HYB_TRAIN_SAMPLES;

#[derive(Parser)]
#[command(
    name = "tcq",
    version,
    about = "Trellis-coded quantization: benchmarks and the matrix pipeline"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Distortion-rate benchmark on i.i.d. Gaussian sequences.
    BenchDr(BenchDrArgs),
    /// Tail-biting benchmark with a random-table code, one arm per rate.
    BenchTailbite(BenchTailbiteArgs),
    /// Scalar Lloyd-Max baseline at the same rate.
    LloydMax(LloydMaxArgs),
    /// Quantize a rank-2 tensor file into a container.
    Quantize(QuantizeArgs),
    /// Decode a container back into a tensor file.
    Dequantize(DequantizeArgs),
    /// Print a container header.
    Inspect(InspectArgs),
    /// Neighbor-correlation and marginal-moment diagnostics for a code.
    CorrScan(CorrScanArgs),
    /// Write a deterministic standard-normal tensor.
    GenGaussian(GenGaussianArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum CodeKind {
    #[value(name = "1mad")]
    OneMad,
    #[value(name = "3inst")]
    ThreeInst,
    Hyb,
    Lut,
}

impl CodeKind {
    fn label(self) -> &'static str {
        match self {
            CodeKind::OneMad => "1mad",
            CodeKind::ThreeInst => "3inst",
            CodeKind::Hyb => "hyb",
            CodeKind::Lut => "lut",
        }
    }
}

fn build_code(
    kind: CodeKind,
    state_bits: u32,
    vector_width: u32,
    index_bits: u32,
    lut_seed: Option<u64>,
) -> anyhow::Result<NodeValueSource> {
    Ok(match kind {
        CodeKind::OneMad => {
            if vector_width != 1 {
                bail!("1mad emits scalars; use --V 1");
            }
            NodeValueSource::OneMad(OneMadParams::default())
        }
        CodeKind::ThreeInst => {
            if vector_width != 1 {
                bail!("3inst emits scalars; use --V 1");
            }
            NodeValueSource::ThreeInst(ThreeInstParams::default())
        }
        CodeKind::Hyb => {
            if vector_width != 2 {
                bail!("hyb emits pairs; use --V 2");
            }
            let seed = lut_seed.unwrap_or(DEFAULT_HYB_SEED);
            NodeValueSource::Hyb(build_hyb_lut(index_bits, HYB_TRAIN_SAMPLES, seed)?)
        }
        CodeKind::Lut => {
            let seed = lut_seed.unwrap_or(DEFAULT_TABLE_SEED);
            NodeValueSource::Lut(LutParams::gaussian(state_bits, vector_width, seed))
        }
    })
}

fn kv(key: &str, value: impl Display) {
    println!("{key}={value}");
}

/// Reference-window check: prints the verdict and returns it.
fn window(label: &str, mean: f64, center: f64, tol: f64) -> bool {
    let pass = (mean - center).abs() <= tol;
    kv(&format!("assert_{label}"), format!("{mean} within {center}+-{tol}: {pass}"));
    pass
}

#[derive(Args)]
struct BenchDrArgs {
    #[arg(long = "L", default_value_t = 16)]
    state_bits: u32,
    #[arg(long = "k", default_value_t = 2)]
    bits_per_weight: u32,
    #[arg(long = "V", default_value_t = 1)]
    vector_width: u32,
    #[arg(long = "T", default_value_t = 256)]
    seq_len: usize,
    #[arg(long, value_enum, default_value_t = CodeKind::OneMad)]
    code: CodeKind,
    /// Table index bits for the hashed code.
    #[arg(long = "Q", default_value_t = 9)]
    index_bits: u32,
    #[arg(long, default_value_t = 256)]
    seqs: usize,
    #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
    seed: u64,
    /// Seed for table-building codes (hyb, lut).
    #[arg(long)]
    lut_seed: Option<u64>,
    #[arg(long)]
    tail_biting: bool,
    /// Exit nonzero unless the result lands in its frozen reference window.
    #[arg(long)]
    assert: bool,
}

fn run_bench_dr(a: BenchDrArgs) -> anyhow::Result<()> {
    let spec = TrellisSpec::new(a.state_bits, a.bits_per_weight, a.vector_width)?;
    let code = build_code(a.code, a.state_bits, a.vector_width, a.index_bits, a.lut_seed)?;
    let rep = experiments::bench_dr(spec, &code, a.seq_len, a.seqs, a.seed, a.tail_biting)?;
    kv("cmd", "bench-dr");
    kv("L", a.state_bits);
    kv("k", a.bits_per_weight);
    kv("V", a.vector_width);
    kv("T", a.seq_len);
    kv("code", a.code.label());
    if a.code == CodeKind::Hyb {
        kv("Q", a.index_bits);
    }
    if matches!(a.code, CodeKind::Hyb | CodeKind::Lut) {
        kv("lut_seed", a.lut_seed.unwrap_or(match a.code {
            CodeKind::Hyb => DEFAULT_HYB_SEED,
            _ => DEFAULT_TABLE_SEED,
        }));
    }
    kv("seqs", rep.stat.sequences);
    kv("seed", a.seed);
    kv("tail_biting", a.tail_biting);
    kv("mse", rep.stat.mean);
    kv("sem", rep.stat.sem);
    kv("dr_bound", rep.bound);
    kv("wall_s", format!("{:.3}", rep.wall_seconds));
    if a.assert {
        let standard = a.state_bits == 16
            && a.bits_per_weight == 2
            && a.seq_len == 256
            && !a.tail_biting
            && a.seqs >= 256;
        let (center, tol) = match a.code {
            CodeKind::OneMad if standard && a.vector_width == 1 => reference::DR_1MAD,
            CodeKind::ThreeInst if standard && a.vector_width == 1 => reference::DR_3INST,
            CodeKind::Hyb if standard && a.vector_width == 2 && a.index_bits == 9 => {
                reference::DR_HYB
            }
            _ => bail!("no frozen reference window for this configuration"),
        };
        let mut pass = window("mse", rep.stat.mean, center, tol);
        let floor = rep.bound - 0.002;
        let above = rep.stat.mean >= floor;
        kv("assert_floor", format!("{} >= {floor}: {above}", rep.stat.mean));
        pass &= above;
        kv("assert_pass", pass);
        if !pass {
            std::process::exit(2);
        }
    }
    Ok(())
}

#[derive(Args)]
struct BenchTailbiteArgs {
    #[arg(long = "L", default_value_t = 12)]
    state_bits: u32,
    #[arg(long = "k", value_delimiter = ',', default_values_t = vec![1u32, 2, 3, 4])]
    ks: Vec<u32>,
    #[arg(long = "T", default_value_t = 256)]
    seq_len: usize,
    #[arg(long, default_value_t = 256)]
    seqs: usize,
    #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
    seed: u64,
    #[arg(long)]
    lut_seed: Option<u64>,
    /// Also run the exhaustive-overlap optimum on a subsample.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 32)]
    exact_seqs: usize,
    #[arg(long)]
    assert: bool,
}

fn run_bench_tailbite(a: BenchTailbiteArgs) -> anyhow::Result<()> {
    let lut_seed = a.lut_seed.unwrap_or(DEFAULT_TABLE_SEED);
    let rep = experiments::bench_tailbite(
        a.state_bits,
        &a.ks,
        a.seq_len,
        a.seqs,
        a.seed,
        lut_seed,
        if a.exact { a.exact_seqs } else { 0 },
    )?;
    kv("cmd", "bench-tailbite");
    kv("L", a.state_bits);
    kv("T", a.seq_len);
    kv("seqs", a.seqs);
    kv("seed", a.seed);
    kv("lut_seed", lut_seed);
    if a.exact {
        kv("exact_seqs", a.exact_seqs);
    }
    for arm in &rep.arms {
        let k = arm.bits_per_weight;
        kv(&format!("mse_k{k}"), arm.heuristic.mean);
        kv(&format!("sem_k{k}"), arm.heuristic.sem);
        if let (Some(e), Some(h), Some(g)) =
            (&arm.exact, &arm.heuristic_on_subsample, arm.mean_gap)
        {
            kv(&format!("exact_mse_k{k}"), e.mean);
            kv(&format!("subsample_mse_k{k}"), h.mean);
            kv(&format!("gap_k{k}"), g);
        }
    }
    kv("wall_s", format!("{:.3}", rep.wall_seconds));
    if a.assert {
        if a.state_bits != 12 || a.seq_len != 256 {
            bail!("no frozen reference window for this configuration");
        }
        let mut pass = true;
        for arm in &rep.arms {
            let Some(&(_, center, tol)) =
                reference::TAILBITE.iter().find(|(k, _, _)| *k == arm.bits_per_weight)
            else {
                bail!("no reference window for k={}", arm.bits_per_weight);
            };
            pass &= window(&format!("mse_k{}", arm.bits_per_weight), arm.heuristic.mean, center, tol);
            if let Some(gap) = arm.mean_gap {
                let dominated = gap >= 0.0;
                kv(
                    &format!("assert_dominance_k{}", arm.bits_per_weight),
                    format!("gap {gap} >= 0: {dominated}"),
                );
                pass &= dominated;
                if arm.bits_per_weight == 1 {
                    let tight = gap <= reference::TAILBITE_GAP;
                    kv(
                        "assert_gap_k1",
                        format!("{gap} <= {}: {tight}", reference::TAILBITE_GAP),
                    );
                    pass &= tight;
                }
            }
        }
        kv("assert_pass", pass);
        if !pass {
            std::process::exit(2);
        }
    }
    Ok(())
}

#[derive(Args)]
struct LloydMaxArgs {
    #[arg(long = "k", default_value_t = 2)]
    bits: u32,
    #[arg(long = "T", default_value_t = 256)]
    seq_len: usize,
    #[arg(long, default_value_t = 256)]
    seqs: usize,
    #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
    seed: u64,
    #[arg(long, default_value_t = tcq_cli::defaults::LLOYD_TRAIN_SAMPLES)]
    train_samples: usize,
    #[arg(long, default_value_t = tcq_cli::defaults::LLOYD_TRAIN_SEED)]
    train_seed: u64,
    #[arg(long)]
    assert: bool,
}

fn run_lloyd_max(a: LloydMaxArgs) -> anyhow::Result<()> {
    let rep = experiments::bench_lloyd_max(
        a.bits,
        a.seq_len,
        a.seqs,
        a.seed,
        a.train_samples,
        a.train_seed,
    )?;
    kv("cmd", "lloyd-max");
    kv("k", a.bits);
    kv("T", a.seq_len);
    kv("seqs", rep.stat.sequences);
    kv("seed", a.seed);
    kv("train_samples", a.train_samples);
    kv("train_seed", a.train_seed);
    kv("mse", rep.stat.mean);
    kv("sem", rep.stat.sem);
    kv("dr_bound", rep.bound);
    kv("wall_s", format!("{:.3}", rep.wall_seconds));
    if a.assert {
        if a.bits != 2 || a.seq_len != 256 || a.seqs < 256 {
            bail!("no frozen reference window for this configuration");
        }
        let (center, tol) = reference::LLOYD_MAX_2BIT;
        let pass = window("mse", rep.stat.mean, center, tol);
        kv("assert_pass", pass);
        if !pass {
            std::process::exit(2);
        }
    }
    Ok(())
}

#[derive(Args)]
struct QuantizeArgs {
    /// Rank-2 tensor file holding the matrix.
    #[arg(long)]
    input: PathBuf,
    /// Optional rank-2 tensor holding the proxy Hessian (defaults to identity).
    #[arg(long)]
    hessian: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "L", default_value_t = 16)]
    state_bits: u32,
    #[arg(long = "k", default_value_t = 2)]
    bits_per_weight: u32,
    #[arg(long = "V", default_value_t = 1)]
    vector_width: u32,
    #[arg(long, value_enum, default_value_t = CodeKind::OneMad)]
    code: CodeKind,
    #[arg(long = "Q", default_value_t = 9)]
    index_bits: u32,
    #[arg(long)]
    lut_seed: Option<u64>,
    #[arg(long = "Tx", default_value_t = 16)]
    tile_rows: usize,
    #[arg(long = "Ty", default_value_t = 16)]
    tile_cols: usize,
    /// Hessian regularization factor (fraction of the mean diagonal).
    #[arg(long, default_value_t = 0.01)]
    hreg: f64,
    /// Skip the random Hadamard transform.
    #[arg(long)]
    no_rht: bool,
    #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
    seed: u64,
    /// Fixed encoding scale; defaults to the matrix standard deviation.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    tail_biting: bool,
    /// Base Hadamard matrix file for a non-power-of-two row count.
    #[arg(long)]
    row_base: Option<PathBuf>,
    /// Base Hadamard matrix file for a non-power-of-two column count.
    #[arg(long)]
    col_base: Option<PathBuf>,
}

fn load_base(path: &Option<PathBuf>) -> anyhow::Result<Option<BaseHadamard>> {
    Ok(match path {
        Some(p) => {
            Some(BaseHadamard::load(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    })
}

fn run_quantize(a: QuantizeArgs) -> anyhow::Result<()> {
    let (dims, data) =
        read_tensor(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let w = pipeline::tensor_to_matrix(&dims, &data)?;
    let h_raw = match &a.hessian {
        Some(p) => {
            let (hd, hv) = read_tensor(p).with_context(|| format!("reading {}", p.display()))?;
            Some(pipeline::tensor_to_matrix(&hd, &hv)?)
        }
        None => None,
    };
    let spec = TrellisSpec::new(a.state_bits, a.bits_per_weight, a.vector_width)?;
    let code = build_code(a.code, a.state_bits, a.vector_width, a.index_bits, a.lut_seed)?;
    let mut cfg = QuantConfig::new(spec, code, a.tile_rows, a.tile_cols)?;
    cfg.tail_biting = a.tail_biting;
    if let Some(s) = a.scale {
        cfg.scale = ScaleMode::Fixed(s);
    }
    let opts = pipeline::PipelineOptions {
        cfg,
        hreg_factor: a.hreg,
        use_rht: !a.no_rht,
        seed: a.seed,
        row_base: load_base(&a.row_base)?,
        col_base: load_base(&a.col_base)?,
    };
    let outcome = match pipeline::quantize_matrix(&w, h_raw.as_ref(), &opts) {
        Err(Error::NotPositiveDefinite(p)) => {
            bail!("block pivot {p} is not positive definite; raise --hreg")
        }
        other => other?,
    };
    outcome.container.save(&a.out)?;
    kv("cmd", "quantize");
    kv("rows", w.nrows());
    kv("cols", w.ncols());
    kv("L", a.state_bits);
    kv("k", a.bits_per_weight);
    kv("V", a.vector_width);
    kv("code", a.code.label());
    kv("Tx", a.tile_rows);
    kv("Ty", a.tile_cols);
    kv("tail_biting", a.tail_biting);
    kv("rht", !a.no_rht);
    kv("seed", a.seed);
    kv("hreg", a.hreg);
    kv("scale", outcome.container.scale);
    kv("lambda", outcome.container.regularization);
    kv("mu_before", outcome.mu_before);
    if let Some(mu) = outcome.mu_after {
        kv("mu_after", mu);
    }
    kv("proxy_loss", outcome.proxy_loss);
    kv("mse", outcome.mse);
    kv("payload_bytes", outcome.container.payload.len());
    kv("out", a.out.display());
    Ok(())
}

#[derive(Args)]
struct DequantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    row_base: Option<PathBuf>,
    #[arg(long)]
    col_base: Option<PathBuf>,
}

fn run_dequantize(a: DequantizeArgs) -> anyhow::Result<()> {
    let qm = QuantizedMatrix::load(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let row_base = load_base(&a.row_base)?;
    let col_base = load_base(&a.col_base)?;
    let w = pipeline::dequantize(&qm, row_base.as_ref(), col_base.as_ref())?;
    let (dims, data) = pipeline::matrix_to_tensor(&w);
    write_tensor(&a.out, &dims, &data)?;
    kv("cmd", "dequantize");
    kv("rows", qm.rows);
    kv("cols", qm.cols);
    kv("out", a.out.display());
    Ok(())
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
}

fn code_label(code: &NodeValueSource) -> String {
    match code {
        NodeValueSource::OneMad(_) => "1mad".into(),
        NodeValueSource::ThreeInst(_) => "3inst".into(),
        NodeValueSource::Hyb(p) => {
            format!("hyb(Q={},seed={},samples={})", p.index_bits, p.seed, p.sample_count)
        }
        NodeValueSource::Lut(p) => format!("lut(V={},len={})", p.vector_width, p.table.len()),
    }
}

fn run_inspect(a: InspectArgs) -> anyhow::Result<()> {
    let qm = QuantizedMatrix::load(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    kv("cmd", "inspect");
    kv("rows", qm.rows);
    kv("cols", qm.cols);
    kv("Tx", qm.block_rows);
    kv("Ty", qm.block_cols);
    kv("L", qm.spec.state_bits);
    kv("k", qm.spec.bits_per_weight);
    kv("V", qm.spec.vector_width);
    kv("code", code_label(&qm.code));
    kv("tail_biting", qm.tail_biting);
    match qm.rht {
        Some(s) => kv("rht", format!("row_seed={},col_seed={}", s.row_seed, s.col_seed)),
        None => kv("rht", "none"),
    }
    kv("scale", qm.scale);
    kv("lambda", qm.regularization);
    kv("sequences", qm.num_sequences());
    kv("bytes_per_sequence", qm.bytes_per_sequence());
    kv("payload_bytes", qm.payload.len());
    Ok(())
}

#[derive(Args)]
struct CorrScanArgs {
    #[arg(long = "L", default_value_t = 12)]
    state_bits: u32,
    #[arg(long = "V", default_value_t = 1)]
    vector_width: u32,
    #[arg(long, value_enum, default_value_t = CodeKind::ThreeInst)]
    code: CodeKind,
    #[arg(long = "Q", default_value_t = 9)]
    index_bits: u32,
    #[arg(long)]
    lut_seed: Option<u64>,
    /// Additive-constant values to scan (3inst only), e.g. 0.875,0.922,1.0.
    #[arg(long, value_delimiter = ',')]
    magic: Vec<f32>,
}

fn run_corr_scan(a: CorrScanArgs) -> anyhow::Result<()> {
    kv("cmd", "corr-scan");
    kv("L", a.state_bits);
    kv("V", a.vector_width);
    kv("code", a.code.label());
    let spec = TrellisSpec::new(a.state_bits, 1, a.vector_width)?;
    if !a.magic.is_empty() && a.code != CodeKind::ThreeInst {
        bail!("--magic only applies to the 3inst code");
    }
    let configs: Vec<(String, NodeValueSource)> = if a.magic.is_empty() {
        let code =
            build_code(a.code, a.state_bits, a.vector_width, a.index_bits, a.lut_seed)?;
        vec![("default".into(), code)]
    } else {
        a.magic
            .iter()
            .map(|&m| {
                (format!("{m}"), NodeValueSource::ThreeInst(ThreeInstParams::with_magic(m)))
            })
            .collect()
    };
    for (tag, code) in &configs {
        let rho = neighbor_correlation(code, &spec)?;
        let (mean, var) = marginal_moments(code, a.state_bits)?;
        kv(&format!("rho[{tag}]"), rho);
        kv(&format!("mean[{tag}]"), mean);
        kv(&format!("var[{tag}]"), var);
    }
    Ok(())
}

#[derive(Args)]
struct GenGaussianArgs {
    /// Comma-separated dimensions, e.g. 256,256.
    #[arg(long, value_delimiter = ',', required = true)]
    shape: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn run_gen_gaussian(a: GenGaussianArgs) -> anyhow::Result<()> {
    let count: usize = a.shape.iter().map(|&d| d as usize).product();
    if count == 0 {
        bail!("shape must be nonempty with nonzero dimensions");
    }
    let data = tcq::rng::gaussian_vec_f32(a.seed, count);
    write_tensor(&a.out, &a.shape, &data)?;
    kv("cmd", "gen-gaussian");
    kv("shape", a.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x"));
    kv("seed", a.seed);
    kv("count", count);
    kv("out", a.out.display());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::BenchDr(a) => run_bench_dr(a),
        Cmd::BenchTailbite(a) => run_bench_tailbite(a),
        Cmd::LloydMax(a) => run_lloyd_max(a),
        Cmd::Quantize(a) => run_quantize(a),
        Cmd::Dequantize(a) => run_dequantize(a),
        Cmd::Inspect(a) => run_inspect(a),
        Cmd::CorrScan(a) => run_corr_scan(a),
        Cmd::GenGaussian(a) => run_gen_gaussian(a),
    }
}
