//! `jackmac`: command-line front end for the multi-format MAC unit model
//! and its systolic-array simulator.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
//! Every command is deterministic given identical flags, files, and seed;
//! `JACKMAC_SEED` supplies the default seed where one applies.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use jackmac::csm::{structure_report, Grouping};
use jackmac::datapath::{
    jack_mac, ActiveSubmodules, JackResult, MacOperand, Mode, E_MAX_FLOOR,
};
use jackmac::formats::{
    decode, dequantize_block, encode_exact, preset, quantize_block, BlockCode, ExactValue,
    FormatDescriptor,
};
use jackmac::verify::{run_suite, Suite};
use jackmac_sim::{
    conv_execute_with, estimate_cycles, gemm_execute_with, AccumulationMode, SimReport, Tensor,
    WorkloadSpec,
};

#[derive(Parser)]
#[command(
    name = "jackmac",
    version,
    about = "Multi-format MAC unit model and systolic-array simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize an FP32 tensor (CSV or f32 container) into a target format.
    Quantize(QuantizeArgs),
    /// Run one multiply-accumulate and dump the unit's internals.
    Mac(MacArgs),
    /// Multiply two coded tensors (B supplied transposed as [n, k]).
    Gemm(GemmArgs),
    /// Convolve [h, w, cin] activations with a [cout, kh, kw, cin] bank.
    Conv(ConvArgs),
    /// Estimate cycle counts for a workload without executing it.
    Simulate(SimulateArgs),
    /// Run the self-check suites against the exact-arithmetic oracles.
    Verify(VerifyArgs),
    /// Print structural reports.
    Report(ReportArgs),
}

#[derive(Args)]
struct QuantizeArgs {
    /// Input file: CSV (one row per line) or an f32 tensor container.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Target format: bf16, fp8_e4m3, int8, int4, mxint8, mxint4, mxfp8_e4m3.
    #[arg(long)]
    format: String,
    /// Output tensor container.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Emit the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MacArgs {
    /// Operating mode: bf16, fp8, int8, int4, mxint8, mxint4, mxfp8.
    #[arg(long)]
    mode: String,
    /// Multiplicand lanes as decimal values, comma separated. MX modes
    /// take block element values; each lane contributes element * 2^ex.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Vec<f64>,
    /// Multiplier lanes as decimal values, comma separated. MX modes
    /// take block element values; each lane contributes element * 2^ey.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w: Vec<f64>,
    /// Value fed to the 16-bit accumulation port.
    #[arg(long, allow_negative_numbers = true)]
    acc: Option<f64>,
    /// Shared block exponent for the x lanes (MX modes only).
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    ex: i8,
    /// Shared block exponent for the w lanes (MX modes only).
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    ey: i8,
    /// Emit the result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GemmArgs {
    /// Left operand, [m, k].
    #[arg(long, value_name = "FILE")]
    a: PathBuf,
    /// Right operand, transposed: [n, k].
    #[arg(long = "b-t", value_name = "FILE")]
    b_t: PathBuf,
    /// Operating mode; operand formats must match it.
    #[arg(long)]
    mode: String,
    /// Array configuration: JACK, BASELINE, or a JSON file.
    #[arg(long, default_value = "JACK")]
    config: String,
    /// Merge partial sums exactly instead of chaining 16-bit outputs.
    #[arg(long)]
    wide: bool,
    /// Output tensor container, [m, n].
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the cycle report as JSON.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Emit the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ConvArgs {
    /// Activations, [h, w, cin].
    #[arg(long, value_name = "FILE")]
    x: PathBuf,
    /// Weights, [cout, kh, kw, cin].
    #[arg(long = "w", value_name = "FILE")]
    weights: PathBuf,
    /// Convolution stride.
    #[arg(long, default_value_t = 1)]
    stride: u32,
    /// Operating mode; operand formats must match it.
    #[arg(long)]
    mode: String,
    /// Array configuration: JACK, BASELINE, or a JSON file.
    #[arg(long, default_value = "JACK")]
    config: String,
    /// Merge partial sums exactly instead of chaining 16-bit outputs.
    #[arg(long)]
    wide: bool,
    /// Output tensor container, [ho, wo, cout].
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the cycle report as JSON.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Emit the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Workload spec JSON ({"mode": ..., "kind": "GEMM"|"CONV", dims...}).
    #[arg(long, value_name = "FILE")]
    workload: PathBuf,
    /// Array configuration: JACK, BASELINE, or a JSON file.
    #[arg(long, default_value = "JACK")]
    config: String,
    /// Write the report JSON here as well.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name (submul, fusion, fp-oracle, int-oracle, grouped-eq,
    /// mx-scaling) or "all".
    #[arg(long)]
    suite: String,
    /// Randomized trials per suite (exhaustive suites ignore this).
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// RNG seed; defaults to JACKMAC_SEED or 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Emit the suite reports as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Print the sub-multiplier/shifter structure report.
    #[arg(long, required = true)]
    structure: bool,
    /// Shifter grouping: ungrouped or grouped.
    #[arg(long)]
    grouping: String,
    /// Lane count: 4 or 16.
    #[arg(long)]
    lanes: u32,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Quantize(a) => cmd_quantize(a),
        Command::Mac(a) => cmd_mac(a),
        Command::Gemm(a) => cmd_gemm(a),
        Command::Conv(a) => cmd_conv(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn cmd_quantize(a: QuantizeArgs) -> Result<ExitCode> {
    let fmt = preset(&a.format)?;
    let (dims, values) = io::load_real(&a.input)?;
    let tensor = quantize_values(fmt, dims, &values)?;
    let (max_rel, mean_rel) = rel_error_stats(&values, &tensor.decode_all());
    io::write_atomic(&a.out, &tensor.to_bytes())?;
    if a.json {
        let doc = serde_json::json!({
            "out": a.out,
            "format": a.format,
            "dims": tensor.dims,
            "elements": tensor.element_count(),
            "max_rel_err": max_rel,
            "mean_rel_err": mean_rel,
            "checksum": tensor.checksum(),
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!(
            "quantized {} values to {} -> {}",
            values.len(),
            a.format,
            a.out.display()
        );
        println!("max rel err {max_rel:.3e}, mean rel err {mean_rel:.3e}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Quantize real values in row-major order: per-element for scalar
/// formats, whole shared-exponent blocks for MX formats.
fn quantize_values(fmt: FormatDescriptor, dims: Vec<u32>, values: &[f64]) -> Result<Tensor> {
    let exact: Vec<ExactValue> = values
        .iter()
        .map(|&v| ExactValue::from_float(v))
        .collect::<jackmac::Result<_>>()?;
    if fmt.is_mx() {
        let block = fmt.block_size as usize;
        let inner = *dims.last().unwrap_or(&0);
        if inner as usize % block != 0 {
            bail!(
                "{} needs the innermost dimension to be a multiple of {block}, got {inner} \
                 (quantize whole blocks: pad or reshape the input)",
                fmt
            );
        }
        let mut elements = Vec::with_capacity(exact.len());
        let mut shared = Vec::with_capacity(exact.len() / block);
        for chunk in exact.chunks(block) {
            let coded = quantize_block(chunk, &fmt)?;
            elements.extend(coded.elements);
            shared.push(coded.shared_exponent);
        }
        Ok(Tensor::new_mx(fmt, dims, elements, shared)?)
    } else {
        let elements = exact.iter().map(|v| encode_exact(v, &fmt)).collect();
        Ok(Tensor::new_scalar(fmt, dims, elements)?)
    }
}

/// Max and mean relative quantization error over the nonzero inputs.
fn rel_error_stats(original: &[f64], quantized: &[ExactValue]) -> (f64, f64) {
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for (&v, q) in original.iter().zip(quantized) {
        if v == 0.0 {
            continue;
        }
        let rel = (q.to_f64() - v).abs() / v.abs();
        max = max.max(rel);
        sum += rel;
        n += 1;
    }
    (max, if n == 0 { 0.0 } else { sum / n as f64 })
}

fn cmd_mac(a: MacArgs) -> Result<ExitCode> {
    let mode = Mode::from_name(a.mode.parse()?);
    let lanes = mode.lanes as usize;
    if a.x.len() != lanes || a.w.len() != lanes {
        bail!(
            "mode {} takes exactly {} lane values, got {} for --x and {} for --w",
            mode.name,
            lanes,
            a.x.len(),
            a.w.len()
        );
    }
    if !mode.element_format.is_mx() && (a.ex != 0 || a.ey != 0) {
        bail!("--ex/--ey apply to MX modes only");
    }
    let x = build_operand(&mode, &a.x, a.ex)?;
    let w = build_operand(&mode, &a.w, a.ey)?;
    let acc = match a.acc {
        Some(v) => Some(encode_exact(
            &ExactValue::from_float(v)?,
            &mode.output_format.descriptor(),
        )),
        None => None,
    };
    let result = jack_mac(&mode, &x, &w, acc)?;
    let value = decode(&result.output);

    if a.json {
        let mut doc = result.to_json();
        doc["mode"] = mode.name.as_str().into();
        doc["value"] = value.to_f64().into();
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print_mac(&mode, &x, &w, &result, &value);
    }
    Ok(ExitCode::SUCCESS)
}

/// Encode decimal lane values for a mode. Scalar modes encode the values
/// directly; MX modes treat them as block elements and attach the shared
/// exponent, so each lane contributes `element * 2^shared`.
fn build_operand(mode: &Mode, values: &[f64], shared: i8) -> Result<MacOperand> {
    let fmt = mode.element_format;
    let elements: Vec<_> = values
        .iter()
        .map(|&v| Ok(encode_exact(&ExactValue::from_float(v)?, &fmt)))
        .collect::<jackmac::Result<_>>()?;
    if fmt.is_mx() {
        Ok(MacOperand::Block(BlockCode {
            format: fmt,
            shared_exponent: shared,
            elements,
        }))
    } else {
        Ok(MacOperand::Scalars(elements))
    }
}

fn print_mac(mode: &Mode, x: &MacOperand, w: &MacOperand, result: &JackResult, value: &ExactValue) {
    println!(
        "mode {} ({} lanes of {} -> {})",
        mode.name,
        mode.lanes,
        mode.element_format,
        mode.output_format.descriptor()
    );
    println!("x decodes to {:?}", operand_values(x));
    println!("w decodes to {:?}", operand_values(w));
    println!(
        "output 0x{:04X} = {}",
        result.output.bits,
        value.to_f64()
    );
    if result.e_max == E_MAX_FLOOR {
        println!("e_max - (all products zero), alignment cap {}", result.alignment_cap);
    } else {
        println!("e_max {}, alignment cap {}", result.e_max, result.alignment_cap);
    }
    println!("raw accumulator {}", result.raw_accumulator);
    println!("active submodules: {}", describe_active(&result.active_submodules));
}

fn operand_values(op: &MacOperand) -> Vec<f64> {
    match op {
        MacOperand::Scalars(codes) => codes.iter().map(|c| decode(c).to_f64()).collect(),
        MacOperand::Block(block) => dequantize_block(block).iter().map(|v| v.to_f64()).collect(),
    }
}

fn describe_active(a: &ActiveSubmodules) -> String {
    let mut parts = Vec::new();
    if a.csm {
        parts.push("csm".to_string());
    }
    if a.xor_bundle {
        parts.push("xor bundle".to_string());
    }
    match a.exponent_calculators {
        0 => {}
        1 => parts.push("1 exponent calculator".to_string()),
        n => parts.push(format!("{n} exponent calculators")),
    }
    if a.normalizer {
        parts.push("normalizer".to_string());
    }
    if a.rounder {
        parts.push("rounder".to_string());
    }
    parts.join(", ")
}

fn acc_mode(wide: bool) -> AccumulationMode {
    if wide {
        AccumulationMode::Wide
    } else {
        AccumulationMode::Chained16
    }
}

fn cmd_gemm(a: GemmArgs) -> Result<ExitCode> {
    let mode = Mode::from_name(a.mode.parse()?);
    let cfg = io::resolve_config(&a.config)?;
    let ta = io::load_coded(&a.a)?;
    let tb = io::load_coded(&a.b_t)?;
    let (c, report) = gemm_execute_with(&ta, &tb, &cfg, &mode, acc_mode(a.wide))?;
    finish_execution(&c, &report, &a.out, a.report.as_deref(), a.json)
}

fn cmd_conv(a: ConvArgs) -> Result<ExitCode> {
    let mode = Mode::from_name(a.mode.parse()?);
    let cfg = io::resolve_config(&a.config)?;
    let x = io::load_coded(&a.x)?;
    let w = io::load_coded(&a.weights)?;
    let (y, report) = conv_execute_with(&x, &w, a.stride, &cfg, &mode, acc_mode(a.wide))?;
    finish_execution(&y, &report, &a.out, a.report.as_deref(), a.json)
}

fn finish_execution(
    out: &Tensor,
    report: &SimReport,
    out_path: &std::path::Path,
    report_path: Option<&std::path::Path>,
    json: bool,
) -> Result<ExitCode> {
    io::write_atomic(out_path, &out.to_bytes())?;
    if let Some(path) = report_path {
        io::write_atomic(path, serde_json::to_string_pretty(report)?.as_bytes())?;
    }
    if json {
        let doc = serde_json::json!({
            "out": out_path,
            "dims": out.dims,
            "checksum": out.checksum(),
            "report": report,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!(
            "wrote {:?} tensor ({}) -> {}",
            out.dims,
            out.format,
            out_path.display()
        );
        print_report(report);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_report(r: &SimReport) {
    println!("total cycles         {}", r.total_cycles);
    println!("compute cycles       {}", r.compute_cycles);
    println!("memory stall cycles  {}", r.memory_stall_cycles);
    println!("feed cycles/operand  {}", r.input_feed_cycles_per_operand);
    println!("utilization          {:.4}", r.utilization);
    if let Some(sum) = &r.result_checksum {
        println!("result checksum      {sum}");
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&a.workload)
        .with_context(|| format!("reading {}", a.workload.display()))?;
    let spec: WorkloadSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.workload.display()))?;
    spec.validate()?;
    let cfg = io::resolve_config(&a.config)?;
    let report = estimate_cycles(&spec, &cfg)?;
    if let Some(path) = &a.out {
        io::write_atomic(path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        let (m, n, k) = spec.gemm_dims();
        println!(
            "workload {} {} m={m} n={n} k={k}",
            spec.dims.kind_name(),
            spec.mode.as_str()
        );
        println!(
            "config {} {}x{} units, {} B/cycle",
            cfg.unit.as_str(),
            cfg.rows,
            cfg.cols,
            cfg.bandwidth_bytes_per_cycle
        );
        print_report(&report);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let seed = a.seed.unwrap_or_else(default_seed);
    let suites: Vec<Suite> = if a.suite.eq_ignore_ascii_case("all") {
        Suite::ALL.to_vec()
    } else {
        vec![a.suite.parse()?]
    };
    let reports: Vec<_> = suites
        .into_iter()
        .map(|s| run_suite(s, a.trials, seed))
        .collect();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        for r in &reports {
            println!(
                "suite {} (seed {}): {} checks, {} failures [{}]",
                r.suite.as_str(),
                r.seed,
                r.checks,
                r.failures,
                if r.passed() { "PASS" } else { "FAIL" }
            );
            for ex in &r.examples {
                println!("  counterexample: {ex}");
            }
        }
    }
    Ok(ExitCode::from(verify_exit(&reports)))
}

/// Default seed from JACKMAC_SEED, else 0.
fn default_seed() -> u64 {
    std::env::var("JACKMAC_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn verify_exit(reports: &[jackmac::verify::SuiteReport]) -> u8 {
    if reports.iter().all(|r| r.passed()) {
        0
    } else {
        1
    }
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    let grouping = parse_grouping(&a.grouping)?;
    let s = structure_report(grouping, a.lanes)?;
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(ExitCode::SUCCESS)
}

fn parse_grouping(s: &str) -> Result<Grouping> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "ungrouped" => Ok(Grouping::Ungrouped),
        "grouped" | "grouped_2d" | "grouped2d" => Ok(Grouping::Grouped2d),
        other => bail!("unknown grouping {other:?} (expected ungrouped or grouped)"),
    }
}
