//! Command-line harness: parameter search, correctness verification against
//! the plaintext oracle, benchmarking with op-count and noise
//! instrumentation, and memory-table reports.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hyena_he::bfv::RingParams;
use hyena_he::conv::{Algo, ConvOptions, LayerSpec};
use hyena_he::harness::{bench_layer, run_layer, RunConfig};
use hyena_he::params::{
    compute_h, cost_model, find_k, memory_table, param_search, select_dcmp_base,
    conventional_model_cell, input_ct_cell, mb_string_trim, proposed_model_cell, CostReport,
    DEFAULT_K_MAX,
};
use serde::Serialize;
use std::io::Write;

#[derive(Parser)]
#[command(name = "hyena", about = "Encrypted-convolution benchmark and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the encryption-parameter search (primes, sign coefficient, k).
    Params(ParamsArgs),
    /// Encrypt, convolve, decrypt, and compare against the plaintext oracle.
    Verify(VerifyArgs),
    /// Benchmark layers with op-count and noise instrumentation.
    Bench(BenchArgs),
    /// Print the memory/ciphertext-size comparison table for the evaluated
    /// layer set.
    Table2(Table2Args),
    /// Summarize a bench CSV: normalized latency against the conventional
    /// baseline.
    Report(ReportArgs),
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long, default_value_t = 2048)]
    n: usize,
    #[arg(long = "p-bits", default_value_t = 19)]
    p_bits: u32,
    #[arg(long = "q-bits", default_value_t = 60)]
    q_bits: u32,
    #[arg(long = "k-max", default_value_t = DEFAULT_K_MAX)]
    k_max: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Layer record "H,W,C_in,C_out,f,algo"; may be given multiple times.
    #[arg(long)]
    layer: Vec<String>,
    /// Run the bundled layer shapes of a network preset.
    #[arg(long)]
    network: Option<String>,
    /// Restrict to one algorithm (default: the record's, or all three).
    #[arg(long)]
    algo: Option<String>,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long = "p-bits")]
    p_bits: Option<u32>,
    #[arg(long = "q-bits")]
    q_bits: Option<u32>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "w-bits", default_value_t = 10)]
    w_bits: u32,
    /// Corrupt one kernel value (fault injection: the run must fail).
    #[arg(long)]
    fault: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Layer record "H,W,C_in,C_out,f,algo"; may be given multiple times.
    #[arg(long)]
    layer: Vec<String>,
    #[arg(long)]
    network: Option<String>,
    /// Comma-separated algorithms to run (default "conventional,hyena").
    #[arg(long, default_value = "conventional,hyena")]
    algo: String,
    /// Enabled optimizations, comma-separated subset of
    /// "param_select,lazy_reduction,hoisting" (default: all).
    #[arg(long, default_value = "param_select,lazy_reduction,hoisting")]
    opt: String,
    #[arg(long, default_value_t = 2048)]
    n: usize,
    #[arg(long = "p-bits")]
    p_bits: Option<u32>,
    #[arg(long = "q-bits")]
    q_bits: Option<u32>,
    /// Fixed decomposition base exponent; default: calibrate per algorithm.
    #[arg(long = "w-bits")]
    w_bits: Option<u32>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Pack one channel per ciphertext regardless of capacity.
    #[arg(long = "force-cn1")]
    force_cn1: bool,
    /// Analytic cost model only; skip the timed runs.
    #[arg(long = "cost-only")]
    cost_only: bool,
    /// Threads for output-group parallelism (default 1: stable timing).
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Write the CSV rows to this path as well as stdout.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct Table2Args {
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Bench CSV produced by `hyena bench --out`.
    #[arg(long = "in")]
    input: String,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Params(a) => cmd_params(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Table2(a) => cmd_table2(a),
        Command::Report(a) => cmd_report(a),
    };
    match code {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

/// HYENA_SEED overrides --seed everywhere.
fn effective_seed(cli_seed: u64) -> u64 {
    match std::env::var("HYENA_SEED") {
        Ok(v) => v.parse().unwrap_or(cli_seed),
        Err(_) => cli_seed,
    }
}

fn default_widths(n: usize, p_bits: Option<u32>, q_bits: Option<u32>) -> (u32, u32) {
    if n >= 1024 {
        (p_bits.unwrap_or(19), q_bits.unwrap_or(60))
    } else {
        (p_bits.unwrap_or(12), q_bits.unwrap_or(58))
    }
}

fn build_params(n: usize, p_bits: Option<u32>, q_bits: Option<u32>) -> Result<RingParams> {
    let (pb, qb) = default_widths(n, p_bits, q_bits);
    let (p, q) = hyena_he::params::find_primes(n, pb, qb)?;
    Ok(RingParams::new(n, p, q)?)
}

fn parse_layer_record(record: &str, default_algo: Option<Algo>) -> Result<(LayerSpec, Algo)> {
    let parts: Vec<&str> = record.split(',').map(str::trim).collect();
    if parts.len() != 5 && parts.len() != 6 {
        bail!("layer record must be H,W,C_in,C_out,f[,algo], got '{record}'");
    }
    let nums: Vec<usize> = parts[..5]
        .iter()
        .map(|s| s.parse().map_err(|_| anyhow!("bad number '{s}' in layer record")))
        .collect::<Result<_>>()?;
    let layer = LayerSpec::new(nums[0], nums[1], nums[2], nums[3], nums[4])?;
    let algo = if parts.len() == 6 {
        parts[5].parse::<Algo>()?
    } else {
        default_algo.ok_or_else(|| anyhow!("layer record '{record}' carries no algorithm"))?
    };
    Ok((layer, algo))
}

fn network_layers(name: &str) -> Result<Vec<LayerSpec>> {
    let csv = match name {
        "vgg16" => include_str!("../presets/vgg16.csv"),
        "resnet20" => include_str!("../presets/resnet20.csv"),
        "mobilenetv1" => include_str!("../presets/mobilenetv1.csv"),
        other => bail!("unknown network preset '{other}' (vgg16, resnet20, mobilenetv1)"),
    };
    csv.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<usize> = l
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| anyhow!("bad preset line '{l}'")))
                .collect::<Result<_>>()?;
            Ok(LayerSpec::new(v[0], v[1], v[2], v[3], v[4])?)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// params
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ParamsJson {
    n: usize,
    p: u64,
    q: u64,
    h: u64,
    k: u64,
    residue: i64,
    sign_pmult_forecast_bits: f64,
    sign_pmult_k1_forecast_bits: f64,
    dense_pmult_forecast_bits: f64,
    cmult_forecast_bits: f64,
}

fn cmd_params(a: ParamsArgs) -> Result<i32> {
    let r = param_search(a.n, a.p_bits, a.q_bits, a.k_max)?;
    if a.json {
        let j = ParamsJson {
            n: r.n,
            p: r.p,
            q: r.q,
            h: r.h,
            k: r.k,
            residue: r.residue,
            sign_pmult_forecast_bits: r.sign_pmult_bits,
            sign_pmult_k1_forecast_bits: r.sign_pmult_k1_bits,
            dense_pmult_forecast_bits: r.dense_pmult_bits,
            cmult_forecast_bits: r.cmult_bits,
        };
        println!("{}", serde_json::to_string_pretty(&j)?);
    } else {
        println!("{r}");
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn verify_cases(a: &VerifyArgs) -> Result<Vec<(LayerSpec, Algo)>> {
    let algo_filter: Option<Algo> = a.algo.as_deref().map(str::parse).transpose()?;
    let mut cases = Vec::new();
    if let Some(net) = &a.network {
        for layer in network_layers(net)? {
            for algo in [Algo::Conventional, Algo::Padded, Algo::Hyena] {
                if algo_filter.map_or(true, |f| f == algo) {
                    cases.push((layer, algo));
                }
            }
        }
    }
    for record in &a.layer {
        let (layer, algo) = parse_layer_record(record, algo_filter)?;
        if algo_filter.map_or(true, |f| f == algo) {
            cases.push((layer, algo));
        }
    }
    if cases.is_empty() {
        // default smoke matrix
        for (ci, co) in [(1, 2), (2, 2), (2, 1), (4, 4)] {
            for f in [1, 3] {
                let layer = LayerSpec::new(8, 8, ci, co, f)?;
                for algo in [Algo::Conventional, Algo::Padded, Algo::Hyena] {
                    if algo_filter.map_or(true, |fl| fl == algo) {
                        cases.push((layer, algo));
                    }
                }
            }
        }
    }
    Ok(cases)
}

fn cmd_verify(a: VerifyArgs) -> Result<i32> {
    let seed = effective_seed(a.seed);
    let params = build_params(a.n, a.p_bits, a.q_bits)?;
    let cases = verify_cases(&a)?;
    let mut failures = 0;
    for (layer, algo) in cases {
        let mut cfg = RunConfig::new(layer, algo, seed);
        cfg.w_bits = a.w_bits;
        cfg.fault_kernel_index = a.fault;
        let label = format!(
            "{}x{}x{}->{} f={} {}",
            layer.h, layer.w, layer.c_in, layer.c_out, layer.f, algo
        );
        match run_layer(&params, &cfg) {
            Ok(out) if out.matches => {
                println!("verify {label}: pass (peak noise {:.1} bits, margin {:.1})",
                    out.peak_noise_bits, out.margin_bits);
            }
            Ok(out) => {
                failures += 1;
                let (c, y, x, got, expect) = out.first_mismatch.unwrap();
                println!(
                    "verify {label}: FAIL at channel {c} position ({y},{x}): got {got}, expected {expect}"
                );
            }
            Err(e) => {
                failures += 1;
                println!("verify {label}: ERROR {e}");
            }
        }
    }
    Ok(if failures == 0 { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct OptFlags {
    param_select: bool,
    lazy_reduction: bool,
    hoisting: bool,
}

fn parse_opts(s: &str) -> Result<OptFlags> {
    let mut flags = OptFlags { param_select: false, lazy_reduction: false, hoisting: false };
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok {
            "param_select" => flags.param_select = true,
            "lazy_reduction" | "lazy" => flags.lazy_reduction = true,
            "hoisting" => flags.hoisting = true,
            "none" => {}
            other => bail!("unknown optimization flag '{other}'"),
        }
    }
    Ok(flags)
}

fn csv_line(report: &CostReport, seed: u64, normalized: f64) -> String {
    format!("{},{},{:.4}", report.csv_row(), seed, normalized)
}

fn bench_csv_header() -> String {
    format!("{},seed,normalized_latency", CostReport::csv_header().replace(char::is_whitespace, ""))
}

fn cmd_bench(a: BenchArgs) -> Result<i32> {
    let seed = effective_seed(a.seed);
    let opts = parse_opts(&a.opt)?;
    let algos: Vec<Algo> = a
        .algo
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;

    let mut layers: Vec<LayerSpec> = Vec::new();
    if let Some(net) = &a.network {
        layers.extend(network_layers(net)?);
    }
    for record in &a.layer {
        let (layer, _) = parse_layer_record(record, Some(Algo::Hyena))?;
        layers.push(layer);
    }
    if layers.is_empty() {
        bail!("bench needs --layer or --network");
    }

    let params = build_params(a.n, a.p_bits, a.q_bits)?;
    let h = compute_h(params.p, params.n)?;
    let k_opt = find_k(params.p, h, DEFAULT_K_MAX).0;

    let mut rows: Vec<(CostReport, f64)> = Vec::new();
    let mut lines = vec![bench_csv_header()];
    for layer in &layers {
        let mut baseline: Option<f64> = None;
        for &algo in &algos {
            let digits = if algo == Algo::Conventional { 2 } else { 1 };
            let k = if algo == Algo::Hyena && opts.param_select { k_opt } else { 1 };
            let mut report;
            if a.cost_only {
                let w = a.w_bits.unwrap_or(20);
                report = cost_model(layer, algo, params.n, params.q_bits(), w, digits);
                rows.push((report.clone(), f64::NAN));
                lines.push(csv_line(&report, seed, f64::NAN));
                continue;
            }
            let w_bits = match a.w_bits {
                Some(w) => w,
                None => {
                    // calibrate; without parameter selection the proposed
                    // algorithm inherits the baseline's base
                    let calib_algo =
                        if algo == Algo::Hyena && !opts.param_select { Algo::Conventional } else { algo };
                    select_dcmp_base(&params, layer, calib_algo, digits, k, seed)?
                }
            };
            let mut cfg = RunConfig::new(*layer, algo, seed);
            cfg.w_bits = w_bits;
            cfg.digits = digits;
            cfg.k = k;
            cfg.opts = ConvOptions {
                hoisting: opts.hoisting,
                lazy_reduction: opts.lazy_reduction,
            };
            cfg.force_cn1 = a.force_cn1;
            let bench = bench_layer(&params, &cfg, a.reps, a.parallel.max(1))?;
            report = cost_model(layer, algo, params.n, params.q_bits(), w_bits, digits);
            report.ops = bench.counters;
            report.peak_noise_bits = bench.peak_noise_bits;
            report.margin_bits = params.margin_bits() - bench.peak_noise_bits;
            report.keygen_seconds = bench.keygen_seconds;
            report.model_seconds = bench.model_seconds;
            report.conv_seconds = bench.median_conv_seconds();
            if !bench.matches {
                eprintln!(
                    "bench {}x{} {}: output DISAGREES with the oracle (noise margin exhausted?)",
                    layer.h, layer.c_in, algo
                );
            }
            let norm = match (algo, baseline) {
                (Algo::Conventional, _) => {
                    baseline = Some(report.conv_seconds);
                    1.0
                }
                (_, Some(b)) => report.conv_seconds / b,
                (_, None) => f64::NAN,
            };
            println!(
                "bench {}x{}x{}->{} f={} {}: conv {:.4}s (x{:.2} of baseline), model {:.3}s, \
                 keys {:.3}s, W={}, c_n={}, noise {:.1}/{:.1} bits",
                layer.h,
                layer.w,
                layer.c_in,
                layer.c_out,
                layer.f,
                algo,
                report.conv_seconds,
                norm,
                report.model_seconds,
                report.keygen_seconds,
                w_bits,
                report.c_n,
                report.peak_noise_bits,
                params.margin_bits(),
            );
            lines.push(csv_line(&report, seed, norm));
            rows.push((report, norm));
        }
    }

    let csv = lines.join("\n");
    if let Some(path) = &a.out {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(csv.as_bytes()))
            .with_context(|| format!("writing {path}"))?;
    }
    if a.json {
        #[derive(Serialize)]
        struct Row {
            csv: String,
        }
        let j: Vec<Row> = lines.iter().skip(1).map(|l| Row { csv: l.clone() }).collect();
        println!("{}", serde_json::to_string_pretty(&j)?);
    } else {
        println!("{csv}");
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// table2
// ---------------------------------------------------------------------------

fn cmd_table2(a: Table2Args) -> Result<i32> {
    let rows = memory_table(60);
    if a.json {
        #[derive(Serialize)]
        struct Row {
            h: usize,
            c_in: usize,
            c_out: usize,
            n: usize,
            conventional_model_mb: String,
            conventional_input_ct_mb: String,
            proposed_model_mb: String,
            proposed_input_ct_mb: String,
            model_ratio: u64,
            conventional_key_mb: String,
            proposed_key_mb: String,
        }
        let out: Vec<Row> = rows
            .iter()
            .map(|r| Row {
                h: r.h,
                c_in: r.c_in,
                c_out: r.c_out,
                n: r.n,
                conventional_model_mb: conventional_model_cell(&r.conventional),
                conventional_input_ct_mb: input_ct_cell(&r.conventional),
                proposed_model_mb: proposed_model_cell(&r.proposed),
                proposed_input_ct_mb: input_ct_cell(&r.proposed),
                model_ratio: r.model_ratio,
                conventional_key_mb: mb_string_trim(r.conventional.key_bytes),
                proposed_key_mb: mb_string_trim(r.proposed.key_bytes),
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(0);
    }
    println!(
        "{:<16} {:>14} {:>12} {:>12} {:>12} {:>10} {:>8}",
        "input (H,in,out)", "conv model MB", "conv ct MB", "prop model", "prop ct MB", "ratio", "n"
    );
    for r in rows {
        println!(
            "{:<16} {:>14} {:>12} {:>12} {:>12} {:>9}x {:>8}",
            format!("({}, {}, {})", r.h, r.c_in, r.c_out),
            conventional_model_cell(&r.conventional),
            input_ct_cell(&r.conventional),
            proposed_model_cell(&r.proposed),
            input_ct_cell(&r.proposed),
            r.model_ratio,
            r.n,
        );
    }
    println!();
    println!("(key sizes, reported: step set from the documented rotation plan)");
    Ok(0)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(a: ReportArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty CSV"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| anyhow!("CSV lacks column '{name}'"))
    };
    let (c_h, c_cin, c_cout, c_algo, c_conv, c_norm) = (
        col("h")?,
        col("c_in")?,
        col("c_out")?,
        col("algo")?,
        col("conv_s")?,
        col("normalized_latency")?,
    );
    println!(
        "{:<20} {:>14} {:>12} {:>12}",
        "layer", "algo", "conv (s)", "normalized"
    );
    let mut speedups = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() <= c_norm {
            continue;
        }
        println!(
            "{:<20} {:>14} {:>12} {:>12}",
            format!("({}, {}, {})", f[c_h], f[c_cin], f[c_cout]),
            f[c_algo],
            f[c_conv],
            f[c_norm]
        );
        if f[c_algo] != "conventional" {
            if let Ok(norm) = f[c_norm].parse::<f64>() {
                if norm.is_finite() && norm > 0.0 {
                    speedups.push(1.0 / norm);
                }
            }
        }
    }
    if !speedups.is_empty() {
        speedups.sort_by(f64::total_cmp);
        println!(
            "\nmedian speedup over the conventional baseline: {:.2}x (range {:.2}-{:.2}x)",
            speedups[speedups.len() / 2],
            speedups.first().unwrap(),
            speedups.last().unwrap()
        );
    }
    Ok(0)
}
