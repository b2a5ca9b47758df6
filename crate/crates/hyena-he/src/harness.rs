//! Shared run/verify/bench plumbing: build a layer end to end (keys, packed
//! input, encoded kernel), execute one of the convolution algorithms, and
//! compare against the plaintext oracle with noise instrumentation.

use crate::bfv::{decrypt, galois_keygen, keygen, noise_bits, Plaintext, RingParams, SecretKey};
use crate::conv::{
    choose_packing, conv_conventional, conv_hyena, conv_padded, encode_kernel_conventional,
    encode_kernel_hyena, encode_kernel_padded, pack_tensor, rotation_plan, unpack_output, Algo,
    ConvOptions, LayerSpec, OpCounters, PackedTensor,
};
use crate::error::HeError;
use crate::modring::inv_mod;
use crate::oracle::{conv_reference, PlainKernel, PlainTensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub layer: LayerSpec,
    pub algo: Algo,
    pub w_bits: u32,
    pub digits: u32,
    pub k: u64,
    pub seed: u64,
    pub opts: ConvOptions,
    pub force_cn1: bool,
    /// corrupt one kernel value after the oracle snapshot (negative control)
    pub fault_kernel_index: Option<usize>,
}

impl RunConfig {
    pub fn new(layer: LayerSpec, algo: Algo, seed: u64) -> Self {
        RunConfig {
            layer,
            algo,
            w_bits: 10,
            digits: 1,
            k: 1,
            seed,
            opts: ConvOptions::default(),
            force_cn1: false,
            fault_kernel_index: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub matches: bool,
    /// (channel, y, x, got, expected) of the first differing output value
    pub first_mismatch: Option<(usize, usize, usize, u64, u64)>,
    pub counters: OpCounters,
    pub peak_noise_bits: f64,
    pub margin_bits: f64,
    pub keygen_seconds: f64,
    pub model_seconds: f64,
    pub conv_seconds: f64,
    pub c_n: usize,
    pub key_steps: usize,
    pub input_ct_count: usize,
    pub output_ct_count: usize,
    pub output: PlainTensor,
    pub expected: PlainTensor,
}

/// Random tensor mod p with a zero border of the given width.
pub fn random_tensor(layer: &LayerSpec, p: u64, border: usize, rng: &mut ChaCha8Rng) -> PlainTensor {
    let mut t = PlainTensor::zero(layer.c_in, layer.h, layer.w);
    for c in 0..layer.c_in {
        for y in border..layer.h - border {
            for x in border..layer.w - border {
                t.set(c, y, x, rng.gen_range(0..p));
            }
        }
    }
    t
}

/// Random kernel with values below 2^bits.
pub fn random_kernel(layer: &LayerSpec, bits: u32, rng: &mut ChaCha8Rng) -> PlainKernel {
    PlainKernel {
        c_out: layer.c_out,
        c_in: layer.c_in,
        f: layer.f,
        values: (0..layer.c_out * layer.c_in * layer.f * layer.f)
            .map(|_| rng.gen_range(0..1u64 << bits))
            .collect(),
    }
}

/// Post-hoc noise of an output ciphertext: residual against its own rounded
/// message (valid whenever decryption succeeded).
fn residual_noise(params: &RingParams, sk: &SecretKey, ct: &crate::bfv::Ciphertext) -> f64 {
    let dec = decrypt(params, sk, ct);
    let inv = inv_mod(ct.scale_tag % params.p, params.p);
    let logical = Plaintext { poly: dec.poly.scale(inv, params.p_tables().barrett()) };
    noise_bits(params, sk, ct, &logical)
}

pub fn peak_output_noise(params: &RingParams, sk: &SecretKey, out: &PackedTensor) -> f64 {
    out.cts[0]
        .iter()
        .map(|ct| residual_noise(params, sk, ct))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn compare(
    got: &PlainTensor,
    expected: &PlainTensor,
) -> (bool, Option<(usize, usize, usize, u64, u64)>) {
    for c in 0..expected.channels {
        for y in 0..expected.height {
            for x in 0..expected.width {
                let (g, e) = (got.get(c, y, x), expected.get(c, y, x));
                if g != e {
                    return (false, Some((c, y, x, g, e)));
                }
            }
        }
    }
    (true, None)
}

/// Build everything for a layer and run one algorithm end to end.
pub fn run_layer(params: &RingParams, cfg: &RunConfig) -> Result<RunOutcome, HeError> {
    let layer = cfg.layer;
    let digits = if cfg.algo == Algo::Conventional { cfg.digits } else { 1 };
    let border = if cfg.algo == Algo::Conventional { 0 } else { layer.f / 2 };

    let mut data_rng = crate::bfv::seeded_rng(cfg.seed, b"layer-data");
    let tensor = random_tensor(&layer, params.p, border, &mut data_rng);
    let mut kernel = random_kernel(&layer, 8, &mut data_rng);
    let expected = conv_reference(&tensor, &kernel, params.p);
    if let Some(idx) = cfg.fault_kernel_index {
        let at = idx % kernel.values.len();
        kernel.values[at] = (kernel.values[at] + 1) % params.p;
    }

    let packing = choose_packing(&layer, params.n, cfg.force_cn1)?;
    let plan = rotation_plan(&layer, &packing)?;

    let t0 = Instant::now();
    let sk = keygen(params, cfg.seed);
    let mut key_rng = crate::bfv::seeded_rng(cfg.seed, b"galois-keys");
    let keys = galois_keygen(params, &sk, &plan, cfg.w_bits, &mut key_rng)?;
    let keygen_seconds = t0.elapsed().as_secs_f64();

    let mut enc_rng = crate::bfv::seeded_rng(cfg.seed, b"encrypt");
    let packed = pack_tensor(params, &layer, &packing, &tensor, &sk, digits, &mut enc_rng)?;

    let mut counters = OpCounters::default();
    let t1 = Instant::now();
    let (out, model_seconds, conv_seconds) = match cfg.algo {
        Algo::Conventional => {
            let kern = encode_kernel_conventional(params, &layer, &packing, &kernel, digits)?;
            let model_seconds = t1.elapsed().as_secs_f64();
            let t2 = Instant::now();
            let out = conv_conventional(params, &packed, &kern, &keys, cfg.opts, &mut counters)?;
            (out, model_seconds, t2.elapsed().as_secs_f64())
        }
        Algo::Padded => {
            let kern = encode_kernel_padded(&layer, &kernel, params.p);
            let model_seconds = t1.elapsed().as_secs_f64();
            let t2 = Instant::now();
            let out = conv_padded(params, &packed, &kern, &keys, cfg.opts, &mut counters)?;
            (out, model_seconds, t2.elapsed().as_secs_f64())
        }
        Algo::Hyena => {
            let kern = encode_kernel_hyena(params, &layer, &packing, &kernel, cfg.k)?;
            let model_seconds = t1.elapsed().as_secs_f64();
            let t2 = Instant::now();
            let out = conv_hyena(params, &packed, &kern, &keys, cfg.opts, &mut counters)?;
            (out, model_seconds, t2.elapsed().as_secs_f64())
        }
    };

    let peak_noise_bits = peak_output_noise(params, &sk, &out);
    let output = unpack_output(params, &out, &sk)?;
    let (matches, first_mismatch) = compare(&output, &expected);

    Ok(RunOutcome {
        matches,
        first_mismatch,
        counters,
        peak_noise_bits,
        margin_bits: params.margin_bits() - peak_noise_bits,
        keygen_seconds,
        model_seconds,
        conv_seconds,
        c_n: packing.c_n,
        key_steps: keys.len(),
        input_ct_count: packed.ct_count(),
        output_ct_count: out.ct_count(),
        output,
        expected,
    })
}

/// Benchmark outcome for one layer/algorithm configuration.
#[derive(Clone, Debug)]
pub struct BenchResult {
    pub conv_seconds: Vec<f64>,
    pub keygen_seconds: f64,
    pub model_seconds: f64,
    pub counters: OpCounters,
    pub peak_noise_bits: f64,
    pub matches: bool,
    pub c_n: usize,
    pub key_steps: usize,
    pub input_ct_count: usize,
    pub output_ct_count: usize,
}

impl BenchResult {
    pub fn median_conv_seconds(&self) -> f64 {
        let mut v = self.conv_seconds.clone();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }
}

/// Benchmark a layer by slicing it into output groups so kernel plaintext
/// material never exceeds one group's worth of memory. Counters and times
/// accumulate over the slices; correctness is checked on the first rep.
pub fn bench_layer(
    params: &RingParams,
    cfg: &RunConfig,
    reps: usize,
    threads: usize,
) -> Result<BenchResult, HeError> {
    let layer = cfg.layer;
    let digits = if cfg.algo == Algo::Conventional { cfg.digits } else { 1 };
    let border = if cfg.algo == Algo::Conventional { 0 } else { layer.f / 2 };
    let packing = choose_packing(&layer, params.n, cfg.force_cn1)?;
    let plan = rotation_plan(&layer, &packing)?;

    let mut data_rng = crate::bfv::seeded_rng(cfg.seed, b"layer-data");
    let tensor = random_tensor(&layer, params.p, border, &mut data_rng);
    let kernel = random_kernel(&layer, 8, &mut data_rng);
    let expected = conv_reference(&tensor, &kernel, params.p);

    let t0 = Instant::now();
    let sk = keygen(params, cfg.seed);
    let mut key_rng = crate::bfv::seeded_rng(cfg.seed, b"galois-keys");
    let keys = galois_keygen(params, &sk, &plan, cfg.w_bits, &mut key_rng)?;
    let keygen_seconds = t0.elapsed().as_secs_f64();

    let mut enc_rng = crate::bfv::seeded_rng(cfg.seed, b"encrypt");
    let packed = pack_tensor(params, &layer, &packing, &tensor, &sk, digits, &mut enc_rng)?;

    // output-group slices: each carries c_n output channels
    let slices = packing.group_count(layer.c_out);
    let slice_layer = LayerSpec { c_out: packing.c_n.min(layer.c_out), ..layer };

    let slice_kernel = |og: usize| -> PlainKernel {
        let lo = og * packing.c_n;
        let hi = (lo + packing.c_n).min(layer.c_out);
        PlainKernel {
            c_out: hi - lo,
            c_in: layer.c_in,
            f: layer.f,
            values: kernel.values[lo * layer.c_in * layer.taps()..hi * layer.c_in * layer.taps()]
                .to_vec(),
        }
    };

    struct SliceOut {
        model_seconds: f64,
        conv_seconds: Vec<f64>,
        counters: OpCounters,
        cts: Vec<crate::bfv::Ciphertext>,
        out_packing: crate::conv::Packing,
    }

    let run_slice = |og: usize| -> Result<SliceOut, HeError> {
        let kern_values = slice_kernel(og);
        let mut counters = OpCounters::default();
        let t = Instant::now();
        let mut conv_seconds = Vec::with_capacity(reps);
        let (model_seconds, cts, out_packing) = match cfg.algo {
            Algo::Conventional => {
                let kern =
                    encode_kernel_conventional(params, &slice_layer, &packing, &kern_values, digits)?;
                let model_seconds = t.elapsed().as_secs_f64();
                let mut out = None;
                for _ in 0..reps.max(1) {
                    let t2 = Instant::now();
                    let o = conv_conventional(params, &packed, &kern, &keys, cfg.opts, &mut counters)?;
                    conv_seconds.push(t2.elapsed().as_secs_f64());
                    out = Some(o);
                }
                let out = out.unwrap();
                (model_seconds, out.cts[0].clone(), out.packing)
            }
            Algo::Padded => {
                let kern = encode_kernel_padded(&slice_layer, &kern_values, params.p);
                let model_seconds = t.elapsed().as_secs_f64();
                let mut out = None;
                for _ in 0..reps.max(1) {
                    let t2 = Instant::now();
                    let o = conv_padded(params, &packed, &kern, &keys, cfg.opts, &mut counters)?;
                    conv_seconds.push(t2.elapsed().as_secs_f64());
                    out = Some(o);
                }
                let out = out.unwrap();
                (model_seconds, out.cts[0].clone(), out.packing)
            }
            Algo::Hyena => {
                let kern = encode_kernel_hyena(params, &slice_layer, &packing, &kern_values, cfg.k)?;
                let model_seconds = t.elapsed().as_secs_f64();
                let mut out = None;
                for _ in 0..reps.max(1) {
                    let t2 = Instant::now();
                    let o = conv_hyena(params, &packed, &kern, &keys, cfg.opts, &mut counters)?;
                    conv_seconds.push(t2.elapsed().as_secs_f64());
                    out = Some(o);
                }
                let out = out.unwrap();
                (model_seconds, out.cts[0].clone(), out.packing)
            }
        };
        Ok(SliceOut { model_seconds, conv_seconds, counters, cts, out_packing })
    };

    let mut outs: Vec<SliceOut> = Vec::with_capacity(slices);
    if threads <= 1 || slices <= 1 {
        for og in 0..slices {
            outs.push(run_slice(og)?);
        }
    } else {
        let run_slice = &run_slice;
        let results: Vec<Result<SliceOut, HeError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..slices)
                .map(|og| scope.spawn(move || run_slice(og)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("bench thread panicked")).collect()
        });
        for r in results {
            outs.push(r?);
        }
    }

    let mut counters = OpCounters::default();
    let mut model_seconds = 0.0;
    let mut conv_seconds = vec![0.0; reps.max(1)];
    let mut all_cts = Vec::new();
    let out_packing = outs[0].out_packing;
    for s in &outs {
        counters.add(&s.counters);
        model_seconds += s.model_seconds;
        for (acc, dt) in conv_seconds.iter_mut().zip(&s.conv_seconds) {
            *acc += dt;
        }
        all_cts.extend(s.cts.iter().cloned());
    }

    // reassemble the sliced outputs into the full tensor for verification
    let out_layer = LayerSpec { c_out: layer.c_out, ..layer };
    let full = PackedTensor {
        layer: out_layer,
        packing: out_packing,
        cts: vec![all_cts],
        digits: 1,
        digit_bits: 0,
    };
    let peak_noise_bits = peak_output_noise(params, &sk, &full);
    let output = unpack_output(params, &full, &sk)?;
    let (matches, _) = compare(&output, &expected);

    Ok(BenchResult {
        conv_seconds,
        keygen_seconds,
        model_seconds,
        counters,
        peak_noise_bits,
        matches,
        c_n: packing.c_n,
        key_steps: keys.len(),
        input_ct_count: packed.ct_count(),
        output_ct_count: full.ct_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_params() -> RingParams {
        RingParams::new(128, 3329, 144115188086612993).unwrap()
    }

    #[test]
    fn run_layer_all_algorithms_match_oracle() {
        let params = toy_params();
        let layer = LayerSpec::new(8, 8, 2, 2, 3).unwrap();
        for algo in [Algo::Conventional, Algo::Padded, Algo::Hyena] {
            let cfg = RunConfig::new(layer, algo, 99);
            let out = run_layer(&params, &cfg).unwrap();
            assert!(out.matches, "{algo} disagreed with the oracle: {:?}", out.first_mismatch);
            assert!(out.margin_bits > 0.0);
        }
    }

    #[test]
    fn fault_injection_is_detected_with_location() {
        let params = toy_params();
        let layer = LayerSpec::new(8, 8, 2, 2, 3).unwrap();
        let mut cfg = RunConfig::new(layer, Algo::Hyena, 99);
        cfg.fault_kernel_index = Some(5);
        let out = run_layer(&params, &cfg).unwrap();
        assert!(!out.matches);
        assert!(out.first_mismatch.is_some());
    }

    #[test]
    fn bench_layer_agrees_with_run_layer() {
        let params = toy_params();
        let layer = LayerSpec::new(8, 8, 4, 4, 3).unwrap();
        let cfg = RunConfig::new(layer, Algo::Hyena, 7);
        let bench = bench_layer(&params, &cfg, 2, 1).unwrap();
        assert!(bench.matches);
        assert_eq!(bench.conv_seconds.len(), 2);
        let run = run_layer(&params, &cfg).unwrap();
        assert_eq!(bench.counters.reductions, 2 * run.counters.reductions); // 2 reps
    }

    #[test]
    fn bench_layer_parallel_is_deterministic() {
        let params = toy_params();
        let layer = LayerSpec::new(8, 8, 4, 4, 3).unwrap();
        let cfg = RunConfig::new(layer, Algo::Hyena, 8);
        let seq = bench_layer(&params, &cfg, 1, 1).unwrap();
        let par = bench_layer(&params, &cfg, 1, 4).unwrap();
        assert!(seq.matches && par.matches);
        assert_eq!(seq.counters, par.counters);
    }
}
