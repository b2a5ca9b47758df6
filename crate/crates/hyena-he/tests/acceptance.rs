//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Run with:
//!   cargo test -p hyena-he --test acceptance -- --nocapture --test-threads=1

use hyena_he::bfv::{
    decode, decrypt, encode, galois_keygen, hoist_decompose, hoisted_rot, hrot, keygen,
    noise_bits, seeded_rng, GaloisOp, Plaintext, RingParams,
};
use hyena_he::conv::{
    choose_packing, conv_conventional, conv_hyena, conv_padded, encode_kernel_conventional,
    encode_kernel_hyena, encode_kernel_padded, pack_tensor, rotation_plan, unpack_output, Algo,
    ConvOptions, LayerSpec, OpCounters,
};
use hyena_he::harness::{bench_layer, random_kernel, random_tensor, RunConfig};
use hyena_he::modring::{mul_mod, ntt_forward, ntt_inverse, NttTables, Polynomial};
use hyena_he::oracle::{conv_reference, polymul_reference};
use hyena_he::params::{
    compute_h, cost_model, find_k, find_primes, memory_table, param_search,
    select_dcmp_base_packed, conventional_model_cell, input_ct_cell, proposed_model_cell,
    DEFAULT_K_MAX,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

const MASTER_SEED: u64 = 0x48594e41;

fn evaluation_params() -> RingParams {
    let (p, q) = find_primes(2048, 19, 60).unwrap();
    RingParams::new(2048, p, q).unwrap()
}

fn toy_params(n: usize) -> RingParams {
    let (p, q) = match n {
        64 => find_primes(64, 10, 58).unwrap(),
        128 => find_primes(128, 12, 58).unwrap(),
        other => panic!("no toy parameters for n = {other}"),
    };
    RingParams::new(n, p, q).unwrap()
}

#[test]
fn criterion_01_parameter_search() {
    let t = Instant::now();
    let r = param_search(2048, 19, 60, DEFAULT_K_MAX).unwrap();
    let dt = t.elapsed().as_secs_f64();
    assert_eq!(r.p, 307201);
    assert_eq!(r.h, 84248);
    assert_eq!(r.k, 11);
    assert!(dt < 1.0, "parameter search took {dt:.3}s");
    println!(
        "ACCEPTANCE 1 (parameter search): PASS - p={}, h={}, k={} in {:.3}s",
        r.p, r.h, r.k, dt
    );
}

#[test]
fn criterion_02_memory_table_reproduction() {
    let t = Instant::now();
    let expect: &[(&str, &str, &str, &str)] = &[
        ("1153", "2", "0.56", "1"),
        ("2306", "4", "1.13", "2"),
        ("18446", "8", "9", "4"),
        ("36891", "16", "18", "8"),
        ("2305", "8", "0.28", "4"),
        ("18439", "16", "2.25", "8"),
        ("36878", "32", "4.5", "16"),
        ("2306", "32", "0.56", "16"),
        ("4611", "64", "1.13", "32"),
        ("54.04", "6", "0.01", "3"),
        ("1153", "128", "0.28", "64"),
    ];
    let rows = memory_table(60);
    assert_eq!(rows.len(), expect.len());
    for (row, &(cm, cict, pm, pict)) in rows.iter().zip(expect) {
        let id = (row.h, row.c_in, row.c_out);
        assert_eq!(conventional_model_cell(&row.conventional), cm, "model cell {id:?}");
        assert_eq!(input_ct_cell(&row.conventional), cict, "input ct cell {id:?}");
        assert_eq!(proposed_model_cell(&row.proposed), pm, "proposed model cell {id:?}");
        assert_eq!(input_ct_cell(&row.proposed), pict, "proposed input ct cell {id:?}");
    }
    let dt = t.elapsed().as_secs_f64();
    assert!(dt < 1.0, "cost model took {dt:.3}s");
    println!(
        "ACCEPTANCE 2 (memory-table reproduction): PASS - {} layers, model and input-ct \
         columns exact, {:.3}s",
        rows.len(),
        dt
    );
}

#[test]
fn criterion_03_storage_example() {
    // 2-channel 3x3 kernel at n = 2048, 60-bit ciphertext words
    let layer = LayerSpec::new(32, 32, 2, 1, 3).unwrap();
    let proposed = cost_model(&layer, Algo::Hyena, 2048, 60, 20, 1);
    let conventional = cost_model(&layer, Algo::Conventional, 2048, 60, 20, 1);
    let kb_p = proposed.model_bytes as f64 / 1024.0;
    let kb_c = conventional.model_bytes as f64 / 1024.0;
    assert!((kb_p - 16.1).abs() <= 0.1, "proposed {kb_p:.2} KB");
    assert!((kb_c - 288.0).abs() <= 0.1, "conventional {kb_c:.2} KB");
    println!(
        "ACCEPTANCE 3 (storage example): PASS - proposed {kb_p:.2} KB vs conventional {kb_c:.1} KB"
    );
}

#[test]
fn criterion_04_noise_growth_bits() {
    let t = Instant::now();
    let params = evaluation_params();
    let sk = keygen(&params, MASTER_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let p = params.p;
    let n = params.n;
    let half = n / 2;

    // sign plaintexts with entries +-k (rows [k, -k])
    let sign_pt = |k: u64| -> (Plaintext, Vec<u64>) {
        let mut slots = vec![k; n];
        for s in slots.iter_mut().skip(half) {
            *s = p - k;
        }
        (encode(&params, &slots).unwrap(), slots)
    };
    let (pt_k1, slots_k1) = sign_pt(1);
    let (pt_k11, slots_k11) = sign_pt(11);

    let trials = 100;
    let (mut sum_dense, mut sum_k1, mut sum_k11) = (0.0f64, 0.0f64, 0.0f64);
    let (mut max_dense, mut max_k1, mut max_k11) = (f64::MIN, f64::MIN, f64::MIN);
    for _ in 0..trials {
        let u: Vec<u64> = (0..n).map(|_| rng.gen_range(0..p)).collect();
        let pu = encode(&params, &u).unwrap();
        let cu = hyena_he::bfv::encrypt(&params, &sk, &pu, &mut rng);
        let base = noise_bits(&params, &sk, &cu, &pu);

        // dense: conventional-style plaintext with 8-bit kernel values
        let w: Vec<u64> = (0..n).map(|_| rng.gen_range(0..256)).collect();
        let dense = hyena_he::bfv::pmult(&params, &cu, &encode(&params, &w).unwrap()).unwrap();
        let exp: Vec<u64> = u.iter().zip(&w).map(|(&a, &b)| mul_mod(a, b, p)).collect();
        let g_dense = noise_bits(&params, &sk, &dense, &encode(&params, &exp).unwrap()) - base;

        let measure_sign = |pt: &Plaintext, slots: &[u64]| -> f64 {
            let out = hyena_he::bfv::pmult(&params, &cu, pt).unwrap();
            let exp: Vec<u64> =
                u.iter().zip(slots).map(|(&a, &b)| mul_mod(a, b, p)).collect();
            noise_bits(&params, &sk, &out, &encode(&params, &exp).unwrap()) - base
        };
        let g_k1 = measure_sign(&pt_k1, &slots_k1);
        let g_k11 = measure_sign(&pt_k11, &slots_k11);

        assert!(g_dense <= 29.0 + 1.0, "dense growth {g_dense:.2} bits");
        assert!(g_k1 <= 25.0 + 1.0, "sign k=1 growth {g_k1:.2} bits");
        assert!(g_k11 <= 21.0 + 1.0, "sign k=11 growth {g_k11:.2} bits");

        sum_dense += g_dense;
        sum_k1 += g_k1;
        sum_k11 += g_k11;
        max_dense = max_dense.max(g_dense);
        max_k1 = max_k1.max(g_k1);
        max_k11 = max_k11.max(g_k11);
    }
    let (m_dense, m_k1, m_k11) =
        (sum_dense / trials as f64, sum_k1 / trials as f64, sum_k11 / trials as f64);
    assert!(
        m_k11 < m_k1 && m_k1 < m_dense,
        "aggregate ordering violated: k11 {m_k11:.2}, k1 {m_k1:.2}, dense {m_dense:.2}"
    );
    let dt = t.elapsed().as_secs_f64();
    assert!(dt < 60.0, "noise trials took {dt:.1}s");
    println!(
        "ACCEPTANCE 4 (noise growth): PASS - mean/max bits: dense {m_dense:.1}/{max_dense:.1} \
         (<=30), k=1 {m_k1:.1}/{max_k1:.1} (<=26), k=11 {m_k11:.1}/{max_k11:.1} (<=22); \
         ordering k11 < k1 < dense; {dt:.1}s"
    );
}

/// Everything the shared layer matrix needs for criteria 5-7.
struct Case {
    params_n: usize,
    layer: LayerSpec,
    seed: u64,
}

fn layer_matrix() -> Vec<Case> {
    let mut cases = Vec::new();
    let mut idx = 0u64;
    for &n in &[64usize, 128] {
        for &h in &[4usize, 8] {
            for &f in &[1usize, 3] {
                // an 8x8 map fills all of a degree-64 ciphertext; taps would
                // have to cross the two slot rows, so only 1x1 filters run
                if n == 64 && h == 8 && f == 3 {
                    continue;
                }
                for &ci in &[1usize, 2, 4] {
                    for &co in &[1usize, 2, 4] {
                        idx += 1;
                        cases.push(Case {
                            params_n: n,
                            layer: LayerSpec::new(h, h, ci, co, f).unwrap(),
                            seed: MASTER_SEED ^ (idx * 0x9e37),
                        });
                    }
                }
            }
        }
    }
    cases
}

#[test]
fn criterion_05_06_07_oracle_lazy_hoisting() {
    let t = Instant::now();
    let params64 = toy_params(64);
    let params128 = toy_params(128);
    let cases = layer_matrix();
    assert!(cases.len() >= 50, "matrix has only {} layers", cases.len());

    let mut checked_rotations = 0u64;
    for case in &cases {
        let params = if case.params_n == 64 { &params64 } else { &params128 };
        let layer = case.layer;
        let sk = keygen(params, case.seed);
        let packing = choose_packing(&layer, params.n, false).unwrap();
        let plan = rotation_plan(&layer, &packing).unwrap();
        let mut rng = seeded_rng(case.seed, b"acceptance");
        let keys = galois_keygen(params, &sk, &plan, 10, &mut rng).unwrap();
        let border = layer.f / 2;
        let tensor = random_tensor(&layer, params.p, border, &mut rng);
        let kernel = random_kernel(&layer, 8, &mut rng);
        let expected = conv_reference(&tensor, &kernel, params.p);
        let packed = pack_tensor(params, &layer, &packing, &tensor, &sk, 1, &mut rng).unwrap();

        // criterion 5: all three algorithms agree with the oracle exactly
        let mut c = OpCounters::default();
        let kc = encode_kernel_conventional(params, &layer, &packing, &kernel, 1).unwrap();
        let out_c = conv_conventional(params, &packed, &kc, &keys, ConvOptions::default(), &mut c).unwrap();
        assert_eq!(unpack_output(params, &out_c, &sk).unwrap(), expected, "conventional {layer:?}");

        let kp = encode_kernel_padded(&layer, &kernel, params.p);
        let out_p = conv_padded(params, &packed, &kp, &keys, ConvOptions::default(), &mut c).unwrap();
        assert_eq!(unpack_output(params, &out_p, &sk).unwrap(), expected, "padded {layer:?}");

        let kh = encode_kernel_hyena(params, &layer, &packing, &kernel, 2).unwrap();
        let mut lazy_c = OpCounters::default();
        let out_h = conv_hyena(params, &packed, &kh, &keys, ConvOptions::default(), &mut lazy_c).unwrap();
        assert_eq!(unpack_output(params, &out_h, &sk).unwrap(), expected, "hyena {layer:?}");

        // criterion 6: the lazy path is bit-exact against the eager path and
        // reduces once per row accumulator instead of once per MAC
        let mut eager_c = OpCounters::default();
        let out_e = conv_hyena(
            params,
            &packed,
            &kh,
            &keys,
            ConvOptions { lazy_reduction: false, ..Default::default() },
            &mut eager_c,
        )
        .unwrap();
        assert_eq!(out_h.cts, out_e.cts, "lazy/eager ciphertexts differ on {layer:?}");
        let in_groups = packing.group_count(layer.c_in) as u64;
        let out_groups = packing.group_count(layer.c_out) as u64;
        assert_eq!(
            lazy_c.reductions,
            in_groups * out_groups * packing.c_n as u64,
            "lazy reduction count on {layer:?}"
        );
        assert_eq!(eager_c.reductions, eager_c.lazy_macs, "eager reduces once per MAC");
        // the saving is strict whenever there is more than one MAC per row
        if eager_c.lazy_macs > lazy_c.reductions {
            assert!(eager_c.reductions > lazy_c.reductions);
        }

        // criterion 7a: hoisted rotation is bit-identical to the direct
        // rotation for every planned step
        let ct0 = &packed.cts[0][0];
        let dec = hoist_decompose(params, ct0, keys.w_bits).unwrap();
        for op in &plan {
            let direct = hrot(params, ct0, *op, &keys).unwrap();
            let hoisted = hoisted_rot(params, &dec, *op, &keys).unwrap();
            assert_eq!(direct, hoisted, "hoisting mismatch at {op:?} on {layer:?}");
            checked_rotations += 1;
        }

        // criterion 7b: disabling hoisting changes only decomposition counts
        let mut nohoist_c = OpCounters::default();
        let out_nh = conv_hyena(
            params,
            &packed,
            &kh,
            &keys,
            ConvOptions { hoisting: false, ..Default::default() },
            &mut nohoist_c,
        )
        .unwrap();
        assert_eq!(out_h.cts, out_nh.cts, "hoisting changed outputs on {layer:?}");
        assert_eq!(lazy_c.rotations, nohoist_c.rotations);
        assert!(
            nohoist_c.decompositions >= lazy_c.decompositions,
            "hoisting should only reduce decompositions"
        );
    }
    let dt = t.elapsed().as_secs_f64();
    assert!(dt < 120.0, "matrix took {dt:.1}s");
    println!(
        "ACCEPTANCE 5 (oracle equivalence): PASS - {} layers x 3 algorithms exact, {:.1}s",
        cases.len(),
        dt
    );
    println!(
        "ACCEPTANCE 6 (lazy-reduction bit-exactness): PASS - lazy == eager on all {} hyena runs, \
         reductions = rows per output group per input ciphertext",
        cases.len()
    );
    println!(
        "ACCEPTANCE 7 (hoisting equality): PASS - {checked_rotations} hoisted rotations \
         bit-identical to direct rotations; hoisting changes only decomposition counts"
    );
}

#[test]
fn criterion_08_ntt_ring_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED ^ 8);
    let mut cases = 0u64;
    for &(n, q) in &[(16usize, 97u64), (32, 3329), (64, 7681), (64, 3329)] {
        let tables = NttTables::new(n, q).unwrap();
        for _ in 0..250 {
            let a = Polynomial::from_coeffs((0..n).map(|_| rng.gen_range(0..q)).collect(), q);
            let b = Polynomial::from_coeffs((0..n).map(|_| rng.gen_range(0..q)).collect(), q);
            let back = ntt_inverse(&ntt_forward(&a, &tables).unwrap(), &tables).unwrap();
            assert_eq!(a, back, "roundtrip n={n} q={q}");
            let fast = hyena_he::modring::poly_mul(&a, &b, &tables).unwrap();
            let slow = polymul_reference(&a.coeffs, &b.coeffs, n, q);
            assert_eq!(fast.coeffs, slow, "schoolbook n={n} q={q}");
            cases += 1;
        }
    }
    assert!(cases >= 1000);
    println!(
        "ACCEPTANCE 8 (ring exactness): PASS - {cases} roundtrip + schoolbook cases exact"
    );
}

#[test]
fn criterion_09_base_selection() {
    let t = Instant::now();

    // part A: on calibration layers the proposed algorithm always affords a
    // base at least as large as the conventional one. Calibration runs at a
    // 14-bit plaintext prime: with the wide evaluation prime the dense
    // multiplication amplifies rotation noise past the fixed 4-bit guard
    // band for every base, so no conventional selection exists there.
    let (p, q) = find_primes(2048, 14, 60).unwrap();
    let params = RingParams::new(2048, p, q).unwrap();
    let k_opt = find_k(p, compute_h(p, 2048).unwrap(), DEFAULT_K_MAX).0;
    let layers = [
        LayerSpec::new(16, 16, 4, 4, 3).unwrap(),
        LayerSpec::new(16, 16, 8, 8, 3).unwrap(),
        LayerSpec::new(16, 16, 16, 16, 3).unwrap(),
        LayerSpec::new(32, 32, 4, 4, 3).unwrap(),
        LayerSpec::new(32, 32, 8, 8, 3).unwrap(),
    ];
    let mut pairs = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        let seed = MASTER_SEED ^ (0x900 + i as u64);
        let wc =
            select_dcmp_base_packed(&params, layer, Algo::Conventional, 1, 1, seed, false).unwrap();
        let wh =
            select_dcmp_base_packed(&params, layer, Algo::Hyena, 1, k_opt, seed, false).unwrap();
        assert!(
            wh >= wc,
            "layer {layer:?}: hyena W={wh} must be >= conventional W={wc}"
        );
        pairs.push((wc, wh));
    }
    let params = evaluation_params();

    // part B: measured rotation noise growth decreases as W decreases,
    // per trial, over the candidate grid
    let grid = [60u32, 40, 30, 20, 15, 10, 7, 5, 3];
    let sk = keygen(&params, MASTER_SEED ^ 9);
    let op = GaloisOp::rotation(1, params.n);
    let half = params.n / 2;
    for trial in 0..3u64 {
        let mut rng = seeded_rng(MASTER_SEED ^ (0x990 + trial), b"hrot-noise");
        let u: Vec<u64> = (0..params.n).map(|_| rng.gen_range(0..params.p)).collect();
        let pu = encode(&params, &u).unwrap();
        let cu = hyena_he::bfv::encrypt(&params, &sk, &pu, &mut rng);
        let base = noise_bits(&params, &sk, &cu, &pu);
        let mut rotated = vec![0u64; params.n];
        for r in 0..2 {
            for c in 0..half {
                rotated[r * half + c] = u[r * half + (c + 1) % half];
            }
        }
        let expect = encode(&params, &rotated).unwrap();
        let mut last = f64::INFINITY;
        for &w in &grid {
            let keys = galois_keygen(&params, &sk, &[op], w, &mut rng).unwrap();
            let growth = noise_bits(&params, &sk, &hrot(&params, &cu, op, &keys).unwrap(), &expect) - base;
            assert!(
                growth < last,
                "trial {trial}: rotation noise not decreasing at W={w}: {growth:.2} vs {last:.2}"
            );
            last = growth;
        }
    }
    let dt = t.elapsed().as_secs_f64();
    println!(
        "ACCEPTANCE 9 (base selection): PASS - (conventional W, proposed W) = {:?}; rotation \
         noise strictly decreasing over the W grid, {:.1}s",
        pairs, dt
    );
}

#[test]
fn criterion_10_latency_comparison() {
    let t = Instant::now();
    // channel shapes from the evaluated tuple set, run with one channel per
    // ciphertext (the no-packing regime) on 32x32 maps that exactly fill a
    // slot row at this degree; the 14-bit plaintext prime keeps the
    // conventional baseline within its decryption margin (see criterion 9)
    let (p, q) = find_primes(2048, 14, 60).unwrap();
    let params = RingParams::new(2048, p, q).unwrap();
    let k_opt = find_k(p, compute_h(p, 2048).unwrap(), DEFAULT_K_MAX).0;
    let tuples = [(3usize, 64usize), (64, 64)];
    let reps = 2;
    let mut ratios = Vec::new();
    for (i, &(ci, co)) in tuples.iter().enumerate() {
        let layer = LayerSpec::new(32, 32, ci, co, 3).unwrap();
        let seed = MASTER_SEED ^ (0xA00 + i as u64);
        let wc = select_dcmp_base_packed(&params, &layer, Algo::Conventional, 2, 1, seed, true)
            .unwrap();
        let wh =
            select_dcmp_base_packed(&params, &layer, Algo::Hyena, 1, k_opt, seed, true).unwrap();

        let mut cfg = RunConfig::new(layer, Algo::Conventional, seed);
        cfg.w_bits = wc;
        cfg.digits = 2;
        cfg.force_cn1 = true;
        let conventional = bench_layer(&params, &cfg, reps, 1).unwrap();
        assert!(conventional.matches, "conventional bench must decrypt correctly");

        let mut cfg = RunConfig::new(layer, Algo::Hyena, seed);
        cfg.w_bits = wh;
        cfg.k = k_opt;
        cfg.force_cn1 = true;
        let hyena = bench_layer(&params, &cfg, reps, 1).unwrap();
        assert!(hyena.matches, "hyena bench must decrypt correctly");

        let ratio = conventional.median_conv_seconds() / hyena.median_conv_seconds();
        println!(
            "  layer ({ci} -> {co}): conventional {:.3}s (W={wc}, digits=2) vs hyena {:.3}s \
             (W={wh}, k={k_opt}, lazy) -> speedup {ratio:.2}x",
            conventional.median_conv_seconds(),
            hyena.median_conv_seconds()
        );
        ratios.push(ratio);
    }
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    assert!(
        median >= 1.2,
        "median speedup {median:.2}x below the 1.2x threshold (ratios {ratios:?})"
    );
    let dt = t.elapsed().as_secs_f64();
    println!(
        "ACCEPTANCE 10 (latency): PASS - median speedup {median:.2}x over the conventional \
         baseline (full ratios {ratios:?}), {dt:.1}s"
    );
}

#[test]
fn acceptance_support_find_k_range_note() {
    // the default k cap keeps the published minimizer; a wider scan finds a
    // smaller residue at k = 62, which the default deliberately excludes
    let (k_default, r_default) = find_k(307201, 84248, DEFAULT_K_MAX);
    assert_eq!((k_default, r_default), (11, 5125));
    let (k_wide, r_wide) = find_k(307201, 84248, 256);
    assert_eq!(k_wide, 62);
    assert!(r_wide.unsigned_abs() < r_default.unsigned_abs());
    // consistency of the search procedure itself
    let h = compute_h(307201, 2048).unwrap();
    assert_eq!(h, 84248);
    println!("support (k-range): default cap {DEFAULT_K_MAX} -> k=11; cap 256 -> k=62");
}
