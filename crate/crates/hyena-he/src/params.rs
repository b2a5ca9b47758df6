//! Encryption-parameter selection, decomposition-base calibration, and the
//! analytic storage/communication cost model.
//!
//! The search pins (n, p, q) with p = q = 1 (mod 2n) for SIMD packing. Two
//! extra conditions make the search reproducible and keep multiplication
//! noise measurable: 2n must divide p - 1 exactly (no higher power of two),
//! and q = 1 (mod p) so the q-mod-p encoding term vanishes from PMult noise.

use crate::bfv::RingParams;
use crate::conv::{Algo, ConvOptions, LayerSpec, OpCounters};
use crate::error::HeError;
use crate::harness::RunConfig;
use crate::modring::{center, mul_mod, pow_mod, NttTables};

/// Default cap for the k-multiplier search.
pub const DEFAULT_K_MAX: u64 = 32;
/// Spare noise margin (bits) the base calibration must leave.
pub const CALIBRATION_SPARE_BITS: f64 = 4.0;
/// Serialized plaintext object overhead (header bytes) entering the
/// reported model file sizes.
pub const PLAINTEXT_OVERHEAD_BYTES: u64 = crate::bfv::PLAINTEXT_HEADER_BYTES as u64;

// ---------------------------------------------------------------------------
// Primality (deterministic Miller-Rabin for u64)
// ---------------------------------------------------------------------------

pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for &a in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

// ---------------------------------------------------------------------------
// Step 1: find (p, q)
// ---------------------------------------------------------------------------

/// Smallest prime with the requested bit width, 1 mod 2n, and 2n exactly
/// dividing p - 1 (the quotient (p-1)/2n is odd).
fn find_plain_prime(n: usize, bits: u32) -> Result<u64, HeError> {
    let two_n = 2 * n as u64;
    let lo = 1u64 << (bits - 1);
    let hi = 1u64 << bits;
    let mut k = (lo - 1) / two_n + 1;
    if k % 2 == 0 {
        k += 1; // odd quotient only
    }
    while k * two_n + 1 < hi {
        let c = k * two_n + 1;
        if c >= lo && is_prime_u64(c) {
            return Ok(c);
        }
        k += 2;
    }
    Err(HeError::PrimeSearchExhausted { bits })
}

/// Smallest prime with the requested width, 1 mod 2n and 1 mod p.
fn find_cipher_prime(n: usize, p: u64, bits: u32) -> Result<u64, HeError> {
    let step = 2 * n as u64 * p; // gcd(2n, p) = 1
    let lo = 1u64 << (bits - 1);
    let hi = if bits == 64 { u64::MAX } else { 1u64 << bits };
    let mut k = (lo - 1) / step + 1;
    while k.checked_mul(step).map_or(false, |v| v + 1 < hi) {
        let c = k * step + 1;
        if c >= lo && is_prime_u64(c) {
            return Ok(c);
        }
        k += 1;
    }
    Err(HeError::PrimeSearchExhausted { bits })
}

/// Find the plaintext and ciphertext primes for degree n.
pub fn find_primes(n: usize, p_bits: u32, q_bits: u32) -> Result<(u64, u64), HeError> {
    if p_bits >= q_bits {
        return Err(HeError::InvalidParams("p must be narrower than q".into()));
    }
    let p = find_plain_prime(n, p_bits)?;
    let q = find_cipher_prime(n, p, q_bits)?;
    Ok((p, q))
}

// ---------------------------------------------------------------------------
// Step 2: h, the nonzero coefficient of the two-row sign pattern
// ---------------------------------------------------------------------------

/// Encode the slot pattern whose first row is `top` and second row `bottom`
/// (constant per row) into its polynomial mod p.
pub fn row_pattern_poly(n: usize, p: u64, top: u64, bottom: u64) -> Result<Vec<u64>, HeError> {
    let tables = NttTables::new(n, p)?;
    let map = crate::bfv::slot_map(n);
    let half = n / 2;
    let mut buf = vec![0u64; n];
    for c in 0..half {
        buf[map[c]] = top % p;
        buf[map[half + c]] = bottom % p;
    }
    tables.inverse_in_place(&mut buf);
    Ok(buf)
}

/// Magnitude of the nonzero coefficient of the [+1, -1] row pattern.
/// The encoding always yields exactly two equal-magnitude terms at x^(n/4)
/// and x^(3n/4); anything else is a parameter bug.
pub fn compute_h(p: u64, n: usize) -> Result<u64, HeError> {
    let poly = row_pattern_poly(n, p, 1, p - 1)?;
    let nonzero: Vec<(usize, u64)> =
        poly.iter().enumerate().filter(|(_, &c)| c != 0).map(|(i, &c)| (i, c)).collect();
    if nonzero.len() > 2 {
        return Err(HeError::InvalidParams(format!(
            "sign pattern encoded to {} nonzero terms",
            nonzero.len()
        )));
    }
    if nonzero.len() != 2 || nonzero[0].1 != nonzero[1].1 {
        return Err(HeError::InvalidParams("sign pattern is not a two-term polynomial".into()));
    }
    Ok(center(nonzero[0].1, p).unsigned_abs())
}

// ---------------------------------------------------------------------------
// Step 3: the k multiplier
// ---------------------------------------------------------------------------

/// k in [1, k_max] minimizing |centered(k*h mod p)|, ties to the smaller k.
pub fn find_k(p: u64, h: u64, k_max: u64) -> (u64, i64) {
    let mut best = (1u64, center(h % p, p));
    for k in 1..=k_max.min(p - 1) {
        let r = center(mul_mod(k, h, p), p);
        if r.unsigned_abs() < best.1.unsigned_abs() {
            best = (k, r);
        }
    }
    best
}

/// Worst-case sign-path PMult growth for 8-bit kernel values:
/// log2(|s1| * 2|residue| + |s0|) with s1 <= 255, s0 <= 510k.
pub fn sign_pmult_forecast_bits(k: u64, residue: i64) -> f64 {
    ((255.0 * 2.0 * residue.unsigned_abs() as f64) + 510.0 * k as f64).log2()
}

#[derive(Clone, Debug)]
pub struct ParamSearchResult {
    pub n: usize,
    pub p: u64,
    pub q: u64,
    pub h: u64,
    pub k: u64,
    pub residue: i64,
    pub sign_pmult_bits: f64,
    pub sign_pmult_k1_bits: f64,
    pub dense_pmult_bits: f64,
    pub cmult_bits: f64,
}

impl std::fmt::Display for ParamSearchResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "n={}", self.n)?;
        writeln!(f, "p={}", self.p)?;
        writeln!(f, "q={}", self.q)?;
        writeln!(f, "h={}", self.h)?;
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "residue={}", self.residue)?;
        writeln!(f, "sign_pmult_forecast_bits={:.2}", self.sign_pmult_bits)?;
        writeln!(f, "sign_pmult_k1_forecast_bits={:.2}", self.sign_pmult_k1_bits)?;
        writeln!(f, "dense_pmult_forecast_bits={:.2}", self.dense_pmult_bits)?;
        write!(f, "cmult_forecast_bits={:.2}", self.cmult_bits)
    }
}

/// The full selection procedure: primes, sign coefficient, multiplier.
pub fn param_search(
    n: usize,
    p_bits: u32,
    q_bits: u32,
    k_max: u64,
) -> Result<ParamSearchResult, HeError> {
    let (p, q) = find_primes(n, p_bits, q_bits)?;
    let h = compute_h(p, n)?;
    let (k, residue) = find_k(p, h, k_max);
    Ok(ParamSearchResult {
        n,
        p,
        q,
        h,
        k,
        residue,
        sign_pmult_bits: sign_pmult_forecast_bits(k, residue),
        sign_pmult_k1_bits: sign_pmult_forecast_bits(1, center(h, p)),
        dense_pmult_bits: (n as f64 * p as f64 / 2.0).log2(),
        cmult_bits: (510.0 * k as f64).log2(),
    })
}

// ---------------------------------------------------------------------------
// Decomposition-base calibration
// ---------------------------------------------------------------------------

/// Largest decomposition base exponent W such that replaying the layer's
/// operation sequence still decrypts with at least 4 spare bits of margin.
/// Feasibility is monotone in W (larger base, more key-switch noise), so a
/// binary search over the integer grid suffices.
pub fn select_dcmp_base(
    params: &RingParams,
    layer: &LayerSpec,
    algo: Algo,
    digits: u32,
    k: u64,
    seed: u64,
) -> Result<u32, HeError> {
    select_dcmp_base_packed(params, layer, algo, digits, k, seed, false)
}

/// As `select_dcmp_base`, optionally forcing one channel per ciphertext.
/// The calibration replays the layer in output-group slices, so kernel
/// plaintext material stays bounded even for wide layers.
pub fn select_dcmp_base_packed(
    params: &RingParams,
    layer: &LayerSpec,
    algo: Algo,
    digits: u32,
    k: u64,
    seed: u64,
    force_cn1: bool,
) -> Result<u32, HeError> {
    let feasible = |w: u32| -> Result<bool, HeError> {
        let cfg = RunConfig {
            layer: *layer,
            algo,
            w_bits: w,
            digits,
            k,
            seed,
            opts: ConvOptions::default(),
            force_cn1,
            fault_kernel_index: None,
        };
        let out = crate::harness::bench_layer(params, &cfg, 1, 1)?;
        let margin = params.margin_bits() - out.peak_noise_bits;
        Ok(out.matches && margin >= CALIBRATION_SPARE_BITS)
    };
    let w_min = 3u32;
    let mut lo = w_min;
    let mut hi = params.q_bits();
    if !feasible(lo)? {
        return Err(HeError::InfeasibleLayer { w_min });
    }
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

/// Channel packing the cost model assumes for a layer at degree n: full slot
/// capacity, clamped to what divides the input channel count (output groups
/// shorter than c_n still cost a full group of plaintexts).
pub fn model_cn(layer: &LayerSpec, n: usize) -> usize {
    let mut c = (n / layer.hw()).max(1);
    while c > 1 && layer.c_in % c != 0 {
        c /= 2;
    }
    c
}

/// Storage, communication, and op-count accounting for one layer.
#[derive(Clone, Debug)]
pub struct CostReport {
    pub layer: LayerSpec,
    pub algo: Algo,
    pub n: usize,
    pub digits: u32,
    pub c_n: usize,
    pub w_bits: u32,
    pub plaintext_count: u64,
    pub scalar_count: u64,
    /// closed-form model storage (kernel plaintexts, or scalars plus sign
    /// polynomials)
    pub model_bytes: u64,
    /// serialized model storage: each plaintext object carries its header
    pub model_file_bytes: u64,
    pub key_steps: u64,
    pub key_bytes: u64,
    pub input_ct_count: u64,
    pub input_ct_bytes: u64,
    pub output_ct_count: u64,
    pub output_ct_bytes: u64,
    pub ops: OpCounters,
    pub peak_noise_bits: f64,
    pub margin_bits: f64,
    pub keygen_seconds: f64,
    pub model_seconds: f64,
    pub conv_seconds: f64,
}

/// Rotation steps the plan would use (identity excluded); pure arithmetic so
/// it also covers shapes the runtime cannot pack.
fn planned_step_count(layer: &LayerSpec, c_n: usize, n: usize) -> u64 {
    let m = (c_n / 2).max(1);
    let hw = layer.hw().min(n);
    let half = layer.f as isize / 2;
    let mut set = std::collections::BTreeSet::new();
    for d in 0..c_n {
        let (da, db) = (d % m, d / m);
        for ay in -half..=half {
            for ax in -half..=half {
                let shift =
                    (ay * layer.w as isize + ax + (da * hw) as isize).rem_euclid(n as isize / 2);
                if shift != 0 || db == 1 {
                    set.insert((shift, db));
                }
            }
        }
    }
    set.len() as u64
}

pub fn cost_model(
    layer: &LayerSpec,
    algo: Algo,
    n: usize,
    q_bits: u32,
    w_bits: u32,
    digits: u32,
) -> CostReport {
    let c_n = model_cn(layer, n);
    let f2 = layer.taps() as u64;
    let (c_in, c_out) = (layer.c_in as u64, layer.c_out as u64);
    let hw = layer.hw() as u64;
    let n64 = n as u64;
    let cn64 = c_n as u64;

    let (plaintext_count, scalar_count, model_bytes, model_file_bytes) = match algo {
        Algo::Conventional => {
            let count = f2 * c_in.div_ceil(cn64) * c_out.div_ceil(cn64) * cn64 * digits as u64;
            (count, 0, count * n64 * 8, count * (n64 * 8 + PLAINTEXT_OVERHEAD_BYTES))
        }
        Algo::Padded => {
            let scalars = f2 * c_in * c_out;
            (0, scalars, scalars * 8, scalars * 8)
        }
        Algo::Hyena => {
            let scalars = f2 * c_in * c_out;
            let signs = cn64 - 1;
            (
                signs,
                scalars,
                scalars * 8 + signs * n64 * 8,
                scalars * 8 + signs * (n64 * 8 + PLAINTEXT_OVERHEAD_BYTES),
            )
        }
    };

    let l_ct = crate::bfv::l_ct_for(q_bits, w_bits) as u64;
    let key_steps = planned_step_count(layer, c_n, n);
    let key_bytes = key_steps * 2 * n64 * 8 * l_ct;

    let in_digits = if algo == Algo::Conventional { digits as u64 } else { 1 };
    let input_ct_count = (c_in * hw).div_ceil(n64) * in_digits;
    let input_ct_bytes = input_ct_count * 2 * n64 * 8;
    let output_ct_count = match algo {
        Algo::Padded => c_out * hw.div_ceil(n64),
        _ => (c_out * hw).div_ceil(n64),
    };
    let output_ct_bytes = output_ct_count * 2 * n64 * 8;

    CostReport {
        layer: *layer,
        algo,
        n,
        digits,
        c_n,
        w_bits,
        plaintext_count,
        scalar_count,
        model_bytes,
        model_file_bytes,
        key_steps,
        key_bytes,
        input_ct_count,
        input_ct_bytes,
        output_ct_count,
        output_ct_bytes,
        ops: OpCounters::default(),
        peak_noise_bits: f64::NAN,
        margin_bits: f64::NAN,
        keygen_seconds: f64::NAN,
        model_seconds: f64::NAN,
        conv_seconds: f64::NAN,
    }
}

impl CostReport {
    pub fn csv_header() -> &'static str {
        "h,w,c_in,c_out,f,algo,n,digits,c_n,w_bits,plaintexts,scalars,model_bytes,\
         model_file_bytes,key_steps,key_bytes,input_ct_count,input_ct_bytes,output_ct_count,\
         output_ct_bytes,decompositions,rotations,pmult,cmult,lazy_macs,reductions,hadds,\
         peak_noise_bits,margin_bits,keygen_s,model_s,conv_s"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.2},{:.2},{:.6},{:.6},{:.6}",
            self.layer.h,
            self.layer.w,
            self.layer.c_in,
            self.layer.c_out,
            self.layer.f,
            self.algo,
            self.n,
            self.digits,
            self.c_n,
            self.w_bits,
            self.plaintext_count,
            self.scalar_count,
            self.model_bytes,
            self.model_file_bytes,
            self.key_steps,
            self.key_bytes,
            self.input_ct_count,
            self.input_ct_bytes,
            self.output_ct_count,
            self.output_ct_bytes,
            self.ops.decompositions,
            self.ops.rotations,
            self.ops.pmult,
            self.ops.cmult,
            self.ops.lazy_macs,
            self.ops.reductions,
            self.ops.hadds,
            self.peak_noise_bits,
            self.margin_bits,
            self.keygen_seconds,
            self.model_seconds,
            self.conv_seconds,
        )
    }

    pub fn key_value_lines(&self) -> String {
        format!(
            "layer={}x{}x{}x{} f={}\nalgo={}\nn={}\ndigits={}\nc_n={}\nw_bits={}\n\
             plaintext_count={}\nscalar_count={}\nmodel_bytes={}\nmodel_file_bytes={}\n\
             key_steps={}\nkey_bytes={}\ninput_ct_count={}\ninput_ct_bytes={}\n\
             output_ct_count={}\noutput_ct_bytes={}",
            self.layer.h,
            self.layer.w,
            self.layer.c_in,
            self.layer.c_out,
            self.layer.f,
            self.algo,
            self.n,
            self.digits,
            self.c_n,
            self.w_bits,
            self.plaintext_count,
            self.scalar_count,
            self.model_bytes,
            self.model_file_bytes,
            self.key_steps,
            self.key_bytes,
            self.input_ct_count,
            self.input_ct_bytes,
            self.output_ct_count,
            self.output_ct_bytes,
        )
    }
}

// ---------------------------------------------------------------------------
// Memory-table reproduction
// ---------------------------------------------------------------------------

/// The evaluated layer set: (H = W, C_in, C_out, n). All filters are 3x3;
/// 32x32 maps run at degree 2048 with two packed channels, 64x64 at 4096,
/// and larger maps at 2048 with channels split across ciphertexts.
pub const MEMORY_TABLE_LAYERS: &[(usize, usize, usize, usize)] = &[
    (32, 64, 128, 2048),
    (32, 128, 128, 2048),
    (32, 256, 512, 2048),
    (32, 512, 512, 2048),
    (64, 64, 64, 4096),
    (64, 128, 256, 4096),
    (64, 256, 256, 4096),
    (128, 64, 128, 2048),
    (128, 128, 128, 2048),
    (256, 3, 64, 2048),
    (256, 64, 64, 2048),
];

/// Round bytes to whole mebibytes, half away from zero.
pub fn mb_round_int(bytes: u64) -> u64 {
    (bytes + (1 << 19)) >> 20
}

/// Bytes in hundredths of a mebibyte, rounded half up.
fn mb_hundredths(bytes: u64) -> u64 {
    ((bytes as u128 * 100 + (1 << 19)) / (1 << 20)) as u64
}

/// Two-decimal mebibyte string (no trimming): "54.04".
pub fn mb_string_2dp(bytes: u64) -> String {
    let h = mb_hundredths(bytes);
    format!("{}.{:02}", h / 100, h % 100)
}

/// Mebibyte string with trailing zeros trimmed: "0.56", "4.5", "9".
pub fn mb_string_trim(bytes: u64) -> String {
    let mut s = mb_string_2dp(bytes);
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

/// Model-column cell for the conventional algorithm: serialized plaintext
/// bytes, whole MB above 100 MB, two decimals below.
pub fn conventional_model_cell(report: &CostReport) -> String {
    if mb_round_int(report.model_file_bytes) >= 100 {
        mb_round_int(report.model_file_bytes).to_string()
    } else {
        mb_string_2dp(report.model_file_bytes)
    }
}

/// Model-column cell for the proposed algorithm: the raw weight scalars
/// (the shared sign polynomial is listed separately).
pub fn proposed_model_cell(report: &CostReport) -> String {
    mb_string_trim(report.scalar_count * 8)
}

pub fn input_ct_cell(report: &CostReport) -> String {
    mb_round_int(report.input_ct_bytes).to_string()
}

/// One table row: the conventional algorithm with plaintext decomposition
/// against the proposed one.
pub struct MemoryTableRow {
    pub h: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub n: usize,
    pub conventional: CostReport,
    pub proposed: CostReport,
    /// model-storage ratio, digits * n / c_n
    pub model_ratio: u64,
}

pub fn memory_table(q_bits: u32) -> Vec<MemoryTableRow> {
    MEMORY_TABLE_LAYERS
        .iter()
        .map(|&(h, c_in, c_out, n)| {
            let layer = LayerSpec::new(h, h, c_in, c_out, 3).unwrap();
            let conventional = cost_model(&layer, Algo::Conventional, n, q_bits, 20, 2);
            let proposed = cost_model(&layer, Algo::Hyena, n, q_bits, 20, 1);
            let model_ratio = 2 * n as u64 / conventional.c_n as u64;
            MemoryTableRow { h, c_in, c_out, n, conventional, proposed, model_ratio }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_vandermonde_encode;

    #[test]
    fn primality_oracle_agreement() {
        // cross-check the Miller-Rabin against trial division
        let trial = |n: u64| -> bool {
            if n < 2 {
                return false;
            }
            let mut d = 2;
            while d * d <= n {
                if n % d == 0 {
                    return false;
                }
                d += 1;
            }
            true
        };
        for n in 0..2000u64 {
            assert_eq!(is_prime_u64(n), trial(n), "n = {n}");
        }
        assert!(is_prime_u64(1152921504606830593)); // the 60-bit evaluation prime
        assert!(is_prime_u64(307201));
        assert!(!is_prime_u64(307201 * 3));
    }

    #[test]
    fn find_primes_pins_the_evaluation_parameters() {
        let (p, q) = find_primes(2048, 19, 60).unwrap();
        assert_eq!(p, 307201);
        assert_eq!(q % 4096, 1);
        assert_eq!(q % p, 1);
        assert_eq!(64 - q.leading_zeros(), 60);
        assert!(is_prime_u64(q));
        assert_eq!(q, 576460824525254657);
    }

    #[test]
    fn find_primes_toy_cases() {
        // smallest case by inspection: 17 = 1 mod 16
        let (p, q) = find_primes(8, 5, 13).unwrap();
        assert_eq!(p, 17);
        assert_eq!(q % 16, 1);
        assert_eq!(q % 17, 1);
        assert!(is_prime_u64(q));
        assert!(q >= 1 << 12 && q < 1 << 13);

        let (p, _q) = find_primes(16, 7, 40).unwrap();
        assert_eq!(p, 97);
    }

    #[test]
    fn h_at_evaluation_parameters() {
        assert_eq!(compute_h(307201, 2048).unwrap(), 84248);
    }

    #[test]
    fn h_small_case_against_linear_solve() {
        // n = 16, p = 97: solve the Vandermonde system for the [1,-1] rows
        // pattern directly and compare the nonzero coefficient
        let n = 16usize;
        let p = 97u64;
        let h = compute_h(p, n).unwrap();

        let tables = NttTables::new(n, p).unwrap();
        let map = crate::bfv::slot_map(n);
        let mut points = vec![0u64; n];
        let mut values = vec![0u64; n];
        for s in 0..n {
            let j = map[s];
            points[s] = pow_mod(tables.psi, 2 * j as u64 + 1, p);
            values[s] = if s < n / 2 { 1 } else { p - 1 };
        }
        let coeffs = solve_vandermonde_encode(&points, &values, p);
        let nonzero: Vec<(usize, u64)> =
            coeffs.iter().enumerate().filter(|(_, &c)| c != 0).map(|(i, &c)| (i, c)).collect();
        assert_eq!(nonzero.len(), 2);
        assert_eq!(center(nonzero[0].1, p).unsigned_abs(), h);
        assert_eq!(h, 40);
    }

    #[test]
    fn all_ones_pattern_is_the_guard_case() {
        // constant rows encode to a constant polynomial: no h to extract
        let poly = row_pattern_poly(16, 97, 1, 1).unwrap();
        let nonzero = poly.iter().filter(|&&c| c != 0).count();
        assert_eq!(nonzero, 1);
        assert_eq!(poly[0], 1);
    }

    #[test]
    fn find_k_pins_eleven() {
        let (k, residue) = find_k(307201, 84248, DEFAULT_K_MAX);
        assert_eq!(k, 11);
        assert_eq!(residue, 5125);
        // |residue| <= |centered(h)|
        assert!(residue.unsigned_abs() <= 84248);

        assert_eq!(find_k(307201, 1, 256), (1, 1));
    }

    #[test]
    fn find_k_matches_exhaustive_small_moduli() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(60);
        for _ in 0..50 {
            let mut p = rng.gen_range(5u64..1 << 12);
            while !is_prime_u64(p) {
                p += 1;
            }
            let h = rng.gen_range(1..p);
            let (k, r) = find_k(p, h, p - 1);
            // dumb exhaustive oracle
            let mut best = (1u64, center(h, p));
            for kk in 1..p {
                let rr = center(mul_mod(kk, h, p), p);
                if rr.unsigned_abs() < best.1.unsigned_abs() {
                    best = (kk, rr);
                }
            }
            assert_eq!((k, r), best, "p={p} h={h}");
        }
    }

    #[test]
    fn forecast_bits_at_evaluation_parameters() {
        // k = 11 keeps the sign PMult under 22 bits; k = 1 under 26
        let b11 = sign_pmult_forecast_bits(11, 5125);
        let b1 = sign_pmult_forecast_bits(1, 84248);
        assert!(b11 <= 22.0, "{b11}");
        assert!(b1 <= 26.0, "{b1}");
        assert!(b11 < b1);
    }

    #[test]
    fn memory_table_matches_published_cells() {
        // Model and input-ciphertext columns for every layer, both
        // algorithms, exactly as printed.
        let expect: &[(&str, &str, &str, &str, u64)] = &[
            ("1153", "2", "0.56", "1", 2048),
            ("2306", "4", "1.13", "2", 2048),
            ("18446", "8", "9", "4", 2048),
            ("36891", "16", "18", "8", 2048),
            ("2305", "8", "0.28", "4", 8192),
            ("18439", "16", "2.25", "8", 8192),
            ("36878", "32", "4.5", "16", 8192),
            ("2306", "32", "0.56", "16", 4096),
            ("4611", "64", "1.13", "32", 4096),
            ("54.04", "6", "0.01", "3", 4096),
            ("1153", "128", "0.28", "64", 4096),
        ];
        let rows = memory_table(60);
        assert_eq!(rows.len(), expect.len());
        for (row, &(cm, cict, pm, pict, ratio)) in rows.iter().zip(expect) {
            assert_eq!(conventional_model_cell(&row.conventional), cm, "row {:?}", (row.h, row.c_in, row.c_out));
            assert_eq!(input_ct_cell(&row.conventional), cict);
            assert_eq!(proposed_model_cell(&row.proposed), pm);
            assert_eq!(input_ct_cell(&row.proposed), pict);
            assert_eq!(row.model_ratio, ratio);
        }
    }

    #[test]
    fn storage_example_two_channel_3x3() {
        // kernel 2x3x3 at n = 2048: proposed 16.1 KB total vs conventional
        // 288 KB, from the closed-form storage formulas
        let layer = LayerSpec::new(32, 32, 2, 1, 3).unwrap();
        let hy = cost_model(&layer, Algo::Hyena, 2048, 60, 20, 1);
        let kb = hy.model_bytes as f64 / 1024.0;
        assert!((kb - 16.1).abs() <= 0.1, "proposed total {kb} KB");

        let conv = cost_model(&layer, Algo::Conventional, 2048, 60, 20, 1);
        assert_eq!(conv.plaintext_count, 18);
        let kb = conv.model_bytes as f64 / 1024.0;
        assert!((kb - 288.0).abs() <= 0.1, "conventional {kb} KB");
    }

    #[test]
    fn l_ct_formula() {
        assert_eq!(crate::bfv::l_ct_for(60, 60), 1);
        assert_eq!(crate::bfv::l_ct_for(60, 20), 3);
        assert_eq!(crate::bfv::l_ct_for(60, 7), 9);
    }
}
