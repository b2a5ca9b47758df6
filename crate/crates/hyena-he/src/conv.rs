//! Tensor packing layouts and the three homomorphic convolution algorithms:
//! conventional packed, padded, and the Walsh-Hadamard output-channel-packing
//! convolution, plus their kernel encoders.
//!
//! Layout: slots form a 2 x (n/2) matrix. A ciphertext packs `c_n` channels,
//! arranged as `m = max(c_n/2, 1)` column blocks per slot row. Channel j of a
//! group sits at block (j mod m, row j div m)... indices are packed so that
//! the channel-offset group is (Z_2)^2 under XOR and its +-1 characters are
//! the rows of the Sylvester Walsh-Hadamard matrix.

use crate::bfv::{
    encode, hadd, hoist_decompose, hoisted_rot, lift_scalar, pmult_prepared, Ciphertext,
    GaloisKeySet, GaloisOp, Plaintext, PreparedPlaintext, RingParams, SecretKey,
};
use crate::error::HeError;
use crate::modring::{
    center, lazy_mac, mac_plan_fits, mul_mod, reduce, Domain, Polynomial, WideAccumulator,
};
use crate::oracle::{PlainKernel, PlainTensor};
use rand_chacha::ChaCha8Rng;

/// The three convolution algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Conventional,
    Padded,
    Hyena,
}

impl std::str::FromStr for Algo {
    type Err = HeError;

    fn from_str(s: &str) -> Result<Self, HeError> {
        match s {
            "conventional" => Ok(Algo::Conventional),
            "padded" => Ok(Algo::Padded),
            "hyena" => Ok(Algo::Hyena),
            other => Err(HeError::InvalidParams(format!("unknown algorithm '{other}'"))),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Conventional => "conventional",
            Algo::Padded => "padded",
            Algo::Hyena => "hyena",
        })
    }
}

/// Convolution layer shape: stride 1, square maps, odd square filters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub h: usize,
    pub w: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub f: usize,
}

impl LayerSpec {
    pub fn new(h: usize, w: usize, c_in: usize, c_out: usize, f: usize) -> Result<Self, HeError> {
        if h != w || !h.is_power_of_two() {
            return Err(HeError::UnsupportedLayout(format!(
                "feature map must be square with power-of-two side after padding, got {h}x{w}"
            )));
        }
        if f % 2 == 0 || f == 0 {
            return Err(HeError::UnsupportedLayout(format!("filter size {f} must be odd")));
        }
        Ok(LayerSpec { h, w, c_in, c_out, f })
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn taps(&self) -> usize {
        self.f * self.f
    }
}

/// How channels map onto the slot matrix of one ciphertext.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packing {
    pub c_n: usize,
    /// column blocks per slot row (1 for c_n <= 2, 2 for c_n = 4)
    pub m: usize,
    pub hw: usize,
    pub n: usize,
    /// single channel laid across both slot rows (c_n = 1, hw > n/2);
    /// rotations cannot cross rows, so only 1x1 filters run on this layout
    pub spans_rows: bool,
}

impl Packing {
    pub fn group_count(&self, channels: usize) -> usize {
        channels.div_ceil(self.c_n)
    }
}

/// Pick the packing for a layer at degree n: the largest supported channel
/// count per ciphertext that divides both channel dimensions.
pub fn choose_packing(layer: &LayerSpec, n: usize, force_cn1: bool) -> Result<Packing, HeError> {
    let hw = layer.hw();
    if hw > n {
        return Err(HeError::UnsupportedLayout(format!(
            "H*W = {hw} exceeds the slot count {n}"
        )));
    }
    let divides = |c: usize| layer.c_in % c == 0 && layer.c_out % c == 0;
    let c_n = if force_cn1 {
        1
    } else if hw * 4 == n && divides(4) {
        4
    } else if hw * 2 <= n && divides(2) {
        2
    } else {
        1
    };
    let spans_rows = c_n == 1 && hw > n / 2;
    Ok(Packing { c_n, m: (c_n / 2).max(1), hw, n, spans_rows })
}

/// Walsh-Hadamard sign: character of the channel-offset group,
/// chi_r(d) = (-1)^popcount(r & d). Rows/offsets are indexed so this equals
/// the Sylvester matrix entry.
#[inline]
pub fn hadamard_sign(r: usize, d: usize) -> i64 {
    if ((r & d).count_ones() & 1) == 1 {
        -1
    } else {
        1
    }
}

/// Sylvester Walsh-Hadamard matrix of order 2^k.
pub fn walsh_hadamard(order: usize) -> Vec<Vec<i64>> {
    assert!(order.is_power_of_two());
    (0..order).map(|r| (0..order).map(|d| hadamard_sign(r, d)).collect()).collect()
}

// ---------------------------------------------------------------------------
// Packed tensors
// ---------------------------------------------------------------------------

/// Encrypted tensor: groups of c_n channels, one ciphertext per group and
/// per plaintext digit.
#[derive(Clone, Debug)]
pub struct PackedTensor {
    pub layer: LayerSpec,
    pub packing: Packing,
    /// cts[digit][group]
    pub cts: Vec<Vec<Ciphertext>>,
    pub digits: u32,
    /// digit base exponent when digits = 2 (w_d = ceil(bits(p)/2))
    pub digit_bits: u32,
}

impl PackedTensor {
    pub fn ct_count(&self) -> usize {
        self.cts.iter().map(|v| v.len()).sum()
    }
}

fn slot_index(packing: &Packing, layer: &LayerSpec, j: usize, y: usize, x: usize) -> usize {
    let half = packing.n / 2;
    if packing.spans_rows {
        let idx = y * layer.w + x;
        (idx / half) * half + (idx % half)
    } else {
        let (a, b) = (j % packing.m, j / packing.m);
        b * half + a * packing.hw + y * layer.w + x
    }
}

pub fn digit_bits_for(p: u64) -> u32 {
    let bits = 64 - (p - 1).leading_zeros();
    (bits + 1) / 2
}

/// Encrypt a tensor under the packing; `digits = 2` splits every value into
/// low/high digits base 2^digit_bits across two ciphertexts.
pub fn pack_tensor(
    params: &RingParams,
    layer: &LayerSpec,
    packing: &Packing,
    tensor: &PlainTensor,
    sk: &SecretKey,
    digits: u32,
    rng: &mut ChaCha8Rng,
) -> Result<PackedTensor, HeError> {
    assert!(digits == 1 || digits == 2);
    if tensor.channels != layer.c_in || tensor.height != layer.h || tensor.width != layer.w {
        return Err(HeError::LengthMismatch {
            expected: layer.c_in * layer.hw(),
            found: tensor.values.len(),
        });
    }
    let wd = digit_bits_for(params.p);
    let groups = packing.group_count(layer.c_in);
    let mut cts = vec![Vec::with_capacity(groups); digits as usize];
    for g in 0..groups {
        let mut slot_digits = vec![vec![0u64; params.n]; digits as usize];
        for j in 0..packing.c_n {
            let ch = g * packing.c_n + j;
            if ch >= layer.c_in {
                break;
            }
            for y in 0..layer.h {
                for x in 0..layer.w {
                    let v = tensor.get(ch, y, x) % params.p;
                    let s = slot_index(packing, layer, j, y, x);
                    if digits == 1 {
                        slot_digits[0][s] = v;
                    } else {
                        slot_digits[0][s] = v & ((1 << wd) - 1);
                        slot_digits[1][s] = v >> wd;
                    }
                }
            }
        }
        for (d, slots) in slot_digits.iter().enumerate() {
            let pt = encode(params, slots)?;
            cts[d].push(crate::bfv::encrypt(params, sk, &pt, rng));
        }
    }
    Ok(PackedTensor { layer: *layer, packing: *packing, cts, digits, digit_bits: wd })
}

/// Decrypt, decode, divide out the scale tag, and gather channels back into
/// a plain tensor. Dummy slots are ignored.
pub fn unpack_output(
    params: &RingParams,
    packed: &PackedTensor,
    sk: &SecretKey,
) -> Result<PlainTensor, HeError> {
    assert_eq!(packed.digits, 1, "outputs are never digit-decomposed");
    let layer = &packed.layer;
    let packing = &packed.packing;
    let mut out = PlainTensor::zero(layer.c_out, layer.h, layer.w);
    for (g, ct) in packed.cts[0].iter().enumerate() {
        let pt = crate::bfv::decrypt(params, sk, ct);
        let slots = crate::bfv::decode_rescaled(params, &pt, ct.scale_tag)?;
        for j in 0..packing.c_n {
            let ch = g * packing.c_n + j;
            if ch >= layer.c_out {
                break;
            }
            for y in 0..layer.h {
                for x in 0..layer.w {
                    out.set(ch, y, x, slots[slot_index(packing, layer, j, y, x)]);
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Rotation plan
// ---------------------------------------------------------------------------

/// All slot rotations a convolution needs: filter-tap shifts combined with
/// the channel-offset alignments, identity excluded.
pub fn rotation_plan(layer: &LayerSpec, packing: &Packing) -> Result<Vec<GaloisOp>, HeError> {
    if packing.spans_rows && layer.f > 1 {
        return Err(HeError::UnsupportedLayout(
            "channel spans both slot rows; taps would have to cross rows".into(),
        ));
    }
    let half = layer.f as isize / 2;
    let mut set = std::collections::BTreeSet::new();
    for d in 0..packing.c_n {
        let (da, db) = (d % packing.m, d / packing.m);
        for ay in -half..=half {
            for ax in -half..=half {
                let shift = ay * layer.w as isize + ax + (da * packing.hw) as isize;
                let op = GaloisOp::new(shift, db == 1, packing.n);
                if !op.is_identity() {
                    set.insert(op);
                }
            }
        }
    }
    Ok(set.into_iter().collect())
}

/// Tap order used by the encoders and the convolutions.
fn tap_offsets(f: usize) -> Vec<(isize, isize)> {
    let half = f as isize / 2;
    let mut v = Vec::with_capacity(f * f);
    for ay in -half..=half {
        for ax in -half..=half {
            v.push((ay, ax));
        }
    }
    v
}

fn tap_op(layer: &LayerSpec, packing: &Packing, d: usize, ay: isize, ax: isize) -> GaloisOp {
    let (da, db) = (d % packing.m, d / packing.m);
    let shift = ay * layer.w as isize + ax + (da * packing.hw) as isize;
    GaloisOp::new(shift, db == 1, packing.n)
}

// ---------------------------------------------------------------------------
// Instrumentation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub decompositions: u64,
    pub rotations: u64,
    pub pmult: u64,
    pub cmult: u64,
    pub lazy_macs: u64,
    pub reductions: u64,
    pub hadds: u64,
}

impl OpCounters {
    pub fn add(&mut self, other: &OpCounters) {
        self.decompositions += other.decompositions;
        self.rotations += other.rotations;
        self.pmult += other.pmult;
        self.cmult += other.cmult;
        self.lazy_macs += other.lazy_macs;
        self.reductions += other.reductions;
        self.hadds += other.hadds;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvOptions {
    pub hoisting: bool,
    pub lazy_reduction: bool,
}

impl Default for ConvOptions {
    fn default() -> Self {
        ConvOptions { hoisting: true, lazy_reduction: true }
    }
}

// ---------------------------------------------------------------------------
// Kernel encodings
// ---------------------------------------------------------------------------

/// Conventional packed kernel: one boundary-masked plaintext per
/// (digit, input group, output group, channel offset, tap).
pub struct ConvKernelConventional {
    pub layer: LayerSpec,
    pub packing: Packing,
    pub digits: u32,
    pub plaintexts: Vec<Plaintext>,
    prepared: Vec<PreparedPlaintext>,
    in_groups: usize,
    out_groups: usize,
}

impl ConvKernelConventional {
    fn index(&self, digit: usize, bg: usize, og: usize, d: usize, t: usize) -> usize {
        let taps = self.layer.taps();
        let c_n = self.packing.c_n;
        ((((digit * self.in_groups) + bg) * self.out_groups + og) * c_n + d) * taps + t
    }

    pub fn plaintext_count(&self) -> usize {
        self.plaintexts.len()
    }

    /// Closed-form storage: every kernel plaintext is n 8-byte words.
    pub fn storage_bytes(&self, n: usize) -> u64 {
        self.plaintexts.len() as u64 * n as u64 * 8
    }
}

/// Encode the conventional kernel. For digits = 2 the high-digit plaintexts
/// carry the recombination factor 2^w folded into their slots, so the two
/// digit convolutions recombine as low + 2^w * high with a plain addition
/// before output alignment.
pub fn encode_kernel_conventional(
    params: &RingParams,
    layer: &LayerSpec,
    packing: &Packing,
    kernel: &PlainKernel,
    digits: u32,
) -> Result<ConvKernelConventional, HeError> {
    assert!(digits == 1 || digits == 2);
    assert_eq!(kernel.c_in, layer.c_in);
    assert_eq!(kernel.c_out, layer.c_out);
    assert_eq!(kernel.f, layer.f);
    let in_groups = packing.group_count(layer.c_in);
    let out_groups = packing.group_count(layer.c_out);
    let c_n = packing.c_n;
    let taps = tap_offsets(layer.f);
    let wd = digit_bits_for(params.p);
    let hi_factor = mul_mod(1 << wd, 1, params.p);

    let mut plaintexts = Vec::new();
    for digit in 0..digits as usize {
        let factor = if digit == 0 { 1 } else { hi_factor };
        for bg in 0..in_groups {
            for og in 0..out_groups {
                for d in 0..c_n {
                    for &(ay, ax) in &taps {
                        let mut slots = vec![0u64; params.n];
                        for j in 0..c_n {
                            let o = og * c_n + j;
                            let i = bg * c_n + (j ^ d);
                            if o >= layer.c_out || i >= layer.c_in {
                                continue;
                            }
                            let kv = kernel.get(
                                o,
                                i,
                                (ay + layer.f as isize / 2) as usize,
                                (ax + layer.f as isize / 2) as usize,
                            );
                            let kv = mul_mod(kv, factor, params.p);
                            for y in 0..layer.h {
                                for x in 0..layer.w {
                                    // mask out taps that would read past the map edge
                                    let sy = y as isize + ay;
                                    let sx = x as isize + ax;
                                    if sy < 0
                                        || sx < 0
                                        || sy >= layer.h as isize
                                        || sx >= layer.w as isize
                                    {
                                        continue;
                                    }
                                    slots[slot_index(packing, layer, j, y, x)] = kv;
                                }
                            }
                        }
                        plaintexts.push(encode(params, &slots)?);
                    }
                }
            }
        }
    }
    let prepared = plaintexts.iter().map(|pt| PreparedPlaintext::new(params, pt)).collect();
    Ok(ConvKernelConventional {
        layer: *layer,
        packing: *packing,
        digits,
        plaintexts,
        prepared,
        in_groups,
        out_groups,
    })
}

/// Padded kernel: plain integer scalars, nothing encoded.
pub struct ConvKernelPadded {
    pub layer: LayerSpec,
    pub scalars: Vec<u64>, // [o][i][tap]
}

impl ConvKernelPadded {
    pub fn scalar_count(&self) -> usize {
        self.scalars.len()
    }

    pub fn storage_bytes(&self) -> u64 {
        self.scalars.len() as u64 * 8
    }

    fn get(&self, o: usize, i: usize, t: usize) -> u64 {
        self.scalars[(o * self.layer.c_in + i) * self.layer.taps() + t]
    }
}

pub fn encode_kernel_padded(layer: &LayerSpec, kernel: &PlainKernel, p: u64) -> ConvKernelPadded {
    let taps = tap_offsets(layer.f);
    let mut scalars = Vec::with_capacity(layer.c_out * layer.c_in * layer.taps());
    for o in 0..layer.c_out {
        for i in 0..layer.c_in {
            for &(ay, ax) in &taps {
                scalars.push(
                    kernel.get(
                        o,
                        i,
                        (ay + layer.f as isize / 2) as usize,
                        (ax + layer.f as isize / 2) as usize,
                    ) % p,
                );
            }
        }
    }
    ConvKernelPadded { layer: *layer, scalars }
}

/// Hadamard-encoded kernel: integer scalars per (input group, output group,
/// channel offset, Hadamard row, tap) plus c_n - 1 sparse sign plaintexts.
///
/// Row 0 scalars carry the multiplier k; rows >= 1 leave k to the +-k sign
/// plaintext, so every path is scaled once and the output scale is c_n * k.
pub struct HyenaKernel {
    pub layer: LayerSpec,
    pub packing: Packing,
    pub k: u64,
    pub scale: u64,
    pub scalars: Vec<u64>, // [bg][og][d][r][tap], values mod p
    pub sign_plaintexts: Vec<Plaintext>,
    sign_prepared: Vec<PreparedPlaintext>,
    out_groups: usize,
}

impl HyenaKernel {
    fn index(&self, bg: usize, og: usize, d: usize, r: usize, t: usize) -> usize {
        let c_n = self.packing.c_n;
        ((((bg * self.out_groups) + og) * c_n + d) * c_n + r) * self.layer.taps() + t
    }

    pub fn scalar_count(&self) -> usize {
        self.scalars.len()
    }

    /// Closed-form storage: one 8-byte integer per scalar plus the sign
    /// polynomials.
    pub fn storage_bytes(&self, n: usize) -> u64 {
        self.scalars.len() as u64 * 8 + (self.packing.c_n as u64 - 1) * n as u64 * 8
    }
}

/// Sign-pattern slots for Hadamard row r under a packing: +-k per channel
/// position, extended periodically over the whole slot matrix.
fn sign_slots(params: &RingParams, packing: &Packing, r: usize, k: u64) -> Vec<u64> {
    let half = params.n / 2;
    let neg_k = params.p - (k % params.p);
    let mut slots = vec![0u64; params.n];
    for b in 0..2usize {
        for c in 0..half {
            let a = (c / packing.hw) % packing.m;
            let j = b * packing.m + a;
            slots[b * half + c] = if hadamard_sign(r, j) == 1 { k % params.p } else { neg_k };
        }
    }
    slots
}

pub fn encode_kernel_hyena(
    params: &RingParams,
    layer: &LayerSpec,
    packing: &Packing,
    kernel: &PlainKernel,
    k: u64,
) -> Result<HyenaKernel, HeError> {
    assert!(k >= 1);
    assert_eq!(kernel.c_in, layer.c_in);
    assert_eq!(kernel.c_out, layer.c_out);
    let c_n = packing.c_n;
    let p = params.p;
    let in_groups = packing.group_count(layer.c_in);
    let out_groups = packing.group_count(layer.c_out);
    let taps = tap_offsets(layer.f);

    let mut scalars = Vec::with_capacity(in_groups * out_groups * c_n * c_n * layer.taps());
    for bg in 0..in_groups {
        for og in 0..out_groups {
            for d in 0..c_n {
                for r in 0..c_n {
                    for &(ay, ax) in &taps {
                        // H row r applied to the kernel values across the
                        // packed channels for this offset
                        let mut acc: i128 = 0;
                        for j in 0..c_n {
                            let o = og * c_n + j;
                            let i = bg * c_n + (j ^ d);
                            if o >= layer.c_out || i >= layer.c_in {
                                continue;
                            }
                            let kv = kernel.get(
                                o,
                                i,
                                (ay + layer.f as isize / 2) as usize,
                                (ax + layer.f as isize / 2) as usize,
                            ) % p;
                            acc += hadamard_sign(r, j) as i128 * kv as i128;
                        }
                        let mut s = acc.rem_euclid(p as i128) as u64;
                        if r == 0 {
                            s = mul_mod(s, k % p, p);
                        }
                        scalars.push(s);
                    }
                }
            }
        }
    }

    let sign_plaintexts: Vec<Plaintext> = (1..c_n)
        .map(|r| encode(params, &sign_slots(params, packing, r, k)))
        .collect::<Result<_, _>>()?;
    let sign_prepared = sign_plaintexts.iter().map(|pt| PreparedPlaintext::new(params, pt)).collect();
    Ok(HyenaKernel {
        layer: *layer,
        packing: *packing,
        k,
        scale: mul_mod(c_n as u64 % p, k % p, p),
        scalars,
        sign_plaintexts,
        sign_prepared,
        out_groups,
    })
}

// ---------------------------------------------------------------------------
// Rotation helper shared by the three algorithms
// ---------------------------------------------------------------------------

struct Rotator<'a> {
    params: &'a RingParams,
    keys: &'a GaloisKeySet,
    opts: ConvOptions,
}

impl<'a> Rotator<'a> {
    /// All rotations of one input ciphertext for the (offset, tap) plan.
    /// With hoisting: one decomposition, cheap per-step rotations.
    fn rotate_all(
        &self,
        ct: &Ciphertext,
        ops: &[GaloisOp],
        counters: &mut OpCounters,
    ) -> Result<Vec<Ciphertext>, HeError> {
        let mut out = Vec::with_capacity(ops.len());
        if self.opts.hoisting {
            // decompose once, and only if some rotation actually needs it
            let mut dec = None;
            for &op in ops {
                if op.is_identity() {
                    out.push(ct.to_eval(self.params)?);
                    continue;
                }
                if dec.is_none() {
                    dec = Some(hoist_decompose(self.params, ct, self.keys.w_bits)?);
                    counters.decompositions += 1;
                }
                counters.rotations += 1;
                out.push(hoisted_rot(self.params, dec.as_ref().unwrap(), op, self.keys)?);
            }
        } else {
            for &op in ops {
                if op.is_identity() {
                    out.push(ct.to_eval(self.params)?);
                } else {
                    counters.decompositions += 1;
                    counters.rotations += 1;
                    out.push(crate::bfv::hrot(self.params, ct, op, self.keys)?);
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Signed accumulation (wide lanes are unsigned; negatives go to a twin)
// ---------------------------------------------------------------------------

struct SignedAccPair {
    pos: WideAccumulator,
    neg: WideAccumulator,
}

impl SignedAccPair {
    fn zero(n: usize, q: u64) -> Self {
        SignedAccPair {
            pos: WideAccumulator::zero(n, q, Domain::Evaluation),
            neg: WideAccumulator::zero(n, q, Domain::Evaluation),
        }
    }

    fn mac(&mut self, poly: &Polynomial, scalar: i64) -> Result<(), HeError> {
        if scalar >= 0 {
            lazy_mac(&mut self.pos, poly, scalar as u64)
        } else {
            lazy_mac(&mut self.neg, poly, scalar.unsigned_abs())
        }
    }

    fn reduce(&self, params: &RingParams) -> Polynomial {
        let b = params.barrett_q();
        let p = reduce(&self.pos, b);
        let n = reduce(&self.neg, b);
        p.sub(&n).unwrap()
    }
}

/// Eager twin of SignedAccPair: reduce after every multiply-accumulate.
struct EagerAcc {
    c: Polynomial,
}

impl EagerAcc {
    fn zero(n: usize, q: u64) -> Self {
        EagerAcc { c: Polynomial::zero(n, q, Domain::Evaluation) }
    }

    fn mac(&mut self, params: &RingParams, poly: &Polynomial, scalar: i64) {
        let q = params.q;
        let s = if scalar >= 0 { scalar as u64 % q } else { q - (scalar.unsigned_abs() % q) };
        let scaled = poly.scale(s, params.barrett_q());
        self.c = self.c.add(&scaled).unwrap();
    }
}

// ---------------------------------------------------------------------------
// The three convolutions
// ---------------------------------------------------------------------------

fn empty_output(layer: &LayerSpec, packing: Packing, groups: usize) -> PackedTensor {
    PackedTensor {
        layer: *layer,
        packing,
        cts: vec![Vec::with_capacity(groups)],
        digits: 1,
        digit_bits: 0,
    }
}

/// Conventional packed convolution: per tap and channel offset, rotate the
/// input and multiply with a boundary-masked kernel plaintext; partial sums
/// are HAdded into output ciphertexts that pack c_n channels.
pub fn conv_conventional(
    params: &RingParams,
    x: &PackedTensor,
    kern: &ConvKernelConventional,
    keys: &GaloisKeySet,
    opts: ConvOptions,
    counters: &mut OpCounters,
) -> Result<PackedTensor, HeError> {
    assert_eq!(x.digits, kern.digits, "input digits must match the kernel encoding");
    let layer = &kern.layer;
    let packing = kern.packing;
    let c_n = packing.c_n;
    let taps = tap_offsets(layer.f);
    let rot = Rotator { params, keys, opts };

    let ops: Vec<GaloisOp> = (0..c_n)
        .flat_map(|d| taps.iter().map(move |&(ay, ax)| (d, ay, ax)))
        .map(|(d, ay, ax)| tap_op(layer, &packing, d, ay, ax))
        .collect();

    let mut out = empty_output(layer, packing, kern.out_groups);
    let mut acc: Vec<Option<Ciphertext>> = vec![None; kern.out_groups];
    for digit in 0..x.digits as usize {
        for (bg, ct) in x.cts[digit].iter().enumerate() {
            let rotated = rot.rotate_all(ct, &ops, counters)?;
            for og in 0..kern.out_groups {
                for (oi, _) in ops.iter().enumerate() {
                    let (d, t) = (oi / taps.len(), oi % taps.len());
                    let pt = &kern.prepared[kern.index(digit, bg, og, d, t)];
                    let prod = pmult_prepared(params, &rotated[oi], pt)?;
                    counters.pmult += 1;
                    acc[og] = Some(match acc[og].take() {
                        None => prod,
                        Some(a) => {
                            counters.hadds += 1;
                            hadd(params, &a, &prod)?
                        }
                    });
                }
            }
        }
    }
    for og_acc in acc {
        let ct = og_acc.expect("at least one input group").to_coeff(params)?;
        out.cts[0].push(ct);
    }
    Ok(out)
}

/// Padded convolution: kernel weights stay scalars; each output channel is
/// accumulated in its own ciphertext, other slots are dummy.
pub fn conv_padded(
    params: &RingParams,
    x: &PackedTensor,
    kern: &ConvKernelPadded,
    keys: &GaloisKeySet,
    opts: ConvOptions,
    counters: &mut OpCounters,
) -> Result<PackedTensor, HeError> {
    assert_eq!(x.digits, 1, "padded convolution takes undecomposed inputs");
    let layer = &kern.layer;
    let packing = x.packing;
    let c_n = packing.c_n;
    let taps = tap_offsets(layer.f);
    let rot = Rotator { params, keys, opts };

    let ops: Vec<GaloisOp> = (0..c_n)
        .flat_map(|d| taps.iter().map(move |&(ay, ax)| (d, ay, ax)))
        .map(|(d, ay, ax)| tap_op(layer, &packing, d, ay, ax))
        .collect();

    // outputs cannot be packed: one ciphertext per output channel, with the
    // valid sum landing at channel position 0
    let out_packing = Packing { c_n: 1, m: 1, hw: packing.hw, n: packing.n, spans_rows: false };
    let out_layer = LayerSpec { c_in: layer.c_in, c_out: layer.c_out, ..*layer };
    let mut acc: Vec<Polynomial> = Vec::new();
    let mut acc1: Vec<Polynomial> = Vec::new();
    for _ in 0..layer.c_out {
        acc.push(Polynomial::zero(params.n, params.q, Domain::Evaluation));
        acc1.push(Polynomial::zero(params.n, params.q, Domain::Evaluation));
    }
    for (bg, ct) in x.cts[0].iter().enumerate() {
        let rotated = rot.rotate_all(ct, &ops, counters)?;
        for (oi, rct) in rotated.iter().enumerate() {
            let (d, t) = (oi / taps.len(), oi % taps.len());
            let i = bg * c_n + d;
            if i >= layer.c_in {
                continue;
            }
            for o in 0..layer.c_out {
                let s = kern.get(o, i, t);
                if s == 0 {
                    continue;
                }
                let sq = lift_scalar(params, s);
                counters.cmult += 1;
                counters.reductions += 1;
                acc[o] = acc[o].add(&rct.c0.scale(sq, params.barrett_q())).unwrap();
                acc1[o] = acc1[o].add(&rct.c1.scale(sq, params.barrett_q())).unwrap();
            }
        }
    }
    let mut out = empty_output(&out_layer, out_packing, layer.c_out);
    for (c0, c1) in acc.into_iter().zip(acc1) {
        let ct = Ciphertext { c0, c1, scale_tag: 1 }.to_coeff(params)?;
        out.cts[0].push(ct);
    }
    Ok(out)
}

/// The Hadamard output-channel-packing convolution.
///
/// Per input ciphertext: hoist once; rotate for every (channel offset, tap);
/// for each Hadamard row, lazy-MAC the rotated ciphertext by the row scalar
/// into 128-bit accumulator pairs; after all taps reduce each row accumulator
/// once, apply the sparse sign plaintext to rows >= 1, and HAdd the rows.
/// Output ciphertexts carry scale tag c_n * k.
pub fn conv_hyena(
    params: &RingParams,
    x: &PackedTensor,
    kern: &HyenaKernel,
    keys: &GaloisKeySet,
    opts: ConvOptions,
    counters: &mut OpCounters,
) -> Result<PackedTensor, HeError> {
    assert_eq!(x.digits, 1, "the Hadamard path never needs plaintext decomposition");
    let layer = &kern.layer;
    let packing = kern.packing;
    let c_n = packing.c_n;
    let taps = tap_offsets(layer.f);
    let rot = Rotator { params, keys, opts };

    // accumulation plan: f^2 * c_n MACs per row accumulator, scalars centered
    let terms = (layer.taps() * c_n) as u64;
    let s_max = params.p / 2 + 1;
    if opts.lazy_reduction && !mac_plan_fits(terms, s_max, params.barrett_q()) {
        return Err(HeError::CapacityExceeded { terms, s_max });
    }

    let ops: Vec<GaloisOp> = (0..c_n)
        .flat_map(|d| taps.iter().map(move |&(ay, ax)| (d, ay, ax)))
        .map(|(d, ay, ax)| tap_op(layer, &packing, d, ay, ax))
        .collect();

    let mut out = empty_output(layer, packing, kern.out_groups);
    for og in 0..kern.out_groups {
        let mut og_acc: Option<Ciphertext> = None;
        for (bg, ct) in x.cts[0].iter().enumerate() {
            let rotated = rot.rotate_all(ct, &ops, counters)?;
            let part = if opts.lazy_reduction {
                let mut rows: Vec<(SignedAccPair, SignedAccPair)> =
                    (0..c_n).map(|_| (SignedAccPair::zero(params.n, params.q), SignedAccPair::zero(params.n, params.q))).collect();
                for (oi, rct) in rotated.iter().enumerate() {
                    let (d, t) = (oi / taps.len(), oi % taps.len());
                    for (r, row) in rows.iter_mut().enumerate() {
                        let s = center(kern.scalars[kern.index(bg, og, d, r, t)], params.p);
                        if s == 0 {
                            continue;
                        }
                        counters.lazy_macs += 1;
                        row.0.mac(&rct.c0, s)?;
                        row.1.mac(&rct.c1, s)?;
                    }
                }
                let mut part: Option<Ciphertext> = None;
                for (r, row) in rows.iter().enumerate() {
                    counters.reductions += 1;
                    let mut pr = Ciphertext {
                        c0: row.0.reduce(params),
                        c1: row.1.reduce(params),
                        scale_tag: 1,
                    };
                    if r > 0 {
                        counters.pmult += 1;
                        pr = pmult_prepared(params, &pr, &kern.sign_prepared[r - 1])?;
                    }
                    part = Some(match part.take() {
                        None => pr,
                        Some(a) => {
                            counters.hadds += 1;
                            hadd(params, &a, &pr)?
                        }
                    });
                }
                part.unwrap()
            } else {
                let mut rows: Vec<(EagerAcc, EagerAcc)> =
                    (0..c_n).map(|_| (EagerAcc::zero(params.n, params.q), EagerAcc::zero(params.n, params.q))).collect();
                for (oi, rct) in rotated.iter().enumerate() {
                    let (d, t) = (oi / taps.len(), oi % taps.len());
                    for (r, row) in rows.iter_mut().enumerate() {
                        let s = center(kern.scalars[kern.index(bg, og, d, r, t)], params.p);
                        if s == 0 {
                            continue;
                        }
                        counters.lazy_macs += 1;
                        counters.reductions += 1;
                        row.0.mac(params, &rct.c0, s);
                        row.1.mac(params, &rct.c1, s);
                    }
                }
                let mut part: Option<Ciphertext> = None;
                for (r, row) in rows.iter().enumerate() {
                    let mut pr = Ciphertext { c0: row.0.c.clone(), c1: row.1.c.clone(), scale_tag: 1 };
                    if r > 0 {
                        counters.pmult += 1;
                        pr = pmult_prepared(params, &pr, &kern.sign_prepared[r - 1])?;
                    }
                    part = Some(match part.take() {
                        None => pr,
                        Some(a) => {
                            counters.hadds += 1;
                            hadd(params, &a, &pr)?
                        }
                    });
                }
                part.unwrap()
            };
            og_acc = Some(match og_acc.take() {
                None => part,
                Some(a) => {
                    counters.hadds += 1;
                    hadd(params, &a, &part)?
                }
            });
        }
        let mut ct = og_acc.expect("at least one input group").to_coeff(params)?;
        ct.scale_tag = kern.scale;
        out.cts[0].push(ct);
    }
    Ok(out)
}
